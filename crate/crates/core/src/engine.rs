//! The level-hierarchy engine.
//!
//! Every node occupies an integer level in `[0, L]` and every edge is priced
//! `(1+eps)^-max(level(u), level(v))`. A node whose incident weight reaches 1
//! while it would stay at or above 1 one level higher is pushed up; a node
//! strictly below `1 - eps` above level 0 is pushed down. Once no node wants
//! to move, the nodes with weight at least `1 - eps` form the vertex cover
//! and the edge prices divided by `1+eps` form a fractional matching.
//!
//! Each node keeps its incident edges in circular doubly-linked lists inside
//! a shared cell arena: one list for the neighbors at or below its own level
//! and one list per higher level. This makes a single-level move cost
//! proportional to the number of low neighbors only; adopting the list one
//! level up is a constant-time splice.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::num::{EpsError, EpsRational, ExactTables, WeightScalar};

pub(crate) const NIL: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error(transparent)]
    InvalidEps(#[from] EpsError),
    #[error("node count must be positive")]
    ZeroNodes,
    #[error("node {0} out of range for a graph on {1} nodes")]
    NodeOutOfRange(u32, u32),
    #[error("self-loop at node {0} not allowed")]
    SelfLoop(u32),
    #[error("edge ({0}, {1}) already present")]
    DuplicateEdge(u32, u32),
    #[error("edge ({0}, {1}) not present")]
    MissingEdge(u32, u32),
    #[error("node {node} at level {level} exceeds the level bound {bound}")]
    LevelOutOfRange { node: u32, level: u32, bound: u32 },
    #[error("settling needed more than the budget of {budget} moves ({moves} done)")]
    MoveBudgetExhausted { moves: u64, budget: u64 },
}

/// Immutable per-graph constants: the node count, the level bound, and the
/// weight table in the active numeric tier.
#[derive(Debug, Clone)]
pub struct GraphConfig<W: WeightScalar> {
    n: u32,
    level_bound: u32,
    /// `weight_table[k] = (1+eps)^-k`, one rounding from the exact value.
    weight_table: Vec<W>,
    /// `delta_table[k] = weight_table[k] - weight_table[k+1]`, the price drop
    /// of an edge whose top endpoint rises from level k to k+1. Computed in
    /// tier arithmetic, where the float subtraction is exact because the two
    /// entries are within a factor of two of each other.
    delta_table: Vec<W>,
    one: W,
    one_minus_eps: W,
    exact: ExactTables,
}

impl<W: WeightScalar> GraphConfig<W> {
    pub fn new(n: u32, eps: EpsRational) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::ZeroNodes);
        }
        let exact = ExactTables::new(n, eps);
        let level_bound = exact.level_bound();
        let weight_table: Vec<W> = (0..=level_bound as usize)
            .map(|k| W::from_exact(&exact, exact.entry(k)))
            .collect();
        let delta_table: Vec<W> = (0..level_bound as usize)
            .map(|k| weight_table[k].minus(&weight_table[k + 1]))
            .collect();
        let one = W::from_exact(&exact, &BigRational::one());
        let one_minus_eps = W::from_exact(&exact, &exact.one_minus_eps());
        // A full star cannot keep a top-level node heavy: n * table[L] <= 1+eps.
        debug_assert!(
            exact.entry(level_bound as usize) * BigRational::from(BigInt::from(n))
                <= exact.one_plus_eps()
        );
        Ok(GraphConfig {
            n,
            level_bound,
            weight_table,
            delta_table,
            one,
            one_minus_eps,
            exact,
        })
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn eps(&self) -> EpsRational {
        self.exact.eps()
    }

    /// The level bound L.
    #[inline]
    pub fn level_bound(&self) -> u32 {
        self.level_bound
    }

    /// `(1+eps)^-k` in tier arithmetic, for `k` in `[0, L]`.
    #[inline]
    pub fn weight_entry(&self, k: usize) -> &W {
        &self.weight_table[k]
    }

    #[inline]
    pub fn delta_entry(&self, k: usize) -> &W {
        &self.delta_table[k]
    }

    #[inline]
    pub fn one(&self) -> &W {
        &self.one
    }

    #[inline]
    pub fn one_minus_eps(&self) -> &W {
        &self.one_minus_eps
    }

    #[inline]
    pub fn exact(&self) -> &ExactTables {
        &self.exact
    }
}

/// One edge endpoint in the cell arena. Edge `e` owns cells `2e` and `2e+1`;
/// a cell's twin is `cell ^ 1`. `peer` is the node at the other end, so a
/// list walk touches one cell per incident edge.
#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub(crate) peer: u32,
    pub(crate) prev: u32,
    pub(crate) next: u32,
}

impl Cell {
    fn vacant() -> Self {
        Cell {
            peer: NIL,
            prev: NIL,
            next: NIL,
        }
    }
}

/// Inserts `cell` into the circular list with the given head; returns the new
/// head.
fn list_insert(cells: &mut [Cell], head: u32, cell: u32) -> u32 {
    let c = cell as usize;
    if head == NIL {
        cells[c].prev = cell;
        cells[c].next = cell;
        return cell;
    }
    let h = head as usize;
    let tail = cells[h].prev;
    cells[tail as usize].next = cell;
    cells[c].prev = tail;
    cells[c].next = head;
    cells[h].prev = cell;
    head
}

/// Unlinks `cell` from the circular list with the given head; returns the new
/// head. The cell's own links are left stale.
fn list_remove(cells: &mut [Cell], head: u32, cell: u32) -> u32 {
    let c = cell as usize;
    let next = cells[c].next;
    if next == cell {
        return NIL;
    }
    let prev = cells[c].prev;
    cells[prev as usize].next = next;
    cells[next as usize].prev = prev;
    if head == cell {
        next
    } else {
        head
    }
}

/// Splices two circular lists into one; either may be empty.
fn list_concat(cells: &mut [Cell], a: u32, b: u32) -> u32 {
    if a == NIL {
        return b;
    }
    if b == NIL {
        return a;
    }
    let a_tail = cells[a as usize].prev;
    let b_tail = cells[b as usize].prev;
    cells[a_tail as usize].next = b;
    cells[b as usize].prev = a_tail;
    cells[b_tail as usize].next = a;
    cells[a as usize].prev = b_tail;
    a
}

pub(crate) fn for_each_cell(cells: &[Cell], head: u32, mut f: impl FnMut(u32)) {
    if head == NIL {
        return;
    }
    let mut c = head;
    loop {
        f(c);
        c = cells[c as usize].next;
        if c == head {
            break;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node<W> {
    pub(crate) level: u32,
    pub(crate) weight: W,
    /// `heads[t]` heads the list of edges whose other endpoint sits at level
    /// `t`, for `t` strictly above this node's level. Lower entries are NIL.
    pub(crate) heads: Box<[u32]>,
    pub(crate) sizes: Box<[u32]>,
    /// Heads the list of edges whose other endpoint is at or below this
    /// node's level; those are exactly the edges this node prices.
    pub(crate) minus_head: u32,
    pub(crate) minus_size: u32,
    queued: bool,
}

/// An edge insertion or deletion, the unit of the update sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOp {
    Insert(u32, u32),
    Delete(u32, u32),
}

impl EdgeOp {
    #[inline]
    pub fn endpoints(&self) -> (u32, u32) {
        match *self {
            EdgeOp::Insert(u, v) | EdgeOp::Delete(u, v) => (u, v),
        }
    }

    #[inline]
    pub fn is_insert(&self) -> bool {
        matches!(self, EdgeOp::Insert(..))
    }
}

/// One single-level move performed while settling the graph.
///
/// `work` counts one unit per edge re-priced by the move: the full low list
/// for a rise, the strictly-lower neighbors for a drop. `touched` counts
/// every cell the move inspected, which for a drop also includes the
/// neighbors at exactly the starting level that are merely re-filed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveRecord {
    pub node: u32,
    pub from: u32,
    pub to: u32,
    pub work: u64,
    pub touched: u64,
}

impl MoveRecord {
    #[inline]
    pub fn is_up(&self) -> bool {
        self.to > self.from
    }
}

/// The outcome of one update: the edge operation, every move it triggered in
/// order, and the summed work counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateReport {
    pub op: EdgeOp,
    pub moves: Vec<MoveRecord>,
    pub total_work: u64,
    pub total_touched: u64,
}

/// Order in which queued nodes are re-examined while settling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueueDiscipline {
    #[default]
    Fifo,
    Lifo,
}

/// Lifetime totals across all updates applied to a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub updates: u64,
    pub insertions: u64,
    pub deletions: u64,
    pub moves_up: u64,
    pub moves_down: u64,
    pub work_up: u64,
    pub work_down: u64,
    pub touched: u64,
    pub max_level_seen: u32,
}

impl Counters {
    #[inline]
    pub fn moves(&self) -> u64 {
        self.moves_up + self.moves_down
    }

    #[inline]
    pub fn work(&self) -> u64 {
        self.work_up + self.work_down
    }
}

pub struct DynamicGraph<W: WeightScalar> {
    pub(crate) cfg: GraphConfig<W>,
    pub(crate) nodes: Vec<Node<W>>,
    pub(crate) cells: Vec<Cell>,
    pub(crate) edge_index: HashMap<(u32, u32), u32>,
    free_edges: Vec<u32>,
    queue: VecDeque<u32>,
    discipline: QueueDiscipline,
    pending: Option<u32>,
    counters: Counters,
    budget_override: Option<u64>,
}

pub type FloatGraph = DynamicGraph<f64>;
pub type ExactGraph = DynamicGraph<crate::num::ExactWeight>;

impl<W: WeightScalar> DynamicGraph<W> {
    pub fn new(cfg: GraphConfig<W>) -> Self {
        let slots = cfg.level_bound as usize + 1;
        let nodes = (0..cfg.n)
            .map(|_| Node {
                level: 0,
                weight: W::zero(),
                heads: vec![NIL; slots].into_boxed_slice(),
                sizes: vec![0; slots].into_boxed_slice(),
                minus_head: NIL,
                minus_size: 0,
                queued: false,
            })
            .collect();
        DynamicGraph {
            cfg,
            nodes,
            cells: Vec::new(),
            edge_index: HashMap::new(),
            free_edges: Vec::new(),
            queue: VecDeque::new(),
            discipline: QueueDiscipline::default(),
            pending: None,
            counters: Counters::default(),
            budget_override: None,
        }
    }

    /// Builds a graph on `n` nodes at the given approximation parameter, all
    /// nodes at level 0 with no edges.
    pub fn build(n: u32, eps: EpsRational) -> Result<Self, GraphError> {
        Ok(Self::new(GraphConfig::new(n, eps)?))
    }

    /// Reassembles a graph from externally stored state. Levels and edges
    /// are validated structurally; the per-node weights are trusted as
    /// given, so a consistency check against recomputation stays meaningful.
    pub fn from_parts(
        cfg: GraphConfig<W>,
        levels: &[u32],
        weights: Vec<W>,
        edges: &[(u32, u32)],
    ) -> Result<Self, GraphError> {
        assert_eq!(levels.len(), cfg.n as usize);
        assert_eq!(weights.len(), cfg.n as usize);
        let bound = cfg.level_bound;
        let mut graph = Self::new(cfg);
        for (v, (&level, weight)) in levels.iter().zip(weights).enumerate() {
            if level > bound {
                return Err(GraphError::LevelOutOfRange {
                    node: v as u32,
                    level,
                    bound,
                });
            }
            graph.nodes[v].level = level;
            graph.nodes[v].weight = weight;
        }
        for &(u, v) in edges {
            let key = graph.check_pair(u, v)?;
            if graph.edge_index.contains_key(&key) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            let e = graph.alloc_edge(key);
            let (a, b) = key;
            let (la, lb) = (graph.nodes[a as usize].level, graph.nodes[b as usize].level);
            graph.attach(a, 2 * e, lb);
            graph.attach(b, 2 * e + 1, la);
        }
        Ok(graph)
    }

    #[inline]
    pub fn config(&self) -> &GraphConfig<W> {
        &self.cfg
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.cfg.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_index.len()
    }

    #[inline]
    pub fn level(&self, v: u32) -> u32 {
        self.nodes[v as usize].level
    }

    #[inline]
    pub fn weight(&self, v: u32) -> &W {
        &self.nodes[v as usize].weight
    }

    /// Number of incident edges priced by `v`, i.e. neighbors at or below
    /// `v`'s level.
    #[inline]
    pub fn low_neighbor_count(&self, v: u32) -> u32 {
        self.nodes[v as usize].minus_size
    }

    pub fn degree(&self, v: u32) -> u64 {
        let node = &self.nodes[v as usize];
        node.minus_size as u64 + node.sizes.iter().map(|&s| s as u64).sum::<u64>()
    }

    pub fn contains_edge(&self, u: u32, v: u32) -> bool {
        match self.check_pair(u, v) {
            Ok(key) => self.edge_index.contains_key(&key),
            Err(_) => false,
        }
    }

    /// The level an edge is priced at: the higher endpoint level.
    pub fn edge_level(&self, u: u32, v: u32) -> Option<u32> {
        let key = self.check_pair(u, v).ok()?;
        self.edge_index.get(&key)?;
        Some(self.nodes[u as usize].level.max(self.nodes[v as usize].level))
    }

    /// All edges as `(u, v, level)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32, u32)> {
        let mut out: Vec<(u32, u32, u32)> = self
            .edge_index
            .keys()
            .map(|&(u, v)| {
                let lvl = self.nodes[u as usize].level.max(self.nodes[v as usize].level);
                (u, v, lvl)
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Neighbor node ids of `v`, one per incident edge, in list order.
    pub fn neighbor_ids(&self, v: u32) -> Vec<u32> {
        let node = &self.nodes[v as usize];
        let mut out = Vec::new();
        for_each_cell(&self.cells, node.minus_head, |c| {
            out.push(self.cells[c as usize].peer);
        });
        for t in (node.level as usize + 1)..self.nodes[v as usize].heads.len() {
            for_each_cell(&self.cells, node.heads[t], |c| {
                out.push(self.cells[c as usize].peer);
            });
        }
        out
    }

    #[inline]
    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    #[inline]
    pub fn queue_discipline(&self) -> QueueDiscipline {
        self.discipline
    }

    pub fn set_queue_discipline(&mut self, discipline: QueueDiscipline) {
        self.discipline = discipline;
    }

    /// Overrides the default move budget per settle; `None` restores it.
    pub fn set_move_budget(&mut self, budget: Option<u64>) {
        self.budget_override = budget;
    }

    /// True when no node is queued for re-examination.
    pub fn is_settled(&self) -> bool {
        self.pending.is_none() && self.queue.is_empty()
    }

    fn check_pair(&self, u: u32, v: u32) -> Result<(u32, u32), GraphError> {
        if u >= self.cfg.n {
            return Err(GraphError::NodeOutOfRange(u, self.cfg.n));
        }
        if v >= self.cfg.n {
            return Err(GraphError::NodeOutOfRange(v, self.cfg.n));
        }
        match u.cmp(&v) {
            Ordering::Less => Ok((u, v)),
            Ordering::Greater => Ok((v, u)),
            Ordering::Equal => Err(GraphError::SelfLoop(u)),
        }
    }

    fn alloc_edge(&mut self, key: (u32, u32)) -> u32 {
        let e = self.free_edges.pop().unwrap_or_else(|| {
            let id = (self.cells.len() / 2) as u32;
            self.cells.push(Cell::vacant());
            self.cells.push(Cell::vacant());
            id
        });
        self.cells[2 * e as usize].peer = key.1;
        self.cells[2 * e as usize + 1].peer = key.0;
        self.edge_index.insert(key, e);
        e
    }

    /// Links `cell` into the list of `owner` dictated by the peer's level.
    fn attach(&mut self, owner: u32, cell: u32, peer_level: u32) {
        let node = &mut self.nodes[owner as usize];
        if peer_level <= node.level {
            node.minus_head = list_insert(&mut self.cells, node.minus_head, cell);
            node.minus_size += 1;
        } else {
            let t = peer_level as usize;
            node.heads[t] = list_insert(&mut self.cells, node.heads[t], cell);
            node.sizes[t] += 1;
        }
    }

    fn detach(&mut self, owner: u32, cell: u32, peer_level: u32) {
        let node = &mut self.nodes[owner as usize];
        if peer_level <= node.level {
            node.minus_head = list_remove(&mut self.cells, node.minus_head, cell);
            node.minus_size -= 1;
        } else {
            let t = peer_level as usize;
            node.heads[t] = list_remove(&mut self.cells, node.heads[t], cell);
            node.sizes[t] -= 1;
        }
    }

    fn enqueue(&mut self, v: u32) {
        let node = &mut self.nodes[v as usize];
        if !node.queued {
            node.queued = true;
            self.queue.push_back(v);
        }
    }

    /// Applies the edge operation without settling, leaving any activated
    /// nodes queued. Pair with [`Self::next_active`] and
    /// [`Self::perform_pending`] to observe every intermediate state.
    pub fn apply_edge_unfixed(&mut self, op: EdgeOp) -> Result<(), GraphError> {
        match op {
            EdgeOp::Insert(u, v) => self.raw_insert(u, v),
            EdgeOp::Delete(u, v) => self.raw_delete(u, v),
        }
    }

    fn raw_insert(&mut self, u: u32, v: u32) -> Result<(), GraphError> {
        let key = self.check_pair(u, v)?;
        if self.edge_index.contains_key(&key) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let e = self.alloc_edge(key);
        let (a, b) = key;
        let (la, lb) = (self.nodes[a as usize].level, self.nodes[b as usize].level);
        let price = self.cfg.weight_table[la.max(lb) as usize].clone();
        self.attach(a, 2 * e, lb);
        self.attach(b, 2 * e + 1, la);
        self.nodes[a as usize].weight.add_assign_w(&price);
        self.nodes[b as usize].weight.add_assign_w(&price);
        self.counters.updates += 1;
        self.counters.insertions += 1;
        self.enqueue(a);
        self.enqueue(b);
        Ok(())
    }

    fn raw_delete(&mut self, u: u32, v: u32) -> Result<(), GraphError> {
        let key = self.check_pair(u, v)?;
        let Some(e) = self.edge_index.remove(&key) else {
            return Err(GraphError::MissingEdge(u, v));
        };
        let (a, b) = key;
        let (la, lb) = (self.nodes[a as usize].level, self.nodes[b as usize].level);
        let price = self.cfg.weight_table[la.max(lb) as usize].clone();
        self.detach(a, 2 * e, lb);
        self.detach(b, 2 * e + 1, la);
        self.nodes[a as usize].weight.sub_assign_w(&price);
        self.nodes[b as usize].weight.sub_assign_w(&price);
        self.free_edges.push(e);
        self.counters.updates += 1;
        self.counters.deletions += 1;
        self.enqueue(a);
        self.enqueue(b);
        Ok(())
    }

    /// Weight at or above the heavy threshold: this node is in the cover.
    #[inline]
    pub fn in_cover(&self, v: u32) -> bool {
        self.nodes[v as usize].weight >= self.cfg.one_minus_eps
    }

    pub fn cover(&self) -> Vec<u32> {
        (0..self.cfg.n).filter(|&v| self.in_cover(v)).collect()
    }

    pub fn cover_size(&self) -> usize {
        (0..self.cfg.n).filter(|&v| self.in_cover(v)).count()
    }

    #[inline]
    fn is_up_dirty(&self, v: u32) -> bool {
        self.nodes[v as usize].weight >= self.cfg.one
    }

    /// An up-dirty node that would still weigh at least 1 one level higher.
    pub fn is_up_active(&self, v: u32) -> bool {
        if !self.is_up_dirty(v) {
            return false;
        }
        let node = &self.nodes[v as usize];
        assert!(
            node.level < self.cfg.level_bound,
            "node {v} weighs >= 1 at the top level"
        );
        // One level up, each edge priced by this node drops by delta[level];
        // everything above is unaffected.
        let drop = self.cfg.delta_table[node.level as usize].times(node.minus_size as u64);
        node.weight.minus(&drop) >= self.cfg.one
    }

    /// A node strictly below the light threshold that can still descend.
    pub fn is_down_active(&self, v: u32) -> bool {
        let node = &self.nodes[v as usize];
        node.level > 0 && node.weight < self.cfg.one_minus_eps
    }

    #[inline]
    pub fn is_active(&self, v: u32) -> bool {
        self.is_up_active(v) || self.is_down_active(v)
    }

    /// Pops queued nodes until an active one is found and parks it as
    /// pending; returns `None` once the queue is exhausted.
    pub fn next_active(&mut self) -> Option<u32> {
        if self.pending.is_some() {
            return self.pending;
        }
        loop {
            let v = match self.discipline {
                QueueDiscipline::Fifo => self.queue.pop_front()?,
                QueueDiscipline::Lifo => self.queue.pop_back()?,
            };
            self.nodes[v as usize].queued = false;
            if self.is_active(v) {
                self.pending = Some(v);
                return Some(v);
            }
        }
    }

    /// Executes the single-level move of the node parked by
    /// [`Self::next_active`].
    pub fn perform_pending(&mut self) -> MoveRecord {
        let x = self.pending.take().expect("no pending active node");
        let record = if self.is_up_active(x) {
            self.move_up(x)
        } else {
            debug_assert!(self.is_down_active(x));
            self.move_down(x)
        };
        self.counters.touched += record.touched;
        if record.is_up() {
            self.counters.moves_up += 1;
            self.counters.work_up += record.work;
        } else {
            self.counters.moves_down += 1;
            self.counters.work_down += record.work;
        }
        self.counters.max_level_seen = self.counters.max_level_seen.max(record.to);
        record
    }

    fn move_up(&mut self, x: u32) -> MoveRecord {
        let xi = x as usize;
        let k = self.nodes[xi].level;
        let ku = k as usize;
        debug_assert!(k < self.cfg.level_bound);
        let delta = self.cfg.delta_table[ku].clone();
        let count = self.nodes[xi].minus_size;
        // Every edge priced by x re-prices one level higher: both endpoints
        // lose delta[k], and the twin cell re-files one list up on the
        // neighbor's side.
        let mut c = self.nodes[xi].minus_head;
        for _ in 0..count {
            let next = self.cells[c as usize].next;
            let peer = self.cells[c as usize].peer;
            let pi = peer as usize;
            let peer_level = self.nodes[pi].level;
            let twin = c ^ 1;
            {
                let node = &mut self.nodes[pi];
                if peer_level == k {
                    node.minus_head = list_remove(&mut self.cells, node.minus_head, twin);
                    node.minus_size -= 1;
                } else {
                    node.heads[ku] = list_remove(&mut self.cells, node.heads[ku], twin);
                    node.sizes[ku] -= 1;
                }
                node.heads[ku + 1] = list_insert(&mut self.cells, node.heads[ku + 1], twin);
                node.sizes[ku + 1] += 1;
                node.weight.sub_assign_w(&delta);
            }
            self.nodes[xi].weight.sub_assign_w(&delta);
            self.enqueue(peer);
            c = next;
        }
        // The level-(k+1) neighbors drop into the priced band: adopt their
        // whole list in one splice.
        let node = &mut self.nodes[xi];
        let adopted = node.heads[ku + 1];
        node.heads[ku + 1] = NIL;
        node.minus_head = list_concat(&mut self.cells, node.minus_head, adopted);
        node.minus_size += node.sizes[ku + 1];
        node.sizes[ku + 1] = 0;
        node.level = k + 1;
        self.enqueue(x);
        MoveRecord {
            node: x,
            from: k,
            to: k + 1,
            work: count as u64,
            touched: count as u64,
        }
    }

    fn move_down(&mut self, x: u32) -> MoveRecord {
        let xi = x as usize;
        let k = self.nodes[xi].level;
        let ku = k as usize;
        debug_assert!(k > 0);
        let delta = self.cfg.delta_table[ku - 1].clone();
        let count = self.nodes[xi].minus_size;
        let mut work = 0u64;
        let mut c = self.nodes[xi].minus_head;
        for _ in 0..count {
            let next = self.cells[c as usize].next;
            let peer = self.cells[c as usize].peer;
            let pi = peer as usize;
            let peer_level = self.nodes[pi].level;
            if peer_level == k {
                // The neighbor ends up strictly above x; re-file the edge on
                // x's side only, price unchanged.
                let node = &mut self.nodes[xi];
                node.minus_head = list_remove(&mut self.cells, node.minus_head, c);
                node.minus_size -= 1;
                node.heads[ku] = list_insert(&mut self.cells, node.heads[ku], c);
                node.sizes[ku] += 1;
            } else {
                // The edge re-prices one level lower; the twin re-files on
                // the neighbor's side.
                work += 1;
                let twin = c ^ 1;
                let node = &mut self.nodes[pi];
                node.heads[ku] = list_remove(&mut self.cells, node.heads[ku], twin);
                node.sizes[ku] -= 1;
                if peer_level == k - 1 {
                    node.minus_head = list_insert(&mut self.cells, node.minus_head, twin);
                    node.minus_size += 1;
                } else {
                    node.heads[ku - 1] = list_insert(&mut self.cells, node.heads[ku - 1], twin);
                    node.sizes[ku - 1] += 1;
                }
                node.weight.add_assign_w(&delta);
                self.nodes[xi].weight.add_assign_w(&delta);
                self.enqueue(peer);
            }
            c = next;
        }
        self.nodes[xi].level = k - 1;
        self.enqueue(x);
        MoveRecord {
            node: x,
            from: k,
            to: k - 1,
            work,
            touched: count as u64,
        }
    }

    /// Default number of moves one settle may take before aborting: generous
    /// enough that any legitimate cascade fits, small enough to trip on a
    /// classification bug that would cycle forever.
    pub fn move_budget(&self) -> u64 {
        self.budget_override.unwrap_or_else(|| {
            let per = 64 * (self.cfg.level_bound as u64 + 1);
            1_000_000u64.max(per.saturating_mul(self.counters.updates + self.cfg.n as u64))
        })
    }

    /// Moves active nodes one level at a time until the graph settles;
    /// returns the moves in execution order.
    pub fn fix_dirty(&mut self) -> Result<Vec<MoveRecord>, GraphError> {
        let budget = self.move_budget();
        let mut moves = Vec::new();
        while self.next_active().is_some() {
            if moves.len() as u64 >= budget {
                return Err(GraphError::MoveBudgetExhausted {
                    moves: moves.len() as u64,
                    budget,
                });
            }
            moves.push(self.perform_pending());
        }
        Ok(moves)
    }

    /// Applies one edge operation and settles the graph.
    pub fn apply(&mut self, op: EdgeOp) -> Result<UpdateReport, GraphError> {
        self.apply_edge_unfixed(op)?;
        let moves = self.fix_dirty()?;
        let total_work = moves.iter().map(|m| m.work).sum();
        let total_touched = moves.iter().map(|m| m.touched).sum();
        Ok(UpdateReport {
            op,
            moves,
            total_work,
            total_touched,
        })
    }

    pub fn insert_edge(&mut self, u: u32, v: u32) -> Result<UpdateReport, GraphError> {
        self.apply(EdgeOp::Insert(u, v))
    }

    pub fn delete_edge(&mut self, u: u32, v: u32) -> Result<UpdateReport, GraphError> {
        self.apply(EdgeOp::Delete(u, v))
    }

    /// Recomputes every cached weight from the lists and queues every node,
    /// so a following settle re-establishes the passive invariant. Counters
    /// are untouched.
    pub fn resync_weights(&mut self) {
        for v in 0..self.nodes.len() {
            let lvl = self.nodes[v].level as usize;
            let mut w = self.cfg.weight_table[lvl].times(self.nodes[v].minus_size as u64);
            for t in (lvl + 1)..=self.cfg.level_bound as usize {
                let count = self.nodes[v].sizes[t];
                if count > 0 {
                    w.add_assign_w(&self.cfg.weight_table[t].times(count as u64));
                }
            }
            self.nodes[v].weight = w;
        }
        for v in 0..self.cfg.n {
            self.enqueue(v);
        }
    }

    /// The fractional matching read off the settled graph: each edge carries
    /// its price divided by `1+eps`, exactly.
    pub fn fractional_matching(&self) -> Vec<(u32, u32, BigRational)> {
        self.edges()
            .into_iter()
            .map(|(u, v, lvl)| (u, v, self.cfg.exact.entry(lvl as usize + 1).clone()))
            .collect()
    }

    pub fn matching_total(&self) -> BigRational {
        let mut total = BigRational::zero();
        for (_, _, lvl) in self.edges() {
            total += self.cfg.exact.entry(lvl as usize + 1);
        }
        total
    }

    /// Deliberately files one endpoint cell of `(u, v)` in the wrong list.
    /// Only for exercising the structural verifier.
    #[doc(hidden)]
    pub fn debug_misfile_edge(&mut self, u: u32, v: u32) {
        let key = self.check_pair(u, v).expect("valid node pair");
        let e = *self.edge_index.get(&key).expect("edge present");
        let (a, b) = key;
        let lb = self.nodes[b as usize].level;
        let cell = 2 * e;
        self.detach(a, cell, lb);
        let node = &mut self.nodes[a as usize];
        if lb <= node.level {
            let t = node.level as usize + 1;
            assert!(t < node.heads.len(), "no higher slot to misfile into");
            node.heads[t] = list_insert(&mut self.cells, node.heads[t], cell);
            node.sizes[t] += 1;
        } else {
            node.minus_head = list_insert(&mut self.cells, node.minus_head, cell);
            node.minus_size += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ExactWeight;

    fn eps(s: &str) -> EpsRational {
        s.parse().unwrap()
    }

    fn exact_graph(n: u32, e: &str) -> ExactGraph {
        DynamicGraph::build(n, eps(e)).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        let mut g = exact_graph(4, "1/2");
        assert_eq!(g.insert_edge(0, 0).unwrap_err(), GraphError::SelfLoop(0));
        assert_eq!(
            g.insert_edge(0, 4).unwrap_err(),
            GraphError::NodeOutOfRange(4, 4)
        );
        g.insert_edge(0, 1).unwrap();
        assert_eq!(
            g.insert_edge(1, 0).unwrap_err(),
            GraphError::DuplicateEdge(1, 0)
        );
        assert_eq!(
            g.delete_edge(2, 3).unwrap_err(),
            GraphError::MissingEdge(2, 3)
        );
    }

    #[test]
    fn zero_nodes_rejected() {
        assert_eq!(
            GraphConfig::<f64>::new(0, eps("1/2")).unwrap_err(),
            GraphError::ZeroNodes
        );
    }

    #[test]
    fn single_insert_settles_with_no_moves() {
        let mut g = exact_graph(2, "1/2");
        let report = g.insert_edge(0, 1).unwrap();
        assert!(report.moves.is_empty());
        assert_eq!(report.total_work, 0);
        assert_eq!(g.level(0), 0);
        assert_eq!(g.level(1), 0);
        let one = ExactWeight::from_exact(g.config().exact(), &BigRational::one());
        assert_eq!(g.weight(0), &one);
        assert_eq!(g.weight(1), &one);
        assert!(g.is_settled());
        // W = 1 is heavy but cannot survive one level up: passive.
        assert!(!g.is_active(0));
        assert!(g.in_cover(0) && g.in_cover(1));
    }

    #[test]
    fn edges_are_reported_sorted_with_levels() {
        let mut g = exact_graph(4, "1/2");
        g.insert_edge(2, 3).unwrap();
        g.insert_edge(0, 1).unwrap();
        g.insert_edge(0, 2).unwrap();
        let edges = g.edges();
        assert_eq!(edges.len(), 3);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        assert!(edges.iter().all(|&(u, v, _)| u < v));
    }

    #[test]
    fn delete_restores_empty_state_exactly() {
        let mut g = exact_graph(4, "1/2");
        g.insert_edge(0, 1).unwrap();
        g.insert_edge(0, 2).unwrap();
        g.insert_edge(0, 3).unwrap();
        g.delete_edge(0, 3).unwrap();
        g.delete_edge(0, 2).unwrap();
        g.delete_edge(0, 1).unwrap();
        for v in 0..4 {
            assert_eq!(g.weight(v), &ExactWeight::zero());
            assert_eq!(g.degree(v), 0);
        }
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn float_single_edge_roundtrip_is_exactly_zero() {
        let mut g: FloatGraph = DynamicGraph::build(2, eps("3/10")).unwrap();
        g.insert_edge(0, 1).unwrap();
        g.delete_edge(0, 1).unwrap();
        assert_eq!(*g.weight(0), 0.0);
        assert_eq!(*g.weight(1), 0.0);
    }

    #[test]
    fn float_drift_through_a_churned_star_stays_negligible() {
        let mut g: FloatGraph = DynamicGraph::build(16, eps("3/10")).unwrap();
        for round in 0..3 {
            for v in 1..16 {
                g.insert_edge(0, v).unwrap();
            }
            for v in (1..16).rev() {
                g.delete_edge(0, v).unwrap();
            }
            assert!(g.weight(0).abs() < 1e-12, "round {round}: {}", g.weight(0));
        }
    }

    #[test]
    fn budget_trips_when_forced() {
        let mut g = exact_graph(8, "1/2");
        g.set_move_budget(Some(0));
        // The first insert leaves both endpoints passive at weight 1.
        g.insert_edge(0, 1).unwrap();
        // The second pushes the shared endpoint to weight 2, which demands a
        // move the zero budget cannot pay for.
        let err = g.insert_edge(0, 2).unwrap_err();
        assert!(matches!(err, GraphError::MoveBudgetExhausted { .. }));
    }
}
