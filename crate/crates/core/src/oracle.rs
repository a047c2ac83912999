//! Independent verifiers that rebuild state from first principles.
//!
//! Nothing here reuses the engine's incremental bookkeeping: node weights
//! are re-derived from levels alone, the intrusive lists are walked and
//! checked against the placement rule, and the optimum cover comes from an
//! exact branch-and-bound search. A disagreement between a check and the
//! engine therefore always implicates the engine (or the stored state), not
//! a shared code path.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::engine::{Cell, DynamicGraph, NIL};
use crate::num::{ratio_to_f64, ExactTables, WeightScalar};

/// Tolerance for comparing float-tier cached weights against an exact
/// recomputation: relative once the value exceeds one, absolute below.
pub const WEIGHT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Largest node count for which `verify_all` compares the cover against the
/// exact optimum. The branch-and-bound search accepts up to 32 nodes, but
/// running it after every update stays cheap only well below that.
pub const RATIO_CHECK_MAX_NODES: u32 = 20;

/// Outcome of one named check. `witness` carries a concrete counterexample
/// (ids and both computed values) when the check failed.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub witness: Option<String>,
}

/// Results of a verification pass, one entry per check that ran.
#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|c| !c.passed)
    }

    fn pass(&mut self, name: &'static str) {
        self.outcomes.push(CheckOutcome {
            name,
            passed: true,
            witness: None,
        });
    }

    fn fail(&mut self, name: &'static str, witness: String) {
        self.outcomes.push(CheckOutcome {
            name,
            passed: false,
            witness: Some(witness),
        });
    }
}

/// Ground-truth state derived from levels and the edge set only, with node
/// weights as numerators over the shared table denominator.
#[derive(Debug, Clone)]
pub struct ReferenceState {
    pub weight_numerators: Vec<BigInt>,
    /// Per node, how many incident edges it prices (other endpoint at or
    /// below its own level).
    pub low_counts: Vec<u32>,
    pub up_active: Vec<bool>,
    pub down_active: Vec<bool>,
}

impl ReferenceState {
    pub fn weight(&self, v: u32, tables: &ExactTables) -> BigRational {
        tables.from_scaled(&self.weight_numerators[v as usize])
    }
}

/// Recomputes every node's weight, priced-edge count, and activity flags by
/// a full scan over the edge set.
pub fn recompute_state<W: WeightScalar>(g: &DynamicGraph<W>) -> ReferenceState {
    let tables = g.config().exact();
    let n = g.n() as usize;
    let bound = tables.level_bound();
    let mut weight_numerators = vec![BigInt::zero(); n];
    let mut low_counts = vec![0u32; n];
    for (u, v, lvl) in g.edges() {
        let price = tables.entry_num(lvl as usize);
        weight_numerators[u as usize] += price;
        weight_numerators[v as usize] += price;
        if g.level(u) <= g.level(v) {
            low_counts[v as usize] += 1;
        }
        if g.level(v) <= g.level(u) {
            low_counts[u as usize] += 1;
        }
    }
    let one = tables.denom().clone();
    let one_minus = tables.to_scaled(&tables.one_minus_eps());
    let mut up_active = vec![false; n];
    let mut down_active = vec![false; n];
    for v in 0..n {
        let lvl = g.level(v as u32);
        let w = &weight_numerators[v];
        if *w >= one {
            up_active[v] = if lvl < bound {
                let unit = tables.entry_num(lvl as usize) - tables.entry_num(lvl as usize + 1);
                let after = w - unit * BigInt::from(low_counts[v]);
                after >= one
            } else {
                // A full-weight node at the top level has nowhere to go;
                // correct runs never produce one, so flag it as stuck.
                true
            };
        }
        if lvl > 0 && *w < one_minus {
            down_active[v] = true;
        }
    }
    ReferenceState {
        weight_numerators,
        low_counts,
        up_active,
        down_active,
    }
}

/// Runs every structural and approximation check against `g` and reports
/// per-check outcomes. Intended to be called between updates, when the
/// engine claims a settled state.
pub fn verify_all<W: WeightScalar>(g: &DynamicGraph<W>) -> VerificationReport {
    let mut report = VerificationReport::default();
    let reference = recompute_state(g);
    check_levels(g, &mut report);
    check_cached_weights(g, &reference, &mut report);
    check_low_counts(g, &reference, &mut report);
    check_lists(g, &mut report);
    check_passivity(g, &reference, &mut report);
    check_weight_bands(g, &reference, &mut report);
    check_cover(g, &reference, &mut report);
    check_matching(g, &mut report);
    check_counting_bound(g, &reference, &mut report);
    if g.n() <= RATIO_CHECK_MAX_NODES {
        check_ratio(g, &reference, &mut report);
    }
    report
}

fn check_levels<W: WeightScalar>(g: &DynamicGraph<W>, report: &mut VerificationReport) {
    let name = "levels-in-range";
    let bound = g.config().level_bound();
    for v in 0..g.n() {
        let lvl = g.level(v);
        if lvl > bound {
            report.fail(name, format!("node {v} sits at level {lvl}, bound is {bound}"));
            return;
        }
    }
    report.pass(name);
}

fn check_cached_weights<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "cached-weights";
    let tables = g.config().exact();
    for v in 0..g.n() {
        let cached = g.weight(v);
        if let Some(exact) = cached.as_exact_rational(tables) {
            let expect = reference.weight(v, tables);
            if exact != expect {
                report.fail(
                    name,
                    format!("node {v}: cached weight {exact}, recomputed {expect}"),
                );
                return;
            }
        } else {
            let a = cached.approx_f64(tables);
            let b = ratio_to_f64(&reference.weight_numerators[v as usize], tables.denom());
            if (a - b).abs() > WEIGHT_RELATIVE_TOLERANCE * b.abs().max(1.0) {
                report.fail(
                    name,
                    format!(
                        "node {v}: cached weight {a:e} drifted from recomputed {b:e} by {:e}",
                        (a - b).abs()
                    ),
                );
                return;
            }
        }
    }
    report.pass(name);
}

fn check_low_counts<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "low-degree-counts";
    for v in 0..g.n() {
        let cached = g.low_neighbor_count(v);
        let expect = reference.low_counts[v as usize];
        if cached != expect {
            report.fail(
                name,
                format!("node {v}: cached priced-edge count {cached}, recomputed {expect}"),
            );
            return;
        }
    }
    report.pass(name);
}

/// Walks one circular list and returns its cells, or a description of the
/// structural defect. Bounded so corrupt links cannot hang the checker.
fn walk_list(cells: &[Cell], head: u32) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    if head == NIL {
        return Ok(out);
    }
    let mut c = head;
    for _ in 0..=cells.len() {
        if c as usize >= cells.len() {
            return Err(format!("cell id {c} out of range"));
        }
        let next = cells[c as usize].next;
        if next as usize >= cells.len() {
            return Err(format!("cell {c} links to out-of-range cell {next}"));
        }
        if cells[next as usize].prev != c {
            return Err(format!(
                "cells {c} and {next} disagree on adjacency ({} != {c})",
                cells[next as usize].prev
            ));
        }
        out.push(c);
        c = next;
        if c == head {
            return Ok(out);
        }
    }
    Err(format!("list starting at cell {head} never closes"))
}

fn check_lists<W: WeightScalar>(g: &DynamicGraph<W>, report: &mut VerificationReport) {
    let name = "list-structure";
    let cells = &g.cells;
    let mut seen = vec![false; cells.len()];
    for v in 0..g.n() {
        let node = &g.nodes[v as usize];
        let lvl = node.level;
        // One walk for the priced list, one per higher-level slot. `slot` is
        // None for the priced list.
        let mut queue: Vec<(Option<u32>, u32, u32)> = vec![(None, node.minus_head, node.minus_size)];
        for (t, (&head, &size)) in node.heads.iter().zip(node.sizes.iter()).enumerate() {
            queue.push((Some(t as u32), head, size));
        }
        for (slot, head, size) in queue {
            if let Some(t) = slot {
                if t <= lvl && head != NIL {
                    report.fail(
                        name,
                        format!("node {v} (level {lvl}) has a non-empty slot at level {t}"),
                    );
                    return;
                }
            }
            let list = match walk_list(cells, head) {
                Ok(list) => list,
                Err(defect) => {
                    report.fail(name, format!("node {v}: {defect}"));
                    return;
                }
            };
            if list.len() != size as usize {
                let what = match slot {
                    None => "priced list".to_string(),
                    Some(t) => format!("slot {t}"),
                };
                report.fail(
                    name,
                    format!(
                        "node {v}: {what} holds {} cells but records size {size}",
                        list.len()
                    ),
                );
                return;
            }
            for c in list {
                if seen[c as usize] {
                    report.fail(name, format!("cell {c} is linked into two lists"));
                    return;
                }
                seen[c as usize] = true;
                let peer = cells[c as usize].peer;
                if peer >= g.n() {
                    report.fail(name, format!("node {v}: cell {c} names peer {peer}"));
                    return;
                }
                let twin = c ^ 1;
                if cells[twin as usize].peer != v {
                    report.fail(
                        name,
                        format!(
                            "cell {c} on node {v}: twin names peer {}, not {v}",
                            cells[twin as usize].peer
                        ),
                    );
                    return;
                }
                let key = (v.min(peer), v.max(peer));
                if g.edge_index.get(&key) != Some(&(c / 2)) {
                    report.fail(
                        name,
                        format!("cell {c} claims edge ({}, {}) which maps elsewhere", key.0, key.1),
                    );
                    return;
                }
                let peer_level = g.nodes[peer as usize].level;
                match slot {
                    None if peer_level > lvl => {
                        report.fail(
                            name,
                            format!(
                                "edge ({v}, {peer}) filed as priced by node {v} (level {lvl}) \
                                 but the peer sits higher at {peer_level}"
                            ),
                        );
                        return;
                    }
                    Some(t) if peer_level != t => {
                        report.fail(
                            name,
                            format!(
                                "edge ({v}, {peer}) filed in slot {t} of node {v} \
                                 but the peer sits at {peer_level}"
                            ),
                        );
                        return;
                    }
                    _ => {}
                }
            }
        }
    }
    for (&(a, b), &e) in &g.edge_index {
        for c in [2 * e, 2 * e + 1] {
            if !seen[c as usize] {
                report.fail(
                    name,
                    format!("edge ({a}, {b}): cell {c} is not linked into any list"),
                );
                return;
            }
        }
    }
    report.pass(name);
}

fn check_passivity<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "passivity";
    let tables = g.config().exact();
    for v in 0..g.n() {
        let vi = v as usize;
        if reference.up_active[vi] {
            report.fail(
                name,
                format!(
                    "node {v} at level {} is active upward: weight {} stays at least 1 \
                     one level higher",
                    g.level(v),
                    reference.weight(v, tables)
                ),
            );
            return;
        }
        if reference.down_active[vi] {
            report.fail(
                name,
                format!(
                    "node {v} at level {} is active downward: weight {} is below 1 - eps",
                    g.level(v),
                    reference.weight(v, tables)
                ),
            );
            return;
        }
    }
    report.pass(name);
}

fn check_weight_bands<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "weight-bands";
    let tables = g.config().exact();
    let hi = tables.to_scaled(&tables.one_plus_eps());
    let lo = tables.to_scaled(&tables.one_minus_eps());
    for v in 0..g.n() {
        let w = &reference.weight_numerators[v as usize];
        if *w >= hi {
            report.fail(
                name,
                format!(
                    "node {v} weighs {}, at or above 1 + eps",
                    reference.weight(v, tables)
                ),
            );
            return;
        }
        if g.level(v) > 0 && *w < lo {
            report.fail(
                name,
                format!(
                    "node {v} at level {} weighs {}, below 1 - eps",
                    g.level(v),
                    reference.weight(v, tables)
                ),
            );
            return;
        }
    }
    report.pass(name);
}

fn check_cover<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "cover-validity";
    let tables = g.config().exact();
    let lo = tables.to_scaled(&tables.one_minus_eps());
    for (u, v, _) in g.edges() {
        let wu = &reference.weight_numerators[u as usize];
        let wv = &reference.weight_numerators[v as usize];
        if *wu < lo && *wv < lo {
            report.fail(
                name,
                format!(
                    "edge ({u}, {v}) is uncovered: weights {} and {} both fall below 1 - eps",
                    reference.weight(u, tables),
                    reference.weight(v, tables)
                ),
            );
            return;
        }
    }
    report.pass(name);
}

/// Per-node fractional matching totals, scaled so they stay integral: the
/// matching weight of a level-k edge is entry(k+1) = entry(k) * q / (p + q),
/// so everything is expressed over denom * (p + q).
fn matching_totals<W: WeightScalar>(g: &DynamicGraph<W>) -> (Vec<BigInt>, BigInt) {
    let tables = g.config().exact();
    let eps = tables.eps();
    let scale_q = BigInt::from(eps.den());
    let limit = tables.denom() * BigInt::from(eps.num() + eps.den());
    let mut totals = vec![BigInt::zero(); g.n() as usize];
    for (u, v, lvl) in g.edges() {
        let w = tables.entry_num(lvl as usize) * &scale_q;
        totals[u as usize] += &w;
        totals[v as usize] += w;
    }
    (totals, limit)
}

fn check_matching<W: WeightScalar>(g: &DynamicGraph<W>, report: &mut VerificationReport) {
    let name = "matching-feasibility";
    let (totals, limit) = matching_totals(g);
    for (v, total) in totals.iter().enumerate() {
        if *total >= limit {
            let value = BigRational::new(total.clone(), limit.clone());
            report.fail(
                name,
                format!("node {v} carries fractional matching weight {value}, not below 1"),
            );
            return;
        }
    }
    report.pass(name);
}

fn check_counting_bound<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "counting-bound";
    let tables = g.config().exact();
    let eps = tables.eps();
    let lo = tables.to_scaled(&tables.one_minus_eps());
    let cover = reference
        .weight_numerators
        .iter()
        .filter(|w| **w >= lo)
        .count();
    // Check |cover| * (1 - eps) / (1 + eps) <= 2 * sum of matching weights,
    // cleared to integers over denom * (p + q).
    let scale_q = BigInt::from(eps.den());
    let total: BigInt = g
        .edges()
        .iter()
        .map(|&(_, _, lvl)| tables.entry_num(lvl as usize) * &scale_q)
        .sum();
    let lhs = BigInt::from(cover as u64) * BigInt::from(eps.den() - eps.num()) * tables.denom();
    let rhs = BigInt::from(2u32) * &total;
    if lhs > rhs {
        let common = tables.denom() * BigInt::from(eps.num() + eps.den());
        report.fail(
            name,
            format!(
                "cover size {cover} scaled by (1 - eps)/(1 + eps) gives {}, above twice \
                 the matching total {}",
                BigRational::new(lhs, common.clone()),
                BigRational::new(rhs, common)
            ),
        );
        return;
    }
    report.pass(name);
}

fn check_ratio<W: WeightScalar>(
    g: &DynamicGraph<W>,
    reference: &ReferenceState,
    report: &mut VerificationReport,
) {
    let name = "approximation-ratio";
    let tables = g.config().exact();
    let eps = tables.eps();
    let lo = tables.to_scaled(&tables.one_minus_eps());
    let cover = reference
        .weight_numerators
        .iter()
        .filter(|w| **w >= lo)
        .count() as u128;
    let pairs: Vec<(u32, u32)> = g.edges().iter().map(|&(u, v, _)| (u, v)).collect();
    let opt = exact_min_vertex_cover(g.n(), &pairs) as u128;
    // cover <= 2 (1 + eps) / (1 - eps) * opt, cleared of denominators.
    let lhs = cover * u128::from(eps.den() - eps.num());
    let rhs = 2 * u128::from(eps.num() + eps.den()) * opt;
    if lhs > rhs {
        report.fail(
            name,
            format!("cover size {cover} exceeds the approximation bound at optimum {opt}"),
        );
        return;
    }
    report.pass(name);
}

/// Size of a minimum vertex cover, by branch and bound over bitmask
/// adjacency. Panics if `n > 32`; meant for test graphs, not production
/// inputs.
pub fn exact_min_vertex_cover(n: u32, edges: &[(u32, u32)]) -> u32 {
    assert!(n <= 32, "exact cover search handles at most 32 nodes, got {n}");
    let mut adj = vec![0u64; n as usize];
    for &(u, v) in edges {
        assert!(u != v, "self-loop ({u}, {v})");
        adj[u as usize] |= 1 << v;
        adj[v as usize] |= 1 << u;
    }
    let mut best = greedy_cover(&adj);
    branch(&adj, 0, &mut best);
    best
}

/// Any valid cover works as an initial upper bound; repeatedly taking a
/// maximum-degree node is cheap and usually tight.
fn greedy_cover(adj: &[u64]) -> u32 {
    let mut adj = adj.to_vec();
    let mut size = 0;
    loop {
        let Some(u) = live_max_degree(&adj) else {
            return size;
        };
        remove_node(&mut adj, u);
        size += 1;
    }
}

fn live_max_degree(adj: &[u64]) -> Option<usize> {
    (0..adj.len())
        .filter(|&u| adj[u] != 0)
        .max_by_key(|&u| adj[u].count_ones())
}

fn remove_node(adj: &mut [u64], u: usize) {
    let mut m = adj[u];
    adj[u] = 0;
    while m != 0 {
        let v = m.trailing_zeros() as usize;
        m &= m - 1;
        adj[v] &= !(1u64 << u);
    }
}

/// A maximal matching's size lower-bounds any vertex cover.
fn greedy_matching(adj: &[u64]) -> u32 {
    let mut used = 0u64;
    let mut count = 0;
    for (u, &row) in adj.iter().enumerate() {
        if used & (1 << u) != 0 {
            continue;
        }
        let avail = row & !used;
        if avail != 0 {
            used |= (1 << u) | (1 << avail.trailing_zeros());
            count += 1;
        }
    }
    count
}

fn branch(adj: &[u64], size: u32, best: &mut u32) {
    if size >= *best {
        return;
    }
    let mut adj = adj.to_vec();
    let mut size = size;
    // A degree-1 node's edge is always coverable optimally from the other
    // side; fold these away before branching.
    loop {
        let mut acted = false;
        for u in 0..adj.len() {
            if adj[u].count_ones() == 1 {
                let v = adj[u].trailing_zeros() as usize;
                remove_node(&mut adj, v);
                size += 1;
                if size >= *best {
                    return;
                }
                acted = true;
            }
        }
        if !acted {
            break;
        }
    }
    let Some(u) = live_max_degree(&adj) else {
        *best = size;
        return;
    };
    if size + greedy_matching(&adj) >= *best {
        return;
    }
    // Either u joins the cover, or all of its neighbors must.
    let mut with_u = adj.clone();
    remove_node(&mut with_u, u);
    branch(&with_u, size + 1, best);
    let nbrs = adj[u];
    let mut without_u = adj;
    let mut m = nbrs;
    while m != 0 {
        let v = m.trailing_zeros() as usize;
        m &= m - 1;
        remove_node(&mut without_u, v);
    }
    branch(&without_u, size + nbrs.count_ones(), best);
}
