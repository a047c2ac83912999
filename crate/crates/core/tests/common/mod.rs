//! Shared helpers for the integration suites: a from-scratch replay of the
//! level rules in plain rationals, sharing no machinery with the engine, and
//! a brute-force cover search for cross-checking the branch-and-bound one.

#![allow(dead_code)]

use std::collections::BTreeSet;

use dvc_core::num::{BigInt, BigRational};
use dvc_core::{verify_all, DynamicGraph, EdgeOp, EpsRational, ExactGraph, QueueDiscipline, Trace};

/// Replays updates by recomputing every weight from scratch and moving the
/// smallest-id active node one level at a time. Deliberately naive: the point
/// is that it cannot share a bug with the engine's cached weights or lists.
pub struct RefSim {
    pub eps: EpsRational,
    pub bound: u32,
    pub levels: Vec<u32>,
    pub adj: Vec<BTreeSet<u32>>,
}

impl RefSim {
    pub fn new(n: u32, eps: EpsRational) -> RefSim {
        let (p, q) = (eps.num(), eps.den());
        let mut bound = 0u32;
        let mut lhs = BigInt::from(1u32);
        let mut rhs = BigInt::from(n);
        while lhs < rhs {
            bound += 1;
            lhs *= BigInt::from(p + q);
            rhs *= BigInt::from(q);
        }
        RefSim {
            eps,
            bound,
            levels: vec![0; n as usize],
            adj: vec![BTreeSet::new(); n as usize],
        }
    }

    fn price(&self, level: u32) -> BigRational {
        let (p, q) = (self.eps.num(), self.eps.den());
        let mut num = BigInt::from(1u32);
        let mut den = BigInt::from(1u32);
        for _ in 0..level {
            num *= BigInt::from(q);
            den *= BigInt::from(p + q);
        }
        BigRational::new(num, den)
    }

    fn ratio(&self, num: u64, den: u64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    pub fn weight_at(&self, v: usize, i: u32) -> BigRational {
        self.adj[v]
            .iter()
            .map(|&u| self.price(self.levels[u as usize].max(i)))
            .sum()
    }

    pub fn weight(&self, v: usize) -> BigRational {
        self.weight_at(v, self.levels[v])
    }

    fn is_active(&self, v: usize) -> (bool, bool) {
        let one = self.ratio(1, 1);
        let w = self.weight(v);
        let up = w >= one
            && self.levels[v] < self.bound
            && self.weight_at(v, self.levels[v] + 1) >= one;
        let (p, q) = (self.eps.num(), self.eps.den());
        let down = self.levels[v] > 0 && w < self.ratio(q - p, q);
        (up, down)
    }

    pub fn apply(&mut self, op: EdgeOp) {
        let (u, v) = op.endpoints();
        let (u, v) = (u as usize, v as usize);
        if op.is_insert() {
            assert!(self.adj[u].insert(v as u32) && self.adj[v].insert(u as u32));
        } else {
            assert!(self.adj[u].remove(&(v as u32)) && self.adj[v].remove(&(u as u32)));
        }
        let mut steps = 0u64;
        loop {
            let mut moved = false;
            for x in 0..self.levels.len() {
                let (up, down) = self.is_active(x);
                if up {
                    self.levels[x] += 1;
                } else if down {
                    self.levels[x] -= 1;
                } else {
                    continue;
                }
                moved = true;
                steps += 1;
                assert!(steps < 1_000_000, "reference settle diverged");
                break;
            }
            if !moved {
                break;
            }
        }
    }

    pub fn cover(&self) -> Vec<u32> {
        let (p, q) = (self.eps.num(), self.eps.den());
        let threshold = self.ratio(q - p, q);
        (0..self.levels.len())
            .filter(|&v| self.weight(v) >= threshold)
            .map(|v| v as u32)
            .collect()
    }

    /// Every node passive, bands hold, and every edge covered.
    pub fn assert_valid(&self) {
        let (p, q) = (self.eps.num(), self.eps.den());
        let low = self.ratio(q - p, q);
        let high = self.ratio(q + p, q);
        for v in 0..self.levels.len() {
            let (up, down) = self.is_active(v);
            assert!(!up && !down, "reference node {v} is active");
            let w = self.weight(v);
            assert!(w < high, "reference node {v} weighs {w} >= 1+eps");
            if self.levels[v] > 0 {
                assert!(w >= low, "reference node {v} weighs {w} < 1-eps at level > 0");
            }
        }
        for u in 0..self.adj.len() {
            for &v in &self.adj[u] {
                assert!(
                    self.weight(u) >= low || self.weight(v as usize) >= low,
                    "reference edge ({u}, {v}) uncovered"
                );
            }
        }
    }
}

/// Minimum vertex cover by plain subset enumeration. Exponential; n <= 20.
pub fn enumerate_min_cover(n: u32, edges: &[(u32, u32)]) -> u32 {
    assert!(n <= 20, "enumeration cover search handles at most 20 nodes");
    if edges.is_empty() {
        return 0;
    }
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones();
        if size >= best {
            continue;
        }
        if edges
            .iter()
            .all(|&(u, v)| mask & (1 << u) != 0 || mask & (1 << v) != 0)
        {
            best = size;
        }
    }
    best
}

/// Replays a trace on the exact tier, failing on the first violated check.
pub fn replay_verified(trace: &Trace, discipline: QueueDiscipline) -> ExactGraph {
    let mut g: ExactGraph =
        DynamicGraph::build(trace.n, trace.eps).expect("trace header must be buildable");
    g.set_queue_discipline(discipline);
    for (i, &op) in trace.events.iter().enumerate() {
        g.apply(op)
            .unwrap_or_else(|e| panic!("update {i} ({op:?}) failed: {e}"));
        let report = verify_all(&g);
        if let Some(bad) = report.first_failure() {
            panic!(
                "update {i} ({op:?}): check `{}` failed: {}",
                bad.name,
                bad.witness.clone().unwrap_or_default()
            );
        }
    }
    g
}
