//! Canonical textual state dumps.
//!
//! A dump records the node levels and the edge set, plus every weight as an
//! exact rational so that the file means the same thing in both numeric
//! tiers. Weights are always derived from the level structure through the
//! exact tables, which keeps float-tier dumps drift-free and makes a
//! snapshot-rebuild cycle a full weight resync.
//!
//! ```text
//! dvc-snapshot v1
//! n 4 eps 1/2 L 4
//! node 0 1 4/3
//! edge 0 1 1 2/3
//! ```
//!
//! Rationals print bare when integral (`1`, not `1/1`). Node lines cover
//! every id exactly once; edge endpoints satisfy `u < v`; lines sort by id.

// Mismatch errors carry both exact rational values; cold path only.
#![allow(clippy::result_large_err)]

use std::collections::HashSet;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::engine::{DynamicGraph, GraphConfig, GraphError};
use crate::num::{level_count, EpsError, EpsRational, WeightScalar};
use crate::oracle::recompute_state;

pub const SNAPSHOT_HEADER: &str = "dvc-snapshot v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("missing `{SNAPSHOT_HEADER}` header")]
    MissingHeader,
    #[error("line {0}: expected `{SNAPSHOT_HEADER}` header")]
    BadHeader(usize),
    #[error("line {0}: expected `n <count> eps <p>/<q> L <levels>`")]
    MalformedParams(usize),
    #[error("line {line}: bad epsilon: {source}")]
    BadEps { line: usize, source: EpsError },
    #[error("line {line}: level bound {stored} does not match {expected} for this n and eps")]
    WrongLevelBound {
        line: usize,
        stored: u32,
        expected: u32,
    },
    #[error("line {line}: cannot parse `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: node id {id} out of range for n = {n}")]
    NodeOutOfRange { line: usize, id: u32, n: u32 },
    #[error("line {line}: node {id} listed twice")]
    DuplicateNode { line: usize, id: u32 },
    #[error("line {line}: level {level} exceeds the bound {bound}")]
    LevelOutOfRange { line: usize, level: u32, bound: u32 },
    #[error("line {line}: edge endpoints must satisfy u < v")]
    EdgeOrder { line: usize },
    #[error("line {line}: edge ({u}, {v}) listed twice")]
    DuplicateEdge { line: usize, u: u32, v: u32 },
    #[error("node {id} missing from the dump")]
    MissingNode { id: u32 },
    #[error("edge ({u}, {v}): stored level {stored}, endpoint levels give {expected}")]
    EdgeLevelMismatch {
        u: u32,
        v: u32,
        stored: u32,
        expected: u32,
    },
    #[error("edge ({u}, {v}): stored weight {stored}, the price table gives {expected}")]
    EdgeWeightMismatch {
        u: u32,
        v: u32,
        stored: BigRational,
        expected: BigRational,
    },
    #[error("node {id}: stored weight {stored}, incident edges sum to {expected}")]
    NodeWeightMismatch {
        id: u32,
        stored: BigRational,
        expected: BigRational,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parsed form of a state dump. `levels` and `weights` are indexed by node
/// id; `edges` holds `(u, v, level, weight)` sorted by endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotData {
    pub n: u32,
    pub eps: EpsRational,
    pub level_bound: u32,
    pub levels: Vec<u32>,
    pub weights: Vec<BigRational>,
    pub edges: Vec<(u32, u32, u32, BigRational)>,
}

fn parse_u32(token: &str) -> Option<u32> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

fn parse_rational(token: &str) -> Option<BigRational> {
    let (num, den) = match token.split_once('/') {
        Some((a, b)) => (a, b),
        None => (token, "1"),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(num) || !digits(den) {
        return None;
    }
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(BigRational::new(num, den))
}

impl SnapshotData {
    /// Reads the state of a live graph, re-deriving every weight exactly
    /// from the level structure.
    pub fn capture<W: WeightScalar>(g: &DynamicGraph<W>) -> SnapshotData {
        let tables = g.config().exact();
        let reference = recompute_state(g);
        let levels: Vec<u32> = (0..g.n()).map(|v| g.level(v)).collect();
        let weights: Vec<BigRational> = reference
            .weight_numerators
            .iter()
            .map(|num| tables.from_scaled(num))
            .collect();
        let edges: Vec<(u32, u32, u32, BigRational)> = g
            .edges()
            .into_iter()
            .map(|(u, v, lvl)| (u, v, lvl, tables.entry(lvl as usize).clone()))
            .collect();
        SnapshotData {
            n: g.n(),
            eps: g.config().eps(),
            level_bound: g.config().level_bound(),
            levels,
            weights,
            edges,
        }
    }

    pub fn parse(text: &str) -> Result<SnapshotData, SnapshotError> {
        let total_lines = text.lines().count();
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, line)| (i + 1, line.trim_end()))
            .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'));

        let (line_no, header) = lines.next().ok_or(SnapshotError::MissingHeader)?;
        if header != SNAPSHOT_HEADER {
            return Err(SnapshotError::BadHeader(line_no));
        }
        let (line_no, params) = lines
            .next()
            .ok_or(SnapshotError::MalformedParams(total_lines + 1))?;
        let tokens: Vec<&str> = params.split_whitespace().collect();
        let (n, eps, stored_bound) = match tokens.as_slice() {
            ["n", count, "eps", ratio, "L", bound] => {
                let n = parse_u32(count).ok_or(SnapshotError::MalformedParams(line_no))?;
                let eps: EpsRational = ratio
                    .parse()
                    .map_err(|source| SnapshotError::BadEps { line: line_no, source })?;
                let bound = parse_u32(bound).ok_or(SnapshotError::MalformedParams(line_no))?;
                (n, eps, bound)
            }
            _ => return Err(SnapshotError::MalformedParams(line_no)),
        };
        let expected_bound = level_count(n, eps);
        if stored_bound != expected_bound {
            return Err(SnapshotError::WrongLevelBound {
                line: line_no,
                stored: stored_bound,
                expected: expected_bound,
            });
        }

        let mut levels: Vec<Option<u32>> = vec![None; n as usize];
        let mut weights: Vec<Option<BigRational>> = vec![None; n as usize];
        let mut edges: Vec<(u32, u32, u32, BigRational)> = Vec::new();
        let mut edge_seen: HashSet<(u32, u32)> = HashSet::new();
        for (line_no, line) in lines {
            let malformed = || SnapshotError::MalformedLine {
                line: line_no,
                text: line.to_string(),
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                ["node", id, level, weight] => {
                    let id = parse_u32(id).ok_or_else(malformed)?;
                    let level = parse_u32(level).ok_or_else(malformed)?;
                    let weight = parse_rational(weight).ok_or_else(malformed)?;
                    if id >= n {
                        return Err(SnapshotError::NodeOutOfRange { line: line_no, id, n });
                    }
                    if levels[id as usize].is_some() {
                        return Err(SnapshotError::DuplicateNode { line: line_no, id });
                    }
                    if level > expected_bound {
                        return Err(SnapshotError::LevelOutOfRange {
                            line: line_no,
                            level,
                            bound: expected_bound,
                        });
                    }
                    levels[id as usize] = Some(level);
                    weights[id as usize] = Some(weight);
                }
                ["edge", u, v, level, weight] => {
                    let u = parse_u32(u).ok_or_else(malformed)?;
                    let v = parse_u32(v).ok_or_else(malformed)?;
                    let level = parse_u32(level).ok_or_else(malformed)?;
                    let weight = parse_rational(weight).ok_or_else(malformed)?;
                    if u >= v {
                        return Err(SnapshotError::EdgeOrder { line: line_no });
                    }
                    if v >= n {
                        return Err(SnapshotError::NodeOutOfRange {
                            line: line_no,
                            id: v,
                            n,
                        });
                    }
                    if level > expected_bound {
                        return Err(SnapshotError::LevelOutOfRange {
                            line: line_no,
                            level,
                            bound: expected_bound,
                        });
                    }
                    if !edge_seen.insert((u, v)) {
                        return Err(SnapshotError::DuplicateEdge { line: line_no, u, v });
                    }
                    edges.push((u, v, level, weight));
                }
                _ => return Err(malformed()),
            }
        }
        let mut final_levels = Vec::with_capacity(n as usize);
        let mut final_weights = Vec::with_capacity(n as usize);
        for id in 0..n {
            match (levels[id as usize].take(), weights[id as usize].take()) {
                (Some(level), Some(weight)) => {
                    final_levels.push(level);
                    final_weights.push(weight);
                }
                _ => return Err(SnapshotError::MissingNode { id }),
            }
        }
        edges.sort_by_key(|&(u, v, _, _)| (u, v));
        Ok(SnapshotData {
            n,
            eps,
            level_bound: expected_bound,
            levels: final_levels,
            weights: final_weights,
            edges,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SNAPSHOT_HEADER}");
        let _ = writeln!(out, "n {} eps {} L {}", self.n, self.eps, self.level_bound);
        for id in 0..self.n as usize {
            let _ = writeln!(out, "node {id} {} {}", self.levels[id], self.weights[id]);
        }
        for (u, v, level, weight) in &self.edges {
            let _ = writeln!(out, "edge {u} {v} {level} {weight}");
        }
        out
    }

    /// Rebuilds a live graph, first checking that every stored level and
    /// weight is consistent with the edge set; the rebuilt state is
    /// therefore exactly the dump's state, in either numeric tier.
    pub fn to_graph<W: WeightScalar>(&self) -> Result<DynamicGraph<W>, SnapshotError> {
        let cfg: GraphConfig<W> = GraphConfig::new(self.n, self.eps)?;
        let weights: Vec<W> = {
            let tables = cfg.exact();
            let mut sums = vec![BigInt::zero(); self.n as usize];
            for (u, v, level, weight) in &self.edges {
                let expected = self.levels[*u as usize].max(self.levels[*v as usize]);
                if *level != expected {
                    return Err(SnapshotError::EdgeLevelMismatch {
                        u: *u,
                        v: *v,
                        stored: *level,
                        expected,
                    });
                }
                let price = tables.entry(*level as usize);
                if weight != price {
                    return Err(SnapshotError::EdgeWeightMismatch {
                        u: *u,
                        v: *v,
                        stored: weight.clone(),
                        expected: price.clone(),
                    });
                }
                let num = tables.entry_num(*level as usize);
                sums[*u as usize] += num;
                sums[*v as usize] += num;
            }
            for (id, sum) in sums.iter().enumerate() {
                let expected = tables.from_scaled(sum);
                if self.weights[id] != expected {
                    return Err(SnapshotError::NodeWeightMismatch {
                        id: id as u32,
                        stored: self.weights[id].clone(),
                        expected,
                    });
                }
            }
            self.weights
                .iter()
                .map(|w| W::from_exact(tables, w))
                .collect()
        };
        let pairs: Vec<(u32, u32)> = self.edges.iter().map(|&(u, v, _, _)| (u, v)).collect();
        Ok(DynamicGraph::from_parts(cfg, &self.levels, weights, &pairs)?)
    }
}

impl<W: WeightScalar> DynamicGraph<W> {
    /// Canonical textual dump of the current state; see [`SnapshotData`].
    pub fn snapshot(&self) -> String {
        SnapshotData::capture(self).serialize()
    }
}
