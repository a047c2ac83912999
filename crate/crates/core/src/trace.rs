//! Update-stream text format and workload generators.
//!
//! A trace is a header naming the node count and the approximation parameter
//! followed by one `+ u v` or `- u v` line per update. Generators cover the
//! three workloads the test and benchmark suites use: uniform random dynamics
//! with a tunable delete rate, a sliding window over insertions, and a star
//! that is repeatedly grown to full degree and torn back down.
//!
//! Every generator is a pure function of its parameters and seed. The PRNG
//! is ChaCha8, which has published reference outputs and identical behavior
//! on every platform, so golden trace files stay byte-stable.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::EdgeOp;
use crate::num::{EpsError, EpsRational};

pub const TRACE_HEADER: &str = "dvc-trace v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("missing `{TRACE_HEADER}` header line")]
    MissingHeader,
    #[error("line {0}: expected `{TRACE_HEADER}`")]
    BadHeader(usize),
    #[error("line {0}: expected `n <count> eps <p>/<q>`")]
    MalformedParams(usize),
    #[error("line {0}: {1}")]
    BadEps(usize, EpsError),
    #[error("line {line}: malformed event `{text}`")]
    MalformedEvent { line: usize, text: String },
    #[error("line {line}: node {id} out of range for n={n}")]
    NodeOutOfRange { line: usize, id: u64, n: u32 },
    #[error("line {line}: self-loop at node {node}")]
    SelfLoop { line: usize, node: u32 },
    #[error("line {line}: event repeats or removes a missing edge")]
    ReplayViolation { line: usize },
}

/// An ordered update stream against a fixed node count and parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub n: u32,
    pub eps: EpsRational,
    pub events: Vec<EdgeOp>,
    /// Free-form provenance note emitted as a comment line; parsing never
    /// recovers it.
    pub metadata: Option<String>,
}

impl Trace {
    pub fn new(n: u32, eps: EpsRational) -> Self {
        Trace {
            n,
            eps,
            events: Vec::new(),
            metadata: None,
        }
    }

    /// Parses the text format, ignoring comment and blank lines.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        Self::parse_inner(text, false)
    }

    /// Like [`Self::parse`], but also rejects traces that re-insert a present
    /// edge or delete an absent one.
    pub fn parse_strict(text: &str) -> Result<Self, TraceError> {
        Self::parse_inner(text, true)
    }

    fn parse_inner(text: &str, strict: bool) -> Result<Self, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line_no, header) = lines.next().ok_or(TraceError::MissingHeader)?;
        if header != TRACE_HEADER {
            return Err(TraceError::BadHeader(line_no));
        }

        let (line_no, params) = lines.next().ok_or(TraceError::MalformedParams(line_no + 1))?;
        let mut tok = params.split_whitespace();
        let (n, eps) = match (tok.next(), tok.next(), tok.next(), tok.next(), tok.next()) {
            (Some("n"), Some(count), Some("eps"), Some(ratio), None) => {
                let n: u32 = count
                    .parse()
                    .map_err(|_| TraceError::MalformedParams(line_no))?;
                let eps: EpsRational = ratio
                    .parse()
                    .map_err(|e| TraceError::BadEps(line_no, e))?;
                (n, eps)
            }
            _ => return Err(TraceError::MalformedParams(line_no)),
        };

        let mut trace = Trace::new(n, eps);
        let mut present = std::collections::HashSet::new();
        for (line, text) in lines {
            let mut tok = text.split_whitespace();
            let op = match (tok.next(), tok.next(), tok.next(), tok.next()) {
                (Some(sign @ ("+" | "-")), Some(a), Some(b), None) => {
                    let u = parse_node(a, line, n)?;
                    let v = parse_node(b, line, n)?;
                    if u == v {
                        return Err(TraceError::SelfLoop { line, node: u });
                    }
                    if sign == "+" {
                        EdgeOp::Insert(u, v)
                    } else {
                        EdgeOp::Delete(u, v)
                    }
                }
                _ => {
                    return Err(TraceError::MalformedEvent {
                        line,
                        text: text.to_owned(),
                    })
                }
            };
            if strict {
                let (u, v) = op.endpoints();
                let key = (u.min(v), u.max(v));
                let ok = if op.is_insert() {
                    present.insert(key)
                } else {
                    present.remove(&key)
                };
                if !ok {
                    return Err(TraceError::ReplayViolation { line });
                }
            }
            trace.events.push(op);
        }
        Ok(trace)
    }

    /// Serializes to the text format; parsing the output reproduces this
    /// trace up to the metadata comment.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TRACE_HEADER}");
        let _ = writeln!(out, "n {} eps {}", self.n, self.eps);
        if let Some(meta) = &self.metadata {
            let _ = writeln!(out, "# {meta}");
        }
        for op in &self.events {
            let (u, v) = op.endpoints();
            let sign = if op.is_insert() { '+' } else { '-' };
            let _ = writeln!(out, "{sign} {u} {v}");
        }
        out
    }

    /// True when no event re-inserts a present edge or deletes an absent one.
    pub fn is_replay_valid(&self) -> bool {
        let mut present = std::collections::HashSet::new();
        self.events.iter().all(|op| {
            let (u, v) = op.endpoints();
            let key = (u.min(v), u.max(v));
            if op.is_insert() {
                present.insert(key)
            } else {
                present.remove(&key)
            }
        })
    }
}

fn parse_node(text: &str, line: usize, n: u32) -> Result<u32, TraceError> {
    let id: u64 = text.parse().map_err(|_| TraceError::MalformedEvent {
        line,
        text: text.to_owned(),
    })?;
    if id >= n as u64 {
        return Err(TraceError::NodeOutOfRange { line, id, n });
    }
    Ok(id as u32)
}

/// A present-edge set supporting O(1) membership, uniform sampling, and
/// removal.
#[derive(Default)]
struct EdgeSet {
    list: Vec<(u32, u32)>,
    index: HashMap<(u32, u32), usize>,
}

impl EdgeSet {
    fn len(&self) -> u64 {
        self.list.len() as u64
    }

    fn contains(&self, key: (u32, u32)) -> bool {
        self.index.contains_key(&key)
    }

    fn insert(&mut self, key: (u32, u32)) {
        debug_assert!(!self.contains(key));
        self.index.insert(key, self.list.len());
        self.list.push(key);
    }

    fn remove(&mut self, key: (u32, u32)) {
        let slot = self.index.remove(&key).expect("edge present");
        let last = self.list.pop().expect("list nonempty");
        if last != key {
            self.list[slot] = last;
            self.index.insert(last, slot);
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (u32, u32) {
        self.list[(rng.next_u64() % self.len()) as usize]
    }
}

/// Draws a uniform absent pair, or `None` on a complete graph. Sparse graphs
/// use rejection sampling; at half density and beyond the absent pairs are
/// enumerated so the loop cannot degenerate.
fn sample_absent(n: u32, present: &EdgeSet, rng: &mut ChaCha8Rng) -> Option<(u32, u32)> {
    let total = n as u64 * (n as u64 - 1) / 2;
    let absent = total - present.len();
    if absent == 0 {
        return None;
    }
    if present.len() * 2 < total {
        loop {
            let u = (rng.next_u64() % n as u64) as u32;
            let v = (rng.next_u64() % n as u64) as u32;
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if !present.contains(key) {
                return Some(key);
            }
        }
    }
    let mut pick = rng.next_u64() % absent;
    for u in 0..n {
        for v in (u + 1)..n {
            if !present.contains((u, v)) {
                if pick == 0 {
                    return Some((u, v));
                }
                pick -= 1;
            }
        }
    }
    unreachable!("absent-pair count mismatch");
}

fn coin(rng: &mut ChaCha8Rng, probability: f64) -> bool {
    // 53 uniform bits, the same construction rand uses for unit floats.
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    unit < probability
}

/// Random dynamics: each step deletes a uniform present edge with probability
/// `p_delete` when one exists, otherwise inserts a uniform absent pair. On a
/// complete graph the insert side falls back to a deletion.
pub fn gen_random(n: u32, eps: EpsRational, tau: u64, p_delete: f64, seed: u64) -> Trace {
    assert!(n >= 2, "random traces need at least two nodes");
    assert!((0.0..=1.0).contains(&p_delete));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = EdgeSet::default();
    let mut trace = Trace::new(n, eps);
    trace.metadata = Some(format!(
        "gen_random n={n} tau={tau} p_delete={p_delete} seed={seed}"
    ));
    for _ in 0..tau {
        let delete = present.len() > 0 && coin(&mut rng, p_delete);
        if delete {
            let key = present.sample(&mut rng);
            present.remove(key);
            trace.events.push(EdgeOp::Delete(key.0, key.1));
        } else if let Some(key) = sample_absent(n, &present, &mut rng) {
            present.insert(key);
            trace.events.push(EdgeOp::Insert(key.0, key.1));
        } else {
            let key = present.sample(&mut rng);
            present.remove(key);
            trace.events.push(EdgeOp::Delete(key.0, key.1));
        }
    }
    trace
}

/// Sliding-window dynamics: inserted edges are deleted once they are `window`
/// events old, oldest first.
pub fn gen_sliding_window(n: u32, eps: EpsRational, tau: u64, window: u64, seed: u64) -> Trace {
    assert!(n >= 2, "sliding-window traces need at least two nodes");
    assert!(window >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = EdgeSet::default();
    let mut fifo: std::collections::VecDeque<((u32, u32), u64)> = Default::default();
    let mut trace = Trace::new(n, eps);
    trace.metadata = Some(format!(
        "gen_sliding_window n={n} tau={tau} window={window} seed={seed}"
    ));
    for step in 0..tau {
        let expired = fifo
            .front()
            .is_some_and(|&(_, born)| born + window <= step);
        if expired {
            let (key, _) = fifo.pop_front().unwrap();
            present.remove(key);
            trace.events.push(EdgeOp::Delete(key.0, key.1));
        } else if let Some(key) = sample_absent(n, &present, &mut rng) {
            present.insert(key);
            fifo.push_back((key, step));
            trace.events.push(EdgeOp::Insert(key.0, key.1));
        } else {
            let (key, _) = fifo.pop_front().expect("complete graph has live edges");
            present.remove(key);
            trace.events.push(EdgeOp::Delete(key.0, key.1));
        }
    }
    trace
}

/// Star churn: per round, grow the star at node 0 to full degree, then tear
/// it down in reverse. The canonical workload for repeated level climbs.
pub fn gen_star_churn(n: u32, eps: EpsRational, rounds: u32) -> Trace {
    assert!(n >= 3, "star churn needs at least three nodes");
    assert!(rounds >= 1);
    let mut trace = Trace::new(n, eps);
    trace.metadata = Some(format!("gen_star_churn n={n} rounds={rounds}"));
    for _ in 0..rounds {
        for k in 1..n {
            trace.events.push(EdgeOp::Insert(0, k));
        }
        for k in (1..n).rev() {
            trace.events.push(EdgeOp::Delete(0, k));
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_minimal_trace() {
        let t = Trace::parse("dvc-trace v1\nn 2 eps 1/2\n+ 0 1\n").unwrap();
        assert_eq!(t.n, 2);
        assert_eq!(t.eps, EpsRational::new(1, 2).unwrap());
        assert_eq!(t.events, vec![EdgeOp::Insert(0, 1)]);
    }

    #[test]
    fn round_trips_canonical_text() {
        let text = "dvc-trace v1\nn 4 eps 3/10\n+ 0 1\n+ 2 3\n- 0 1\n";
        let t = Trace::parse(text).unwrap();
        assert_eq!(t.serialize(), text);
    }

    #[test]
    fn ignores_comments_and_blank_lines() {
        let text = "# preamble\ndvc-trace v1\n\nn 2 eps 1/2\n# note\n+ 0 1\n";
        let t = Trace::parse(text).unwrap();
        assert_eq!(t.events.len(), 1);
        assert!(t.metadata.is_none());
    }

    #[test]
    fn reports_errors_with_line_numbers() {
        let err = Trace::parse("dvc-trace v1\nn 2 eps 1/2\n+ 0 0\n").unwrap_err();
        assert_eq!(err, TraceError::SelfLoop { line: 3, node: 0 });

        let err = Trace::parse("dvc-trace v1\nn 2 eps 1/2\n+ 0 5\n").unwrap_err();
        assert_eq!(
            err,
            TraceError::NodeOutOfRange {
                line: 3,
                id: 5,
                n: 2
            }
        );

        let err = Trace::parse("dvc-trace v1\nn 2 eps 0/1\n").unwrap_err();
        assert!(matches!(err, TraceError::BadEps(2, _)));

        let err = Trace::parse("dvc-trace v2\n").unwrap_err();
        assert_eq!(err, TraceError::BadHeader(1));

        let err = Trace::parse("dvc-trace v1\nn 2 eps 1/2\n* 0 1\n").unwrap_err();
        assert!(matches!(err, TraceError::MalformedEvent { line: 3, .. }));
    }

    #[test]
    fn strict_parse_rejects_replay_violations() {
        let err =
            Trace::parse_strict("dvc-trace v1\nn 3 eps 1/2\n+ 0 1\n+ 1 0\n").unwrap_err();
        assert_eq!(err, TraceError::ReplayViolation { line: 4 });

        let err = Trace::parse_strict("dvc-trace v1\nn 3 eps 1/2\n- 0 1\n").unwrap_err();
        assert_eq!(err, TraceError::ReplayViolation { line: 3 });

        assert!(Trace::parse_strict("dvc-trace v1\nn 3 eps 1/2\n+ 0 1\n- 1 0\n+ 0 1\n").is_ok());
    }

    fn half() -> EpsRational {
        EpsRational::new(1, 2).unwrap()
    }

    #[test]
    fn star_churn_emits_the_documented_sequence() {
        let t = gen_star_churn(3, half(), 1);
        assert_eq!(
            t.events,
            vec![
                EdgeOp::Insert(0, 1),
                EdgeOp::Insert(0, 2),
                EdgeOp::Delete(0, 2),
                EdgeOp::Delete(0, 1),
            ]
        );
        assert!(t.is_replay_valid());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_random(8, half(), 100, 0.3, 7).serialize();
        let b = gen_random(8, half(), 100, 0.3, 7).serialize();
        assert_eq!(a, b);
        let c = gen_sliding_window(8, half(), 100, 10, 7).serialize();
        let d = gen_sliding_window(8, half(), 100, 10, 7).serialize();
        assert_eq!(c, d);
        assert_ne!(a, gen_random(8, half(), 100, 0.3, 8).serialize());
    }

    #[test]
    fn generated_traces_replay_validly() {
        for seed in 0..25 {
            let n = 2 + (seed % 7) as u32;
            let tau = 40 + seed * 13;
            let p = (seed % 10) as f64 / 10.0;
            assert!(gen_random(n, half(), tau, p, seed).is_replay_valid());
            let window = 1 + seed % 19;
            assert!(gen_sliding_window(n, half(), tau, window, seed).is_replay_valid());
        }
    }

    #[test]
    fn wide_window_only_inserts() {
        let t = gen_sliding_window(6, half(), 12, 100, 3);
        assert!(t.events.iter().all(EdgeOp::is_insert));
        // Window 1 alternates insert/delete once warm.
        let t = gen_sliding_window(6, half(), 12, 1, 3);
        for pair in t.events.chunks(2) {
            assert!(pair[0].is_insert());
            if pair.len() == 2 {
                assert!(!pair[1].is_insert());
            }
        }
    }

    #[test]
    fn dense_random_traces_saturate_and_back_off() {
        // n=3 has only three possible edges, so the complete-graph fallback
        // and the enumeration path both run.
        let t = gen_random(3, half(), 200, 0.1, 11);
        assert!(t.is_replay_valid());
        assert_eq!(t.events.len(), 200);
    }
}
