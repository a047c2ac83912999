//! Property tests for the two text formats: serialize/parse round trips,
//! replay validity of generated streams, and parser robustness on mangled
//! input.

use std::collections::BTreeSet;

use dvc_core::snapshot::SnapshotData;
use dvc_core::{DynamicGraph, EdgeOp, EpsRational, ExactGraph, Trace};
use proptest::prelude::*;

fn eps_values() -> impl Strategy<Value = EpsRational> {
    prop_oneof![
        Just("1/2"),
        Just("3/10"),
        Just("1/5"),
        Just("1/10"),
        Just("7/10"),
    ]
    .prop_map(|s| s.parse().unwrap())
}

/// Builds a presence-consistent event stream: each raw pair toggles the
/// chosen edge, so deletions always target a present edge.
fn toggled_events(n: u32, raw: Vec<(u32, u32)>) -> Vec<EdgeOp> {
    let mut present = BTreeSet::new();
    let mut events = Vec::with_capacity(raw.len());
    for (a, b) in raw {
        let u = a % n;
        let mut v = b % n;
        if u == v {
            v = (v + 1) % n;
        }
        let key = (u.min(v), u.max(v));
        let op = if present.insert(key) {
            EdgeOp::Insert(u, v)
        } else {
            present.remove(&key);
            EdgeOp::Delete(u, v)
        };
        events.push(op);
    }
    events
}

fn traces(max_n: u32, max_len: usize) -> impl Strategy<Value = Trace> {
    (
        2..=max_n,
        eps_values(),
        proptest::collection::vec((0u32..1000, 0u32..1000), 0..=max_len),
        proptest::option::of("[ -~]{0,40}"),
    )
        .prop_map(|(n, eps, raw, metadata)| {
            let mut t = Trace::new(n, eps);
            t.events = toggled_events(n, raw);
            t.metadata = metadata;
            t
        })
}

proptest! {
    #[test]
    fn serialized_traces_parse_back_identically(trace in traces(24, 120)) {
        let text = trace.serialize();
        let parsed = Trace::parse(&text).unwrap();
        let mut expected = trace.clone();
        expected.metadata = None;
        prop_assert_eq!(&parsed, &expected);
        prop_assert_eq!(Trace::parse_strict(&text).unwrap(), expected);
        prop_assert!(trace.is_replay_valid());
    }

    #[test]
    fn snapshots_survive_a_round_trip_after_replay(trace in traces(12, 60)) {
        let mut g: ExactGraph = DynamicGraph::build(trace.n, trace.eps).unwrap();
        for &op in &trace.events {
            g.apply(op).unwrap();
        }
        let captured = SnapshotData::capture(&g);
        let parsed = SnapshotData::parse(&captured.serialize()).unwrap();
        prop_assert_eq!(parsed, captured);
    }

    #[test]
    fn arbitrary_text_never_panics_the_parsers(text in "\\PC*") {
        let _ = Trace::parse(&text);
        let _ = Trace::parse_strict(&text);
        let _ = SnapshotData::parse(&text);
    }

    #[test]
    fn corrupting_one_byte_never_panics_the_parser(
        trace in traces(16, 40),
        pos in any::<prop::sample::Index>(),
        byte in any::<u8>(),
    ) {
        let mut bytes = trace.serialize().into_bytes();
        if !bytes.is_empty() {
            let i = pos.index(bytes.len());
            bytes[i] = byte;
        }
        if let Ok(text) = String::from_utf8(bytes) {
            let _ = Trace::parse(&text);
            let _ = Trace::parse_strict(&text);
        }
    }
}

#[test]
fn strict_parsing_rejects_replay_violations() {
    let double_insert = "dvc-trace v1\nn 4 eps 1/2\n+ 0 1\n+ 1 0\n";
    assert!(Trace::parse(double_insert).is_ok());
    assert!(matches!(
        Trace::parse_strict(double_insert),
        Err(dvc_core::TraceError::ReplayViolation { line: 4 })
    ));
    let orphan_delete = "dvc-trace v1\nn 4 eps 1/2\n- 2 3\n";
    assert!(matches!(
        Trace::parse_strict(orphan_delete),
        Err(dvc_core::TraceError::ReplayViolation { line: 3 })
    ));
}
