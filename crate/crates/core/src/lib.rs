//! Dynamic (2+eps)-approximate vertex cover under edge insertions and
//! deletions, with amortized O(1/eps^2) update time, plus an accounting layer
//! that replays the potential-function argument behind that bound as exact
//! arithmetic checks.
//!
//! The engine keeps every node at an integer level and prices each edge by
//! the higher endpoint level; nodes whose incident weight reaches the upper
//! threshold rise, nodes that fall below the lower threshold sink, and the
//! set of heavy nodes is the cover. All engine state is generic over the
//! numeric tier: `f64` for speed, [`num::ExactWeight`] for tolerance-free
//! verification.

pub mod accounting;
pub mod engine;
pub mod num;
pub mod oracle;
pub mod snapshot;
pub mod trace;

pub use accounting::{
    audit_conservation, audited_update, check_rate_drop, event_delta, potential_row,
    AccountingError, AuditError, AuditEventKind, DirtyState, EventAudit, EventDelta, NodeRow,
    PotentialLedger, UpdateAudit,
};
pub use engine::{
    Counters, DynamicGraph, EdgeOp, ExactGraph, FloatGraph, GraphConfig, GraphError, MoveRecord,
    QueueDiscipline, UpdateReport,
};
pub use num::{EpsError, EpsRational, ExactTables, ExactWeight, WeightScalar};
pub use oracle::{
    exact_min_vertex_cover, recompute_state, verify_all, CheckOutcome, ReferenceState,
    VerificationReport,
};
pub use snapshot::{SnapshotData, SnapshotError};
pub use trace::{gen_random, gen_sliding_window, gen_star_churn, Trace, TraceError};
