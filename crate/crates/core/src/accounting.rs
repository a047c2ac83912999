//! The potential ledger: an executable form of the engine's amortized
//! analysis.
//!
//! Every node carries a potential row over the levels. A node with weight at
//! least 1 ("up" state) stores, between its own level and the highest level
//! where its weight would still be at least 1, the amount its weight sheds
//! level by level; the row sums to `W - 1`. A node below weight 1 ("down"
//! state) stores `1 - W` at its own level. Potential at level k converts to
//! energy at rate `(1+eps)^k / eps`.
//!
//! Each engine event (one edge update, or one single-level move) changes
//! some rows; the change is split into released and absorbed amounts under a
//! fixed convention, and the checkers assert, in exact arithmetic with zero
//! tolerance, the budget facts that make the amortized bound work:
//!
//! * a move's work is paid by `(1+eps)` times the energy its mover releases,
//!   with exact equality for upward moves;
//! * an edge update deposits at most `3/eps` units of energy per endpoint;
//! * during a move, everything absorbed comes out of the mover's released
//!   potential, only nearby nodes at controlled levels absorb, and absorbed
//!   potential always sits at a strictly lower type than the released type;
//! * conversion rates drop by at least `(1+eps)` every two types down the
//!   order, so potential can only cascade a bounded number of times;
//! * over a whole run the books balance exactly: final total potential
//!   equals the initial total plus absorbed minus released.
//!
//! The ledger is an observer. It recomputes rows from the graph's level
//! structure around each event (never from cached weights) and does not
//! influence the engine. Everything here runs on the exact tier's scaled
//! integers: a potential amount is a numerator over the shared table
//! denominator.

// Check failures carry the exact rational values on both sides, which makes
// the error variants big; they only exist on cold paths.
#![allow(clippy::result_large_err)]

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::engine::{DynamicGraph, EdgeOp, GraphError, MoveRecord, UpdateReport};
use crate::num::{ExactTables, WeightScalar};

/// Which side of weight 1 a node sits on. Every node is always in exactly
/// one of the two states; "up" nodes may or may not be able to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirtyState {
    Up,
    Down,
}

impl std::fmt::Display for DirtyState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DirtyState::Up => "up",
            DirtyState::Down => "down",
        })
    }
}

/// One node's potential row, plus the weight-by-level profile it was derived
/// from. All values are numerators over the table denominator.
#[derive(Debug, Clone)]
pub struct NodeRow {
    pub state: DirtyState,
    /// `row[k]` is the potential stored at level k.
    pub row: Vec<BigInt>,
    /// `weights_at[i]` is the node's weight if it sat at level i, with all
    /// neighbors fixed: the quantity the activity rules and the row are
    /// defined through.
    pub weights_at: Vec<BigInt>,
}

impl NodeRow {
    pub fn total(&self) -> BigInt {
        self.row.iter().sum()
    }
}

/// Computes a node's potential row from the level structure alone, in
/// O(levels + degree) big-integer operations.
pub fn potential_row<W: WeightScalar>(g: &DynamicGraph<W>, v: u32) -> NodeRow {
    let tables = g.config().exact();
    let bound = tables.level_bound() as usize;
    let lvl = g.level(v) as usize;
    let mut count_at = vec![0u64; bound + 1];
    for u in g.neighbor_ids(v) {
        count_at[g.level(u) as usize] += 1;
    }
    // weights_at[i] = (count of neighbors at or below i) * entry(i)
    //              + sum over higher neighbors of their own entries.
    let mut above = vec![BigInt::zero(); bound + 2];
    for t in (0..=bound).rev() {
        above[t] = &above[t + 1] + tables.entry_num(t) * BigInt::from(count_at[t]);
    }
    let mut weights_at = Vec::with_capacity(bound + 1);
    let mut low = 0u64;
    for i in 0..=bound {
        low += count_at[i];
        weights_at.push(tables.entry_num(i) * BigInt::from(low) + &above[i + 1]);
    }
    for i in 0..bound {
        debug_assert!(weights_at[i] >= weights_at[i + 1]);
    }

    let one = tables.denom();
    let mut row = vec![BigInt::zero(); bound + 1];
    let state = if weights_at[lvl] >= *one {
        let mut top = lvl;
        while top < bound && weights_at[top + 1] >= *one {
            top += 1;
        }
        for k in lvl..top {
            row[k] = &weights_at[k] - &weights_at[k + 1];
        }
        row[top] = &weights_at[top] - one;
        DirtyState::Up
    } else {
        row[lvl] = one - &weights_at[lvl];
        DirtyState::Down
    };
    let expected_total = match state {
        DirtyState::Up => &weights_at[lvl] - one,
        DirtyState::Down => one - &weights_at[lvl],
    };
    let total: BigInt = row.iter().sum();
    assert_eq!(total, expected_total, "row sum identity for node {v}");
    assert!(row.iter().all(|p| !p.is_negative()), "negative potential at node {v}");
    NodeRow {
        state,
        row,
        weights_at,
    }
}

/// One released or absorbed amount. `direction` is the type's direction
/// component: the node's state before the event for released entries, after
/// it for absorbed entries.
#[derive(Debug, Clone)]
pub struct DeltaEntry {
    pub node: u32,
    pub level: u32,
    pub direction: DirtyState,
    pub amount: BigInt,
}

/// The released/absorbed split of one event, under the convention: a node
/// keeping its state releases or absorbs the per-level signed differences;
/// a node changing state releases its whole old row and absorbs its whole
/// new row. Entries are strictly positive.
#[derive(Debug, Clone, Default)]
pub struct EventDelta {
    pub released: Vec<DeltaEntry>,
    pub absorbed: Vec<DeltaEntry>,
}

impl EventDelta {
    pub fn released_potential(&self) -> BigInt {
        self.released.iter().map(|e| &e.amount).sum()
    }

    pub fn absorbed_potential(&self) -> BigInt {
        self.absorbed.iter().map(|e| &e.amount).sum()
    }

    pub fn released_energy(&self, tables: &ExactTables) -> BigRational {
        entries_energy(&self.released, tables)
    }

    pub fn absorbed_energy(&self, tables: &ExactTables) -> BigRational {
        entries_energy(&self.absorbed, tables)
    }
}

fn entries_energy(entries: &[DeltaEntry], tables: &ExactTables) -> BigRational {
    let mut total = BigRational::zero();
    for e in entries {
        total += tables.from_scaled(&e.amount) * tables.rate(e.level as usize);
    }
    total
}

/// Splits the row changes of the affected nodes into released and absorbed
/// amounts. `before` and `after` hold the same nodes in the same order.
pub fn event_delta(before: &[(u32, NodeRow)], after: &[(u32, NodeRow)]) -> EventDelta {
    let mut delta = EventDelta::default();
    for ((v, b), (v2, a)) in before.iter().zip(after) {
        debug_assert_eq!(v, v2);
        if b.state == a.state {
            for k in 0..b.row.len() {
                if a.row[k] > b.row[k] {
                    delta.absorbed.push(DeltaEntry {
                        node: *v,
                        level: k as u32,
                        direction: a.state,
                        amount: &a.row[k] - &b.row[k],
                    });
                } else if a.row[k] < b.row[k] {
                    delta.released.push(DeltaEntry {
                        node: *v,
                        level: k as u32,
                        direction: b.state,
                        amount: &b.row[k] - &a.row[k],
                    });
                }
            }
        } else {
            for (k, p) in b.row.iter().enumerate() {
                if !p.is_zero() {
                    delta.released.push(DeltaEntry {
                        node: *v,
                        level: k as u32,
                        direction: b.state,
                        amount: p.clone(),
                    });
                }
            }
            for (k, p) in a.row.iter().enumerate() {
                if !p.is_zero() {
                    delta.absorbed.push(DeltaEntry {
                        node: *v,
                        level: k as u32,
                        direction: a.state,
                        amount: p.clone(),
                    });
                }
            }
        }
    }
    delta
}

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error(
        "move of node {node} from level {from}: work {work} exceeds (1+eps) times \
         the released energy, {limit}"
    )]
    WorkBound {
        node: u32,
        from: u32,
        work: u64,
        limit: BigRational,
    },
    #[error(
        "up-move of node {node} from level {from}: work {work} should exactly equal \
         the released-energy identity value {expected}"
    )]
    UpWorkIdentity {
        node: u32,
        from: u32,
        work: u64,
        expected: BigRational,
    },
    #[error(
        "down-move of node {node} from level {from}: work {work} should exactly equal \
         the weight-difference identity value {expected}"
    )]
    DownWorkIdentity {
        node: u32,
        from: u32,
        work: u64,
        expected: BigRational,
    },
    #[error(
        "down-move of node {node} from level {from} touched {touched} edges, \
         at or above the (1+eps)^level cap"
    )]
    DownTouchBound { node: u32, from: u32, touched: u64 },
    #[error("edge update at node {node}: absorbed energy {absorbed} exceeds 3/eps = {cap}")]
    UpdateEnergy {
        node: u32,
        absorbed: BigRational,
        cap: BigRational,
    },
    #[error(
        "move of node {node} at level {from}: total absorbed potential {absorbed} exceeds \
         the potential {released} released by the mover at that level"
    )]
    TransferTotal {
        node: u32,
        from: u32,
        absorbed: BigRational,
        released: BigRational,
    },
    #[error("move of node {mover} at level {from}: node {node} absorbed at level {level}, {detail}")]
    TransferLocality {
        mover: u32,
        from: u32,
        node: u32,
        level: u32,
        detail: String,
    },
    #[error(
        "move of node {mover} at level {from} going {mover_dir}: node {node} absorbed \
         potential of type ({level}, {dir}), which does not sit strictly below the mover's type"
    )]
    TypeOrder {
        mover: u32,
        from: u32,
        mover_dir: DirtyState,
        node: u32,
        level: u32,
        dir: DirtyState,
    },
    #[error(
        "conversion rates fail the two-hop drop between levels {high} and {low}: \
         {high_rate} < (1+eps) * {low_rate}"
    )]
    RateDrop {
        high: u32,
        low: u32,
        high_rate: BigRational,
        low_rate: BigRational,
    },
    #[error(
        "ledger out of balance: final total potential {actual}, but initial + absorbed - \
         released = {expected}"
    )]
    Conservation {
        actual: BigRational,
        expected: BigRational,
    },
}

/// Errors from a checked run: either the engine refused the operation or an
/// accounting check failed.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

/// Work lemma plus the exact work identities for one move. `pre` is the
/// mover's row before the move; `delta` is the move's full split.
pub fn check_work_lemma(
    rec: &MoveRecord,
    delta: &EventDelta,
    pre: &NodeRow,
    tables: &ExactTables,
) -> Result<(), AccountingError> {
    let released_energy: BigRational = entries_energy(
        &delta
            .released
            .iter()
            .filter(|e| e.node == rec.node)
            .cloned()
            .collect::<Vec<_>>(),
        tables,
    );
    let limit = &released_energy * tables.one_plus_eps();
    let work = BigRational::from_integer(BigInt::from(rec.work));
    if work > limit {
        return Err(AccountingError::WorkBound {
            node: rec.node,
            from: rec.from,
            work: rec.work,
            limit,
        });
    }
    let k = rec.from as usize;
    if rec.is_up() {
        // Each priced edge contributes exactly one (1+eps)-step of weight,
        // so the work equals the released energy times (1+eps), exactly.
        let diff = &pre.weights_at[k] - &pre.weights_at[k + 1];
        let expected = tables.from_scaled(&diff) * tables.rate(k + 1);
        if work != expected {
            return Err(AccountingError::UpWorkIdentity {
                node: rec.node,
                from: rec.from,
                work: rec.work,
                expected,
            });
        }
    } else {
        let diff = &pre.weights_at[k - 1] - &pre.weights_at[k];
        let expected = tables.from_scaled(&diff) * tables.rate(k);
        if work != expected {
            return Err(AccountingError::DownWorkIdentity {
                node: rec.node,
                from: rec.from,
                work: rec.work,
                expected,
            });
        }
        // Touched edges are the priced ones; below 1 - eps of weight there
        // cannot be (1+eps)^k of them.
        let touched = BigRational::from_integer(BigInt::from(rec.touched));
        if touched * tables.entry(k) >= BigRational::one() {
            return Err(AccountingError::DownTouchBound {
                node: rec.node,
                from: rec.from,
                touched: rec.touched,
            });
        }
    }
    Ok(())
}

/// Per-endpoint energy bound for one edge update.
pub fn check_update_energy(
    delta: &EventDelta,
    endpoints: (u32, u32),
    tables: &ExactTables,
) -> Result<(), AccountingError> {
    let eps = tables.eps();
    let cap = BigRational::new(BigInt::from(3 * eps.den()), BigInt::from(eps.num()));
    for node in [endpoints.0, endpoints.1] {
        let absorbed: BigRational = entries_energy(
            &delta
                .absorbed
                .iter()
                .filter(|e| e.node == node)
                .cloned()
                .collect::<Vec<_>>(),
            tables,
        );
        if absorbed > cap {
            return Err(AccountingError::UpdateEnergy {
                node,
                absorbed,
                cap,
            });
        }
    }
    Ok(())
}

fn type_strictly_below(level: u32, dir: DirtyState, m_level: u32, m_dir: DirtyState) -> bool {
    level < m_level
        || (level == m_level && m_dir == DirtyState::Up && dir == DirtyState::Down)
}

/// Transfer checks for one move: total absorbed potential is covered by what
/// the mover released at its departure level, every absorber satisfies the
/// locality conditions, and every absorbed type sits strictly below the
/// mover's type.
pub fn check_transfer(
    rec: &MoveRecord,
    delta: &EventDelta,
    neighbors: &BTreeSet<u32>,
    tables: &ExactTables,
) -> Result<(), AccountingError> {
    let mover_dir = if rec.is_up() {
        DirtyState::Up
    } else {
        DirtyState::Down
    };
    let released_at_from: BigInt = delta
        .released
        .iter()
        .filter(|e| e.node == rec.node && e.level == rec.from)
        .map(|e| &e.amount)
        .sum();
    let absorbed_total = delta.absorbed_potential();
    if absorbed_total > released_at_from {
        return Err(AccountingError::TransferTotal {
            node: rec.node,
            from: rec.from,
            absorbed: tables.from_scaled(&absorbed_total),
            released: tables.from_scaled(&released_at_from),
        });
    }
    for e in &delta.absorbed {
        let fail = |detail: String| AccountingError::TransferLocality {
            mover: rec.node,
            from: rec.from,
            node: e.node,
            level: e.level,
            detail,
        };
        if rec.is_up() {
            if e.node == rec.node {
                return Err(fail("the rising mover itself must not absorb".into()));
            }
            if !neighbors.contains(&e.node) {
                return Err(fail("absorber is not a neighbor of the mover".into()));
            }
            if e.direction != DirtyState::Down {
                return Err(fail("absorber is not in the down state afterwards".into()));
            }
            if e.level > rec.from {
                return Err(fail(format!(
                    "absorbed above the mover's departure level {}",
                    rec.from
                )));
            }
        } else {
            if e.node != rec.node && !neighbors.contains(&e.node) {
                return Err(fail("absorber is neither the mover nor a neighbor".into()));
            }
            if e.level >= rec.from {
                return Err(fail(format!(
                    "absorbed at or above the mover's departure level {}",
                    rec.from
                )));
            }
        }
        if !type_strictly_below(e.level, e.direction, rec.from, mover_dir) {
            return Err(AccountingError::TypeOrder {
                mover: rec.node,
                from: rec.from,
                mover_dir,
                node: e.node,
                level: e.level,
                dir: e.direction,
            });
        }
    }
    Ok(())
}

/// Verifies the two-hop conversion-rate drop over the whole type order
/// (levels descending, up before down within a level). Run once per
/// configuration.
pub fn check_rate_drop(tables: &ExactTables) -> Result<(), AccountingError> {
    let bound = tables.level_bound() as usize;
    let one_plus = tables.one_plus_eps();
    // Types at positions i and j of the descending order have levels
    // bound - i/2 and bound - j/2; two or more positions apart means the
    // lower one sits at least one level down.
    let positions = 2 * (bound + 1);
    for i in 0..positions {
        for j in (i + 2)..positions {
            let high = (bound - i / 2) as u32;
            let low = (bound - j / 2) as u32;
            let high_rate = tables.rate(high as usize);
            let low_rate = tables.rate(low as usize);
            if *high_rate < &one_plus * low_rate {
                return Err(AccountingError::RateDrop {
                    high,
                    low,
                    high_rate: high_rate.clone(),
                    low_rate: low_rate.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Running totals of the books. Potential totals are numerators over the
/// table denominator; energies are exact rationals.
#[derive(Debug, Clone)]
pub struct PotentialLedger {
    pub initial_potential: BigInt,
    pub absorbed_potential: BigInt,
    pub released_potential: BigInt,
    pub absorbed_energy: BigRational,
    pub released_energy: BigRational,
    /// Indexed by `2 * level + (0 for up, 1 for down)`.
    pub per_type_absorbed: Vec<BigInt>,
    pub per_type_released: Vec<BigInt>,
    pub events: u64,
}

impl PotentialLedger {
    /// Opens the books against the graph's current state.
    pub fn attach<W: WeightScalar>(g: &DynamicGraph<W>) -> PotentialLedger {
        let bound = g.config().level_bound();
        let initial: BigInt = (0..g.n()).map(|v| potential_row(g, v).total()).sum();
        PotentialLedger {
            initial_potential: initial,
            absorbed_potential: BigInt::zero(),
            released_potential: BigInt::zero(),
            absorbed_energy: BigRational::zero(),
            released_energy: BigRational::zero(),
            per_type_absorbed: vec![BigInt::zero(); 2 * (bound as usize + 1)],
            per_type_released: vec![BigInt::zero(); 2 * (bound as usize + 1)],
            events: 0,
        }
    }

    fn type_index(level: u32, dir: DirtyState) -> usize {
        2 * level as usize + (dir == DirtyState::Down) as usize
    }

    pub fn accumulate(&mut self, delta: &EventDelta, tables: &ExactTables) {
        for e in &delta.released {
            self.released_potential += &e.amount;
            self.per_type_released[Self::type_index(e.level, e.direction)] += &e.amount;
            self.released_energy +=
                tables.from_scaled(&e.amount) * tables.rate(e.level as usize);
        }
        for e in &delta.absorbed {
            self.absorbed_potential += &e.amount;
            self.per_type_absorbed[Self::type_index(e.level, e.direction)] += &e.amount;
            self.absorbed_energy +=
                tables.from_scaled(&e.amount) * tables.rate(e.level as usize);
        }
        self.events += 1;
    }
}

/// What one audited event was: the edge update itself, or one of the moves
/// it triggered.
#[derive(Debug, Clone, Copy)]
pub enum AuditEventKind {
    Edge(EdgeOp),
    Move(MoveRecord),
}

/// The books of a single event.
#[derive(Debug, Clone)]
pub struct EventAudit {
    pub kind: AuditEventKind,
    pub released_potential: BigInt,
    pub absorbed_potential: BigInt,
    pub released_energy: BigRational,
    pub absorbed_energy: BigRational,
}

impl EventAudit {
    fn new(kind: AuditEventKind, delta: &EventDelta, tables: &ExactTables) -> EventAudit {
        EventAudit {
            kind,
            released_potential: delta.released_potential(),
            absorbed_potential: delta.absorbed_potential(),
            released_energy: delta.released_energy(tables),
            absorbed_energy: delta.absorbed_energy(tables),
        }
    }
}

/// Per-update audit numbers, alongside the engine's own report.
#[derive(Debug, Clone)]
pub struct UpdateAudit {
    pub report: UpdateReport,
    pub events: Vec<EventAudit>,
    pub absorbed_potential: BigInt,
    pub released_potential: BigInt,
    pub absorbed_energy: BigRational,
    pub released_energy: BigRational,
}

/// Applies one edge update with the full audit attached: rows are captured
/// around the update event and around every single-level move, the deltas
/// are accumulated into the ledger, and every per-event lemma check runs.
pub fn audited_update<W: WeightScalar>(
    g: &mut DynamicGraph<W>,
    ledger: &mut PotentialLedger,
    op: EdgeOp,
) -> Result<UpdateAudit, AuditError> {
    let absorbed_before = ledger.absorbed_potential.clone();
    let released_before = ledger.released_potential.clone();
    let absorbed_energy_before = ledger.absorbed_energy.clone();
    let released_energy_before = ledger.released_energy.clone();

    let (u, v) = op.endpoints();
    let pre = vec![(u, potential_row(g, u)), (v, potential_row(g, v))];
    g.apply_edge_unfixed(op)?;
    let post = vec![(u, potential_row(g, u)), (v, potential_row(g, v))];
    let delta = event_delta(&pre, &post);
    check_update_energy(&delta, (u, v), g.config().exact())?;
    let mut events = vec![EventAudit::new(
        AuditEventKind::Edge(op),
        &delta,
        g.config().exact(),
    )];
    ledger.accumulate(&delta, g.config().exact());

    let mut op_report = UpdateReport {
        op,
        moves: Vec::new(),
        total_work: 0,
        total_touched: 0,
    };
    let budget = g.move_budget();
    while let Some(x) = g.next_active() {
        if op_report.moves.len() as u64 >= budget {
            return Err(GraphError::MoveBudgetExhausted {
                moves: op_report.moves.len() as u64,
                budget,
            }
            .into());
        }
        let neighbors: BTreeSet<u32> = g.neighbor_ids(x).into_iter().collect();
        let mut affected: Vec<u32> = neighbors.iter().copied().collect();
        affected.push(x);
        let pre: Vec<(u32, NodeRow)> =
            affected.iter().map(|&w| (w, potential_row(g, w))).collect();
        let rec = g.perform_pending();
        let post: Vec<(u32, NodeRow)> =
            affected.iter().map(|&w| (w, potential_row(g, w))).collect();
        let delta = event_delta(&pre, &post);
        let mover_pre = &pre.last().unwrap().1;
        check_work_lemma(&rec, &delta, mover_pre, g.config().exact())?;
        check_transfer(&rec, &delta, &neighbors, g.config().exact())?;
        events.push(EventAudit::new(
            AuditEventKind::Move(rec),
            &delta,
            g.config().exact(),
        ));
        ledger.accumulate(&delta, g.config().exact());
        op_report.total_work += rec.work;
        op_report.total_touched += rec.touched;
        op_report.moves.push(rec);
    }
    Ok(UpdateAudit {
        report: op_report,
        events,
        absorbed_potential: &ledger.absorbed_potential - absorbed_before,
        released_potential: &ledger.released_potential - released_before,
        absorbed_energy: &ledger.absorbed_energy - absorbed_energy_before,
        released_energy: &ledger.released_energy - released_energy_before,
    })
}

/// Exact global balance: the graph's current total potential must equal the
/// ledger's initial total plus everything absorbed minus everything
/// released.
pub fn audit_conservation<W: WeightScalar>(
    g: &DynamicGraph<W>,
    ledger: &PotentialLedger,
) -> Result<(), AccountingError> {
    let actual: BigInt = (0..g.n()).map(|v| potential_row(g, v).total()).sum();
    let expected =
        &ledger.initial_potential + &ledger.absorbed_potential - &ledger.released_potential;
    if actual != expected {
        let tables = g.config().exact();
        return Err(AccountingError::Conservation {
            actual: tables.from_scaled(&actual),
            expected: tables.from_scaled(&expected),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{DynamicGraph, ExactGraph, GraphConfig};
    use crate::num::{EpsRational, ExactWeight};
    use crate::trace::{gen_random, gen_star_churn};

    fn eps(s: &str) -> EpsRational {
        s.parse().unwrap()
    }

    #[test]
    fn isolated_nodes_hold_one_unit_each() {
        let g: ExactGraph = DynamicGraph::build(3, eps("1/2")).unwrap();
        for v in 0..3 {
            let row = potential_row(&g, v);
            assert_eq!(row.state, DirtyState::Down);
            assert_eq!(&row.row[0], g.config().exact().denom());
            assert_eq!(row.total(), g.config().exact().denom().clone());
        }
        let ledger = PotentialLedger::attach(&g);
        assert_eq!(
            ledger.initial_potential,
            g.config().exact().denom() * BigInt::from(3)
        );
    }

    #[test]
    fn star_center_row_matches_the_worked_example() {
        // Level-0 center with two level-0 leaves at eps = 1/2: weight 2,
        // weight-one-higher 4/3, two higher 8/9; so the row is 2/3 at level
        // 0 and 1/3 at level 1, summing to W - 1 = 1.
        let cfg: GraphConfig<ExactWeight> = GraphConfig::new(4, eps("1/2")).unwrap();
        let d = cfg.exact().denom().clone();
        let two = ExactWeight::from_numerator(&d * BigInt::from(2));
        let one = ExactWeight::from_numerator(d.clone());
        let g = DynamicGraph::from_parts(
            cfg,
            &[0, 0, 0, 0],
            vec![two, one.clone(), one, ExactWeight::zero()],
            &[(0, 1), (0, 2)],
        )
        .unwrap();
        let row = potential_row(&g, 0);
        assert_eq!(row.state, DirtyState::Up);
        assert_eq!(BigInt::from(3) * &row.row[0], &d * BigInt::from(2));
        assert_eq!(BigInt::from(3) * &row.row[1], d.clone());
        assert!(row.row[2..].iter().all(|p| p.is_zero()));
        assert_eq!(row.total(), d);
    }

    #[test]
    fn top_level_equal_to_own_level_gives_a_single_entry() {
        // A level-1 node with two level-0 leaves weighs 4/3; one level up it
        // would weigh 8/9 < 1, so the whole excess 1/3 sits at its own level.
        let cfg: GraphConfig<ExactWeight> = GraphConfig::new(3, eps("1/2")).unwrap();
        let tables = cfg.exact();
        let w0 = ExactWeight::from_numerator(tables.entry_num(1) * BigInt::from(2));
        let leaf = ExactWeight::from_numerator(tables.entry_num(1).clone());
        let d = tables.denom().clone();
        let g = DynamicGraph::from_parts(
            cfg,
            &[1, 0, 0],
            vec![w0, leaf.clone(), leaf],
            &[(0, 1), (0, 2)],
        )
        .unwrap();
        let row = potential_row(&g, 0);
        assert_eq!(row.state, DirtyState::Up);
        assert!(row.row[0].is_zero());
        assert_eq!(BigInt::from(3) * &row.row[1], d);
        assert!(row.row[2..].iter().all(|p| p.is_zero()));
    }

    #[test]
    fn first_insert_releases_two_units_and_absorbs_nothing() {
        let mut g: ExactGraph = DynamicGraph::build(2, eps("1/2")).unwrap();
        let mut ledger = PotentialLedger::attach(&g);
        let d = g.config().exact().denom().clone();
        assert_eq!(ledger.initial_potential, &d * BigInt::from(2));
        let audit = audited_update(&mut g, &mut ledger, EdgeOp::Insert(0, 1)).unwrap();
        assert_eq!(audit.released_potential, &d * BigInt::from(2));
        assert!(audit.absorbed_potential.is_zero());
        assert!(audit.report.moves.is_empty());
        audit_conservation(&g, &ledger).unwrap();
        // Both nodes flipped below-one to at-one: released with the down
        // type at level 0.
        assert_eq!(
            ledger.per_type_released[PotentialLedger::type_index(0, DirtyState::Down)],
            &d * BigInt::from(2)
        );
    }

    #[test]
    fn star_growth_and_teardown_audit_clean() {
        let trace = gen_star_churn(8, eps("1/2"), 3);
        let mut g: ExactGraph = DynamicGraph::build(trace.n, trace.eps).unwrap();
        let mut ledger = PotentialLedger::attach(&g);
        for &op in &trace.events {
            audited_update(&mut g, &mut ledger, op).unwrap();
            audit_conservation(&g, &ledger).unwrap();
        }
        // The graph ends empty, back to one unit per node.
        assert_eq!(
            (0..g.n()).map(|v| potential_row(&g, v).total()).sum::<BigInt>(),
            g.config().exact().denom() * BigInt::from(8)
        );
    }

    #[test]
    fn random_traces_audit_clean_and_balance() {
        for seed in [1u64, 9] {
            let trace = gen_random(16, eps("3/10"), 200, 0.3, seed);
            let mut g: ExactGraph = DynamicGraph::build(trace.n, trace.eps).unwrap();
            let mut ledger = PotentialLedger::attach(&g);
            for &op in &trace.events {
                audited_update(&mut g, &mut ledger, op).unwrap();
            }
            audit_conservation(&g, &ledger).unwrap();
            assert!(ledger.events > trace.events.len() as u64 / 2);
        }
    }

    #[test]
    fn corrupted_move_records_are_rejected() {
        // Drive one real up-move by hand, then feed the checker a record
        // whose work count is off by one.
        let mut g: ExactGraph = DynamicGraph::build(4, eps("1/2")).unwrap();
        g.insert_edge(0, 1).unwrap();
        g.apply_edge_unfixed(EdgeOp::Insert(0, 2)).unwrap();
        let x = g.next_active().unwrap();
        assert_eq!(x, 0);
        let affected = [0u32, 1, 2];
        let pre: Vec<(u32, NodeRow)> =
            affected.iter().map(|&w| (w, potential_row(&g, w))).collect();
        let rec = g.perform_pending();
        let post: Vec<(u32, NodeRow)> =
            affected.iter().map(|&w| (w, potential_row(&g, w))).collect();
        let delta = event_delta(&pre, &post);
        let tables = g.config().exact();
        check_work_lemma(&rec, &delta, &pre[0].1, tables).unwrap();
        let mut forged = rec;
        forged.work += 1;
        let err = check_work_lemma(&forged, &delta, &pre[0].1, tables).unwrap_err();
        assert!(matches!(
            err,
            AccountingError::WorkBound { .. } | AccountingError::UpWorkIdentity { .. }
        ));
    }

    #[test]
    fn rate_drop_holds_for_common_configurations() {
        for e in ["1/2", "1/5", "1/10"] {
            let cfg: GraphConfig<ExactWeight> = GraphConfig::new(100, eps(e)).unwrap();
            check_rate_drop(cfg.exact()).unwrap();
            let tables = cfg.exact();
            for k in 0..tables.level_bound() as usize {
                assert_eq!(
                    tables.rate(k + 1).clone(),
                    tables.rate(k) * tables.one_plus_eps()
                );
            }
        }
    }
}
