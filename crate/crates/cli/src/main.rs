//! `dvc`: replay, verify, generate, and benchmark dynamic vertex-cover
//! traces.
//!
//! Stats are emitted as one JSON object per line, with a `record` field
//! naming the line's role, and a summary object last. Exit codes: 0 success,
//! 2 parse or configuration error, 3 replay violation, 4 invariant-check
//! failure, 5 accounting-check failure, 6 move budget exhausted.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dvc_core::num::{ratio_to_f64, BigRational};
use dvc_core::{
    audit_conservation, audited_update, check_rate_drop, gen_random, gen_sliding_window,
    gen_star_churn, verify_all, AuditError, AuditEventKind, DynamicGraph, EdgeOp, EpsRational,
    ExactWeight, GraphError, PotentialLedger, QueueDiscipline, Trace, WeightScalar,
};

#[derive(Parser)]
#[command(
    name = "dvc",
    version,
    about = "Dynamic (2+eps)-approximate vertex cover: replay, verify, generate, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a trace, optionally verifying, and emit per-update stats.
    Run(RunArgs),
    /// Replay a trace in exact arithmetic with the full audit: every lemma
    /// checker per event, the oracle suite and conservation per update.
    Check(CheckArgs),
    /// Generate a workload trace.
    Gen(GenArgs),
    /// Replay generated random traces with checks off and report amortized
    /// work per update for each (n, eps) cell.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Float,
    Exact,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Queue {
    Fifo,
    Lifo,
}

impl From<Queue> for QueueDiscipline {
    fn from(q: Queue) -> QueueDiscipline {
        match q {
            Queue::Fifo => QueueDiscipline::Fifo,
            Queue::Lifo => QueueDiscipline::Lifo,
        }
    }
}

/// When to run the verification suite during `run`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cadence {
    Off,
    Final,
    /// After every k-th update, and once more at the end.
    Every(u64),
}

fn parse_cadence(s: &str) -> Result<Cadence, String> {
    match s {
        "off" => Ok(Cadence::Off),
        "final" => Ok(Cadence::Final),
        "every" => Ok(Cadence::Every(1)),
        _ => match s.parse::<u64>() {
            Ok(k) if k > 0 => Ok(Cadence::Every(k)),
            _ => Err(format!(
                "expected off, final, every, or a positive update period, got `{s}`"
            )),
        },
    }
}

fn parse_eps(s: &str) -> Result<EpsRational, String> {
    s.parse::<EpsRational>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// Trace file to replay.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    /// Verification cadence: off, final, every, or an update period.
    #[arg(long, default_value = "final", value_parser = parse_cadence)]
    check: Cadence,
    /// Stats output path; stdout by default.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Replay under this eps instead of the trace header's.
    #[arg(long, value_parser = parse_eps)]
    eps: Option<EpsRational>,
    /// Rebuild every cached weight from the lists, then re-settle, every K
    /// updates.
    #[arg(long, value_name = "K")]
    recompute_every: Option<u64>,
    /// Override the settle-move budget per update.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = Queue::Fifo)]
    queue: Queue,
    /// Omit wall-clock fields, making output bytes reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Emit only the summary record.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file to audit.
    #[arg(long)]
    trace: PathBuf,
    /// Audit report output path; stdout by default.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Audit under this eps instead of the trace header's.
    #[arg(long, value_parser = parse_eps)]
    eps: Option<EpsRational>,
    /// Override the settle-move budget per update.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = Queue::Fifo)]
    queue: Queue,
    /// Emit only the summary record.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    model: GenModel,
}

#[derive(Subcommand)]
enum GenModel {
    /// Each step deletes a uniform present edge with probability p-delete,
    /// otherwise inserts a uniform absent pair.
    Random {
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_eps)]
        eps: EpsRational,
        #[arg(long)]
        tau: u64,
        #[arg(long, default_value_t = 0.3)]
        p_delete: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sliding window: every inserted edge is deleted `window` steps later.
    Window {
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_eps)]
        eps: EpsRational,
        #[arg(long)]
        tau: u64,
        #[arg(long)]
        window: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Star churn: grow a full star from node 0, tear it down, repeat.
    Star {
        #[arg(long)]
        n: u32,
        #[arg(long, value_parser = parse_eps)]
        eps: EpsRational,
        #[arg(long, default_value_t = 1)]
        rounds: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u32>,
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_eps)]
    eps: Vec<EpsRational>,
    /// Updates per node: tau = tau-factor * n.
    #[arg(long, default_value_t = 10)]
    tau_factor: u64,
    #[arg(long, default_value_t = 0.3)]
    p_delete: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Table output path; stdout by default.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Omit wall-clock fields, making output bytes reproducible.
    #[arg(long)]
    no_timing: bool,
}

/// A failure bound for the process exit code.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn graph_failure(e: GraphError) -> Failure {
    let code = match e {
        GraphError::MoveBudgetExhausted { .. } => 6,
        GraphError::InvalidEps(_) | GraphError::ZeroNodes => 2,
        _ => 3,
    };
    fail(code, e.to_string())
}

fn audit_failure(e: AuditError) -> Failure {
    match e {
        AuditError::Graph(g) => graph_failure(g),
        AuditError::Accounting(a) => fail(5, a.to_string()),
    }
}

fn io_failure(e: io::Error) -> Failure {
    fail(1, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Check(args) => cmd_check(args),
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(io_failure)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_trace(path: &PathBuf, eps_override: Option<EpsRational>) -> Result<Trace, Failure> {
    let text = fs::read_to_string(path).map_err(io_failure)?;
    let mut trace = Trace::parse(&text).map_err(|e| fail(2, e.to_string()))?;
    if let Some(eps) = eps_override {
        trace.eps = eps;
    }
    Ok(trace)
}

fn op_fields(op: EdgeOp) -> (&'static str, u32, u32) {
    let (u, v) = op.endpoints();
    (if op.is_insert() { "insert" } else { "delete" }, u, v)
}

fn big_ratio_f64(r: &BigRational) -> f64 {
    ratio_to_f64(r.numer(), r.denom())
}

fn verify_or_fail<W: WeightScalar>(g: &DynamicGraph<W>) -> Result<(), Failure> {
    let report = verify_all(g);
    if let Some(bad) = report.first_failure() {
        let witness = bad.witness.clone().unwrap_or_default();
        return Err(fail(4, format!("invariant `{}` failed: {witness}", bad.name)));
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let trace = load_trace(&args.trace, args.eps)?;
    let mut out = open_out(&args.stats)?;
    let result = match args.mode {
        Mode::Float => replay::<f64>(&trace, &args, &mut *out),
        Mode::Exact => replay::<ExactWeight>(&trace, &args, &mut *out),
    };
    out.flush().map_err(io_failure)?;
    result
}

fn replay<W: WeightScalar>(
    trace: &Trace,
    args: &RunArgs,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let mut g: DynamicGraph<W> = DynamicGraph::build(trace.n, trace.eps).map_err(graph_failure)?;
    g.set_queue_discipline(args.queue.into());
    g.set_move_budget(args.budget);

    let started = Instant::now();
    for (i, &op) in trace.events.iter().enumerate() {
        let update_started = Instant::now();
        g.apply(op).map_err(graph_failure)?;
        if let Some(k) = args.recompute_every {
            if k > 0 && (i as u64 + 1).is_multiple_of(k) {
                g.resync_weights();
                g.fix_dirty().map_err(graph_failure)?;
            }
        }
        let update_ns = update_started.elapsed().as_nanos() as u64;
        if let Cadence::Every(k) = args.check {
            if (i as u64 + 1).is_multiple_of(k) {
                verify_or_fail(&g)?;
            }
        }
        if !args.summary_only {
            let c = g.counters();
            let (kind, u, v) = op_fields(op);
            let mut rec = json!({
                "record": "update",
                "index": i,
                "op": kind,
                "u": u,
                "v": v,
                "work": c.work_up + c.work_down,
                "moves_up": c.moves_up,
                "moves_down": c.moves_down,
                "touched": c.touched,
                "cover": g.cover_size(),
                "matching": big_ratio_f64(&g.matching_total()),
            });
            if !args.no_timing {
                rec["ns"] = json!(update_ns);
            }
            writeln!(out, "{rec}").map_err(io_failure)?;
        }
    }
    if matches!(args.check, Cadence::Final | Cadence::Every(_)) {
        verify_or_fail(&g)?;
    }

    let c = g.counters();
    let mut summary = json!({
        "record": "summary",
        "n": trace.n,
        "eps": trace.eps.to_string(),
        "mode": W::mode_name(),
        "updates": c.updates,
        "work": c.work_up + c.work_down,
        "moves_up": c.moves_up,
        "moves_down": c.moves_down,
        "touched": c.touched,
        "max_level": c.max_level_seen,
        "edges": g.edge_count(),
        "cover": g.cover_size(),
        "matching": big_ratio_f64(&g.matching_total()),
        "checks": match args.check {
            Cadence::Off => "off",
            _ => "pass",
        },
    });
    if !args.no_timing {
        summary["elapsed_ns"] = json!(started.elapsed().as_nanos() as u64);
    }
    writeln!(out, "{summary}").map_err(io_failure)?;
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let trace = load_trace(&args.trace, args.eps)?;
    let mut out = open_out(&args.stats)?;
    let result = check_inner(&trace, &args, &mut *out);
    out.flush().map_err(io_failure)?;
    result
}

fn check_inner(trace: &Trace, args: &CheckArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut g: DynamicGraph<ExactWeight> =
        DynamicGraph::build(trace.n, trace.eps).map_err(graph_failure)?;
    g.set_queue_discipline(args.queue.into());
    g.set_move_budget(args.budget);
    check_rate_drop(g.config().exact()).map_err(|e| fail(5, e.to_string()))?;
    let mut ledger = PotentialLedger::attach(&g);

    for (i, &op) in trace.events.iter().enumerate() {
        let audit = audited_update(&mut g, &mut ledger, op).map_err(audit_failure)?;
        verify_or_fail(&g)?;
        audit_conservation(&g, &ledger).map_err(|e| fail(5, e.to_string()))?;
        if args.summary_only {
            continue;
        }
        let tables = g.config().exact();
        for ev in &audit.events {
            let mut rec = match ev.kind {
                AuditEventKind::Edge(op) => {
                    let (kind, u, v) = op_fields(op);
                    json!({
                        "record": "event",
                        "update": i,
                        "kind": kind,
                        "u": u,
                        "v": v,
                    })
                }
                AuditEventKind::Move(m) => json!({
                    "record": "event",
                    "update": i,
                    "kind": if m.is_up() { "up" } else { "down" },
                    "node": m.node,
                    "from": m.from,
                    "to": m.to,
                    "work": m.work,
                    "touched": m.touched,
                }),
            };
            rec["released_potential"] = json!(tables.from_scaled(&ev.released_potential).to_string());
            rec["absorbed_potential"] = json!(tables.from_scaled(&ev.absorbed_potential).to_string());
            rec["released_energy"] = json!(ev.released_energy.to_string());
            rec["absorbed_energy"] = json!(ev.absorbed_energy.to_string());
            rec["checks"] = json!("pass");
            writeln!(out, "{rec}").map_err(io_failure)?;
        }
    }

    let c = g.counters();
    let tables = g.config().exact();
    let total_work = c.work_up + c.work_down;
    let work_limit = &ledger.released_energy * tables.one_plus_eps();
    let summary = json!({
        "record": "summary",
        "n": trace.n,
        "eps": trace.eps.to_string(),
        "mode": "exact",
        "updates": c.updates,
        "events": ledger.events,
        "work": total_work,
        "moves_up": c.moves_up,
        "moves_down": c.moves_down,
        "touched": c.touched,
        "max_level": c.max_level_seen,
        "edges": g.edge_count(),
        "cover": g.cover_size(),
        "matching": big_ratio_f64(&g.matching_total()),
        "released_potential": tables.from_scaled(&ledger.released_potential).to_string(),
        "absorbed_potential": tables.from_scaled(&ledger.absorbed_potential).to_string(),
        "released_energy": ledger.released_energy.to_string(),
        "absorbed_energy": ledger.absorbed_energy.to_string(),
        "work_limit": work_limit.to_string(),
        "work_limit_approx": big_ratio_f64(&work_limit),
        "conservation": "balanced",
        "checks": "pass",
    });
    writeln!(out, "{summary}").map_err(io_failure)?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let (trace, out_path) = match args.model {
        GenModel::Random {
            n,
            eps,
            tau,
            p_delete,
            seed,
            out,
        } => {
            if !(0.0..=1.0).contains(&p_delete) {
                return Err(fail(2, format!("p-delete must lie in [0, 1], got {p_delete}")));
            }
            (gen_random(n, eps, tau, p_delete, seed), out)
        }
        GenModel::Window {
            n,
            eps,
            tau,
            window,
            seed,
            out,
        } => {
            if window == 0 {
                return Err(fail(2, "window must be at least 1"));
            }
            (gen_sliding_window(n, eps, tau, window, seed), out)
        }
        GenModel::Star { n, eps, rounds, out } => {
            if n < 3 {
                return Err(fail(2, "star churn needs n >= 3"));
            }
            if rounds == 0 {
                return Err(fail(2, "star churn needs at least one round"));
            }
            (gen_star_churn(n, eps, rounds), out)
        }
    };
    let mut out = open_out(&out_path)?;
    out.write_all(trace.serialize().as_bytes())
        .and_then(|_| out.flush())
        .map_err(io_failure)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.p_delete) {
        return Err(fail(2, format!("p-delete must lie in [0, 1], got {}", args.p_delete)));
    }
    let mut out = open_out(&args.stats)?;
    for &n in &args.n {
        for &eps in &args.eps {
            let tau = args.tau_factor.saturating_mul(n as u64);
            let trace = gen_random(n, eps, tau, args.p_delete, args.seed);
            let mut g: DynamicGraph<f64> =
                DynamicGraph::build(n, eps).map_err(graph_failure)?;
            let started = Instant::now();
            for &op in &trace.events {
                g.apply(op).map_err(graph_failure)?;
            }
            let elapsed_ns = started.elapsed().as_nanos() as u64;
            let c = g.counters();
            let work = c.work_up + c.work_down;
            let per = |x: u64| {
                if tau > 0 {
                    x as f64 / tau as f64
                } else {
                    0.0
                }
            };
            let mut rec = json!({
                "record": "bench",
                "n": n,
                "eps": eps.to_string(),
                "tau": tau,
                "work": work,
                "work_per_update": per(work),
                "touched": c.touched,
                "touched_per_update": per(c.touched),
                "moves": c.moves_up + c.moves_down,
                "max_level": c.max_level_seen,
                "cover": g.cover_size(),
            });
            if !args.no_timing {
                rec["ns_per_update"] = json!(per(elapsed_ns));
            }
            writeln!(out, "{rec}").map_err(io_failure)?;
        }
    }
    out.flush().map_err(io_failure)?;
    Ok(())
}
