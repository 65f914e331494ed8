//! Command-line harness: generate adversarial workloads, replay or
//! adaptively drive them against an allocator, query the brute-force
//! oracles, and fuzz the aligned allocator.
//!
//! Exit codes: 0 when every asserted invariant held, 2 on a violation (the
//! replay file path is printed to stderr).

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynrealloc::adversary::{
    gen_lower_bound, gen_mp_small_slack, gen_non_generic, gen_realloc_req,
    gen_small_slack_osc, gen_underalloc_req, gen_var_length_osc, Adversary, AnnotatedOp, Op,
    OpSequence, Replay, VarLengthMode,
};
use dynrealloc::geometry::Rational;
use dynrealloc::harness::{
    annotations_from_jsonl, annotations_to_jsonl, fuzz_va, insert_state_from_jsonl,
    ops_from_jsonl, ops_to_jsonl, replay_va_counterexample, run_workload, state_from_jsonl,
    state_to_jsonl, AllocatorKind, FuzzVaConfig, HarnessError, RunReport, WorkloadConfig,
};
use dynrealloc::oracle::{
    oracle_feasible, oracle_max_slack, oracle_min_realloc, OracleLimits,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dynrealloc",
    about = "Reallocation-bounded interval allocators: workloads, oracles, fuzzing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an adversarial construction.
    Adversary(AdversaryArgs),
    /// Replay an op file or drive an adaptive adversary against an allocator.
    Run(RunArgs),
    /// Query the brute-force oracles on a state file.
    Oracle(OracleArgs),
    /// Fuzz the aligned allocator, emitting replayable counterexamples.
    FuzzVa(FuzzVaArgs),
    /// Re-run a counterexample replay file.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct AdversaryArgs {
    /// lower-bound | small-slack-osc | non-generic | mp-small-slack
    name: String,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long, default_value_t = 4)]
    alternations: usize,
    /// Ops JSONL output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Annotation sidecar output path.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// State JSONL output path (for insert-state constructions).
    #[arg(long)]
    out_state: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// fa | va | mp | naive-leftmost
    #[arg(long)]
    allocator: String,
    /// Fixed window span (fa/mp).
    #[arg(long)]
    span: Option<String>,
    #[arg(long, default_value_t = 1)]
    processors: u32,
    /// Replay this ops file.
    #[arg(long)]
    ops: Option<PathBuf>,
    /// Annotation sidecar for --ops.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Load this state before running (fa).
    #[arg(long)]
    state: Option<PathBuf>,
    /// Drive an adaptive adversary: realloc-req | underalloc-req | var-length-osc
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    cycles: usize,
    /// always-slack mode for var-length-osc.
    #[arg(long, default_value_t = false)]
    always_slack: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    oracle_cadence: Option<usize>,
    #[arg(long)]
    replay_dir: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// feasible | slack | min-realloc
    mode: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "1")]
    gamma: String,
    /// Bracket tolerance for slack (rational).
    #[arg(long, default_value = "1/1048576")]
    tolerance: String,
}

#[derive(Args)]
struct FuzzVaArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    ops: usize,
    /// Coordinate scope as 2^K (accepts "2^10" or a plain exponent).
    #[arg(long, default_value = "2^10")]
    scope: String,
    #[arg(long, default_value_t = 2)]
    counterexample_threshold: u64,
    #[arg(long)]
    counterexample_dir: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    file: PathBuf,
}

fn parse_rational(s: &str) -> Result<Rational> {
    s.parse::<Rational>()
        .map_err(|e| anyhow!("bad rational {s:?}: {e}"))
}

fn write_report(report: &RunReport, args_report: &Option<PathBuf>, args_summary: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = args_report {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {path:?}"))?;
    }
    if let Some(path) = args_summary {
        std::fs::write(path, report.summary_json()?).with_context(|| format!("writing {path:?}"))?;
    } else {
        println!("{}", report.summary_json()?);
    }
    Ok(())
}

fn cmd_adversary(a: AdversaryArgs) -> Result<()> {
    let write_ops = |seq: &OpSequence, out: &Option<PathBuf>, ann: &Option<PathBuf>| -> Result<()> {
        if let Some(path) = out {
            std::fs::write(path, ops_to_jsonl(seq)?)?;
        }
        if let Some(path) = ann {
            std::fs::write(path, annotations_to_jsonl(seq)?)?;
        }
        Ok(())
    };
    match a.name.as_str() {
        "lower-bound" => {
            let eps = parse_rational(a.eps.as_deref().context("--eps required")?)?;
            let c = parse_rational(a.c.as_deref().context("--c required")?)?;
            let lb = gen_lower_bound(&eps, &c)?;
            if let Some(path) = &a.out_state {
                std::fs::write(
                    path,
                    state_to_jsonl(&lb.pre_instance, &lb.pre_allocation)?,
                )?;
            }
            let seq = OpSequence {
                ops: vec![AnnotatedOp {
                    op: Op::Insert(lb.insert_task.clone()),
                    annotations: dynrealloc::adversary::Annotations {
                        min_reallocs: Some(lb.min_reallocs),
                        gamma: Some(Rational::one() + &eps),
                        note: Some("hard insert".into()),
                    },
                }],
            };
            write_ops(&seq, &a.out, &a.annotations)?;
            eprintln!(
                "lower-bound: n={} forced>={}",
                lb.pre_instance.len(),
                lb.min_reallocs
            );
        }
        "small-slack-osc" => {
            let eps = parse_rational(a.eps.as_deref().context("--eps required")?)?;
            let k = a.k.context("--k required")?;
            let seq = gen_small_slack_osc(&eps, k, a.alternations)?;
            write_ops(&seq, &a.out, &a.annotations)?;
        }
        "non-generic" => {
            let gamma: u64 = a
                .gamma
                .as_deref()
                .context("--gamma required")?
                .parse()
                .context("--gamma must be a power-of-two integer")?;
            let m = a.m.context("--m required")?;
            let st = gen_non_generic(gamma, m)?;
            if let Some(path) = &a.out_state {
                std::fs::write(
                    path,
                    state_to_jsonl(&st.state.instance, &st.state.allocation)?,
                )?;
            }
            eprintln!(
                "non-generic: n={} forced>={}",
                st.state.instance.len(),
                st.min_reallocs
            );
        }
        "mp-small-slack" => {
            let eps = parse_rational(a.eps.as_deref().context("--eps required")?)?;
            let p = a.p.context("--p required")?;
            let k = a.k.context("--k required")?;
            let seq = gen_mp_small_slack(&eps, p, k, a.alternations)?;
            write_ops(&seq, &a.out, &a.annotations)?;
        }
        other => bail!("unknown adversary {other:?}"),
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<i32> {
    let kind: AllocatorKind = a.allocator.parse().map_err(|e: String| anyhow!(e))?;
    let mut cfg = WorkloadConfig::new(kind);
    cfg.fixed_span = a.span.as_deref().map(parse_rational).transpose()?;
    cfg.processors = a.processors;
    cfg.oracle_cadence = a.oracle_cadence;
    cfg.replay_dir = a.replay_dir.clone();
    if let Some(path) = &a.state {
        let text = std::fs::read_to_string(path)?;
        let (inst, alloc) = state_from_jsonl(&text)?;
        if cfg.fixed_span.is_none() {
            cfg.fixed_span = inst.tasks.first().map(|t| t.window.span());
        }
        cfg.initial_state = Some((inst, alloc));
    }
    let mut adversary: Box<dyn Adversary> = match (&a.ops, a.adversary.as_deref()) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            let mut seq = ops_from_jsonl(&text)?;
            if let Some(ann) = &a.annotations {
                let ann_text = std::fs::read_to_string(ann)?;
                annotations_from_jsonl(&mut seq, &ann_text)?;
            }
            if cfg.fixed_span.is_none() {
                // infer the fixed span from the first insert
                cfg.fixed_span = seq.ops.iter().find_map(|aop| match &aop.op {
                    Op::Insert(t) => Some(t.window.span()),
                    _ => None,
                });
            }
            Box::new(Replay::new(seq))
        }
        (None, Some(name)) => match name {
            "realloc-req" => {
                let gamma: u64 = a
                    .gamma
                    .as_deref()
                    .unwrap_or("1")
                    .parse()
                    .context("--gamma must be an integer")?;
                Box::new(gen_realloc_req(gamma)?)
            }
            "underalloc-req" => {
                let k = a.k.context("--k required")? as u32;
                Box::new(gen_underalloc_req(k, a.cycles)?)
            }
            "var-length-osc" => {
                let gamma = parse_rational(a.gamma.as_deref().unwrap_or("1"))?;
                let k = a.k.context("--k required")? as u64;
                let mode = if a.always_slack {
                    VarLengthMode::AlwaysSlack
                } else {
                    VarLengthMode::PreInsertSlack
                };
                Box::new(gen_var_length_osc(&gamma, k, mode, a.cycles)?)
            }
            other => bail!("unknown adaptive adversary {other:?}"),
        },
        _ => bail!("exactly one of --ops or --adversary is required"),
    };
    match run_workload(&cfg, adversary.as_mut()) {
        Ok(report) => {
            write_report(&report, &a.report, &a.summary)?;
            Ok(0)
        }
        Err(HarnessError::Violation {
            index,
            message,
            replay,
        }) => {
            eprintln!("violation at op {index}: {message}");
            eprintln!("{replay}");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let limits = OracleLimits::from_env();
    let text = std::fs::read_to_string(&a.input)?;
    match a.mode.as_str() {
        "feasible" => {
            let (inst, _) = state_from_jsonl(&text)?;
            let gamma = parse_rational(&a.gamma)?;
            let ok = oracle_feasible(&inst, &gamma, &limits)?;
            println!("{{\"feasible\": {ok}, \"gamma\": \"{gamma}\"}}");
        }
        "slack" => {
            let (inst, _) = state_from_jsonl(&text)?;
            let tol = parse_rational(&a.tolerance)?;
            let rep = oracle_max_slack(&inst, &tol, &limits)?;
            println!(
                "{{\"feasible\": {}, \"slack_lower\": \"{}\", \"slack_upper\": \"{}\"}}",
                rep.feasible, rep.slack_lower, rep.slack_upper
            );
        }
        "min-realloc" => {
            let state = insert_state_from_jsonl(&text)?;
            let (count, witness) = oracle_min_realloc(&state, &limits)?;
            let witness_rows = state_to_jsonl(&state.instance, &witness)?;
            println!("{{\"min_reallocs\": {count}}}");
            eprint!("{witness_rows}");
        }
        other => bail!("unknown oracle mode {other:?}"),
    }
    Ok(())
}

fn parse_scope(s: &str) -> Result<u32> {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("2^") {
        Ok(rest.parse()?)
    } else {
        Ok(t.parse()?)
    }
}

fn cmd_fuzz_va(a: FuzzVaArgs) -> Result<i32> {
    let cfg = FuzzVaConfig {
        seed: a.seed,
        ops: a.ops,
        scope_exp: parse_scope(&a.scope)?,
        counterexample_threshold: a.counterexample_threshold,
        replay_dir: a.counterexample_dir.clone(),
    };
    match fuzz_va(&cfg) {
        Ok(report) => {
            write_report(&report, &a.report, &a.summary)?;
            Ok(0)
        }
        Err(HarnessError::Violation {
            index,
            message,
            replay,
        }) => {
            eprintln!("violation at op {index}: {message}");
            eprintln!("{replay}");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.file)?;
    let reallocs = replay_va_counterexample(&text)?;
    println!("{{\"reallocs\": {reallocs}}}");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Adversary(a) => cmd_adversary(a).map(|_| 0),
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a).map(|_| 0),
        Command::FuzzVa(a) => cmd_fuzz_va(a),
        Command::Replay(a) => cmd_replay(a).map(|_| 0),
    };
    match code {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
