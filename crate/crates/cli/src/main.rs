//! Batch front end: evaluate the analytics over parameter grids, run the
//! simulators, drive the Monte Carlo estimators, and run the validation
//! battery. Emits plot-ready CSV tables or JSON documents that embed the
//! resolved configuration.
//!
//! Exit codes: 0 success, 1 usage error, 2 computation error, 3 validation
//! failure.

mod grid;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctrace_core::sim_cluster::{self, RunOptions};
use ctrace_core::{analytics, montecarlo, sim_direct, validate, CtpParams, OffspringDistribution};
use grid::{parse_b_list, Grid};
use output::{g12, OutputDoc, Sink};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ctrace", version, about = "Branching process with contact tracing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seed mean, extinction verdict, and growth exponent over a grid
    Compute(ComputeArgs),
    /// Critical trace probability e_b(p) over a p grid
    Critical(CriticalArgs),
    /// Growth exponent as a function of alpha at fixed p
    ThetaCurve(ThetaCurveArgs),
    /// Simulate trajectories with either engine
    Simulate(SimulateArgs),
    /// Monte Carlo estimators (extinction probability, growth rate, seed means)
    Mc(McArgs),
    /// Run the full cross-validation battery
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonOut {
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ComputeArgs {
    /// Offspring law: poisson:L, geometric:Q, binomial:N:Q, or pmf:W0,W1,...
    #[arg(long)]
    offspring: String,
    /// Detection delay in generations; a comma list produces one row set per value
    #[arg(long, default_value = "0")]
    b: String,
    /// Detection probability, a scalar or a start:stop:steps grid
    #[arg(long, default_value = "1")]
    p: String,
    /// Trace probability, a scalar or a start:stop:steps grid
    #[arg(long, default_value = "0")]
    alpha: String,
    /// Numeric tolerance for series truncation and root finding
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct CriticalArgs {
    #[arg(long)]
    offspring: String,
    #[arg(long, default_value = "0")]
    b: String,
    /// Detection probabilities in (0, 1], scalar or grid
    #[arg(long)]
    p: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct ThetaCurveArgs {
    #[arg(long)]
    offspring: String,
    #[arg(long, default_value_t = 0)]
    b: u32,
    /// Fixed detection probability in (0, 1]
    #[arg(long)]
    p: f64,
    /// Trace probabilities, scalar or grid
    #[arg(long, default_value = "0:1:201")]
    alpha: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Engine {
    Direct,
    Cluster,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    offspring: String,
    #[arg(long, default_value_t = 0)]
    b: u32,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 30)]
    horizon: u32,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Master seed; the CTRACE_SEED variable overrides the default
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Engine::Cluster)]
    engine: Engine,
    /// Population ceiling per generation
    #[arg(long, default_value_t = 10_000_000)]
    cap: u64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum McOp {
    /// Frequency of extinction by the horizon (lower bound on the true probability)
    Extinction,
    /// Mean regression slope of ln Z^CT over surviving runs
    Growth,
    /// Per-generation seed-output means of one cluster vs the analytic values
    Vn,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, value_enum)]
    op: McOp,
    #[arg(long)]
    offspring: String,
    #[arg(long, default_value_t = 0)]
    b: u32,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Horizon for runs; for `vn`, the largest generation reported
    #[arg(long, default_value_t = 50)]
    horizon: u32,
    /// First generation of the regression window (growth only); horizon/3 when omitted
    #[arg(long)]
    window_start: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    seed: Option<u64>,
}

enum AppError {
    Usage(String),
    Compute(String),
    ValidationFailed,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(AppError::Compute(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(AppError::ValidationFailed) => 3,
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Compute(args) => cmd_compute(args),
        Command::Critical(args) => cmd_critical(args),
        Command::ThetaCurve(args) => cmd_theta_curve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn parse_dist(spec: &str) -> Result<OffspringDistribution, AppError> {
    spec.parse::<OffspringDistribution>()
        .map_err(|e| AppError::Usage(e.to_string()))
}

/// Master seed resolution: an explicit flag wins, then CTRACE_SEED, then 1.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, AppError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("CTRACE_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| AppError::Usage(format!("CTRACE_SEED=`{v}` is not a u64"))),
        Err(_) => Ok(fallback),
    }
}

fn cmd_compute(args: ComputeArgs) -> Result<(), AppError> {
    let dist = parse_dist(&args.offspring)?;
    let bs = parse_b_list(&args.b).map_err(AppError::Usage)?;
    let ps = args.p.parse::<Grid>().map_err(AppError::Usage)?;
    let alphas = args.alpha.parse::<Grid>().map_err(AppError::Usage)?;
    if args.tol <= 0.0 {
        return Err(AppError::Usage("tol must be positive".into()));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut json_rows = Vec::new();
    for &b in &bs {
        for &p in ps.values() {
            for &alpha in alphas.values() {
                let params = CtpParams::new(b, p, alpha, dist.clone())
                    .map_err(|e| AppError::Usage(e.to_string()))?;
                let verdict = analytics::classify_extinction(&params, args.tol)
                    .map_err(|e| AppError::Compute(e.to_string()))?;
                let y = verdict.seed_mean;
                let theta = analytics::malthusian_theta(&params, args.tol).ok();
                let verdict_str = match verdict.verdict {
                    analytics::Verdict::Extinct => "extinct",
                    analytics::Verdict::SurvivesWpp => "survives",
                };
                rows.push(vec![
                    b.to_string(),
                    g12(p),
                    g12(alpha),
                    y.map(g12).unwrap_or_default(),
                    verdict_str.to_string(),
                    theta.map(g12).unwrap_or_default(),
                ]);
                json_rows.push(json!({
                    "b": b, "p": p, "alpha": alpha,
                    "y": y, "verdict": verdict_str, "theta": theta,
                    "rule": verdict.rule,
                }));
            }
        }
    }
    let config = json!({
        "offspring": dist.to_string(),
        "b": bs, "p": ps.values(), "alpha": alphas.values(), "tol": args.tol,
    });
    emit(
        &args.out,
        OutputDoc {
            op: "compute",
            config,
            header: &["b", "p", "alpha", "y", "verdict", "theta"],
            rows,
            json_rows,
        },
    )
}

fn cmd_critical(args: CriticalArgs) -> Result<(), AppError> {
    let dist = parse_dist(&args.offspring)?;
    let bs = parse_b_list(&args.b).map_err(AppError::Usage)?;
    let ps = args.p.parse::<Grid>().map_err(AppError::Usage)?;
    if ps.values().iter().any(|&p| p <= 0.0 || p > 1.0) {
        return Err(AppError::Usage(
            "critical needs detection probabilities in (0, 1]".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for &b in &bs {
        for &p in ps.values() {
            let crit = analytics::critical_alpha(&dist, b, p, args.tol)
                .map_err(|e| AppError::Compute(e.to_string()))?;
            rows.push(vec![b.to_string(), g12(p), g12(crit.value)]);
            json_rows.push(json!({ "b": b, "p": p, "e_b": crit.value }));
        }
    }
    let config = json!({
        "offspring": dist.to_string(), "b": bs, "p": ps.values(), "tol": args.tol,
    });
    emit(
        &args.out,
        OutputDoc {
            op: "critical",
            config,
            header: &["b", "p", "e_b"],
            rows,
            json_rows,
        },
    )
}

fn cmd_theta_curve(args: ThetaCurveArgs) -> Result<(), AppError> {
    let dist = parse_dist(&args.offspring)?;
    if !(args.p > 0.0 && args.p <= 1.0) {
        return Err(AppError::Usage("theta-curve needs p in (0, 1]".into()));
    }
    let alphas = args.alpha.parse::<Grid>().map_err(AppError::Usage)?;
    let crit = analytics::critical_alpha(&dist, args.b, args.p, args.tol)
        .map_err(|e| AppError::Compute(e.to_string()))?;
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for &alpha in alphas.values() {
        // past the critical point the process is extinct; the exponent
        // column is left empty there
        let theta = if alpha < crit.value {
            let params = CtpParams::new(args.b, args.p, alpha, dist.clone())
                .map_err(|e| AppError::Usage(e.to_string()))?;
            analytics::malthusian_theta(&params, args.tol).ok()
        } else {
            None
        };
        rows.push(vec![g12(alpha), theta.map(g12).unwrap_or_default()]);
        json_rows.push(json!({ "alpha": alpha, "theta": theta }));
    }
    let config = json!({
        "offspring": dist.to_string(), "b": args.b, "p": args.p,
        "alpha": alphas.values(), "tol": args.tol, "e_b": crit.value,
    });
    emit(
        &args.out,
        OutputDoc {
            op: "theta-curve",
            config,
            header: &["alpha", "theta"],
            rows,
            json_rows,
        },
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    let dist = parse_dist(&args.offspring)?;
    let params = CtpParams::new(args.b, args.p, args.alpha, dist.clone())
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let seed = resolve_seed(args.seed, 1)?;
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for trial in 0..args.trials {
        let trial_seed = ctrace_core::rng::Stream::from_parts(seed, trial).next_u64();
        let trajectory = match args.engine {
            Engine::Direct => sim_direct::run(&params, args.horizon, trial_seed, args.cap),
            Engine::Cluster => sim_cluster::run(
                &params,
                args.horizon,
                trial_seed,
                RunOptions { cap: args.cap },
            ),
        }
        .map_err(|e| AppError::Compute(format!("trial {trial}: {e}")))?;
        for row in &trajectory.rows {
            rows.push(vec![
                trial.to_string(),
                row.n.to_string(),
                row.z.map(|z| z.to_string()).unwrap_or_default(),
                row.zct.to_string(),
                row.r0.to_string(),
            ]);
        }
        json_rows.push(json!({
            "trial": trial,
            "rows": trajectory.rows,
            "extinct_at": trajectory.extinct_at,
        }));
    }
    let config = json!({
        "offspring": dist.to_string(), "b": args.b, "p": args.p, "alpha": args.alpha,
        "horizon": args.horizon, "trials": args.trials, "seed": seed,
        "engine": match args.engine { Engine::Direct => "direct", Engine::Cluster => "cluster" },
        "cap": args.cap,
    });
    emit(
        &args.out,
        OutputDoc {
            op: "simulate",
            config,
            header: &["trial", "n", "Z", "ZCT", "R0"],
            rows,
            json_rows,
        },
    )
}

fn cmd_mc(args: McArgs) -> Result<(), AppError> {
    let dist = parse_dist(&args.offspring)?;
    let params = CtpParams::new(args.b, args.p, args.alpha, dist.clone())
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let seed = resolve_seed(args.seed, 1)?;
    let base_config = json!({
        "offspring": dist.to_string(), "b": args.b, "p": args.p, "alpha": args.alpha,
        "horizon": args.horizon, "trials": args.trials, "seed": seed,
    });
    match args.op {
        McOp::Extinction => {
            let est = montecarlo::estimate_extinction_probability(
                &params,
                args.horizon,
                args.trials,
                seed,
            )
            .map_err(|e| AppError::Compute(e.to_string()))?;
            let rows = vec![vec![
                g12(est.value),
                g12(est.stderr),
                g12(est.ci95.0),
                g12(est.ci95.1),
                est.trials.to_string(),
            ]];
            let json_rows = vec![json!({
                "op": "extinction", "params": base_config, "horizon": args.horizon,
                "trials": est.trials, "value": est.value, "stderr": est.stderr,
                "ci95": est.ci95, "seed": seed,
            })];
            emit(
                &args.out,
                OutputDoc {
                    op: "mc-extinction",
                    config: base_config,
                    header: &["value", "stderr", "ci_lo", "ci_hi", "trials"],
                    rows,
                    json_rows,
                },
            )
        }
        McOp::Growth => {
            let window = args.window_start.unwrap_or(args.horizon / 3);
            if window >= args.horizon {
                return Err(AppError::Usage("window_start must be below horizon".into()));
            }
            let est =
                montecarlo::estimate_growth_rate(&params, args.horizon, args.trials, window, seed)
                    .map_err(|e| AppError::Compute(e.to_string()))?;
            let theta = analytics::malthusian_theta(&params, args.tol).ok();
            let rows = vec![vec![
                g12(est.value),
                g12(est.stderr),
                g12(est.ci95.0),
                g12(est.ci95.1),
                est.trials.to_string(),
                theta.map(g12).unwrap_or_default(),
            ]];
            let json_rows = vec![json!({
                "op": "growth", "params": base_config, "horizon": args.horizon,
                "window_start": window, "trials": est.trials, "value": est.value,
                "stderr": est.stderr, "ci95": est.ci95, "theta": theta, "seed": seed,
            })];
            emit(
                &args.out,
                OutputDoc {
                    op: "mc-growth",
                    config: base_config,
                    header: &["slope", "stderr", "ci_lo", "ci_hi", "survivors", "theta"],
                    rows,
                    json_rows,
                },
            )
        }
        McOp::Vn => {
            let n_max = args.horizon.min(64);
            let ests = montecarlo::estimate_vn(&params, n_max, args.trials, seed)
                .map_err(|e| AppError::Compute(e.to_string()))?;
            let seqs = analytics::compute_sequences(&params, n_max as usize + 1)
                .map_err(|e| AppError::Compute(e.to_string()))?;
            let mut rows = Vec::new();
            let mut json_rows = Vec::new();
            for (i, est) in ests.iter().enumerate() {
                let n = i + 1;
                let analytic = seqs.v[n];
                let z = if est.stderr > 0.0 {
                    (est.value - analytic) / est.stderr
                } else {
                    0.0
                };
                rows.push(vec![
                    n.to_string(),
                    g12(est.value),
                    g12(est.stderr),
                    g12(analytic),
                    g12(z),
                ]);
                json_rows.push(json!({
                    "op": "vn", "params": base_config, "n": n, "trials": est.trials,
                    "value": est.value, "stderr": est.stderr, "ci95": est.ci95,
                    "analytic": analytic, "z": z, "seed": seed,
                }));
            }
            emit(
                &args.out,
                OutputDoc {
                    op: "mc-vn",
                    config: base_config,
                    header: &["n", "estimate", "stderr", "analytic", "z"],
                    rows,
                    json_rows,
                },
            )
        }
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), AppError> {
    let seed = resolve_seed(args.seed, validate::DEFAULT_SEED)?;
    let outcomes = validate::run_all(seed);
    let mut all_ok = true;
    for outcome in &outcomes {
        println!("{outcome}");
        all_ok &= outcome.passed;
    }
    if all_ok {
        println!("all {} criteria passed", outcomes.len());
        Ok(())
    } else {
        Err(AppError::ValidationFailed)
    }
}

fn emit(out: &CommonOut, doc: OutputDoc) -> Result<(), AppError> {
    let sink = match &out.out {
        Some(path) => Sink::File(path.clone()),
        None => Sink::Stdout,
    };
    let result = match out.format {
        Format::Csv => doc.write_csv(sink),
        Format::Json => doc.write_json(sink),
    };
    result.map_err(|e| AppError::Compute(format!("write failed: {e}")))
}
