use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use neyman_lab::analytics::{finite_stats, neyman_summary, OutcomeSchedule};
use neyman_lab::data::{self, ImputeConfig, Loaded};
use neyman_lab::designs::{parse_spec_list, PolicySpec};
use neyman_lab::estimators::{EffectEstimate, IntervalKind};
use neyman_lab::oracle::{enumerate_exact, regret_identity, variance_from_inverse_moments};
use neyman_lab::rng::Stream;
use neyman_lab::simulation::{
    monte_carlo, run_experiment, variance_curve, write_curve_csv, SimConfig,
};
use neyman_lab::SPEC_VERSION;

/// Relative tolerance used when reporting whether the exact regret identity holds.
const IDENTITY_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "neyman-lab",
    version,
    about = "Adaptive Neyman allocation experiments"
)]
struct Cli {
    /// Worker threads for Monte Carlo replications (default: all cores).
    #[arg(long, global = true, env = "NEYMAN_LAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an outcome schedule from a CSV file or a synthetic generator.
    Data(DataArgs),
    /// Enumerate every assignment path of a design on a short schedule.
    Exact(ExactArgs),
    /// Monte Carlo replications of one design.
    Simulate(SimulateArgs),
    /// Normalized variance against horizon for several designs.
    Curve(CurveArgs),
    /// Point estimate and intervals from a recorded trace.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV, either `y1,y0` (schedule) or `y,z` (observed data).
    #[arg(
        long = "in",
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    input: Option<PathBuf>,
    /// Synthetic generator: iid-scaled, etc-adversarial or constant-effect.
    #[arg(long)]
    synthetic: Option<String>,
    /// Number of units for the synthetic generator.
    #[arg(long, requires = "synthetic")]
    horizon: Option<usize>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator parameters, e.g. `lambda=2,a=0.25,b=1`.
    #[arg(long, default_value = "")]
    params: String,
    /// Impute missing outcomes of observed data: `tau=<v>,sigma=<v>,seed=<n>`.
    #[arg(long, value_parser = parse_impute)]
    impute: Option<ImputeConfig>,
    /// Map both arms jointly onto [0, 1].
    #[arg(long)]
    normalize: bool,
    /// Concatenate this many copies of the schedule.
    #[arg(long)]
    replicate: Option<usize>,
    /// Swap treated and control outcomes of the first n units.
    #[arg(long)]
    flip_prefix: Option<usize>,
    /// Permute the units with this seed.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Output schedule CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    /// Schedule CSV with header `y1,y0`.
    #[arg(long)]
    data: PathBuf,
    /// Design spec, e.g. `clip-ogd`, `bernoulli:0.5`, `etc:t0=3`.
    #[arg(long, value_parser = parse_design)]
    design: PolicySpec,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_design)]
    design: PolicySpec,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Miscoverage levels for the intervals.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    levels: Vec<f64>,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the `p,z,y` trace of replication 0.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated design specs.
    #[arg(long, value_parser = parse_designs)]
    designs: DesignList,
    /// Horizons; each uses the first T units of the schedule.
    #[arg(long, value_delimiter = ',', required = true)]
    t_grid: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Trace CSV with header `p,z,y`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    levels: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct DesignList(Vec<PolicySpec>);

fn parse_design(s: &str) -> Result<PolicySpec, String> {
    s.parse().map_err(|e: neyman_lab::Error| e.to_string())
}

fn parse_designs(s: &str) -> Result<DesignList, String> {
    parse_spec_list(s)
        .map(DesignList)
        .map_err(|e| e.to_string())
}

fn parse_impute(s: &str) -> Result<ImputeConfig, String> {
    let mut cfg = ImputeConfig {
        tau: 0.0,
        sigma: 0.0,
        seed: 0,
    };
    for kv in s.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        let value = value.trim();
        let bad = || format!("invalid value for {key}: `{value}`");
        match key.trim() {
            "tau" => cfg.tau = value.parse().map_err(|_| bad())?,
            "sigma" => cfg.sigma = value.parse().map_err(|_| bad())?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            other => return Err(format!("unknown impute key `{other}`")),
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Data(args) => cmd_data(args),
        Command::Exact(args) => cmd_exact(args),
        Command::Simulate(args) => cmd_simulate(args, cli.threads),
        Command::Curve(args) => cmd_curve(args, cli.threads),
        Command::Analyze(args) => cmd_analyze(args),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(bytes).context("writing to stdout"),
    }
}

fn emit_json(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

/// Metadata for CSV outputs goes beside the file, or to stderr for stdout.
fn emit_sidecar(out: Option<&Path>, meta: &Value) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut name = path.as_os_str().to_owned();
            name.push(".meta.json");
            emit_json(Some(Path::new(&name)), meta)
        }
        None => {
            eprintln!("{}", serde_json::to_string(meta)?);
            Ok(())
        }
    }
}

fn load_schedule(path: &Path) -> anyhow::Result<OutcomeSchedule> {
    Ok(data::load_schedule_csv(path)?)
}

fn cmd_data(args: DataArgs) -> anyhow::Result<()> {
    let loaded = match (&args.input, &args.synthetic) {
        (Some(path), _) => data::load_csv(path)?,
        (None, Some(kind)) => {
            let Some(horizon) = args.horizon else {
                bail!("--synthetic needs --horizon");
            };
            Loaded::Schedule(data::gen_synthetic(kind, horizon, args.seed, &args.params)?)
        }
        (None, None) => unreachable!("clap requires --in or --synthetic"),
    };
    let mut schedule = match (loaded, &args.impute) {
        (Loaded::Observed(obs), Some(cfg)) => data::impute(&obs, cfg)?,
        (Loaded::Observed(_), None) => bail!("observed `y,z` data needs --impute"),
        (Loaded::Schedule(_), Some(_)) => bail!("--impute applies to observed `y,z` data only"),
        (Loaded::Schedule(s), None) => s,
    };
    if args.normalize {
        schedule = data::normalize(&schedule);
    }
    if let Some(k) = args.replicate {
        schedule = data::replicate(&schedule, k)?;
    }
    if let Some(n) = args.flip_prefix {
        schedule = data::flip_prefix(&schedule, n)?;
    }
    if let Some(seed) = args.shuffle_seed {
        schedule = data::shuffle(&schedule, seed);
    }

    let mut bytes = Vec::new();
    data::write_schedule(&schedule, &mut bytes)?;
    emit(args.out.as_deref(), &bytes)?;

    let meta = json!({
        "spec_version": SPEC_VERSION,
        "command": "data",
        "config": {
            "in": args.input,
            "synthetic": args.synthetic,
            "horizon": args.horizon,
            "seed": args.seed,
            "params": args.params,
            "impute": args.impute,
            "normalize": args.normalize,
            "replicate": args.replicate,
            "flip_prefix": args.flip_prefix,
            "shuffle_seed": args.shuffle_seed,
        },
        "horizon": schedule.horizon(),
        "stats": stats_json(&schedule),
    });
    emit_sidecar(args.out.as_deref(), &meta)
}

fn stats_json(schedule: &OutcomeSchedule) -> Value {
    let stats = finite_stats(schedule);
    let neyman = neyman_summary(&stats).ok();
    json!({
        "s1": stats.s1,
        "s0": stats.s0,
        "rho": stats.rho,
        "tau": stats.tau,
        "p_star": neyman.map(|n| n.p_star),
        "normalized_neyman_variance": neyman.map(|n| n.normalized_neyman_variance),
        "normalized_variance_bound": 4.0 * stats.s1 * stats.s0,
    })
}

fn cmd_exact(args: ExactArgs) -> anyhow::Result<()> {
    let schedule = load_schedule(&args.data)?;
    let policy = args.design.build(&schedule)?;
    let exact = enumerate_exact(&schedule, &policy)?;
    let identity = regret_identity(&schedule, &exact)
        .ok()
        .map(|id| json!({ "lhs": id.lhs, "rhs": id.rhs, "holds": id.holds(IDENTITY_TOL) }));
    let value = json!({
        "spec_version": SPEC_VERSION,
        "command": "exact",
        "config": {
            "data": args.data,
            "design": args.design.to_string(),
            "resolved": policy.resolved(),
        },
        "horizon": schedule.horizon(),
        "stats": stats_json(&schedule),
        "results": exact,
        "normalized_variance": exact.normalized_variance(),
        "normalized_variance_from_inverse_moments":
            variance_from_inverse_moments(&schedule, &exact),
        "regret_identity": identity,
    });
    emit_json(args.out.as_deref(), &value)
}

fn cmd_simulate(args: SimulateArgs, threads: Option<usize>) -> anyhow::Result<()> {
    let schedule = load_schedule(&args.data)?;
    let mut config = SimConfig::new(args.reps, args.seed).with_levels(args.levels.clone());
    config.threads = threads;
    let summary = monte_carlo(&schedule, &args.design, &config)?;

    if let Some(path) = &args.trace_out {
        // replication 0 replayed on its own stream
        let mut policy = args.design.build(&schedule)?;
        let trace = run_experiment(&schedule, &mut policy, &mut Stream::new(args.seed, 0))?;
        data::write_trace_csv(path, &trace)?;
    }

    let value = json!({
        "spec_version": SPEC_VERSION,
        "command": "simulate",
        "config": {
            "data": args.data,
            "design": args.design.to_string(),
            "resolved": summary.resolved,
            "reps": args.reps,
            "seed": args.seed,
            "levels": args.levels,
        },
        "summary": summary,
    });
    emit_json(args.out.as_deref(), &value)
}

fn cmd_curve(args: CurveArgs, threads: Option<usize>) -> anyhow::Result<()> {
    let schedule = load_schedule(&args.data)?;
    let mut config = SimConfig::new(args.reps, args.seed);
    config.threads = threads;
    let DesignList(specs) = &args.designs;
    let rows = variance_curve(&schedule, specs, &args.t_grid, &config)?;

    let mut bytes = Vec::new();
    write_curve_csv(&rows, &mut bytes)?;
    emit(args.out.as_deref(), &bytes)?;

    let mut resolved = Vec::new();
    for &horizon in &args.t_grid {
        let prefix = schedule.truncate(horizon)?;
        for spec in specs {
            resolved.push(json!({
                "horizon": horizon,
                "design": spec.to_string(),
                "resolved": spec.build(&prefix)?.resolved(),
            }));
        }
    }
    let meta = json!({
        "spec_version": SPEC_VERSION,
        "command": "curve",
        "config": {
            "data": args.data,
            "designs": specs.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "t_grid": args.t_grid,
            "reps": args.reps,
            "seed": args.seed,
        },
        "resolved": resolved,
    });
    emit_sidecar(args.out.as_deref(), &meta)
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let trace = data::load_trace_csv(&args.trace)?;
    let estimate = EffectEstimate::from_trace(&trace);
    let mut intervals = Vec::new();
    for kind in IntervalKind::ALL {
        for &level in &args.levels {
            intervals.push(estimate.interval(kind, trace.horizon(), level)?);
        }
    }
    let value = json!({
        "spec_version": SPEC_VERSION,
        "command": "analyze",
        "config": { "trace": args.trace, "levels": args.levels },
        "horizon": trace.horizon(),
        "estimate": estimate,
        "intervals": intervals,
    });
    emit_json(args.out.as_deref(), &value)
}
