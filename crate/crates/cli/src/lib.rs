//! The `lef` command line: run label-efficient forecaster experiments,
//! tabulate `q*` and exhaustively verify the expected-loss bounds on small
//! instances.
//!
//! [`run`] is the whole program behind a pair of writers, so it can be driven
//! in-process. Exit codes: 0 on success, 1 when a verified bound is violated,
//! 2 on any usage, configuration or I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lef_core::environments::{enumerate_adversarial, MAX_ENUM_EXPERTS, MAX_ENUM_HORIZON};
use lef_core::harness::{summary_line, EnvSpec, EtaSpec, Experiment, ExperimentConfig, Metadata};
use lef_core::oracle::{sweep_general, sweep_majority, SweepRow};
use lef_core::sampling::{q_star_curve, write_q_star_csv};
use lef_core::{Error, SamplingStrategy};
use rayon::ThreadPool;

/// Absolute slack allowed on every verified bound.
const VERIFY_SLACK: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "lef",
    version,
    about = "Label-efficient exponentially weighted forecasters"
)]
struct Cli {
    /// Cap on worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo experiment; writes a results CSV and a metadata sidecar.
    Simulate(SimulateArgs),
    /// Tabulate q*(x, eta) on a grid.
    Qstar(QstarArgs),
    /// Exhaustively check the expected-loss bounds on small instances.
    Verify(VerifyArgs),
    /// Print every scripted sequence of a given size.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvKind {
    Threshold,
    Gap,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Full,
    Majority,
    Boosted,
    Qstar,
    QstarUpper,
}

impl From<StrategyArg> for SamplingStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Full => SamplingStrategy::FullInformation,
            StrategyArg::Majority => SamplingStrategy::FollowMajority,
            StrategyArg::Boosted => SamplingStrategy::BoostedMajority,
            StrategyArg::Qstar => SamplingStrategy::q_star_exact(),
            StrategyArg::QstarUpper => SamplingStrategy::QStarUpperBound,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON experiment config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvKind>,
    /// Noise exponent of the threshold model.
    #[arg(long)]
    kappa: Option<f64>,
    /// Threshold location of the threshold model.
    #[arg(long)]
    tau0: Option<f64>,
    /// Error-rate gap of the gap model.
    #[arg(long)]
    delta: Option<f64>,
    /// Error rate of the best expert in the gap model.
    #[arg(long)]
    base_error: Option<f64>,
    /// Index of the best expert in the gap model.
    #[arg(long)]
    best_index: Option<usize>,
    /// Rounds during which the gap model's best expert looks like the others.
    #[arg(long)]
    warmup: Option<u64>,
    /// Scripted environment file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Horizon.
    #[arg(long)]
    n: Option<u64>,
    /// Number of experts.
    #[arg(long)]
    experts: Option<usize>,
    /// Learning rate: `auto` or a positive number.
    #[arg(long)]
    eta: Option<EtaSpec>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record every k-th round (the final round is always recorded).
    #[arg(long)]
    stride: Option<u64>,
    /// Results CSV; the metadata goes next to it with a `.json` extension.
    /// Without it the CSV is written to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QstarArgs {
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',', required = true)]
    etas: Vec<f64>,
    /// Number of equally spaced points on [0, 1].
    #[arg(long, default_value_t = 513)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Perfect,
    Boosted,
    General,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Largest horizon swept (5 for the majority suites, 6 for general by default).
    #[arg(long)]
    max_n: Option<usize>,
    /// Largest number of experts swept (4 for the majority suites, 3 for general by default).
    #[arg(long)]
    max_experts: Option<usize>,
    /// Learning rates for the general suite.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0])]
    etas: Vec<f64>,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[arg(long)]
    experts: usize,
    #[arg(long)]
    n: usize,
    /// Keep only sequences with an expert that never errs.
    #[arg(long)]
    perfect: bool,
    /// Print only the number of sequences.
    #[arg(long)]
    count: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
    Violation,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(e.into())
    }
}

/// Exit code for a completed run.
pub const EXIT_OK: u8 = 0;
/// Exit code when a verified bound is violated.
pub const EXIT_VIOLATION: u8 = 1;
/// Exit code for usage, configuration and I/O errors.
pub const EXIT_USAGE: u8 = 2;

/// Where a command writes, and the worker pool it runs on.
struct Context<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    pool: Option<ThreadPool>,
}

impl Context<'_> {
    fn parallel<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Standard output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let pool = match cli.threads {
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => Some(pool),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
        },
        None => None,
    };
    let mut ctx = Context { out, err, pool };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args, &mut ctx),
        Command::Qstar(args) => qstar(args, &mut ctx),
        Command::Verify(args) => verify(args, &mut ctx),
        Command::Enumerate(args) => enumerate(args, &mut ctx),
    };
    let _ = ctx.out.flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Violation) => EXIT_VIOLATION,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Core(e)) => {
            let _ = writeln!(ctx.err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Writes through `write` to the file at `path`, or to `fallback`.
fn emit(
    path: Option<&Path>,
    fallback: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> lef_core::Result<()>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => write(fallback)?,
    }
    Ok(())
}

fn build_config(args: &SimulateArgs) -> Result<ExperimentConfig, Failure> {
    let base: Option<ExperimentConfig> = match &args.config {
        Some(path) => {
            Some(serde_json::from_str(&std::fs::read_to_string(path)?).map_err(Error::from)?)
        }
        None => None,
    };

    let kind = match (args.env, &base) {
        (Some(k), _) => k,
        (None, Some(c)) => match c.env {
            EnvSpec::Threshold { .. } => EnvKind::Threshold,
            EnvSpec::Gap { .. } => EnvKind::Gap,
            EnvSpec::Scripted { .. } => EnvKind::Scripted,
        },
        (None, None) => return Err(Failure::Usage("--env is required".into())),
    };
    let threshold_flags = args.kappa.is_some() || args.tau0.is_some();
    let gap_flags = args.delta.is_some()
        || args.base_error.is_some()
        || args.best_index.is_some()
        || args.warmup.is_some();
    let bad = |flags: &str| {
        Failure::Usage(format!("{flags} cannot be used with --env {kind:?}").to_lowercase())
    };
    match kind {
        EnvKind::Threshold if gap_flags => {
            return Err(bad("--delta/--base-error/--best-index/--warmup"))
        }
        EnvKind::Threshold if args.file.is_some() => return Err(bad("--file")),
        EnvKind::Gap if threshold_flags => return Err(bad("--kappa/--tau0")),
        EnvKind::Gap if args.file.is_some() => return Err(bad("--file")),
        EnvKind::Scripted if threshold_flags || gap_flags => {
            return Err(bad("environment parameters"))
        }
        _ => {}
    }

    let inherited = base.as_ref().map(|c| &c.env);
    let env = match kind {
        EnvKind::Threshold => {
            let (tau0, kappa) = match inherited {
                Some(EnvSpec::Threshold { tau0, kappa }) => (Some(*tau0), Some(*kappa)),
                _ => (None, None),
            };
            EnvSpec::Threshold {
                tau0: args.tau0.or(tau0).unwrap_or(0.5),
                kappa: args.kappa.or(kappa).ok_or_else(|| {
                    Failure::Usage("--kappa is required for the threshold environment".into())
                })?,
            }
        }
        EnvKind::Gap => {
            let prev = match inherited {
                Some(EnvSpec::Gap {
                    delta,
                    base_error,
                    best_index,
                    warmup,
                }) => Some((*delta, *base_error, *best_index, *warmup)),
                _ => None,
            };
            EnvSpec::Gap {
                delta: args.delta.or(prev.map(|p| p.0)).ok_or_else(|| {
                    Failure::Usage("--delta is required for the gap environment".into())
                })?,
                base_error: args.base_error.or(prev.map(|p| p.1)).unwrap_or(0.1),
                best_index: args.best_index.or(prev.map(|p| p.2)).unwrap_or(0),
                warmup: args.warmup.or(prev.map(|p| p.3)).unwrap_or(0),
            }
        }
        EnvKind::Scripted => {
            let file = match (&args.file, inherited) {
                (Some(f), _) => f.clone(),
                (None, Some(EnvSpec::Scripted { file })) => file.clone(),
                _ => {
                    return Err(Failure::Usage(
                        "--file is required for the scripted environment".into(),
                    ))
                }
            };
            EnvSpec::Scripted { file }
        }
    };

    let required = |name: &str| Failure::Usage(format!("--{name} is required"));
    let (horizon, num_experts) = if let EnvSpec::Scripted { file } = &env {
        let script: lef_core::ScriptedEnv = std::fs::read_to_string(file)?.parse()?;
        (
            args.n
                .or(base.as_ref().map(|c| c.horizon))
                .unwrap_or(script.horizon() as u64),
            args.experts
                .or(base.as_ref().map(|c| c.num_experts))
                .unwrap_or(script.num_experts()),
        )
    } else {
        (
            args.n
                .or(base.as_ref().map(|c| c.horizon))
                .ok_or_else(|| required("n"))?,
            args.experts
                .or(base.as_ref().map(|c| c.num_experts))
                .ok_or_else(|| required("experts"))?,
        )
    };

    Ok(ExperimentConfig {
        env,
        horizon,
        num_experts,
        eta: args
            .eta
            .or(base.as_ref().map(|c| c.eta))
            .unwrap_or_default(),
        strategy: args
            .strategy
            .map(SamplingStrategy::from)
            .or(base.as_ref().map(|c| c.strategy))
            .ok_or_else(|| required("strategy"))?,
        runs: args.runs.or(base.as_ref().map(|c| c.runs)).unwrap_or(1),
        base_seed: args
            .seed
            .or(base.as_ref().map(|c| c.base_seed))
            .unwrap_or(0),
        record_stride: args
            .stride
            .or(base.as_ref().map(|c| c.record_stride))
            .unwrap_or(1),
    })
}

fn simulate(args: SimulateArgs, ctx: &mut Context<'_>) -> Result<(), Failure> {
    let config = build_config(&args)?;
    let experiment = Experiment::new(config.clone())?;
    let started = Instant::now();
    let series = ctx.parallel(|| experiment.run())?;
    let elapsed = started.elapsed().as_secs_f64();

    emit(args.out.as_deref(), ctx.out, |w| series.write_csv(w))?;

    let meta = Metadata::new(&config, &series, elapsed).to_json()?;
    if let Some(path) = &args.out {
        std::fs::write(path.with_extension("json"), meta + "\n")?;
    }

    let line = summary_line(&series, &config)
        .map(|s| s.to_string())
        .unwrap_or_default();
    let note = if series.degenerate_ci() {
        " (single run: confidence intervals have zero width)"
    } else {
        ""
    };
    let target = if args.out.is_some() {
        &mut *ctx.out
    } else {
        &mut *ctx.err
    };
    writeln!(target, "{line}{note}")?;
    Ok(())
}

fn qstar(args: QstarArgs, ctx: &mut Context<'_>) -> Result<(), Failure> {
    if let Some(eta) = args.etas.iter().find(|&&e| e.is_nan() || e <= 0.0) {
        return Err(Failure::Usage(format!(
            "every eta must be positive, got {eta}"
        )));
    }
    if args.grid < 2 {
        return Err(Failure::Usage(format!(
            "--grid must be at least 2, got {}",
            args.grid
        )));
    }
    let mut etas = args.etas.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let rows = q_star_curve(&etas, args.grid)?;
    emit(args.out.as_deref(), ctx.out, |w| write_q_star_csv(&rows, w))
}

fn fmt_eta(eta: Option<f64>) -> String {
    eta.map_or_else(|| "inf".to_string(), |e| e.to_string())
}

fn report(out: &mut dyn Write, suite: &str, rows: &[SweepRow]) -> io::Result<bool> {
    let mut ok = true;
    for row in rows {
        let pass = row.passes(VERIFY_SLACK);
        ok &= pass;
        writeln!(
            out,
            "{suite} strategy={} N={} n={} eta={} envs={} worst={:.12} bound={:.12} margin={:.3e} {}",
            row.strategy.name(),
            row.num_experts,
            row.horizon,
            fmt_eta(row.eta),
            row.environments,
            row.worst_value,
            row.bound,
            row.margin(),
            if pass { "PASS" } else { "FAIL" }
        )?;
    }
    if let Some(worst) = rows.iter().min_by(|a, b| {
        a.margin()
            .total_cmp(&b.margin())
            .then(b.num_experts.cmp(&a.num_experts))
            .then(b.horizon.cmp(&a.horizon))
    }) {
        writeln!(
            out,
            "{suite} worst margin {:.3e} at strategy={} N={} n={} eta={}:",
            worst.margin(),
            worst.strategy.name(),
            worst.num_experts,
            worst.horizon,
            fmt_eta(worst.eta)
        )?;
        for line in worst.worst_env.to_string().lines() {
            writeln!(out, "  {line}")?;
        }
    }
    writeln!(out, "{suite}: {}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

fn verify(args: VerifyArgs, ctx: &mut Context<'_>) -> Result<(), Failure> {
    let run_majority = matches!(args.suite, Suite::Perfect | Suite::Boosted | Suite::All);
    let run_general = matches!(args.suite, Suite::General | Suite::All);
    let majority_n = args.max_n.unwrap_or(5);
    let majority_experts = args.max_experts.unwrap_or(4);
    let general_n = args.max_n.unwrap_or(6);
    let general_experts = args.max_experts.unwrap_or(3);

    let check = |experts: usize, n: usize| {
        if experts == 0 || n == 0 {
            return Err(Failure::Usage(
                "--max-n and --max-experts must be positive".into(),
            ));
        }
        if experts > MAX_ENUM_EXPERTS || n > MAX_ENUM_HORIZON {
            return Err(Failure::Usage(format!(
                "sweeps support at most {MAX_ENUM_EXPERTS} experts and {MAX_ENUM_HORIZON} rounds"
            )));
        }
        Ok(())
    };
    if run_majority {
        check(majority_experts, majority_n)?;
    }
    if run_general {
        check(general_experts, general_n)?;
        if let Some(eta) = args.etas.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Failure::Usage(format!(
                "every eta must be positive and finite, got {eta}"
            )));
        }
    }

    let mut ok = true;
    let majority_suites = [
        (Suite::Perfect, "perfect", SamplingStrategy::FollowMajority),
        (Suite::Boosted, "boosted", SamplingStrategy::BoostedMajority),
    ];
    for (suite, name, strategy) in majority_suites {
        if args.suite == suite || args.suite == Suite::All {
            let rows = ctx.parallel(|| -> lef_core::Result<Vec<SweepRow>> {
                let mut rows = Vec::new();
                for experts in 1..=majority_experts {
                    rows.extend(sweep_majority(strategy, experts, majority_n)?);
                }
                Ok(rows)
            })?;
            ok &= report(ctx.out, name, &rows)?;
        }
    }
    if run_general {
        let etas = &args.etas;
        let rows = ctx.parallel(|| -> lef_core::Result<Vec<SweepRow>> {
            let mut rows = Vec::new();
            for strategy in [
                SamplingStrategy::q_star_exact(),
                SamplingStrategy::QStarUpperBound,
            ] {
                for &eta in etas {
                    for experts in 1..=general_experts {
                        rows.extend(sweep_general(strategy, eta, experts, general_n)?);
                    }
                }
            }
            Ok(rows)
        })?;
        ok &= report(ctx.out, "general", &rows)?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

fn enumerate(args: EnumerateArgs, ctx: &mut Context<'_>) -> Result<(), Failure> {
    let envs = enumerate_adversarial(args.experts, args.n, args.perfect)?;
    let out = &mut *ctx.out;
    if args.count {
        writeln!(out, "{}", envs.count())?;
    } else {
        for (k, env) in envs.enumerate() {
            if k > 0 {
                writeln!(out)?;
            }
            write!(out, "{env}")?;
        }
    }
    out.flush()?;
    Ok(())
}
