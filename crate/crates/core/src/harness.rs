//! Monte Carlo experiment runner.
//!
//! Each run owns two random streams derived from `(base_seed, run_index)`:
//! one drives the environment and one drives the forecaster's coins. Runs
//! with the same seed and index therefore see the same data whatever the
//! strategy, which makes paired comparisons between strategies meaningful.
//!
//! Aggregates are pointwise means with normal-approximation 95% intervals,
//! `mean ± 1.96 sd / √runs`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::environments::{
    optimal_risk, Environment, GapEnv, GapEnvConfig, ScriptedEnv, ThresholdEnv, ThresholdEnvConfig,
};
use crate::error::{Error, Result};
use crate::forecaster::{ForecasterState, RoundRecord, SamplingStrategy};
use crate::oracle::general_bound;

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

pub const CI_METHOD: &str = "normal approximation: mean +/- 1.96 * sd / sqrt(runs)";

/// Round-by-round logs are only kept up to this horizon.
pub const MAX_LOGGED_HORIZON: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Threshold {
        tau0: f64,
        kappa: f64,
    },
    Gap {
        delta: f64,
        base_error: f64,
        #[serde(default)]
        best_index: usize,
        #[serde(default)]
        warmup: u64,
    },
    Scripted {
        file: PathBuf,
    },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Threshold { .. } => "threshold",
            EnvSpec::Gap { .. } => "gap",
            EnvSpec::Scripted { .. } => "scripted",
        }
    }
}

/// Learning rate: explicit, or `√(8 ln N / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl EtaSpec {
    pub fn resolve(&self, num_experts: usize, horizon: u64) -> f64 {
        match *self {
            EtaSpec::Fixed(v) => v,
            EtaSpec::Auto => auto_eta(num_experts, horizon),
        }
    }
}

/// `√(8 ln N / n)`, the minimizer of `ln N / η + n η / 8`.
pub fn auto_eta(num_experts: usize, horizon: u64) -> f64 {
    (8.0 * (num_experts as f64).ln() / horizon as f64).sqrt()
}

impl FromStr for EtaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(EtaSpec::Auto),
            "inf" | "infinity" => Ok(EtaSpec::Fixed(f64::INFINITY)),
            other => other.parse::<f64>().map(EtaSpec::Fixed).map_err(|_| {
                Error::InvalidConfig(format!("eta must be `auto` or a number, got {other:?}"))
            }),
        }
    }
}

impl fmt::Display for EtaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaSpec::Auto => f.write_str("auto"),
            EtaSpec::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for EtaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EtaSpec::Fixed(v) if v.is_finite() => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for EtaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(EtaSpec::Fixed(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_runs() -> u32 {
    1
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub horizon: u64,
    pub num_experts: usize,
    #[serde(default)]
    pub eta: EtaSpec,
    pub strategy: SamplingStrategy,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

impl ExperimentConfig {
    /// Learning rate in force; `auto` means `η = ∞` for hard-elimination strategies.
    pub fn resolved_eta(&self) -> f64 {
        match self.eta {
            EtaSpec::Auto if self.strategy.is_hard_elimination() => f64::INFINITY,
            eta => eta.resolve(self.num_experts, self.horizon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.num_experts == 0 {
            return Err(Error::NoExperts);
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig(
                "record stride must be positive".into(),
            ));
        }
        self.strategy.validate_eta(self.resolved_eta())?;
        match self.env {
            EnvSpec::Threshold { tau0, kappa } => self.threshold_config(tau0, kappa, 0).validate(),
            EnvSpec::Gap {
                delta,
                base_error,
                best_index,
                warmup,
            } => self
                .gap_config(delta, base_error, best_index, warmup, 0)
                .validate(),
            EnvSpec::Scripted { .. } => Ok(()),
        }
    }

    fn threshold_config(&self, tau0: f64, kappa: f64, seed: u64) -> ThresholdEnvConfig {
        ThresholdEnvConfig {
            tau0,
            kappa,
            num_experts: self.num_experts,
            seed,
        }
    }

    fn gap_config(
        &self,
        delta: f64,
        base_error: f64,
        best_index: usize,
        warmup: u64,
        seed: u64,
    ) -> GapEnvConfig {
        GapEnvConfig {
            delta,
            base_error,
            num_experts: self.num_experts,
            best_index,
            warmup,
            seed,
        }
    }
}

/// Metrics recorded along a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `L_t - min_i L_{i,t}`.
    RegretBest,
    /// `L_t - Σ ℓ(g*(X_j), Y_j)`; threshold environment only.
    RegretOptimal,
    /// `S_t`, labels queried so far.
    Labels,
    /// Primary regret divided by `t`.
    NormalizedRegret,
    /// `min_{i ≠ i*} Σ_j (ℓ_{i,j} - ℓ_{i*,j}) Z_j / q_j`.
    LambdaMin,
    /// `q_t` at the recorded round.
    QueryProbability,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::RegretBest,
        Metric::RegretOptimal,
        Metric::Labels,
        Metric::NormalizedRegret,
        Metric::LambdaMin,
        Metric::QueryProbability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::RegretBest => "regret_best",
            Metric::RegretOptimal => "regret_optimal",
            Metric::Labels => "labels",
            Metric::NormalizedRegret => "normalized_regret",
            Metric::LambdaMin => "lambda_min",
            Metric::QueryProbability => "q",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scalars summarizing a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub forecaster_loss: u64,
    pub best_expert_loss: u64,
    pub optimal_loss: Option<u64>,
    pub labels: u64,
    /// Forecaster-side label reveals; equals `labels`.
    pub reveals: u64,
    /// Mean `q_t` over the final 10% of rounds.
    pub mean_q_tail: f64,
}

/// One run's subsampled trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub run_index: u32,
    pub t: Vec<u64>,
    pub values: BTreeMap<Metric, Vec<f64>>,
    pub summary: RunSummary,
}

/// Everything observed in one round, for independent recounts.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub record: RoundRecord,
    pub advice: Vec<bool>,
    pub label: bool,
    pub optimal_prediction: Option<bool>,
}

/// Pointwise mean and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Summary {
    /// Mean and normal-approximation interval; a single sample gives width 0.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self {
                mean,
                ci_lo: mean,
                ci_hi: mean,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let half = Z95 * (var / n).sqrt();
        Self {
            mean,
            ci_lo: mean - half,
            ci_hi: mean + half,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

/// Run-level scalars aggregated across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalSummary {
    pub regret: Summary,
    pub regret_best: Summary,
    pub labels: Summary,
    pub loss_rate: Summary,
    pub optimal_loss_rate: Option<Summary>,
    pub mean_q_tail: Summary,
}

/// Aggregated time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub runs: u32,
    pub t: Vec<u64>,
    pub series: BTreeMap<Metric, Vec<Summary>>,
    pub finals: FinalSummary,
    pub eta: f64,
}

impl MetricsSeries {
    pub fn get(&self, metric: Metric) -> Option<&[Summary]> {
        self.series.get(&metric).map(Vec::as_slice)
    }

    /// The recorded value of `metric` at the last recorded round.
    pub fn last(&self, metric: Metric) -> Option<Summary> {
        self.get(metric).and_then(|s| s.last().copied())
    }

    pub fn degenerate_ci(&self) -> bool {
        self.runs < 2
    }

    /// Writes `t,metric,mean,ci_lo,ci_hi,runs`, ordered by round then metric.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,metric,mean,ci_lo,ci_hi,runs")?;
        for (k, t) in self.t.iter().enumerate() {
            for (metric, values) in &self.series {
                let s = values[k];
                writeln!(
                    out,
                    "{t},{metric},{},{},{},{}",
                    s.mean, s.ci_lo, s.ci_hi, self.runs
                )?;
            }
        }
        Ok(())
    }
}

/// A parsed line of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: u64,
    pub metric: Metric,
    pub summary: Summary,
    pub runs: u32,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "t,metric,mean,ci_lo,ci_hi,runs")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing results header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            Ok(CsvRow {
                t: cols[0].parse().map_err(|e| bad(format!("t: {e}")))?,
                metric: cols[1].parse().map_err(|e: Error| bad(e.to_string()))?,
                summary: Summary {
                    mean: num(cols[2])?,
                    ci_lo: num(cols[3])?,
                    ci_hi: num(cols[4])?,
                },
                runs: cols[5].parse().map_err(|e| bad(format!("runs: {e}")))?,
            })
        })
        .collect()
}

/// Final-round figures shown after a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryLine {
    pub t: u64,
    pub regret: f64,
    pub labels: f64,
    pub regret_bound: f64,
    pub label_bound: Option<f64>,
}

impl fmt::Display for SummaryLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} mean_regret={} mean_labels={} regret_bound={}",
            self.t, self.regret, self.labels, self.regret_bound
        )?;
        if let Some(b) = self.label_bound {
            write!(f, " label_bound={b}")?;
        }
        Ok(())
    }
}

/// The primary regret metric: against `g*` for the threshold model, against
/// the best expert otherwise.
pub fn primary_regret_metric(env: &EnvSpec) -> Metric {
    match env {
        EnvSpec::Threshold { .. } => Metric::RegretOptimal,
        _ => Metric::RegretBest,
    }
}

/// Builds the summary line from CSV rows of the final recorded round.
pub fn summary_from_rows(rows: &[CsvRow], config: &ExperimentConfig) -> Option<SummaryLine> {
    let t = rows.iter().map(|r| r.t).max()?;
    let find = |m: Metric| {
        rows.iter()
            .find(|r| r.t == t && r.metric == m)
            .map(|r| r.summary.mean)
    };
    Some(SummaryLine {
        t,
        regret: find(primary_regret_metric(&config.env))?,
        labels: find(Metric::Labels)?,
        regret_bound: regret_bound_for(config),
        label_bound: label_bound_for(config),
    })
}

pub fn summary_line(series: &MetricsSeries, config: &ExperimentConfig) -> Option<SummaryLine> {
    Some(SummaryLine {
        t: *series.t.last()?,
        regret: series.last(primary_regret_metric(&config.env))?.mean,
        labels: series.last(Metric::Labels)?.mean,
        regret_bound: regret_bound_for(config),
        label_bound: label_bound_for(config),
    })
}

fn regret_bound_for(config: &ExperimentConfig) -> f64 {
    let eta = config.resolved_eta();
    if config.strategy.is_hard_elimination() {
        (config.num_experts as f64).log2()
    } else {
        general_bound(config.num_experts, config.horizon as usize, eta)
    }
}

fn label_bound_for(config: &ExperimentConfig) -> Option<f64> {
    match config.env {
        EnvSpec::Gap { delta, .. } if config.strategy == SamplingStrategy::QStarUpperBound => {
            label_complexity_bound(
                config.horizon,
                config.num_experts,
                config.resolved_eta(),
                delta,
            )
            .ok()
        }
        _ => None,
    }
}

/// `50/(η Δ²) ln(N ln n / η) + 3 η n + 1`.
pub fn label_complexity_bound(
    horizon: u64,
    num_experts: usize,
    eta: f64,
    delta: f64,
) -> Result<f64> {
    if horizon < 4 {
        return Err(Error::InvalidArgument(format!(
            "label bound needs n >= 4, got {horizon}"
        )));
    }
    if num_experts == 0 || eta.is_nan() || eta <= 0.0 || delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "N, eta and delta must be positive".into(),
        ));
    }
    let n = horizon as f64;
    let first = if delta.is_infinite() {
        0.0
    } else {
        50.0 / (eta * delta * delta) * (num_experts as f64 * n.ln() / eta).ln()
    };
    Ok(first + 3.0 * eta * n + 1.0)
}

/// Horizontal axis of a log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeAxis {
    Time,
    Labels,
}

/// Least-squares slope of `ln r(t)` against `ln t` or `ln E[S_t]` over the
/// last `fit_window` fraction of recorded points.
pub fn loglog_slope(series: &MetricsSeries, axis: SlopeAxis, fit_window: f64) -> Result<f64> {
    let r = series
        .get(Metric::NormalizedRegret)
        .ok_or_else(|| Error::InvalidArgument("series has no normalized regret".into()))?;
    let xs: Vec<f64> = match axis {
        SlopeAxis::Time => series.t.iter().map(|&t| t as f64).collect(),
        SlopeAxis::Labels => series
            .get(Metric::Labels)
            .ok_or_else(|| Error::InvalidArgument("series has no label counts".into()))?
            .iter()
            .map(|s| s.mean)
            .collect(),
    };
    let ys: Vec<f64> = r.iter().map(|s| s.mean).collect();
    loglog_slope_points(&xs, &ys, fit_window)
}

/// Same fit on raw points.
pub fn loglog_slope_points(xs: &[f64], ys: &[f64], fit_window: f64) -> Result<f64> {
    if !(fit_window > 0.0 && fit_window <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fit window {fit_window} not in (0, 1]"
        )));
    }
    let len = xs.len().min(ys.len());
    let start = len - ((len as f64 * fit_window).round() as usize).min(len);
    let (xs, ys) = (&xs[start..len], &ys[start..len]);
    if xs.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 points in the fit window, have {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::InvalidArgument(
            "log-log fit needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate x values".into()));
    }
    Ok(sxy / sxx)
}

/// A validated experiment with any scripted input loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    script: Option<ScriptedEnv>,
    eta: f64,
}

/// Per-run random streams: environment on stream `2k`, forecaster on `2k + 1`.
pub fn run_streams(base_seed: u64, run_index: u32) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(base_seed);
    env.set_stream(2 * u64::from(run_index));
    let mut coins = ChaCha8Rng::seed_from_u64(base_seed);
    coins.set_stream(2 * u64::from(run_index) + 1);
    (env, coins)
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let script = match &config.env {
            EnvSpec::Scripted { file } => {
                let env: ScriptedEnv = std::fs::read_to_string(file)?.parse()?;
                Self::check_script(&config, &env)?;
                Some(env)
            }
            _ => None,
        };
        let eta = config.resolved_eta();
        Ok(Self {
            config,
            script,
            eta,
        })
    }

    /// Experiment over an in-memory script; `config.env` is ignored.
    pub fn with_script(mut config: ExperimentConfig, script: ScriptedEnv) -> Result<Self> {
        config.env = EnvSpec::Scripted {
            file: PathBuf::from("<memory>"),
        };
        config.validate()?;
        Self::check_script(&config, &script)?;
        let eta = config.resolved_eta();
        Ok(Self {
            config,
            script: Some(script),
            eta,
        })
    }

    fn check_script(config: &ExperimentConfig, env: &ScriptedEnv) -> Result<()> {
        if env.num_experts() != config.num_experts {
            return Err(Error::InvalidConfig(format!(
                "script has {} experts, config says {}",
                env.num_experts(),
                config.num_experts
            )));
        }
        if (env.horizon() as u64) < config.horizon {
            return Err(Error::InvalidConfig(format!(
                "script has {} rounds, horizon is {}",
                env.horizon(),
                config.horizon
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn environment(&self, rng: ChaCha8Rng) -> Result<Box<dyn Environment + '_>> {
        let c = &self.config;
        Ok(match c.env {
            EnvSpec::Threshold { tau0, kappa } => Box::new(ThresholdEnv::with_rng(
                c.threshold_config(tau0, kappa, c.base_seed),
                rng,
            )?),
            EnvSpec::Gap {
                delta,
                base_error,
                best_index,
                warmup,
            } => Box::new(GapEnv::with_rng(
                c.gap_config(delta, base_error, best_index, warmup, c.base_seed),
                rng,
            )?),
            EnvSpec::Scripted { .. } => Box::new(
                self.script
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("script not loaded".into()))?
                    .playback(),
            ),
        })
    }

    /// Reference expert for the importance-weighted diagnostic.
    fn reference_expert(&self) -> Option<usize> {
        let c = &self.config;
        match c.env {
            EnvSpec::Threshold { tau0, kappa } => {
                Some(c.threshold_config(tau0, kappa, 0).best_expert())
            }
            EnvSpec::Gap { best_index, .. } => Some(best_index),
            EnvSpec::Scripted { .. } => None,
        }
    }

    pub fn run_once(&self, run_index: u32) -> Result<RunTrace> {
        self.play(run_index, None)
    }

    /// Like [`Experiment::run_once`] but also returns every round.
    pub fn run_once_logged(&self, run_index: u32) -> Result<(RunTrace, Vec<RoundLog>)> {
        if self.config.horizon > MAX_LOGGED_HORIZON {
            return Err(Error::InvalidConfig(format!(
                "full round logs are limited to n <= {MAX_LOGGED_HORIZON}"
            )));
        }
        let mut log = Vec::with_capacity(self.config.horizon as usize);
        let trace = self.play(run_index, Some(&mut log))?;
        Ok((trace, log))
    }

    fn play(&self, run_index: u32, mut log: Option<&mut Vec<RoundLog>>) -> Result<RunTrace> {
        let c = &self.config;
        let (env_rng, mut coins) = run_streams(c.base_seed, run_index);
        let mut env = self.environment(env_rng)?;
        let n_exp = c.num_experts;
        let mut state = ForecasterState::new(n_exp, self.eta, c.strategy)?;
        let reference = self.reference_expert();
        let threshold = matches!(c.env, EnvSpec::Threshold { .. });

        let mut expert_loss = vec![0u64; n_exp];
        let mut lambda = vec![0.0f64; n_exp];
        let mut loss = 0u64;
        let mut optimal_loss = 0u64;
        let mut labels = 0u64;
        let mut reveals = 0u64;
        let tail_start = c.horizon - c.horizon.div_ceil(10);
        let mut q_tail = 0.0;

        let mut ts = Vec::new();
        let mut values: BTreeMap<Metric, Vec<f64>> = BTreeMap::new();

        for t in 1..=c.horizon {
            let mut round = env.next_round().ok_or_else(|| {
                Error::InvalidConfig(format!("environment ended before round {t}"))
            })?;
            let advice = round.advice().to_vec();
            let step = state.step(&advice, &mut round, &mut coins)?;
            reveals += u64::from(round.reveal_count());
            let label = round.score();
            let record = step.score(label);

            loss += u64::from(record.forecaster_loss);
            for (acc, &f) in expert_loss.iter_mut().zip(&advice) {
                *acc += u64::from(f != label);
            }
            if let Some(opt) = round.optimal_prediction {
                optimal_loss += u64::from(opt != label);
            }
            if record.queried {
                labels += 1;
                if let (Some(star), Some(losses)) = (reference, &record.expert_losses) {
                    let ls = f64::from(u8::from(losses[star]));
                    for (acc, &l) in lambda.iter_mut().zip(losses) {
                        *acc += (f64::from(u8::from(l)) - ls) / record.q;
                    }
                }
            }
            if t > tail_start {
                q_tail += record.q;
            }

            if t % c.record_stride == 0 || t == c.horizon {
                let best = *expert_loss.iter().min().unwrap_or(&0);
                let regret_best = loss as f64 - best as f64;
                let regret_opt = loss as f64 - optimal_loss as f64;
                ts.push(t);
                let mut put = |m: Metric, v: f64| values.entry(m).or_default().push(v);
                put(Metric::RegretBest, regret_best);
                put(Metric::Labels, labels as f64);
                put(Metric::QueryProbability, record.q);
                if threshold {
                    put(Metric::RegretOptimal, regret_opt);
                    put(Metric::NormalizedRegret, regret_opt / t as f64);
                } else {
                    put(Metric::NormalizedRegret, regret_best / t as f64);
                }
                if let Some(star) = reference {
                    let min = lambda
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != star)
                        .map(|(_, &v)| v)
                        .fold(f64::INFINITY, f64::min);
                    if min.is_finite() {
                        put(Metric::LambdaMin, min);
                    }
                }
            }

            if let Some(log) = log.as_deref_mut() {
                log.push(RoundLog {
                    record,
                    advice,
                    label,
                    optimal_prediction: round.optimal_prediction,
                });
            }
        }

        let tail_len = (c.horizon - tail_start) as f64;
        Ok(RunTrace {
            run_index,
            t: ts,
            values,
            summary: RunSummary {
                forecaster_loss: loss,
                best_expert_loss: *expert_loss.iter().min().unwrap_or(&0),
                optimal_loss: threshold.then_some(optimal_loss),
                labels,
                reveals,
                mean_q_tail: q_tail / tail_len,
            },
        })
    }

    /// Executes all runs in parallel and aggregates them in run order.
    pub fn run(&self) -> Result<MetricsSeries> {
        let traces: Vec<RunTrace> = (0..self.config.runs)
            .into_par_iter()
            .map(|k| self.run_once(k))
            .collect::<Result<_>>()?;
        Ok(aggregate(&traces, self.eta, self.config.horizon))
    }
}

/// Mean and interval of every metric at every recorded round.
pub fn aggregate(traces: &[RunTrace], eta: f64, horizon: u64) -> MetricsSeries {
    let first = &traces[0];
    let mut series = BTreeMap::new();
    for metric in first.values.keys() {
        let len = first.t.len();
        let column: Vec<Summary> = (0..len)
            .map(|k| {
                let xs: Vec<f64> = traces
                    .iter()
                    .filter_map(|tr| tr.values[metric].get(k).copied())
                    .collect();
                Summary::from_samples(&xs)
            })
            .collect();
        // A metric that is missing for some recorded rounds is dropped.
        if traces.iter().all(|tr| tr.values[metric].len() == len) {
            series.insert(*metric, column);
        }
    }

    let scalar = |f: &dyn Fn(&RunSummary) -> f64| {
        Summary::from_samples(&traces.iter().map(|tr| f(&tr.summary)).collect::<Vec<_>>())
    };
    let n = horizon as f64;
    let regret_best = scalar(&|s| s.forecaster_loss as f64 - s.best_expert_loss as f64);
    let optimal_loss_rate = first
        .summary
        .optimal_loss
        .map(|_| scalar(&|s| s.optimal_loss.unwrap_or(0) as f64 / n));
    let regret = if first.summary.optimal_loss.is_some() {
        scalar(&|s| s.forecaster_loss as f64 - s.optimal_loss.unwrap_or(0) as f64)
    } else {
        regret_best
    };
    MetricsSeries {
        runs: traces.len() as u32,
        t: first.t.clone(),
        series,
        finals: FinalSummary {
            regret,
            regret_best,
            labels: scalar(&|s| s.labels as f64),
            loss_rate: scalar(&|s| s.forecaster_loss as f64 / n),
            optimal_loss_rate,
            mean_q_tail: scalar(&|s| s.mean_q_tail),
        },
        eta,
    }
}

pub fn run_once(config: &ExperimentConfig, run_index: u32) -> Result<RunTrace> {
    Experiment::new(config.clone())?.run_once(run_index)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsSeries> {
    Experiment::new(config.clone())?.run()
}

/// Expected optimal-rule loss per round for a threshold experiment.
pub fn optimal_loss_rate(config: &ExperimentConfig) -> Option<f64> {
    match config.env {
        EnvSpec::Threshold { tau0, kappa } => {
            Some(optimal_risk(&config.threshold_config(tau0, kappa, 0)))
        }
        _ => None,
    }
}

/// Sidecar metadata written next to a results CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub config: &'a ExperimentConfig,
    pub seed: u64,
    pub resolved_eta: Option<f64>,
    pub version: &'static str,
    pub ci_method: &'static str,
    pub degenerate_ci: bool,
    pub wall_clock_seconds: f64,
    pub finals: &'a FinalSummary,
}

impl<'a> Metadata<'a> {
    pub fn new(
        config: &'a ExperimentConfig,
        series: &'a MetricsSeries,
        wall_clock_seconds: f64,
    ) -> Self {
        Self {
            config,
            seed: config.base_seed,
            resolved_eta: series.eta.is_finite().then_some(series.eta),
            version: env!("CARGO_PKG_VERSION"),
            ci_method: CI_METHOD,
            degenerate_ci: series.degenerate_ci(),
            wall_clock_seconds,
            finals: &series.finals,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
