//! Round generators.
//!
//! An environment hands out expert advice eagerly and keeps the label behind
//! a [`Round`]. The forecaster sees the label only through [`LabelSource`],
//! which it calls when its query coin succeeds; the harness scores every round
//! through [`Round::score`], which the forecaster never receives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecaster-facing access to the current round's label.
pub trait LabelSource {
    fn reveal(&mut self) -> bool;
}

/// One round: advice is public, the label is not.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    advice: Vec<bool>,
    label: bool,
    reveals: u32,
    /// Feature `X` for the threshold model.
    pub feature: Option<f64>,
    /// `g*(X)` for the threshold model.
    pub optimal_prediction: Option<bool>,
}

impl Round {
    pub fn new(advice: Vec<bool>, label: bool) -> Self {
        Self {
            advice,
            label,
            reveals: 0,
            feature: None,
            optimal_prediction: None,
        }
    }

    pub fn advice(&self) -> &[bool] {
        &self.advice
    }

    /// Scoring channel for the harness.
    pub fn score(&self) -> bool {
        self.label
    }

    /// Number of forecaster-side reveals so far.
    pub fn reveal_count(&self) -> u32 {
        self.reveals
    }
}

impl LabelSource for Round {
    fn reveal(&mut self) -> bool {
        self.reveals += 1;
        self.label
    }
}

pub trait Environment {
    fn num_experts(&self) -> usize;

    /// The next round, or `None` once a finite script is exhausted.
    fn next_round(&mut self) -> Option<Round>;
}

// ---------------------------------------------------------------------------
// Threshold model with Tsybakov-style noise

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEnvConfig {
    pub tau0: f64,
    pub kappa: f64,
    pub num_experts: usize,
    pub seed: u64,
}

/// A draw from the threshold model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRound {
    pub advice: Vec<bool>,
    pub label: bool,
    pub x: f64,
    pub optimal_prediction: bool,
}

impl ThresholdEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau0) {
            return Err(Error::InvalidConfig(format!(
                "tau0 = {} not in [0, 1]",
                self.tau0
            )));
        }
        if self.kappa.is_nan() || self.kappa <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "kappa = {} must exceed 1",
                self.kappa
            )));
        }
        if self.num_experts == 0 || self.num_experts.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "threshold experts must be a positive odd count, got {}",
                self.num_experts
            )));
        }
        Ok(())
    }

    /// `P(Y = 1 | X = x) = 1/2 + 1/2 sign(x - τ₀) |x - τ₀|^{κ-1}`.
    pub fn zeta(&self, x: f64) -> f64 {
        let d = x - self.tau0;
        if d == 0.0 {
            return 0.5;
        }
        0.5 + 0.5 * d.signum() * d.abs().powf(self.kappa - 1.0)
    }

    /// Threshold of expert `i` (0-based): `i / (N - 1)`.
    pub fn expert_threshold(&self, i: usize) -> f64 {
        if self.num_experts == 1 {
            0.0
        } else {
            i as f64 / (self.num_experts - 1) as f64
        }
    }

    /// The expert whose threshold is closest to `τ₀`.
    pub fn best_expert(&self) -> usize {
        (0..self.num_experts)
            .min_by(|&a, &b| {
                let da = (self.expert_threshold(a) - self.tau0).abs();
                let db = (self.expert_threshold(b) - self.tau0).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(0)
    }

    pub fn advice_for(&self, x: f64) -> Vec<bool> {
        (0..self.num_experts)
            .map(|i| x >= self.expert_threshold(i))
            .collect()
    }

    /// Round for a given feature value, drawing only the label.
    pub fn round_at<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> ThresholdRound {
        let label = rng.random::<f64>() < self.zeta(x);
        ThresholdRound {
            advice: self.advice_for(x),
            label,
            x,
            optimal_prediction: x >= self.tau0,
        }
    }
}

/// Draws `X ~ U[0, 1]`, then `Y ~ Ber(ζ(X))`.
pub fn threshold_round<R: Rng + ?Sized>(
    config: &ThresholdEnvConfig,
    rng: &mut R,
) -> ThresholdRound {
    let x: f64 = rng.random();
    config.round_at(x, rng)
}

/// Risk of `g*(x) = 1{x ≥ τ₀}`: `1/2 - (τ₀^κ + (1-τ₀)^κ) / (2κ)`, which is
/// `1/2 - 1/(κ 2^κ)` at `τ₀ = 1/2`.
pub fn optimal_risk(config: &ThresholdEnvConfig) -> f64 {
    let k = config.kappa;
    let mass = config.tau0.powf(k) + (1.0 - config.tau0).powf(k);
    0.5 - mass / (2.0 * k)
}

#[derive(Debug, Clone)]
pub struct ThresholdEnv {
    config: ThresholdEnvConfig,
    rng: ChaCha8Rng,
}

impl ThresholdEnv {
    pub fn new(config: ThresholdEnvConfig) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, rng)
    }

    pub fn with_rng(config: ThresholdEnvConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, rng })
    }

    pub fn config(&self) -> &ThresholdEnvConfig {
        &self.config
    }
}

impl Environment for ThresholdEnv {
    fn num_experts(&self) -> usize {
        self.config.num_experts
    }

    fn next_round(&mut self) -> Option<Round> {
        let draw = threshold_round(&self.config, &mut self.rng);
        let mut round = Round::new(draw.advice, draw.label);
        round.feature = Some(draw.x);
        round.optimal_prediction = Some(draw.optimal_prediction);
        Some(round)
    }
}

// ---------------------------------------------------------------------------
// Gap model: one expert is better than every other by Δ in expectation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEnvConfig {
    pub delta: f64,
    pub base_error: f64,
    pub num_experts: usize,
    pub best_index: usize,
    /// Rounds `t ≤ warmup` give every expert error `base_error + delta`.
    #[serde(default)]
    pub warmup: u64,
    pub seed: u64,
}

impl GapEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::NoExperts);
        }
        if self.best_index >= self.num_experts {
            return Err(Error::InvalidConfig(format!(
                "best expert {} out of range for {} experts",
                self.best_index, self.num_experts
            )));
        }
        if !(self.delta >= 0.0 && self.base_error >= 0.0 && self.base_error + self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need delta >= 0, base_error >= 0 and base_error + delta < 1 (got {} and {})",
                self.delta, self.base_error
            )));
        }
        Ok(())
    }

    /// Error probability of expert `i` in round `t` (1-based).
    pub fn error_probability(&self, i: usize, t: u64) -> f64 {
        if i == self.best_index && t > self.warmup {
            self.base_error
        } else {
            self.base_error + self.delta
        }
    }
}

/// `Y ~ Ber(1/2)`; expert `i` reports `Y` flipped with probability `εᵢ`.
pub fn gap_round<R: Rng + ?Sized>(config: &GapEnvConfig, t: u64, rng: &mut R) -> (Vec<bool>, bool) {
    let label: bool = rng.random();
    let advice = (0..config.num_experts)
        .map(|i| label ^ (rng.random::<f64>() < config.error_probability(i, t)))
        .collect();
    (advice, label)
}

#[derive(Debug, Clone)]
pub struct GapEnv {
    config: GapEnvConfig,
    rng: ChaCha8Rng,
    t: u64,
}

impl GapEnv {
    pub fn new(config: GapEnvConfig) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, rng)
    }

    pub fn with_rng(config: GapEnvConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, rng, t: 0 })
    }

    pub fn config(&self) -> &GapEnvConfig {
        &self.config
    }
}

impl Environment for GapEnv {
    fn num_experts(&self) -> usize {
        self.config.num_experts
    }

    fn next_round(&mut self) -> Option<Round> {
        self.t += 1;
        let (advice, label) = gap_round(&self.config, self.t, &mut self.rng);
        Some(Round::new(advice, label))
    }
}

// ---------------------------------------------------------------------------
// Scripted sequences

/// A fixed, possibly adversarial, sequence of advice and labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptedEnv {
    advice: Vec<Vec<bool>>,
    labels: Vec<bool>,
}

impl ScriptedEnv {
    pub fn new(advice: Vec<Vec<bool>>, labels: Vec<bool>) -> Result<Self> {
        if advice.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} advice rows but {} labels",
                advice.len(),
                labels.len()
            )));
        }
        let width = advice.first().map_or(0, Vec::len);
        if advice.is_empty() || width == 0 {
            return Err(Error::InvalidArgument(
                "script needs at least one round and one expert".into(),
            ));
        }
        if let Some(row) = advice.iter().find(|r| r.len() != width) {
            return Err(Error::LengthMismatch {
                expected: width,
                got: row.len(),
            });
        }
        Ok(Self { advice, labels })
    }

    pub fn horizon(&self) -> usize {
        self.labels.len()
    }

    pub fn num_experts(&self) -> usize {
        self.advice[0].len()
    }

    pub fn advice(&self, t: usize) -> &[bool] {
        &self.advice[t]
    }

    pub fn label(&self, t: usize) -> bool {
        self.labels[t]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Cumulative loss of each expert over the whole script.
    pub fn expert_totals(&self) -> Vec<u32> {
        let mut totals = vec![0u32; self.num_experts()];
        for (row, &y) in self.advice.iter().zip(&self.labels) {
            for (acc, &f) in totals.iter_mut().zip(row) {
                *acc += u32::from(f != y);
            }
        }
        totals
    }

    pub fn best_expert_loss(&self) -> u32 {
        self.expert_totals().into_iter().min().unwrap_or(0)
    }

    pub fn has_perfect_expert(&self) -> bool {
        self.best_expert_loss() == 0
    }

    pub fn playback(&self) -> Playback<'_> {
        Playback { env: self, next: 0 }
    }
}

/// Parses the text format: a header line `n N`, then `n` lines of
/// `label advice_bits`, e.g. `0 110`.
impl FromStr for ScriptedEnv {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|tok| tok.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad header: {e}"),
            })?;
        let [n, experts] = dims[..] else {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `n N`".into(),
            });
        };

        let bit = |c: char, line: usize| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Parse {
                line,
                message: format!("expected 0 or 1, found {other:?}"),
            }),
        };

        let mut advice = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut parts = line.split_whitespace();
            let (Some(label), Some(bits), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected `label advice_bits`".into(),
                });
            };
            if label.len() != 1 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("label must be a single bit, found {label:?}"),
                });
            }
            labels.push(bit(label.chars().next().unwrap_or('?'), lineno)?);
            let row = bits
                .chars()
                .map(|c| bit(c, lineno))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != experts {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {experts} advice bits, found {}", row.len()),
                });
            }
            advice.push(row);
        }
        if labels.len() != n {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {n} rounds, found {}", labels.len()),
            });
        }
        Self::new(advice, labels)
    }
}

impl fmt::Display for ScriptedEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.horizon(), self.num_experts())?;
        for (row, &y) in self.advice.iter().zip(&self.labels) {
            let bits: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(f, "{} {}", u8::from(y), bits)?;
        }
        Ok(())
    }
}

/// Replays a [`ScriptedEnv`] round by round.
#[derive(Debug, Clone)]
pub struct Playback<'a> {
    env: &'a ScriptedEnv,
    next: usize,
}

impl Environment for Playback<'_> {
    fn num_experts(&self) -> usize {
        self.env.num_experts()
    }

    fn next_round(&mut self) -> Option<Round> {
        if self.next >= self.env.horizon() {
            return None;
        }
        let t = self.next;
        self.next += 1;
        Some(Round::new(self.env.advice[t].clone(), self.env.labels[t]))
    }
}

pub const MAX_ENUM_EXPERTS: usize = 4;
pub const MAX_ENUM_HORIZON: usize = 6;

/// Every scripted sequence with `num_experts` experts over `horizon` rounds,
/// optionally keeping only those with an expert that never errs.
///
/// Sequence `k` encodes round `t` in bits `t(N+1) .. (t+1)(N+1)` of `k`:
/// the lowest bit is the label, the next `N` bits the advice.
pub fn enumerate_adversarial(
    num_experts: usize,
    horizon: usize,
    require_perfect_expert: bool,
) -> Result<impl Iterator<Item = ScriptedEnv>> {
    if num_experts == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "need at least one expert and one round".into(),
        ));
    }
    if num_experts > MAX_ENUM_EXPERTS || horizon > MAX_ENUM_HORIZON {
        return Err(Error::BoundsExceeded(format!(
            "enumeration supports N <= {MAX_ENUM_EXPERTS} and n <= {MAX_ENUM_HORIZON}, got N = {num_experts}, n = {horizon}"
        )));
    }
    let width = num_experts + 1;
    let total: u64 = 1 << (width * horizon);
    Ok((0..total).filter_map(move |code| {
        let mut advice = Vec::with_capacity(horizon);
        let mut labels = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let chunk = code >> (t * width);
            labels.push(chunk & 1 == 1);
            advice.push(
                (0..num_experts)
                    .map(|i| (chunk >> (i + 1)) & 1 == 1)
                    .collect(),
            );
        }
        let env = ScriptedEnv { advice, labels };
        (!require_perfect_expert || env.has_perfect_expert()).then_some(env)
    }))
}
