//! Exponentially weighted forecaster with importance-weighted updates.
//!
//! Each round the forecaster computes the weighted agreement `A` (the weight
//! fraction of experts advising `1`), predicts `ŷ ~ Ber(p(A))`, queries the
//! label with probability `q(A)`, and, only when the label was queried,
//! multiplies each expert's weight by `exp(-η ℓ / q)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::LabelSource;
use crate::error::{Error, Result};
use crate::sampling::{self, q_star, q_star_upper};

/// Rule deciding `(p, q)` from the weighted agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingStrategy {
    /// `p = A`, `q = 1`.
    FullInformation,
    /// Hard elimination, `p = 1{A ≥ 1/2}`, `q = -1/log₂ min(A, 1-A)`.
    FollowMajority,
    /// Hard elimination with the piecewise-logarithmic boosted majority rule.
    BoostedMajority,
    /// `p = A`, `q = q*(A, η)` solved to `tol`.
    QStarExact { tol: f64 },
    /// `p = A`, `q = min(4A(1-A) + η/3, 1)`.
    QStarUpperBound,
}

impl SamplingStrategy {
    pub fn q_star_exact() -> Self {
        SamplingStrategy::QStarExact {
            tol: sampling::DEFAULT_TOL,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingStrategy::FullInformation => "full",
            SamplingStrategy::FollowMajority => "majority",
            SamplingStrategy::BoostedMajority => "boosted",
            SamplingStrategy::QStarExact { .. } => "qstar",
            SamplingStrategy::QStarUpperBound => "qstar-upper",
        }
    }

    /// Majority strategies run with `η = ∞` and discard experts on their first mistake.
    pub fn is_hard_elimination(&self) -> bool {
        matches!(
            self,
            SamplingStrategy::FollowMajority | SamplingStrategy::BoostedMajority
        )
    }

    /// Checks that `eta` is admissible for this strategy.
    pub fn validate_eta(&self, eta: f64) -> Result<()> {
        let ok = if self.is_hard_elimination() {
            eta == f64::INFINITY
        } else {
            eta > 0.0 && eta.is_finite()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEta {
                eta,
                strategy: self.name(),
            })
        }
    }

    /// Prediction probability `p` for agreement `a ∈ [0, 1]`.
    pub fn prediction_probability(&self, a: f64) -> f64 {
        match self {
            SamplingStrategy::FollowMajority => {
                if a >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            SamplingStrategy::BoostedMajority => {
                if a <= 0.25 {
                    0.0
                } else if a <= 0.5 {
                    1.0 + log4(a)
                } else if a <= 0.75 {
                    -log4(1.0 - a)
                } else {
                    1.0
                }
            }
            _ => a,
        }
    }

    /// Query probability `q` for agreement `a ∈ [0, 1]` and learning rate `eta`.
    pub fn query_probability(&self, a: f64, eta: f64) -> f64 {
        match *self {
            SamplingStrategy::FullInformation => 1.0,
            SamplingStrategy::FollowMajority => {
                if a <= 0.0 || a >= 1.0 {
                    0.0
                } else {
                    -1.0 / a.min(1.0 - a).log2()
                }
            }
            SamplingStrategy::BoostedMajority => {
                if a <= 0.0 || a >= 1.0 {
                    0.0
                } else if a < 0.25 {
                    -1.0 / log4(a)
                } else if a <= 0.75 {
                    1.0
                } else {
                    -1.0 / log4(1.0 - a)
                }
            }
            SamplingStrategy::QStarUpperBound => q_star_upper(a, eta),
            SamplingStrategy::QStarExact { tol } => {
                q_star(a.clamp(0.0, 1.0), eta, tol).unwrap_or(1.0)
            }
        }
    }
}

fn log4(v: f64) -> f64 {
    v.ln() / 4f64.ln()
}

/// Per-expert memory of the forecaster.
#[derive(Debug, Clone, PartialEq)]
enum Weights {
    /// Natural-log weights, unnormalized.
    Log(Vec<f64>),
    /// Experts that have not erred on a revealed label (`η = ∞`).
    Surviving(Vec<bool>),
}

/// Everything the forecaster remembers between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterState {
    weights: Weights,
    eta: f64,
    strategy: SamplingStrategy,
    round_index: u64,
}

/// The forecaster's decisions for one round, before the harness scores it.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub t: u64,
    pub agreement: f64,
    pub p: f64,
    pub q: f64,
    pub y_hat: bool,
    pub queried: bool,
    pub expert_losses: Option<Vec<bool>>,
}

impl Step {
    /// Completes the record with the forecaster's loss against the true label.
    pub fn score(self, label: bool) -> RoundRecord {
        RoundRecord {
            t: self.t,
            agreement: self.agreement,
            p: self.p,
            q: self.q,
            y_hat: self.y_hat,
            queried: self.queried,
            forecaster_loss: self.y_hat != label,
            expert_losses: self.expert_losses,
        }
    }
}

/// Per-round trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub agreement: f64,
    pub p: f64,
    pub q: f64,
    pub y_hat: bool,
    pub queried: bool,
    pub forecaster_loss: bool,
    /// Present only when the label was queried.
    pub expert_losses: Option<Vec<bool>>,
}

impl ForecasterState {
    /// Uniform initialization: every log-weight is `-ln N`.
    pub fn new(num_experts: usize, eta: f64, strategy: SamplingStrategy) -> Result<Self> {
        if num_experts == 0 {
            return Err(Error::NoExperts);
        }
        let uniform = -(num_experts as f64).ln();
        Self::with_log_weights(vec![uniform; num_experts], eta, strategy)
    }

    /// Arbitrary initial log-weights (finite). Not available for hard elimination.
    pub fn with_log_weights(
        log_weights: Vec<f64>,
        eta: f64,
        strategy: SamplingStrategy,
    ) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::NoExperts);
        }
        strategy.validate_eta(eta)?;
        if let SamplingStrategy::QStarExact { tol } = strategy {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::InvalidArgument(format!("q* tolerance {tol}")));
            }
        }
        let weights = if strategy.is_hard_elimination() {
            Weights::Surviving(vec![true; log_weights.len()])
        } else {
            if log_weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidArgument(
                    "initial log-weights must be finite".into(),
                ));
            }
            Weights::Log(log_weights)
        };
        Ok(Self {
            weights,
            eta,
            strategy,
            round_index: 0,
        })
    }

    pub fn num_experts(&self) -> usize {
        match &self.weights {
            Weights::Log(w) => w.len(),
            Weights::Surviving(s) => s.len(),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    /// Log-weights; surviving experts map to `-ln |S|`, eliminated ones to `-∞`.
    pub fn log_weights(&self) -> Vec<f64> {
        match &self.weights {
            Weights::Log(w) => w.clone(),
            Weights::Surviving(s) => {
                let alive = s.iter().filter(|&&b| b).count() as f64;
                s.iter()
                    .map(|&b| if b { -alive.ln() } else { f64::NEG_INFINITY })
                    .collect()
            }
        }
    }

    /// Surviving-set mask in hard-elimination mode.
    pub fn surviving(&self) -> Option<&[bool]> {
        match &self.weights {
            Weights::Surviving(s) => Some(s),
            Weights::Log(_) => None,
        }
    }

    /// Weight fraction of experts advising `1`.
    pub fn weighted_agreement(&self, advice: &[bool]) -> Result<f64> {
        if advice.len() != self.num_experts() {
            return Err(Error::LengthMismatch {
                expected: self.num_experts(),
                got: advice.len(),
            });
        }
        Ok(match &self.weights {
            Weights::Log(w) => agreement_from_log_weights(w, advice),
            Weights::Surviving(s) => {
                let (ones, alive) = s
                    .iter()
                    .zip(advice)
                    .fold((0usize, 0usize), |acc, (&a, &f)| {
                        (acc.0 + usize::from(a && f), acc.1 + usize::from(a))
                    });
                ones as f64 / alive as f64
            }
        })
    }

    /// Plays one round. The label is pulled from `labels` only when the query
    /// coin comes up heads. Two uniform variates are consumed every round.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        advice: &[bool],
        labels: &mut dyn LabelSource,
        rng: &mut R,
    ) -> Result<Step> {
        let agreement = self.weighted_agreement(advice)?;
        let p = self.strategy.prediction_probability(agreement);
        let q = self.strategy.query_probability(agreement, self.eta);

        let u_pred: f64 = rng.random();
        let u_query: f64 = rng.random();
        let y_hat = u_pred < p;
        let queried = q > 0.0 && u_query < q;

        let expert_losses = if queried {
            let label = labels.reveal();
            let losses: Vec<bool> = advice.iter().map(|&f| f != label).collect();
            self.update(&losses, q)?;
            Some(losses)
        } else {
            None
        };

        self.round_index += 1;
        Ok(Step {
            t: self.round_index,
            agreement,
            p,
            q,
            y_hat,
            queried,
            expert_losses,
        })
    }

    /// Importance-weighted update for a queried round.
    fn update(&mut self, losses: &[bool], q: f64) -> Result<()> {
        match &mut self.weights {
            Weights::Log(w) => {
                let penalty = self.eta / q;
                for (wi, &l) in w.iter_mut().zip(losses) {
                    if l {
                        *wi -= penalty;
                    }
                }
                // Re-center only when every expert has drifted far down.
                let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max < -1e6 {
                    w.iter_mut().for_each(|wi| *wi -= max);
                }
            }
            Weights::Surviving(s) => {
                let any_left = s.iter().zip(losses).any(|(&a, &l)| a && !l);
                if !any_left {
                    return Err(Error::AllExpertsEliminated);
                }
                for (a, &l) in s.iter_mut().zip(losses) {
                    *a = *a && !l;
                }
            }
        }
        Ok(())
    }
}

/// `Σ wᵢ fᵢ / Σ wᵢ` from log-weights, shifted by the maximum before exponentiating.
pub fn agreement_from_log_weights(log_weights: &[f64], advice: &[bool]) -> f64 {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut ones = 0.0;
    for (&lw, &f) in log_weights.iter().zip(advice) {
        let w = (lw - max).exp();
        total += w;
        if f {
            ones += w;
        }
    }
    (ones / total).clamp(0.0, 1.0)
}
