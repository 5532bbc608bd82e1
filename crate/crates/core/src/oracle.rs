//! Exact expected losses on tiny scripted instances.
//!
//! All randomness of the forecaster is integrated out. The prediction coin
//! never affects the forecaster's state, so its contribution is the
//! closed-form expectation `p(1-y) + (1-p)y`; only the query coins branch.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::environments::{ScriptedEnv, MAX_ENUM_EXPERTS, MAX_ENUM_HORIZON};
use crate::error::{Error, Result};
use crate::forecaster::{agreement_from_log_weights, SamplingStrategy};

/// Exact expectations for one scripted sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactResult {
    pub expected_loss: f64,
    pub expected_regret: f64,
    pub expected_queries: f64,
    pub best_expert_loss: u32,
}

pub const MAX_MAJORITY_EXPERTS: usize = 16;
pub const MAX_MAJORITY_HORIZON: usize = 12;
pub const MAX_GENERAL_EXPERTS: usize = 4;
pub const MAX_GENERAL_HORIZON: usize = 10;

fn require_majority(strategy: SamplingStrategy) -> Result<()> {
    if strategy.is_hard_elimination() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "strategy {} is not a hard-elimination rule",
            strategy.name()
        )))
    }
}

fn require_soft(strategy: SamplingStrategy, eta: f64) -> Result<()> {
    if strategy.is_hard_elimination() {
        return Err(Error::InvalidArgument(format!(
            "strategy {} needs the hard-elimination oracle",
            strategy.name()
        )));
    }
    strategy.validate_eta(eta)
}

fn bits(row: &[bool]) -> u32 {
    row.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (u32::from(b) << i))
}

/// Expected loss of a prediction probability against a known label.
fn expected_miss(p: f64, y: bool) -> f64 {
    if y {
        1.0 - p
    } else {
        p
    }
}

/// Exact expectations for follow-the-majority or boosted majority (`η = ∞`)
/// by dynamic programming over `(round, surviving set)`.
pub fn exact_majority(env: &ScriptedEnv, strategy: SamplingStrategy) -> Result<ExactResult> {
    require_majority(strategy)?;
    let n_exp = env.num_experts();
    let horizon = env.horizon();
    if n_exp > MAX_MAJORITY_EXPERTS || horizon > MAX_MAJORITY_HORIZON {
        return Err(Error::BoundsExceeded(format!(
            "majority oracle supports N <= {MAX_MAJORITY_EXPERTS}, n <= {MAX_MAJORITY_HORIZON}"
        )));
    }
    if !env.has_perfect_expert() {
        return Err(Error::NoPerfectExpert);
    }

    let full = (1u32 << n_exp) - 1;
    let advice: Vec<u32> = (0..horizon).map(|t| bits(env.advice(t))).collect();
    let correct: Vec<u32> = (0..horizon)
        .map(|t| {
            if env.label(t) {
                advice[t]
            } else {
                !advice[t] & full
            }
        })
        .collect();

    struct Dp<'a> {
        strategy: SamplingStrategy,
        advice: &'a [u32],
        correct: &'a [u32],
        labels: &'a [bool],
        memo: HashMap<(usize, u32), (f64, f64)>,
    }

    impl Dp<'_> {
        fn value(&mut self, t: usize, mask: u32) -> (f64, f64) {
            if t == self.labels.len() {
                return (0.0, 0.0);
            }
            if let Some(&v) = self.memo.get(&(t, mask)) {
                return v;
            }
            let alive = mask.count_ones();
            let ones = (mask & self.advice[t]).count_ones();
            let a = f64::from(ones) / f64::from(alive);
            let p = self.strategy.prediction_probability(a);
            let q = self.strategy.query_probability(a, f64::INFINITY);
            let mut loss = expected_miss(p, self.labels[t]);
            let mut queries = q;
            if q > 0.0 {
                let (l, s) = self.value(t + 1, mask & self.correct[t]);
                loss += q * l;
                queries += q * s;
            }
            if q < 1.0 {
                let (l, s) = self.value(t + 1, mask);
                loss += (1.0 - q) * l;
                queries += (1.0 - q) * s;
            }
            self.memo.insert((t, mask), (loss, queries));
            (loss, queries)
        }
    }

    let mut dp = Dp {
        strategy,
        advice: &advice,
        correct: &correct,
        labels: env.labels(),
        memo: HashMap::new(),
    };
    let (expected_loss, expected_queries) = dp.value(0, full);
    Ok(ExactResult {
        expected_loss,
        expected_regret: expected_loss,
        expected_queries,
        best_expert_loss: 0,
    })
}

/// Subtracts `η/q` from the log-weight of every erring expert, exactly as the
/// forecaster does.
fn penalize(log_weights: &mut [f64], losses: &[bool], eta: f64, q: f64) {
    let penalty = eta / q;
    for (w, &l) in log_weights.iter_mut().zip(losses) {
        if l {
            *w -= penalty;
        }
    }
}

/// Exact expectations for a finite-`η` forecaster with `p = A` by enumerating
/// every query path.
pub fn exact_general(
    env: &ScriptedEnv,
    eta: f64,
    strategy: SamplingStrategy,
) -> Result<ExactResult> {
    require_soft(strategy, eta)?;
    let n_exp = env.num_experts();
    let horizon = env.horizon();
    if n_exp > MAX_GENERAL_EXPERTS || horizon > MAX_GENERAL_HORIZON {
        return Err(Error::BoundsExceeded(format!(
            "general oracle supports N <= {MAX_GENERAL_EXPERTS}, n <= {MAX_GENERAL_HORIZON}"
        )));
    }

    fn walk(
        env: &ScriptedEnv,
        t: usize,
        log_weights: &[f64],
        eta: f64,
        strategy: SamplingStrategy,
    ) -> (f64, f64) {
        if t == env.horizon() {
            return (0.0, 0.0);
        }
        let advice = env.advice(t);
        let y = env.label(t);
        let a = agreement_from_log_weights(log_weights, advice);
        let p = strategy.prediction_probability(a);
        let q = strategy.query_probability(a, eta);
        let mut loss = expected_miss(p, y);
        let mut queries = q;
        if q > 0.0 {
            let losses: Vec<bool> = advice.iter().map(|&f| f != y).collect();
            let mut next = log_weights.to_vec();
            penalize(&mut next, &losses, eta, q);
            let (l, s) = walk(env, t + 1, &next, eta, strategy);
            loss += q * l;
            queries += q * s;
        }
        if q < 1.0 {
            let (l, s) = walk(env, t + 1, log_weights, eta, strategy);
            loss += (1.0 - q) * l;
            queries += (1.0 - q) * s;
        }
        (loss, queries)
    }

    let start = vec![-(n_exp as f64).ln(); n_exp];
    let (expected_loss, expected_queries) = walk(env, 0, &start, eta, strategy);
    let best = env.best_expert_loss();
    Ok(ExactResult {
        expected_loss,
        expected_regret: expected_loss - f64::from(best),
        expected_queries,
        best_expert_loss: best,
    })
}

/// `log₂ N` for follow-the-majority, `log₄ N` for boosted majority.
pub fn majority_bound(strategy: SamplingStrategy, num_experts: usize) -> f64 {
    let n = num_experts as f64;
    match strategy {
        SamplingStrategy::BoostedMajority => n.ln() / 4f64.ln(),
        _ => n.log2(),
    }
}

/// `ln N / η + n η / 8`.
pub fn general_bound(num_experts: usize, horizon: usize, eta: f64) -> f64 {
    (num_experts as f64).ln() / eta + horizon as f64 * eta / 8.0
}

/// Worst case found by an exhaustive sweep for one `(N, n[, η])` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: SamplingStrategy,
    pub num_experts: usize,
    pub horizon: usize,
    pub eta: Option<f64>,
    pub environments: u64,
    /// Largest expected loss (majority) or expected regret (general).
    pub worst_value: f64,
    pub bound: f64,
    pub worst_env: ScriptedEnv,
}

impl SweepRow {
    /// `bound - worst_value`; negative means the bound was violated.
    pub fn margin(&self) -> f64 {
        self.bound - self.worst_value
    }

    pub fn passes(&self, slack: f64) -> bool {
        self.worst_value <= self.bound + slack
    }
}

fn check_sweep_bounds(num_experts: usize, max_horizon: usize) -> Result<()> {
    if num_experts == 0 || max_horizon == 0 {
        return Err(Error::InvalidArgument(
            "sweeps need N >= 1 and n >= 1".into(),
        ));
    }
    if num_experts > MAX_ENUM_EXPERTS || max_horizon > MAX_ENUM_HORIZON {
        return Err(Error::BoundsExceeded(format!(
            "sweeps support N <= {MAX_ENUM_EXPERTS} and n <= {MAX_ENUM_HORIZON}"
        )));
    }
    Ok(())
}

#[derive(Clone)]
struct Worst {
    value: f64,
    count: u64,
    rows: Vec<(bool, u32)>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            count: 0,
            rows: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, rows: &[(bool, u32)]) {
        self.count += 1;
        if value > self.value {
            self.value = value;
            self.rows = rows.to_vec();
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        if other.value > self.value {
            self.value = other.value;
            self.rows = other.rows;
        }
        self
    }
}

fn rows_to_env(num_experts: usize, rows: &[(bool, u32)]) -> ScriptedEnv {
    let advice = rows
        .iter()
        .map(|&(_, a)| (0..num_experts).map(|i| (a >> i) & 1 == 1).collect())
        .collect();
    let labels = rows.iter().map(|&(y, _)| y).collect();
    ScriptedEnv::new(advice, labels).expect("sweep rows form a valid script")
}

/// Exhaustive sweep of every script with a perfect expert, for horizons
/// `1..=max_horizon`. Equivalent to running [`exact_majority`] on every
/// element of `enumerate_adversarial(N, n, true)`, but shares work across
/// common prefixes by carrying the distribution over surviving sets.
pub fn sweep_majority(
    strategy: SamplingStrategy,
    num_experts: usize,
    max_horizon: usize,
) -> Result<Vec<SweepRow>> {
    require_majority(strategy)?;
    check_sweep_bounds(num_experts, max_horizon)?;
    let full = (1u32 << num_experts) - 1;

    struct Ctx {
        strategy: SamplingStrategy,
        full: u32,
        max_horizon: usize,
    }

    struct Node<'a> {
        /// Probability of each surviving set, indexed by bit mask.
        dist: &'a [f64],
        loss: f64,
        /// Experts correct on every round so far.
        candidates: u32,
    }

    fn play_row(
        ctx: &Ctx,
        node: &Node<'_>,
        label: bool,
        advice: u32,
        rows: &mut Vec<(bool, u32)>,
        worst: &mut [Worst],
    ) {
        let correct = if label { advice } else { !advice & ctx.full };
        let candidates = node.candidates & correct;
        if candidates == 0 {
            return;
        }
        let mut next = vec![0.0; node.dist.len()];
        let mut round_loss = 0.0;
        for (mask, &prob) in node.dist.iter().enumerate() {
            if prob == 0.0 {
                continue;
            }
            let mask = mask as u32;
            let a = f64::from((mask & advice).count_ones()) / f64::from(mask.count_ones());
            let p = ctx.strategy.prediction_probability(a);
            let q = ctx.strategy.query_probability(a, f64::INFINITY);
            round_loss += prob * expected_miss(p, label);
            next[(mask & correct) as usize] += prob * q;
            next[mask as usize] += prob * (1.0 - q);
        }
        rows.push((label, advice));
        let loss = node.loss + round_loss;
        worst[rows.len() - 1].offer(loss, rows);
        if rows.len() < ctx.max_horizon {
            let child = Node {
                dist: &next,
                loss,
                candidates,
            };
            for y in [false, true] {
                for a in 0..=ctx.full {
                    play_row(ctx, &child, y, a, rows, worst);
                }
            }
        }
        rows.pop();
    }

    let ctx = Ctx {
        strategy,
        full,
        max_horizon,
    };
    let mut start = vec![0.0; 1 << num_experts];
    start[full as usize] = 1.0;
    let root = Node {
        dist: &start,
        loss: 0.0,
        candidates: full,
    };

    let firsts: Vec<(bool, u32)> = [false, true]
        .into_iter()
        .flat_map(|y| (0..=full).map(move |a| (y, a)))
        .collect();
    let worst = firsts
        .par_iter()
        .map(|&(label, advice)| {
            let mut worst = vec![Worst::new(); max_horizon];
            play_row(&ctx, &root, label, advice, &mut Vec::new(), &mut worst);
            worst
        })
        .reduce(
            || vec![Worst::new(); max_horizon],
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );

    let bound = majority_bound(strategy, num_experts);
    Ok(worst
        .into_iter()
        .enumerate()
        .map(|(d, w)| SweepRow {
            strategy,
            num_experts,
            horizon: d + 1,
            eta: None,
            environments: w.count,
            worst_value: w.value,
            bound,
            worst_env: rows_to_env(num_experts, &w.rows),
        })
        .collect())
}

/// Exhaustive sweep of every script (no perfect-expert requirement) for
/// horizons `1..=max_horizon`, reporting the largest exact expected regret.
///
/// The forecaster's behaviour depends on a script only through its loss
/// matrix: flipping a round's label together with all of its advice bits maps
/// `A` to `1 - A`, leaves every loss unchanged, and every query rule is
/// symmetric under `A ↔ 1 - A`. The sweep therefore enumerates loss matrices,
/// represented as scripts with all labels `0`.
pub fn sweep_general(
    strategy: SamplingStrategy,
    eta: f64,
    num_experts: usize,
    max_horizon: usize,
) -> Result<Vec<SweepRow>> {
    require_soft(strategy, eta)?;
    check_sweep_bounds(num_experts, max_horizon)?;
    let full = (1u32 << num_experts) - 1;

    struct Ctx {
        strategy: SamplingStrategy,
        eta: f64,
        num_experts: usize,
        full: u32,
        max_horizon: usize,
    }

    struct Path {
        prob: f64,
        log_weights: Vec<f64>,
    }

    struct Node<'a> {
        paths: &'a [Path],
        loss: f64,
        totals: &'a [u32],
    }

    fn query(ctx: &Ctx, cache: &mut HashMap<u64, f64>, a: f64) -> f64 {
        match ctx.strategy {
            SamplingStrategy::QStarExact { .. } => *cache
                .entry(a.to_bits())
                .or_insert_with(|| ctx.strategy.query_probability(a, ctx.eta)),
            s => s.query_probability(a, ctx.eta),
        }
    }

    fn play_row(
        ctx: &Ctx,
        node: &Node<'_>,
        row: u32,
        rows: &mut Vec<(bool, u32)>,
        worst: &mut [Worst],
        cache: &mut HashMap<u64, f64>,
    ) {
        let errs: Vec<bool> = (0..ctx.num_experts).map(|i| (row >> i) & 1 == 1).collect();
        let mut next = Vec::with_capacity(node.paths.len() * 2);
        let mut round_loss = 0.0;
        for path in node.paths {
            // Label 0 with advice = losses: A is the erring weight fraction.
            let a = agreement_from_log_weights(&path.log_weights, &errs);
            let q = query(ctx, cache, a);
            round_loss += path.prob * ctx.strategy.prediction_probability(a);
            if q > 0.0 {
                let mut w = path.log_weights.clone();
                penalize(&mut w, &errs, ctx.eta, q);
                next.push(Path {
                    prob: path.prob * q,
                    log_weights: w,
                });
            }
            if q < 1.0 {
                next.push(Path {
                    prob: path.prob * (1.0 - q),
                    log_weights: path.log_weights.clone(),
                });
            }
        }
        let totals: Vec<u32> = node
            .totals
            .iter()
            .zip(&errs)
            .map(|(&t, &e)| t + u32::from(e))
            .collect();
        let best = totals.iter().copied().min().unwrap_or(0);
        let loss = node.loss + round_loss;
        rows.push((false, row));
        worst[rows.len() - 1].offer(loss - f64::from(best), rows);
        if rows.len() < ctx.max_horizon {
            let child = Node {
                paths: &next,
                loss,
                totals: &totals,
            };
            for r in 0..=ctx.full {
                play_row(ctx, &child, r, rows, worst, cache);
            }
        }
        rows.pop();
    }

    let ctx = Ctx {
        strategy,
        eta,
        num_experts,
        full,
        max_horizon,
    };
    let root_paths = [Path {
        prob: 1.0,
        log_weights: vec![-(num_experts as f64).ln(); num_experts],
    }];
    let zeros = vec![0u32; num_experts];
    let root = Node {
        paths: &root_paths,
        loss: 0.0,
        totals: &zeros,
    };

    let worst = (0..=full)
        .into_par_iter()
        .map(|first| {
            let mut worst = vec![Worst::new(); max_horizon];
            let mut cache = HashMap::new();
            play_row(&ctx, &root, first, &mut Vec::new(), &mut worst, &mut cache);
            worst
        })
        .reduce(
            || vec![Worst::new(); max_horizon],
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );

    Ok(worst
        .into_iter()
        .enumerate()
        .map(|(d, w)| SweepRow {
            strategy,
            num_experts,
            horizon: d + 1,
            eta: Some(eta),
            environments: w.count,
            worst_value: w.value,
            bound: general_bound(num_experts, d + 1, eta),
            worst_env: rows_to_env(num_experts, &w.rows),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::enumerate_adversarial;
    use approx::assert_abs_diff_eq;

    fn script(text: &str) -> ScriptedEnv {
        text.parse().unwrap()
    }

    const MAJ: SamplingStrategy = SamplingStrategy::FollowMajority;
    const BOOST: SamplingStrategy = SamplingStrategy::BoostedMajority;

    #[test]
    fn majority_single_split_round() {
        let r = exact_majority(&script("1 2\n0 10\n"), MAJ).unwrap();
        assert_abs_diff_eq!(r.expected_loss, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.expected_queries, 1.0, epsilon = 1e-15);
        let r = exact_majority(&script("1 2\n0 10\n"), BOOST).unwrap();
        assert_abs_diff_eq!(r.expected_loss, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_expert_never_errs() {
        for env in enumerate_adversarial(1, 4, true).unwrap() {
            for s in [MAJ, BOOST] {
                let r = exact_majority(&env, s).unwrap();
                assert_eq!(r.expected_loss, 0.0);
                assert_eq!(r.expected_queries, 0.0);
            }
        }
    }

    #[test]
    fn minority_always_right_is_tight() {
        // Each round splits the survivors evenly and the tie goes the wrong way.
        let r = exact_majority(&script("2 4\n0 1100\n0 0010\n"), MAJ).unwrap();
        assert_abs_diff_eq!(r.expected_loss, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn majority_worst_case_four_experts() {
        let worst = enumerate_adversarial(4, 4, true)
            .unwrap()
            .map(|env| exact_majority(&env, MAJ).unwrap().expected_loss)
            .fold(0.0, f64::max);
        assert!(worst <= 2.0 + 1e-12);
        assert!(worst >= 2.0 - 1e-12);
    }

    #[test]
    fn majority_oracle_errors() {
        assert!(matches!(
            exact_majority(&script("1 2\n0 11\n"), MAJ),
            Err(Error::NoPerfectExpert)
        ));
        assert!(exact_majority(&script("1 2\n0 10\n"), SamplingStrategy::FullInformation).is_err());
        let wide = ScriptedEnv::new(vec![vec![false; 17]], vec![false]).unwrap();
        assert!(matches!(
            exact_majority(&wide, MAJ),
            Err(Error::BoundsExceeded(_))
        ));
    }

    #[test]
    fn sweep_majority_matches_per_script_oracle() {
        for s in [MAJ, BOOST] {
            for n_exp in 2..=3 {
                let rows = sweep_majority(s, n_exp, 3).unwrap();
                for row in &rows {
                    let envs: Vec<ScriptedEnv> = enumerate_adversarial(n_exp, row.horizon, true)
                        .unwrap()
                        .collect();
                    let worst = envs
                        .iter()
                        .map(|e| exact_majority(e, s).unwrap().expected_loss)
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(row.environments, envs.len() as u64);
                    assert_abs_diff_eq!(row.worst_value, worst, epsilon = 1e-12);
                    let again = exact_majority(&row.worst_env, s).unwrap().expected_loss;
                    assert_abs_diff_eq!(again, worst, epsilon = 1e-12);
                }
            }
        }
    }

    fn full_information_direct(env: &ScriptedEnv, eta: f64) -> f64 {
        let n = env.num_experts();
        let mut w = vec![1.0 / n as f64; n];
        let mut loss = 0.0;
        for t in 0..env.horizon() {
            let y = env.label(t);
            let total: f64 = w.iter().sum();
            let ones: f64 = w
                .iter()
                .zip(env.advice(t))
                .filter(|(_, &f)| f)
                .map(|(w, _)| w)
                .sum();
            let p = ones / total;
            loss += if y { 1.0 - p } else { p };
            for (wi, &f) in w.iter_mut().zip(env.advice(t)) {
                if f != y {
                    *wi *= (-eta).exp();
                }
            }
        }
        loss
    }

    #[test]
    fn full_information_is_deterministic_computation() {
        for env in enumerate_adversarial(3, 3, false).unwrap().step_by(37) {
            let r = exact_general(&env, 0.7, SamplingStrategy::FullInformation).unwrap();
            assert_abs_diff_eq!(
                r.expected_loss,
                full_information_direct(&env, 0.7),
                epsilon = 1e-12
            );
            assert_eq!(r.expected_queries, env.horizon() as f64);
            assert_abs_diff_eq!(
                r.expected_regret,
                r.expected_loss - f64::from(r.best_expert_loss),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn two_experts_two_rounds_bound() {
        let bound = 2f64.ln() + 2.0 / 8.0;
        for env in enumerate_adversarial(2, 2, false).unwrap() {
            let r = exact_general(&env, 1.0, SamplingStrategy::QStarUpperBound).unwrap();
            assert!(r.expected_regret <= bound + 1e-12);
        }
    }

    #[test]
    fn small_eta_exact_and_upper_agree() {
        let eta = 1e-3;
        let env = script("4 3\n0 100\n1 110\n0 011\n1 101\n");
        let a = exact_general(&env, eta, SamplingStrategy::q_star_exact()).unwrap();
        let b = exact_general(&env, eta, SamplingStrategy::QStarUpperBound).unwrap();
        // q differs by at most η/3 plus the q* limit gap, and each round's
        // expected loss moves by at most the weight change that q induces.
        assert!((a.expected_regret - b.expected_regret).abs() <= 2.0 * 4.0 * (eta / 3.0 + 2e-3));
        assert!(b.expected_queries >= a.expected_queries);
    }

    #[test]
    fn general_oracle_errors() {
        let env = script("1 2\n0 10\n");
        assert!(exact_general(&env, 1.0, MAJ).is_err());
        assert!(exact_general(&env, f64::INFINITY, SamplingStrategy::QStarUpperBound).is_err());
        let wide = ScriptedEnv::new(vec![vec![false; 5]], vec![false]).unwrap();
        assert!(matches!(
            exact_general(&wide, 1.0, SamplingStrategy::FullInformation),
            Err(Error::BoundsExceeded(_))
        ));
    }

    #[test]
    fn sweep_general_matches_every_labelled_script() {
        for s in [
            SamplingStrategy::QStarUpperBound,
            SamplingStrategy::q_star_exact(),
            SamplingStrategy::FullInformation,
        ] {
            let rows = sweep_general(s, 1.0, 2, 3).unwrap();
            for row in &rows {
                let worst = enumerate_adversarial(2, row.horizon, false)
                    .unwrap()
                    .map(|e| exact_general(&e, 1.0, s).unwrap().expected_regret)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_abs_diff_eq!(row.worst_value, worst, epsilon = 1e-9);
                assert_eq!(row.environments, 1 << (2 * row.horizon));
            }
        }
    }

    #[test]
    fn sweep_bounds_checked() {
        assert!(matches!(
            sweep_majority(MAJ, 5, 2),
            Err(Error::BoundsExceeded(_))
        ));
        assert!(matches!(
            sweep_general(SamplingStrategy::QStarUpperBound, 1.0, 2, 7),
            Err(Error::BoundsExceeded(_))
        ));
    }
}
