use lef_core::harness::{EnvSpec, EtaSpec, Experiment, ExperimentConfig, Metric};
use lef_core::oracle::{exact_general, exact_majority, general_bound};
use lef_core::{SamplingStrategy, ScriptedEnv};

fn scripted(strategy: SamplingStrategy, eta: EtaSpec, runs: u32) -> ExperimentConfig {
    ExperimentConfig {
        env: EnvSpec::Scripted {
            file: Default::default(),
        },
        horizon: 5,
        num_experts: 3,
        eta,
        strategy,
        runs,
        base_seed: 1234,
        record_stride: 5,
    }
}

const SCRIPT: &str = "5 3\n1 101\n0 010\n1 011\n0 100\n1 111\n";

/// Harness mean regret and labels agree with the exact oracle within 4
/// standard errors.
fn check_against_oracle(
    strategy: SamplingStrategy,
    eta: EtaSpec,
    exact_regret: f64,
    exact_queries: f64,
) {
    let env: ScriptedEnv = SCRIPT.parse().unwrap();
    let series = Experiment::with_script(scripted(strategy, eta, 100_000), env)
        .unwrap()
        .run()
        .unwrap();
    let regret = series.finals.regret_best;
    let labels = series.finals.labels;
    let se = |s: lef_core::harness::Summary| s.half_width() / 1.96;
    assert!(
        (regret.mean - exact_regret).abs() <= 4.0 * se(regret),
        "{}: regret {} vs exact {exact_regret}",
        strategy.name(),
        regret.mean
    );
    assert!(
        (labels.mean - exact_queries).abs() <= 4.0 * se(labels).max(1e-12),
        "{}: labels {} vs exact {exact_queries}",
        strategy.name(),
        labels.mean
    );
}

#[test]
fn harness_matches_general_oracle() {
    let env: ScriptedEnv = SCRIPT.parse().unwrap();
    for strategy in [
        SamplingStrategy::QStarUpperBound,
        SamplingStrategy::q_star_exact(),
        SamplingStrategy::FullInformation,
    ] {
        let exact = exact_general(&env, 1.5, strategy).unwrap();
        check_against_oracle(
            strategy,
            EtaSpec::Fixed(1.5),
            exact.expected_regret,
            exact.expected_queries,
        );
    }
}

#[test]
fn harness_matches_majority_oracle() {
    let env: ScriptedEnv = SCRIPT.parse().unwrap();
    assert!(env.has_perfect_expert());
    for strategy in [
        SamplingStrategy::FollowMajority,
        SamplingStrategy::BoostedMajority,
    ] {
        let exact = exact_majority(&env, strategy).unwrap();
        check_against_oracle(
            strategy,
            EtaSpec::Auto,
            exact.expected_regret,
            exact.expected_queries,
        );
    }
}

#[test]
fn threshold_regret_is_far_below_the_worst_case_bound() {
    let config = ExperimentConfig {
        env: EnvSpec::Threshold {
            tau0: 0.5,
            kappa: 2.0,
        },
        horizon: 5_000,
        num_experts: 45,
        eta: EtaSpec::Auto,
        strategy: SamplingStrategy::QStarUpperBound,
        runs: 20,
        base_seed: 77,
        record_stride: 500,
    };
    let eta = config.resolved_eta();
    let series = Experiment::new(config).unwrap().run().unwrap();
    let r = series.last(Metric::RegretOptimal).unwrap();
    let bound = general_bound(45, 5_000, eta);
    assert!(
        r.mean + 5.0 * r.width() <= bound,
        "regret {r:?} vs bound {bound}"
    );
}

#[test]
fn full_information_optimal_loss_rate() {
    let config = ExperimentConfig {
        env: EnvSpec::Threshold {
            tau0: 0.5,
            kappa: 2.0,
        },
        horizon: 10_000,
        num_experts: 15,
        eta: EtaSpec::Auto,
        strategy: SamplingStrategy::FullInformation,
        runs: 20,
        base_seed: 3,
        record_stride: 10_000,
    };
    let series = Experiment::new(config).unwrap().run().unwrap();
    let opt = series.finals.optimal_loss_rate.unwrap();
    assert!((opt.mean - 0.375).abs() <= 4.0 * opt.half_width() / 1.96);
    assert!(series.finals.labels.mean == 10_000.0);
}

#[test]
fn runs_are_uncorrelated() {
    let config = ExperimentConfig {
        env: EnvSpec::Gap {
            delta: 0.2,
            base_error: 0.1,
            best_index: 0,
            warmup: 0,
        },
        horizon: 50,
        num_experts: 5,
        eta: EtaSpec::Fixed(0.5),
        strategy: SamplingStrategy::QStarUpperBound,
        runs: 1,
        base_seed: 11,
        record_stride: 50,
    };
    let exp = Experiment::new(config).unwrap();
    let m = 4_000u32;
    let xs: Vec<f64> = (0..m)
        .map(|k| exp.run_once(k).unwrap().summary.forecaster_loss as f64)
        .collect();
    let mean = xs.iter().sum::<f64>() / f64::from(m);
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    // Lag-1 and a long-range lag; under independence each is about N(0, 1/m).
    for lag in [1usize, 1_000] {
        let cov: f64 = xs
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum();
        let corr = cov / var;
        assert!(
            corr.abs() < 4.0 / f64::from(m).sqrt(),
            "lag {lag}: correlation {corr}"
        );
    }
}
