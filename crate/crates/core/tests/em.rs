mod common;

use bcirl::envs::{build_macro_gridworld, macro_grid_demos, MacroGridSpec};
use bcirl::{run_maxent_irl, run_parametric_bcirl, DemonstrationSet, EmConfig, FeatureMap, IrlConfig, TabularMdp};

/// Largest drop of the observed-data log-likelihood between consecutive
/// EM iterations.
fn worst_decrease(mdp: &TabularMdp, features: &FeatureMap, demos: &DemonstrationSet, m: usize, irl: IrlConfig) -> f64 {
    let out = run_parametric_bcirl(mdp, features, demos, m, &EmConfig { irl, ..EmConfig::default() }).unwrap();
    out.trace
        .records
        .windows(2)
        .map(|w| w[0].em_loglik - w[1].em_loglik)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn em_loglik_is_monotone_on_macro_grids() {
    for seed in 0..5 {
        let spec = MacroGridSpec {
            seed,
            ..MacroGridSpec::default()
        };
        let grid = build_macro_gridworld(&spec).unwrap();
        let demos = macro_grid_demos(&grid, 2, seed).unwrap().demos;
        for (m, lr) in [(3, 0.05), (2, 0.02)] {
            let irl = IrlConfig {
                learning_rate: lr,
                gamma: 1.0,
                max_iters: 40,
                seed,
                ..IrlConfig::default()
            };
            let drop = worst_decrease(&grid.mdp, &grid.features, &demos, m, irl);
            assert!(drop <= 1e-6, "seed {seed} m {m} lr {lr}: loglik fell by {drop}");
        }
    }
}

#[test]
fn em_loglik_is_monotone_on_random_mdps() {
    let mut rng = common::rng(5);
    for case in 0..10 {
        let mdp = common::random_mdp(&mut rng, 6, 3, 0.9);
        let features = common::random_features(&mut rng, 6, 3, 4);
        let demos = common::random_demos(&mut rng, 6, 3, 8, 10);
        let irl = IrlConfig {
            learning_rate: 0.05,
            gamma: 1.0,
            max_iters: 30,
            seed: case,
            ..IrlConfig::default()
        };
        let drop = worst_decrease(&mdp, &features, &demos, 2, irl);
        assert!(drop <= 1e-6, "case {case}: loglik fell by {drop}");
    }
}

#[test]
fn single_cluster_em_is_maxent_bit_for_bit() {
    let mut rng = common::rng(9);
    for seed in 0..5 {
        let mdp = common::random_mdp(&mut rng, 5, 3, 0.9);
        let features = common::random_features(&mut rng, 5, 3, 4);
        let demos = common::random_demos(&mut rng, 5, 3, 6, 8);
        let irl = IrlConfig {
            max_iters: 25,
            seed,
            ..IrlConfig::default()
        };
        let maxent = run_maxent_irl(&mdp, &features, &demos, &irl).unwrap();
        let em = run_parametric_bcirl(&mdp, &features, &demos, 1, &EmConfig { irl, ..EmConfig::default() }).unwrap();
        assert_eq!(em.model.thetas[0], maxent.theta);
        assert_eq!(em.model.prior, vec![1.0]);
        assert!(em.cluster_traces[0].same_path(&maxent.trace));
        assert_eq!(em.model.policies[0].probs(), maxent.policy.probs());
        assert_eq!(em.converged, maxent.converged);
    }
}

#[test]
fn guarded_maxent_never_loses_likelihood() {
    let mut rng = common::rng(21);
    let mut unguarded_drops = 0;
    for seed in 0..10 {
        let mdp = common::random_mdp(&mut rng, 6, 3, 0.9);
        let features = common::random_features(&mut rng, 6, 3, 4);
        let demos = common::random_demos(&mut rng, 6, 3, 8, 10);
        let irl = IrlConfig {
            learning_rate: 0.5,
            gamma: 1.0,
            max_iters: 30,
            seed,
            ..IrlConfig::default()
        };
        let lls = |irl: &IrlConfig| -> Vec<f64> {
            run_maxent_irl(&mdp, &features, &demos, irl)
                .unwrap()
                .trace
                .records
                .iter()
                .map(|r| r.log_likelihood)
                .collect()
        };
        let guarded = lls(&irl);
        assert!(guarded.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {guarded:?}");
        let free = lls(&IrlConfig { max_halvings: 0, ..irl });
        unguarded_drops += free.windows(2).filter(|w| w[1] < w[0]).count();
    }
    // The guard is doing work: a large unguarded step does lose likelihood.
    assert!(unguarded_drops > 0);
}
