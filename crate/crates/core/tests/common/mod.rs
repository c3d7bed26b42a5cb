#![allow(dead_code)]

use bcirl::mdp::feature_expectation;
use bcirl::{soft_value_iteration, DemonstrationSet, FeatureMap, RewardParams, SoftPolicy, SolverOptions, TabularMdp, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dist<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Dense random MDP with strictly positive transition rows.
pub fn random_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, discount: f64) -> TabularMdp {
    let mut p = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        p.extend(random_dist(rng, ns));
    }
    let init = random_dist(rng, ns);
    TabularMdp::new(ns, na, p, discount, init).unwrap()
}

pub fn random_features<R: Rng>(rng: &mut R, ns: usize, na: usize, dim: usize) -> FeatureMap {
    let values = (0..ns * na * dim).map(|_| rng.random::<f64>()).collect();
    FeatureMap::new(ns, na, dim, values).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> RewardParams {
    RewardParams::new((0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect())
}

/// Uniformly random state/action sequences; valid for MDPs with dense rows.
pub fn random_demos<R: Rng>(rng: &mut R, ns: usize, na: usize, n: usize, len: usize) -> DemonstrationSet {
    DemonstrationSet::new(
        (0..n)
            .map(|_| {
                Trajectory::new(
                    (0..len)
                        .map(|_| (rng.random_range(0..ns), rng.random_range(0..na)))
                        .collect(),
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Every length-`len` state/action sequence starting anywhere.
pub fn enumerate(ns: usize, na: usize, len: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..ns).flat_map(move |s| {
                    let prefix = prefix.clone();
                    (0..na).map(move |a| {
                        let mut p = prefix.clone();
                        p.push((s, a));
                        p
                    })
                })
            })
            .collect();
    }
    out
}

/// Probability of the executed sequence given its first state.
pub fn path_prob(mdp: &TabularMdp, pi: &SoftPolicy, steps: &[(usize, usize)]) -> f64 {
    let mut p = 1.0;
    for (t, &(s, a)) in steps.iter().enumerate() {
        p *= pi.prob(s, a);
        if let Some(&(next, _)) = steps.get(t + 1) {
            p *= mdp.prob(s, a, next);
        }
    }
    p
}

/// `Σ_i β_i [θ·φ(τⁱ) − V_θ(s₀ⁱ)]`, whose gradient is the weighted feature gap.
pub fn surrogate(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &[f64],
    demos: &DemonstrationSet,
    beta: &[f64],
    opts: SolverOptions,
) -> f64 {
    let theta = RewardParams::new(theta.to_vec());
    let pi = soft_value_iteration(mdp, features, &theta, opts).unwrap();
    demos
        .iter()
        .zip(beta)
        .map(|(tau, b)| {
            let fe = feature_expectation(features, tau, mdp.discount());
            let ret: f64 = fe.iter().zip(theta.as_slice()).map(|(f, t)| f * t).sum();
            b * (ret - pi.soft_values()[tau.start_state()])
        })
        .sum()
}
