//! Single-reward MaxEnt IRL by gradient ascent on the demonstration
//! log-likelihood. The gradient is the gap between the demonstrations'
//! discounted feature counts and those of the current soft-optimal policy.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{feature_expectation, DemonstrationSet, FeatureMap, RewardParams, TabularMdp};
use crate::solver::{
    soft_value_iteration_from, trajectory_log_likelihood, visitation_from_policy, SoftPolicy,
    SolverOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlConfig {
    pub learning_rate: f64,
    /// Sup-norm of the gradient below which a reward counts as converged.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Discount applied to feature counts and visitations.
    pub gamma: f64,
    pub seed: u64,
    /// Standard deviation of the initial reward weights.
    pub init_scale: f64,
    /// Forward-pass length; defaults to the longest demonstration.
    pub horizon: Option<usize>,
    pub solver_tol: f64,
    pub solver_max_sweeps: usize,
    /// MaxEnt and EM halve a step up to this many times until the weighted
    /// log-likelihood does not drop, and skip it otherwise. 0 takes every
    /// step as is.
    pub max_halvings: usize,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            grad_tol: 1e-4,
            max_iters: 200,
            gamma: 0.9,
            seed: 0,
            init_scale: 0.1,
            horizon: None,
            solver_tol: 1e-6,
            solver_max_sweeps: 10_000,
            max_halvings: 10,
        }
    }
}

impl IrlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_sweeps: self.solver_max_sweeps,
        }
    }

    pub(crate) fn horizon_for(&self, demos: &DemonstrationSet) -> usize {
        self.horizon.unwrap_or_else(|| demos.max_len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub grad_norm: f64,
    /// Mean squared feature-expectation gap.
    pub feature_gap: f64,
    pub theta: Vec<f64>,
    pub wall_ms: f64,
}

/// Per-iteration history of one reward's ascent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IrlTrace {
    pub records: Vec<IrlRecord>,
}

impl IrlTrace {
    /// `iter,loglik,grad_inf_norm,wall_ms`, one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loglik,grad_inf_norm,wall_ms\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.iteration, r.log_likelihood, r.grad_norm, r.wall_ms
            );
        }
        out
    }

    /// True when the two traces agree on everything except wall time.
    pub fn same_path(&self, other: &IrlTrace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.log_likelihood.to_bits() == b.log_likelihood.to_bits()
                    && a.grad_norm.to_bits() == b.grad_norm.to_bits()
                    && a.theta == b.theta
            })
    }
}

/// Demonstration summaries reused across gradient evaluations.
#[derive(Debug, Clone)]
pub(crate) struct DemoStats {
    pub feature_counts: Vec<Vec<f64>>,
    pub starts: Vec<usize>,
    pub horizon: usize,
    pub gamma: f64,
}

impl DemoStats {
    pub fn new(features: &FeatureMap, demos: &DemonstrationSet, gamma: f64, horizon: usize) -> Self {
        Self {
            feature_counts: demos
                .iter()
                .map(|tau| feature_expectation(features, tau, gamma))
                .collect(),
            starts: demos.iter().map(|tau| tau.start_state()).collect(),
            horizon,
            gamma,
        }
    }

    /// Mass-normalised gradient `φ̄_D − φ̄_π` for the weighted demonstrations,
    /// with the policy pass started from their weighted start distribution.
    /// `None` when the weights carry no mass.
    pub fn normalized_gradient(
        &self,
        mdp: &TabularMdp,
        features: &FeatureMap,
        policy: &SoftPolicy,
        weights: &[f64],
    ) -> Option<Vec<f64>> {
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) {
            return None;
        }
        let mut demo_fe = vec![0.0; features.dim()];
        let mut start = vec![0.0; mdp.num_states()];
        for ((fe, &s0), &w) in self.feature_counts.iter().zip(&self.starts).zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (d, f) in demo_fe.iter_mut().zip(fe) {
                *d += w * f;
            }
            start[s0] += w;
        }
        demo_fe.iter_mut().for_each(|d| *d /= mass);
        start.iter_mut().for_each(|p| *p /= mass);
        let visits = visitation_from_policy(mdp, policy, &start, self.horizon, self.gamma);
        let policy_fe = features.expectation(visits.counts());
        Some(demo_fe.iter().zip(&policy_fe).map(|(d, p)| d - p).collect())
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn sample_theta(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> RewardParams {
    RewardParams::new(
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect(),
    )
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(1/n) Σ_i φ(τⁱ) − Σ_{s,a} D(s,a|θ) φ(s,a)` at `theta`.
pub fn maxent_gradient(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    demos: &DemonstrationSet,
    config: &IrlConfig,
) -> Result<Vec<f64>> {
    let policy = soft_value_iteration_from(mdp, features, theta, config.solver_options(), None)?;
    let stats = DemoStats::new(features, demos, config.gamma, config.horizon_for(demos));
    let ones = vec![1.0; demos.len()];
    Ok(stats
        .normalized_gradient(mdp, features, &policy, &ones)
        .expect("unit weights carry mass"))
}

/// Mean trajectory log-likelihood; any impossible demonstration gives `-inf`.
pub fn dataset_log_likelihood(mdp: &TabularMdp, policy: &SoftPolicy, demos: &DemonstrationSet) -> f64 {
    let total: f64 = demos
        .iter()
        .map(|tau| trajectory_log_likelihood(mdp, policy, tau))
        .sum();
    total / demos.len() as f64
}

#[derive(Debug, Clone)]
pub struct IrlOutcome {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
    pub trace: IrlTrace,
    pub converged: bool,
}

/// Vanilla MaxEnt IRL from a seeded random start.
pub fn run_maxent_irl(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    config: &IrlConfig,
) -> Result<IrlOutcome> {
    config.validate()?;
    if !features.matches(mdp) {
        return Err(Error::Config("feature map does not match the MDP".into()));
    }
    demos.validate(mdp)?;
    let mut rng = seeded_rng(config.seed);
    let mut theta = sample_theta(&mut rng, features.dim(), config.init_scale);
    let stats = DemoStats::new(features, demos, config.gamma, config.horizon_for(demos));
    let weights = vec![1.0; demos.len()];
    let clock = Instant::now();

    let mut trace = IrlTrace::default();
    let mut policy = soft_value_iteration_from(mdp, features, &theta, config.solver_options(), None)?;
    let mut loglik = weighted_log_likelihood(mdp, &policy, demos, &weights);
    let mut converged = false;
    for iteration in 0..config.max_iters {
        let grad = stats
            .normalized_gradient(mdp, features, &policy, &weights)
            .expect("unit weights carry mass");
        let grad_norm = sup_norm(&grad);
        trace.records.push(IrlRecord {
            iteration,
            log_likelihood: loglik / demos.len() as f64,
            grad_norm,
            feature_gap: mean_square(&grad),
            theta: theta.as_slice().to_vec(),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if grad_norm < config.grad_tol {
            converged = true;
            break;
        }
        let Some(step) = ascent_step(mdp, features, demos, &weights, (&theta, &policy, loglik), &grad, config)
            .map_err(|e| e.at(iteration, None))?
        else {
            break;
        };
        (theta, policy, loglik) = (step.theta, step.policy, step.loglik);
    }
    Ok(IrlOutcome {
        theta,
        policy,
        trace,
        converged,
    })
}

/// `Σ wᵢ log p(τᵢ)` over demonstrations with positive weight.
pub(crate) fn weighted_log_likelihood(
    mdp: &TabularMdp,
    policy: &SoftPolicy,
    demos: &DemonstrationSet,
    weights: &[f64],
) -> f64 {
    demos
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(tau, &w)| w * trajectory_log_likelihood(mdp, policy, tau))
        .sum()
}

pub(crate) struct Step {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
    /// Weighted log-likelihood under the new policy.
    pub loglik: f64,
}

/// Moves `θ` along `grad`, guarded by `config.max_halvings`. `None` when
/// every tried step lowers the weighted log-likelihood.
pub(crate) fn ascent_step(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    weights: &[f64],
    (theta, policy, loglik): (&RewardParams, &SoftPolicy, f64),
    grad: &[f64],
    config: &IrlConfig,
) -> Result<Option<Step>> {
    let mut rate = config.learning_rate;
    for _ in 0..=config.max_halvings {
        let mut next = theta.clone();
        ascend(&mut next, grad, rate);
        if !next.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                cluster: None,
            });
        }
        let next_policy =
            soft_value_iteration_from(mdp, features, &next, config.solver_options(), Some(policy.soft_values()))?;
        let next_loglik = weighted_log_likelihood(mdp, &next_policy, demos, weights);
        if config.max_halvings == 0 || next_loglik >= loglik {
            return Ok(Some(Step {
                theta: next,
                policy: next_policy,
                loglik: next_loglik,
            }));
        }
        rate *= 0.5;
    }
    Ok(None)
}

pub(crate) fn mean_square(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

pub(crate) fn ascend(theta: &mut RewardParams, grad: &[f64], learning_rate: f64) {
    for (t, g) in theta.as_mut_slice().iter_mut().zip(grad) {
        *t += learning_rate * g;
    }
}
