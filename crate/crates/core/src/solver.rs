//! Maximum-entropy (soft) planning and visitation frequencies.
//!
//! Soft value iteration replaces the Bellman max with a log-sum-exp:
//!
//! ```text
//! Q(s,a) = r(s,a) + γ Σ_s' P(s'|s,a) V(s')
//! V(s)   = log Σ_a exp Q(s,a)
//! π(a|s) = exp(Q(s,a) - V(s))
//! ```
//!
//! The forward pass then propagates a start distribution through the
//! policy-induced Markov chain to obtain discounted state-action visitation
//! counts `D(s,a)`, the quantity every MaxEnt gradient subtracts from the
//! demonstrations' feature counts.

use crate::error::{Error, Result};
use crate::mdp::{DemonstrationSet, FeatureMap, RewardParams, TabularMdp, Trajectory};

/// Stable `log Σ exp(x)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm change in `V` below which iteration stops.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

/// Soft-optimal stochastic policy `π(a|s)` with its soft values `V(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
    soft_values: Vec<f64>,
    /// Whether the value sweep met its tolerance.
    pub converged: bool,
    pub sweeps: usize,
}

impl SoftPolicy {
    /// Wraps an arbitrary stochastic policy table (rows must be distributions).
    pub fn from_probs(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::Dimension {
                what: "policy table",
                expected: num_states * num_actions,
                got: probs.len(),
            });
        }
        for (s, row) in probs.chunks_exact(num_actions).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "policy row for state {s} is not a distribution"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
            soft_values: vec![0.0; num_states],
            converged: true,
            sweeps: 0,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
            soft_values: vec![0.0; num_states],
            converged: true,
            sweeps: 0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    /// `π(·|s)`.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn soft_values(&self) -> &[f64] {
        &self.soft_values
    }
}

/// Soft value iteration from `V = 0`.
pub fn soft_value_iteration(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    opts: SolverOptions,
) -> Result<SoftPolicy> {
    soft_value_iteration_from(mdp, features, theta, opts, None)
}

/// Soft value iteration warm-started from `init` when given.
///
/// Never fails on non-convergence: the last iterate is returned with
/// `converged == false`.
pub fn soft_value_iteration_from(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    opts: SolverOptions,
    init: Option<&[f64]>,
) -> Result<SoftPolicy> {
    if !features.matches(mdp) {
        return Err(Error::Config("feature map does not match the MDP".into()));
    }
    if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::Config("solver needs tol > 0 and max_sweeps >= 1".into()));
    }
    let rewards = features.reward_table(theta)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();

    let mut values = match init {
        Some(v) if v.len() == ns => v.to_vec(),
        Some(v) => {
            return Err(Error::Dimension {
                what: "warm-start values",
                expected: ns,
                got: v.len(),
            })
        }
        None => vec![0.0; ns],
    };
    let mut next = vec![0.0; ns];
    let mut q = vec![0.0; na];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            backup(mdp, &rewards, &values, gamma, s, &mut q);
            next[s] = log_sum_exp(&q);
            delta = delta.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        backup(mdp, &rewards, &values, gamma, s, &mut q);
        let v = log_sum_exp(&q);
        for (p, qa) in probs[s * na..(s + 1) * na].iter_mut().zip(&q) {
            *p = (qa - v).exp();
        }
    }

    Ok(SoftPolicy {
        num_states: ns,
        num_actions: na,
        probs,
        soft_values: values,
        converged,
        sweeps,
    })
}

fn backup(mdp: &TabularMdp, rewards: &[f64], values: &[f64], gamma: f64, s: usize, q: &mut [f64]) {
    let na = mdp.num_actions();
    for (a, qa) in q.iter_mut().enumerate() {
        let future: f64 = mdp.successors(s, a).iter().map(|&(n, p)| p * values[n]).sum();
        *qa = rewards[s * na + a] + gamma * future;
    }
}

/// Discounted state-action visitation counts `D(s,a)`, flat `S·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationTable {
    num_actions: usize,
    counts: Vec<f64>,
    pub horizon: usize,
}

impl VisitationTable {
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.counts[s * self.num_actions + a]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.counts.iter_mut().for_each(|c| *c *= factor);
    }
}

/// Forward pass `μ_{t+1}(s') = Σ_{s,a} μ_t(s) π(a|s) P(s'|s,a)` accumulated
/// as `D(s,a) = Σ_{t<horizon} γᵗ μ_t(s) π(a|s)`.
pub fn visitation_from_policy(
    mdp: &TabularMdp,
    policy: &SoftPolicy,
    start_dist: &[f64],
    horizon: usize,
    gamma: f64,
) -> VisitationTable {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    assert_eq!(start_dist.len(), ns, "start distribution length");
    let mut counts = vec![0.0; ns * na];
    let mut mu = start_dist.to_vec();
    let mut next = vec![0.0; ns];
    let mut weight = 1.0;
    for t in 0..horizon {
        for s in 0..ns {
            if mu[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                counts[s * na + a] += weight * mu[s] * policy.prob(s, a);
            }
        }
        if t + 1 == horizon {
            break;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            if mu[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let flow = mu[s] * policy.prob(s, a);
                if flow == 0.0 {
                    continue;
                }
                for &(n, p) in mdp.successors(s, a) {
                    next[n] += flow * p;
                }
            }
        }
        std::mem::swap(&mut mu, &mut next);
        weight *= gamma;
    }
    VisitationTable {
        num_actions: na,
        counts,
        horizon,
    }
}

/// Weighted empirical discounted visitation of the demonstrations.
pub fn visitation_from_demos(
    demos: &DemonstrationSet,
    weights: &[f64],
    gamma: f64,
    num_states: usize,
    num_actions: usize,
) -> VisitationTable {
    assert_eq!(weights.len(), demos.len(), "one weight per demonstration");
    let mut counts = vec![0.0; num_states * num_actions];
    for (tau, &w) in demos.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut g = 1.0;
        for &(s, a) in tau.steps() {
            counts[s * num_actions + a] += w * g;
            g *= gamma;
        }
    }
    VisitationTable {
        num_actions,
        counts,
        horizon: demos.max_len(),
    }
}

/// `Σ_t log π(a_t|s_t) + log P(s_{t+1}|s_t,a_t)`; the last step contributes
/// its action probability only. Impossible steps give `-inf`.
pub fn trajectory_log_likelihood(mdp: &TabularMdp, policy: &SoftPolicy, tau: &Trajectory) -> f64 {
    let steps = tau.steps();
    let mut total = 0.0;
    for (t, &(s, a)) in steps.iter().enumerate() {
        total += policy.prob(s, a).ln();
        if let Some(&(next, _)) = steps.get(t + 1) {
            total += mdp.prob(s, a, next).ln();
        }
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

/// Number of forward steps needed for `γ^H < eps` (at least 1).
pub fn horizon_for(gamma: f64, eps: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    ((eps.ln() / gamma.ln()).floor() as usize + 1).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state_deterministic(gamma: f64) -> TabularMdp {
        // action a moves to state a.
        let mut p = vec![0.0; 8];
        for s in 0..2 {
            for a in 0..2 {
                p[(s * 2 + a) * 2 + a] = 1.0;
            }
        }
        TabularMdp::new(2, 2, p, gamma, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn lse_is_stable() {
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn zero_reward_no_discount_is_uniform() {
        let mdp = two_state_deterministic(0.0);
        let f = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pi = soft_value_iteration(&mdp, &f, &RewardParams::zeros(1), SolverOptions::default()).unwrap();
        for &p in pi.probs() {
            assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_action_is_deterministic() {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], 0.9, vec![0.5, 0.5]).unwrap();
        let f = FeatureMap::new(2, 1, 1, vec![1.0, -1.0]).unwrap();
        let pi = soft_value_iteration(&mdp, &f, &RewardParams::new(vec![3.0]), SolverOptions::default()).unwrap();
        assert!(pi.converged);
        assert_eq!(pi.probs(), &[1.0, 1.0]);
    }

    #[test]
    fn one_step_softmax() {
        let mdp = two_state_deterministic(0.0);
        // r(s0, a0) = 1, everything else 0.
        let f = FeatureMap::new(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let pi = soft_value_iteration(&mdp, &f, &RewardParams::new(vec![1.0]), SolverOptions::default()).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(pi.prob(0, 0), e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(pi.prob(0, 0), 0.7310585786300049, epsilon = 1e-12);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mdp = two_state_deterministic(0.99);
        let f = FeatureMap::new(2, 2, 1, vec![1.0; 4]).unwrap();
        let opts = SolverOptions { tol: 1e-12, max_sweeps: 3 };
        let pi = soft_value_iteration(&mdp, &f, &RewardParams::new(vec![1.0]), opts).unwrap();
        assert!(!pi.converged);
        assert_eq!(pi.sweeps, 3);
        for s in 0..2 {
            assert_abs_diff_eq!(pi.row(s).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn absorbing_state_geometric_series() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], 0.5, vec![1.0]).unwrap();
        let pi = SoftPolicy::uniform(1, 1);
        let d = visitation_from_policy(&mdp, &pi, &[1.0], horizon_for(0.5, 1e-15), 0.5);
        assert_abs_diff_eq!(d.get(0, 0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn horizon_one_is_start_times_policy() {
        let mdp = two_state_deterministic(0.9);
        let pi = SoftPolicy::from_probs(2, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        let d = visitation_from_policy(&mdp, &pi, &[0.25, 0.75], 1, 0.9);
        assert_eq!(d.counts(), &[0.25 * 0.3, 0.25 * 0.7, 0.75 * 0.6, 0.75 * 0.4]);
    }

    #[test]
    fn demo_visitation_examples() {
        let a = Trajectory::new(vec![(0, 0), (0, 1), (1, 1)]).unwrap();
        let b = Trajectory::new(vec![(1, 0), (0, 1)]).unwrap();
        let demos = DemonstrationSet::new(vec![a.clone(), b.clone()]).unwrap();
        let zero = visitation_from_demos(&demos, &[0.0, 0.0], 0.9, 2, 2);
        assert!(zero.counts().iter().all(|&c| c == 0.0));

        let single = DemonstrationSet::new(vec![a]).unwrap();
        let raw = visitation_from_demos(&single, &[1.0], 1.0, 2, 2);
        assert_eq!(raw.counts(), &[1.0, 1.0, 0.0, 1.0]);

        let da = visitation_from_demos(&demos, &[1.0, 0.0], 0.9, 2, 2);
        let db = visitation_from_demos(&demos, &[0.0, 1.0], 0.9, 2, 2);
        let mixed = visitation_from_demos(&demos, &[0.25, 0.75], 0.9, 2, 2);
        for i in 0..4 {
            assert_abs_diff_eq!(
                mixed.counts()[i],
                0.25 * da.counts()[i] + 0.75 * db.counts()[i],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn likelihood_examples() {
        let mdp = two_state_deterministic(0.9);
        let det = SoftPolicy::from_probs(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let tau = Trajectory::new(vec![(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(trajectory_log_likelihood(&mdp, &det, &tau), 0.0);
        let bad = Trajectory::new(vec![(0, 0), (0, 0)]).unwrap();
        assert_eq!(trajectory_log_likelihood(&mdp, &det, &bad), f64::NEG_INFINITY);

        // π values 0.5 then 0.25, P values 1.0 then 0.8 (terminal step has no P).
        let p = vec![
            0.2, 0.8, 0.0, 1.0, // s0: a0 -> {0.2, 0.8}, a1 -> s1
            1.0, 0.0, 0.5, 0.5, // s1
        ];
        let mdp = TabularMdp::new(2, 2, p, 0.9, vec![1.0, 0.0]).unwrap();
        let pi = SoftPolicy::from_probs(2, 2, vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let tau = Trajectory::new(vec![(0, 1), (1, 1), (1, 0)]).unwrap();
        // steps: π(a1|s0)=0.5, P(s1|s0,a1)=1.0, π(a1|s1)=0.25, P(s1|s1,a1)=0.5, π(a0|s1)=0.75
        let expected = (0.5f64 * 1.0 * 0.25 * 0.5 * 0.75).ln();
        assert_abs_diff_eq!(trajectory_log_likelihood(&mdp, &pi, &tau), expected, epsilon = 1e-12);
        let two = Trajectory::new(vec![(0, 0), (1, 1)]).unwrap();
        assert_abs_diff_eq!(
            trajectory_log_likelihood(&mdp, &pi, &two),
            (0.5f64 * 0.8 * 0.25).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn horizon_choice() {
        assert!(0.9f64.powi(horizon_for(0.9, 1e-6) as i32) < 1e-6);
        assert_eq!(horizon_for(0.0, 1e-6), 1);
    }
}
