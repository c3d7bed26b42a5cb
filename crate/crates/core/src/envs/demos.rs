use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::seeded_rng;
use crate::mdp::{DemonstrationSet, TabularMdp, Trajectory};
use crate::solver::SoftPolicy;

/// Demonstrations with the index of the behavior that generated each one.
/// Labels are for evaluation only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDemoSet {
    pub demos: DemonstrationSet,
    pub labels: Vec<usize>,
}

impl LabeledDemoSet {
    pub fn new(demos: DemonstrationSet, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != demos.len() {
            return Err(Error::Dimension {
                what: "labels",
                expected: demos.len(),
                got: labels.len(),
            });
        }
        Ok(Self { demos, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Concatenates labelled sets in order.
    pub fn concat(parts: Vec<LabeledDemoSet>) -> Result<Self> {
        let mut trajectories = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            trajectories.extend(p.demos.trajectories().iter().cloned());
            labels.extend(p.labels);
        }
        Self::new(DemonstrationSet::new(trajectories)?, labels)
    }
}

/// How a rollout ends besides running out of steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollout {
    pub max_len: usize,
    /// Entering this state ends the episode; the state itself is not recorded.
    pub goal: Option<usize>,
}

fn sample<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(weights)
        .expect("rows are probability distributions")
        .sample(rng)
}

fn rollout<R: Rng>(mdp: &TabularMdp, policy: &SoftPolicy, spec: Rollout, rng: &mut R) -> Trajectory {
    let mut steps = Vec::with_capacity(spec.max_len);
    let mut s = sample(mdp.initial_dist(), rng);
    while steps.len() < spec.max_len {
        let a = sample(policy.row(s), rng);
        steps.push((s, a));
        s = sample(mdp.row(s, a), rng);
        if Some(s) == spec.goal {
            break;
        }
    }
    Trajectory::new(steps).expect("max_len >= 1")
}

/// Rollout seed for behavior `k` of a dataset built from `seed`.
pub fn behavior_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(31).wrapping_add(k as u64)
}

/// Seeded rollouts: `s₀ ~ ρ₀`, `a_t ~ π(·|s_t)`, `s_{t+1} ~ P(·|s_t,a_t)`.
pub fn generate_demos(
    mdp: &TabularMdp,
    policy: &SoftPolicy,
    count: usize,
    spec: Rollout,
    seed: u64,
) -> Result<DemonstrationSet> {
    if count == 0 || spec.max_len == 0 {
        return Err(Error::Config("need count >= 1 and max_len >= 1".into()));
    }
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::Config("policy does not match the MDP".into()));
    }
    let mut rng = seeded_rng(seed);
    DemonstrationSet::new((0..count).map(|_| rollout(mdp, policy, spec, &mut rng)).collect())
}

/// Mixes `policy` with uniformly random actions: `noise · U + (1 − noise) · π`.
pub fn noisy_policy(policy: &SoftPolicy, noise_level: f64) -> SoftPolicy {
    let na = policy.num_actions();
    let uniform = 1.0 / na as f64;
    let probs = policy
        .probs()
        .iter()
        .map(|p| noise_level * uniform + (1.0 - noise_level) * p)
        .collect();
    SoftPolicy::from_probs(policy.num_states(), na, probs).expect("mixture of distributions")
}

/// Appends `count` rollouts of `base` corrupted with random actions at
/// `noise_level`, labelled one past the largest existing label.
pub fn inject_inconsistent_demos(
    demos: &LabeledDemoSet,
    mdp: &TabularMdp,
    base: &SoftPolicy,
    count: usize,
    noise_level: f64,
    spec: Rollout,
    seed: u64,
) -> Result<LabeledDemoSet> {
    if !(noise_level > 0.0 && noise_level <= 1.0) {
        return Err(Error::Config("noise_level must lie in (0, 1]".into()));
    }
    if count == 0 {
        return Ok(demos.clone());
    }
    let label = demos.labels.iter().max().map_or(0, |l| l + 1);
    let noisy = generate_demos(mdp, &noisy_policy(base, noise_level), count, spec, seed)?;
    LabeledDemoSet::concat(vec![demos.clone(), LabeledDemoSet::new(noisy, vec![label; count])?])
}
