//! Tabular MDPs, linear reward features and demonstration trajectories.
//!
//! Every table is stored dense and row-major. Transition probabilities are
//! indexed `[s][a][s']`, features `[s][a][k]`.

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// A finite MDP without a reward: `(S, A, P, γ, ρ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
    // Nonzero entries of each P(·|s,a) row, indexed by s * A + a.
    successors: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    /// Builds an MDP from a flat `S·A·S` transition table, validating every
    /// row and the initial distribution.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel(
                "state and action counts must be positive".into(),
            ));
        }
        let expected = num_states * num_actions * num_states;
        if transition.len() != expected {
            return Err(Error::Dimension {
                what: "transition table",
                expected,
                got: transition.len(),
            });
        }
        if initial_dist.len() != num_states {
            return Err(Error::Dimension {
                what: "initial distribution",
                expected: num_states,
                got: initial_dist.len(),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        check_distribution(&initial_dist, "initial distribution")?;
        let mut successors = Vec::with_capacity(num_states * num_actions);
        for (row_idx, row) in transition.chunks_exact(num_states).enumerate() {
            check_distribution(row, "transition row").map_err(|_| {
                Error::InvalidModel(format!(
                    "P(.|s={}, a={}) is not a probability distribution",
                    row_idx / num_actions,
                    row_idx % num_actions
                ))
            })?;
            successors.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s, &p)| (s, p))
                    .collect(),
            );
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            discount,
            initial_dist,
            successors,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// The full flat transition table.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// `P(·|s,a)` as a dense row.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Nonzero `(s', P(s'|s,a))` pairs.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.num_actions + a]
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Per-(state, action) feature vectors `φ(s,a)`, shared by every cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("feature dimension must be >= 1".into()));
        }
        let expected = num_states * num_actions * dim;
        if values.len() != expected {
            return Err(Error::Dimension {
                what: "feature table",
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("feature values must be finite".into()));
        }
        Ok(Self {
            dim,
            num_states,
            num_actions,
            values,
        })
    }

    /// Features that depend on the state only, replicated across actions.
    pub fn from_state_features(num_actions: usize, dim: usize, per_state: &[f64]) -> Result<Self> {
        if dim == 0 || per_state.len() % dim != 0 {
            return Err(Error::Config(
                "state feature table is not a multiple of the feature dimension".into(),
            ));
        }
        let num_states = per_state.len() / dim;
        let mut values = Vec::with_capacity(num_states * num_actions * dim);
        for row in per_state.chunks_exact(dim) {
            for _ in 0..num_actions {
                values.extend_from_slice(row);
            }
        }
        Self::new(num_states, num_actions, dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `φ(s,a)`.
    pub fn get(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn matches(&self, mdp: &TabularMdp) -> bool {
        self.num_states == mdp.num_states() && self.num_actions == mdp.num_actions()
    }

    /// The reward table `r_θ(s,a)` for every pair, flat `S·A`.
    pub fn reward_table(&self, theta: &RewardParams) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self
            .values
            .chunks_exact(self.dim)
            .map(|phi| dot(phi, theta.as_slice()))
            .collect())
    }

    /// Expected features `Σ_{s,a} D(s,a) φ(s,a)` for a flat `S·A` weight table.
    pub fn expectation(&self, weights: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.num_states * self.num_actions);
        let mut out = vec![0.0; self.dim];
        for (w, phi) in weights.iter().zip(self.values.chunks_exact(self.dim)) {
            if *w != 0.0 {
                for (o, f) in out.iter_mut().zip(phi) {
                    *o += w * f;
                }
            }
        }
        out
    }

    pub(crate) fn check_theta(&self, theta: &RewardParams) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::Dimension {
                what: "reward parameters",
                expected: self.dim,
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// Linear reward weights `θ`, so that `r_θ(s,a) = θ·φ(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams(Vec<f64>);

impl RewardParams {
    pub fn new(theta: Vec<f64>) -> Self {
        Self(theta)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for RewardParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A demonstration: the recorded `(state, action)` pairs in order.
///
/// There is no terminal marker. The last recorded pair counts towards
/// feature sums like every other step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidModel("trajectory must have at least one step".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start_state(&self) -> usize {
        self.steps[0].0
    }
}

/// The demonstration set `𝒟`, at least one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationSet {
    trajectories: Vec<Trajectory>,
}

impl DemonstrationSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidModel("demonstration set is empty".into()));
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter()
    }

    /// Checks every trajectory against `mdp`.
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        for (i, tau) in self.trajectories.iter().enumerate() {
            if !validate_trajectory(mdp, tau) {
                return Err(Error::InvalidModel(format!(
                    "demonstration {i} is inconsistent with the MDP"
                )));
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: DemonstrationSet) {
        self.trajectories.extend(other.trajectories);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `r_θ(s,a) = θ·φ(s,a)`.
pub fn reward_of(theta: &RewardParams, features: &FeatureMap, s: usize, a: usize) -> Result<f64> {
    features.check_theta(theta)?;
    if s >= features.num_states() || a >= features.num_actions() {
        return Err(Error::Config(format!("state/action ({s}, {a}) out of range")));
    }
    Ok(dot(theta.as_slice(), features.get(s, a)))
}

/// Discounted feature counts `Σ_t γᵗ φ(s_t, a_t)` over every recorded pair.
pub fn feature_expectation(features: &FeatureMap, tau: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; features.dim()];
    let mut weight = 1.0;
    for &(s, a) in tau.steps() {
        for (o, f) in out.iter_mut().zip(features.get(s, a)) {
            *o += weight * f;
        }
        weight *= gamma;
    }
    out
}

/// Discounted return `Σ_t γᵗ θ·φ(s_t, a_t)`.
pub fn trajectory_return(
    theta: &RewardParams,
    features: &FeatureMap,
    tau: &Trajectory,
    gamma: f64,
) -> Result<f64> {
    features.check_theta(theta)?;
    let mut total = 0.0;
    let mut weight = 1.0;
    for &(s, a) in tau.steps() {
        total += weight * dot(theta.as_slice(), features.get(s, a));
        weight *= gamma;
    }
    Ok(total)
}

/// True iff every index is in range and every observed transition has
/// positive probability.
pub fn validate_trajectory(mdp: &TabularMdp, tau: &Trajectory) -> bool {
    let in_range = |&(s, a): &(usize, usize)| s < mdp.num_states() && a < mdp.num_actions();
    if !tau.steps().iter().all(in_range) {
        return false;
    }
    tau.steps()
        .windows(2)
        .all(|w| mdp.prob(w[0].0, w[0].1, w[1].0) > 0.0)
}
