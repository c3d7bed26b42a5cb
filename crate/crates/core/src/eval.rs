//! Metrics for comparing learned behaviors against demonstrations and
//! ground truth.

use serde::{Deserialize, Serialize};

use crate::em::ResponsibilityMatrix;
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, RewardParams, TabularMdp};
use crate::solver::{soft_value_iteration, visitation_from_policy, SoftPolicy, SolverOptions};

/// One row of a run-level metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    /// Mean squared feature-expectation gap between learned and demonstrated behavior.
    pub feature_gap_ms: f64,
    pub loglik: f64,
    pub num_clusters: usize,
    /// Filled in only where ground-truth labels are available.
    pub cluster_purity: Option<f64>,
    pub wall_ms: f64,
}

/// `(1/k) Σ_d (expert[d] − learned[d])²`.
pub fn feature_expectation_gap(expert_fe: &[f64], learned_fe: &[f64]) -> Result<f64> {
    if expert_fe.len() != learned_fe.len() {
        return Err(Error::Dimension {
            what: "feature expectation",
            expected: expert_fe.len(),
            got: learned_fe.len(),
        });
    }
    if expert_fe.is_empty() {
        return Ok(0.0);
    }
    Ok(expert_fe
        .iter()
        .zip(learned_fe)
        .map(|(e, l)| (e - l) * (e - l))
        .sum::<f64>()
        / expert_fe.len() as f64)
}

/// Fraction of demos whose argmax cluster's majority label matches theirs.
pub fn cluster_purity(beta: &ResponsibilityMatrix, labels: &[usize]) -> f64 {
    assert_eq!(beta.num_demos(), labels.len(), "one label per demonstration");
    purity_of(&beta.argmax(), labels)
}

/// Purity of a hard assignment.
pub fn purity_of(assigned: &[usize], labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 1.0;
    }
    let k = assigned.iter().max().map_or(0, |m| m + 1);
    let l = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; k * l];
    for (&c, &y) in assigned.iter().zip(labels) {
        table[c * l + y] += 1;
    }
    let majority: usize = table.chunks_exact(l.max(1)).map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    majority as f64 / n as f64
}

/// Adjusted Rand index between two hard partitions.
pub fn adjusted_rand_index(assigned: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assigned.len(), labels.len());
    let n = labels.len();
    if n < 2 {
        return 1.0;
    }
    let k = assigned.iter().max().unwrap() + 1;
    let l = labels.iter().max().unwrap() + 1;
    let mut table = vec![0u64; k * l];
    for (&c, &y) in assigned.iter().zip(labels) {
        table[c * l + y] += 1;
    }
    let pairs = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&x| pairs(x)).sum();
    let rows: f64 = table.chunks_exact(l).map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..l).map(|j| pairs((0..k).map(|i| table[i * l + j]).sum())).sum();
    let total = pairs(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Discounted feature expectation of `policy` from the MDP's initial
/// distribution over `horizon` steps.
pub fn policy_feature_expectation(
    mdp: &TabularMdp,
    features: &FeatureMap,
    policy: &SoftPolicy,
    horizon: usize,
    gamma: f64,
) -> Vec<f64> {
    let visits = visitation_from_policy(mdp, policy, mdp.initial_dist(), horizon, gamma);
    features.expectation(visits.counts())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(learned index, true index, feature gap)`, sorted by learned index.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl Matching {
    pub fn true_for(&self, learned: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == learned).map(|p| p.1)
    }
}

/// Greedy minimum-gap matching between two lists of feature expectations.
/// Pairs are committed in increasing gap order (ties broken by index).
pub fn match_feature_expectations(learned: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Matching> {
    if learned.is_empty() || truth.is_empty() {
        return Err(Error::Config("matching needs non-empty cluster lists".into()));
    }
    let mut candidates = Vec::with_capacity(learned.len() * truth.len());
    for (i, l) in learned.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            candidates.push((feature_expectation_gap(t, l)?, i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_l = vec![false; learned.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (gap, i, j) in candidates {
        if !used_l[i] && !used_t[j] {
            used_l[i] = true;
            used_t[j] = true;
            pairs.push((i, j, gap));
        }
    }
    pairs.sort_by_key(|p| p.0);
    Ok(Matching { pairs })
}

/// Matches learned rewards to true rewards by the gap between their soft
/// policies' feature expectations from `ρ₀`.
pub fn match_clusters_to_truth(
    learned: &[RewardParams],
    truth: &[RewardParams],
    mdp: &TabularMdp,
    features: &FeatureMap,
    horizon: usize,
    gamma: f64,
) -> Result<Matching> {
    let fe = |thetas: &[RewardParams]| -> Result<Vec<Vec<f64>>> {
        thetas
            .iter()
            .map(|t| {
                let pi = soft_value_iteration(mdp, features, t, SolverOptions::default())?;
                Ok(policy_feature_expectation(mdp, features, &pi, horizon, gamma))
            })
            .collect()
    };
    match_feature_expectations(&fe(learned)?, &fe(truth)?)
}
