//! Nonparametric behavior clustering with a Chinese Restaurant Process prior.
//!
//! Every sweep visits the demonstrations in order. For each one a CRP prior
//! over the current clusters plus one fresh cluster is formed, a fresh reward
//! is drawn for the new slot, the posterior over clusters is computed from
//! trajectory likelihoods, and the demonstration is reseated according to a
//! bootstrap resample of that posterior. Clusters left without mass are
//! removed. After the sweep every surviving cluster takes one weighted
//! gradient step on its reward.

use std::fmt::Write as _;
use std::time::Instant;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{mixture_log_likelihood, normalize_log_rows, ClusterModel, ResponsibilityMatrix};
use crate::error::{Error, Result};
use crate::irl::{ascend, mean_square, seeded_rng, sup_norm, DemoStats, IrlConfig};
use crate::mdp::{DemonstrationSet, FeatureMap, RewardParams, TabularMdp, Trajectory};
use crate::solver::{soft_value_iteration_from, trajectory_log_likelihood, SoftPolicy};

/// Clusters with less mass than this are removed after each reseat.
pub const DEATH_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrpConfig {
    /// CRP concentration.
    pub alpha: f64,
    /// Categorical draws per bootstrap; 1 gives hard assignments.
    pub resample_draws: usize,
    /// Standard deviation of freshly sampled cluster rewards.
    pub theta_prior_scale: f64,
    /// Visit demonstrations in a random order each sweep.
    pub shuffle: bool,
    pub irl: IrlConfig,
}

impl Default for CrpConfig {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            resample_draws: 1,
            theta_prior_scale: 0.1,
            shuffle: false,
            irl: IrlConfig::default(),
        }
    }
}

impl CrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.resample_draws == 0 {
            return Err(Error::Config("resample_draws must be at least 1".into()));
        }
        if !(self.theta_prior_scale >= 0.0) {
            return Err(Error::Config("theta_prior_scale must be non-negative".into()));
        }
        self.irl.validate()
    }
}

/// `normalize(nc ++ [α])`: existing cluster `k` gets `nc_k / (Σnc + α)` and
/// the new slot `α / (Σnc + α)`.
pub fn crp_prior(nc: &[f64], alpha: f64) -> Vec<f64> {
    let total = nc.iter().sum::<f64>() + alpha;
    nc.iter().chain(std::iter::once(&alpha)).map(|c| c / total).collect()
}

/// Posterior over `policies` (existing clusters followed by the fresh slot)
/// for one trajectory. Falls back to the prior when every cluster finds the
/// trajectory impossible.
pub fn posterior_over_clusters(
    tau: &Trajectory,
    policies: &[&SoftPolicy],
    prior_p: &[f64],
    mdp: &TabularMdp,
) -> Vec<f64> {
    assert_eq!(policies.len(), prior_p.len(), "one prior weight per cluster");
    let loglik: Vec<f64> = policies
        .iter()
        .map(|pi| trajectory_log_likelihood(mdp, pi, tau))
        .collect();
    posterior_from_loglik(&loglik, prior_p)
}

fn posterior_from_loglik(loglik: &[f64], prior_p: &[f64]) -> Vec<f64> {
    let log_prior: Vec<f64> = prior_p.iter().map(|p| p.ln()).collect();
    normalize_log_rows(loglik, &log_prior, prior_p)
}

/// Weighted resampling of `beta_prime`: the normalised histogram of `draws`
/// categorical samples. Unbiased, and zero wherever the input is zero.
pub fn boot_strap<R: Rng + ?Sized>(beta_prime: &[f64], draws: usize, rng: &mut R) -> Vec<f64> {
    assert!(draws >= 1, "bootstrap needs at least one draw");
    let dist = WeightedIndex::new(beta_prime).expect("bootstrap input must be a distribution");
    let mut out = vec![0.0; beta_prime.len()];
    for _ in 0..draws {
        out[dist.sample(rng)] += 1.0;
    }
    let d = draws as f64;
    out.iter_mut().for_each(|c| *c /= d);
    out
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
    pub mass: f64,
}

/// A candidate for the new-cluster slot.
#[derive(Debug, Clone)]
pub struct FreshCluster {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
}

/// Live clusters and per-demonstration responsibilities over them.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub clusters: Vec<Cluster>,
    /// `β_i` over the current clusters, one vector per demonstration.
    pub assignments: Vec<Vec<f64>>,
}

impl ClusterState {
    /// No clusters yet; every demonstration carries zero mass.
    pub fn empty(n: usize) -> Self {
        Self {
            clusters: Vec::new(),
            assignments: vec![Vec::new(); n],
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Per-cluster mass `nc`.
    pub fn nc(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.mass).collect()
    }

    fn mass_drift(&self) -> f64 {
        (0..self.clusters.len())
            .map(|j| {
                let sum: f64 = self.assignments.iter().map(|b| b.get(j).copied().unwrap_or(0.0)).sum();
                (sum - self.clusters[j].mass).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Replaces demonstration `i`'s responsibilities with `beta_new`.
    ///
    /// `beta_new` covers the current clusters, optionally followed by the
    /// fresh slot; when the fresh slot receives mass it becomes a real
    /// cluster. Afterwards clusters below [`DEATH_MASS`] are removed and all
    /// responsibility vectors re-indexed.
    pub fn reseat_demo(&mut self, i: usize, beta_new: &[f64], fresh: Option<FreshCluster>) -> Result<()> {
        let m = self.clusters.len();
        let with_slot = beta_new.len() == m + 1;
        if beta_new.len() != m && !with_slot {
            return Err(Error::Dimension {
                what: "reseat responsibilities",
                expected: m + 1,
                got: beta_new.len(),
            });
        }
        let old = std::mem::take(&mut self.assignments[i]);
        for (c, b) in self.clusters.iter_mut().zip(&old) {
            c.mass -= b;
        }
        for (c, b) in self.clusters.iter_mut().zip(beta_new) {
            c.mass += b;
        }
        let mut new_row = beta_new[..m].to_vec();
        if with_slot && beta_new[m] > 0.0 {
            let fresh = fresh.ok_or_else(|| {
                Error::Consistency("new-cluster slot received mass without a fresh cluster".into())
            })?;
            self.clusters.push(Cluster {
                theta: fresh.theta,
                policy: fresh.policy,
                mass: beta_new[m],
            });
            new_row.push(beta_new[m]);
            for row in self.assignments.iter_mut() {
                if !row.is_empty() {
                    row.push(0.0);
                }
            }
        }
        self.assignments[i] = new_row;
        self.sparsify();
        let drift = self.mass_drift();
        if drift > 1e-6 {
            return Err(Error::Consistency(format!("cluster mass drifted by {drift}")));
        }
        Ok(())
    }

    fn sparsify(&mut self) {
        let keep: Vec<bool> = self.clusters.iter().map(|c| c.mass >= DEATH_MASS).collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut idx = 0;
        self.clusters.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        for row in self.assignments.iter_mut().filter(|r| !r.is_empty()) {
            let mut j = 0;
            row.retain(|_| {
                j += 1;
                keep[j - 1]
            });
        }
    }

    /// Snaps accumulated round-off in `nc` back onto the responsibilities.
    fn resync_mass(&mut self) {
        for j in 0..self.clusters.len() {
            self.clusters[j].mass = self.assignments.iter().map(|b| b.get(j).copied().unwrap_or(0.0)).sum();
        }
    }

    pub fn responsibilities(&self) -> Result<ResponsibilityMatrix> {
        let m = self.clusters.len();
        let rows = self
            .assignments
            .iter()
            .map(|b| {
                let mut r = b.clone();
                r.resize(m, 0.0);
                r
            })
            .collect();
        ResponsibilityMatrix::from_rows(rows)
    }

    pub fn to_model(&self) -> Result<ClusterModel> {
        let n = self.assignments.len() as f64;
        ClusterModel::new(
            self.clusters.iter().map(|c| c.theta.clone()).collect(),
            self.clusters.iter().map(|c| c.mass / n).collect(),
            self.clusters.iter().map(|c| c.policy.clone()).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpRecord {
    pub iteration: usize,
    pub num_clusters: usize,
    /// Observed-data log-likelihood under the mixture with `Ψ = nc / n`.
    pub total_loglik: f64,
    pub masses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Mass-weighted mean squared feature-expectation gap.
    pub feature_gap: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrpTrace {
    pub records: Vec<CrpRecord>,
}

impl CrpTrace {
    /// `iter,num_clusters,total_loglik,masses,wall_ms`; masses are
    /// `;`-separated since the cluster count varies.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,num_clusters,total_loglik,masses,wall_ms\n");
        for r in &self.records {
            let masses: Vec<String> = r.masses.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                r.iteration,
                r.num_clusters,
                r.total_loglik,
                masses.join(";"),
                r.wall_ms
            );
        }
        out
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.num_clusters).collect()
    }

    /// First iteration from which the cluster count stays at `k` until the
    /// end of the run.
    pub fn settled_at(&self, k: usize) -> Option<usize> {
        let counts = self.cluster_counts();
        if counts.last() != Some(&k) {
            return None;
        }
        let first_other = counts.iter().rposition(|&c| c != k);
        Some(first_other.map_or(0, |p| p + 1))
    }
}

#[derive(Debug, Clone)]
pub struct CrpOutcome {
    pub model: ClusterModel,
    pub beta: ResponsibilityMatrix,
    pub trace: CrpTrace,
    pub converged: bool,
}

/// One reseating sweep over the demonstrations.
///
/// A single fresh cluster is drawn per sweep and offered to every
/// demonstration; once a demonstration takes it, the next one is drawn.
pub fn reseat_sweep<R: Rng>(
    state: &mut ClusterState,
    order: &[usize],
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    config: &CrpConfig,
    rng: &mut R,
) -> Result<()> {
    let solver = config.irl.solver_options();
    let draw_fresh = |rng: &mut R| -> Result<FreshCluster> {
        let theta = sample_theta_with(rng, features.dim(), config.theta_prior_scale);
        let policy = soft_value_iteration_from(mdp, features, &theta, solver, None)?;
        Ok(FreshCluster { theta, policy })
    };
    let mut fresh = draw_fresh(rng)?;
    for &i in order {
        let tau = &demos.trajectories()[i];
        let prior = crp_prior(&state.nc(), config.alpha);
        let mut loglik: Vec<f64> = state
            .clusters
            .iter()
            .map(|c| trajectory_log_likelihood(mdp, &c.policy, tau))
            .collect();
        loglik.push(trajectory_log_likelihood(mdp, &fresh.policy, tau));
        let posterior = posterior_from_loglik(&loglik, &prior);
        let beta = boot_strap(&posterior, config.resample_draws, rng);
        if beta[beta.len() - 1] > 0.0 {
            let taken = std::mem::replace(&mut fresh, draw_fresh(rng)?);
            state.reseat_demo(i, &beta, Some(taken))?;
        } else {
            state.reseat_demo(i, &beta, None)?;
        }
    }
    state.resync_mass();
    Ok(())
}

fn sample_theta_with<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> RewardParams {
    use rand_distr::StandardNormal;
    RewardParams::new(
        (0..dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                scale * z
            })
            .collect(),
    )
}

/// Runs the nonparametric algorithm from an empty partition.
pub fn run_nonparametric_bcirl(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    config: &CrpConfig,
) -> Result<CrpOutcome> {
    run_nonparametric_from(mdp, features, demos, config, None)
}

/// Runs the nonparametric algorithm, optionally starting from a single
/// cluster holding every demonstration.
pub fn run_nonparametric_from(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    config: &CrpConfig,
    initial: Option<RewardParams>,
) -> Result<CrpOutcome> {
    config.validate()?;
    if !features.matches(mdp) {
        return Err(Error::Config("feature map does not match the MDP".into()));
    }
    demos.validate(mdp)?;
    let irl = &config.irl;
    let n = demos.len();
    let mut rng = seeded_rng(irl.seed);
    let stats = DemoStats::new(features, demos, irl.gamma, irl.horizon_for(demos));
    let solver = irl.solver_options();
    let clock = Instant::now();

    let mut state = ClusterState::empty(n);
    if let Some(theta) = initial {
        let policy = soft_value_iteration_from(mdp, features, &theta, solver, None)?;
        state.clusters.push(Cluster {
            theta,
            policy,
            mass: n as f64,
        });
        state.assignments = vec![vec![1.0]; n];
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = CrpTrace::default();
    let mut converged = false;
    for iteration in 0..irl.max_iters {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        reseat_sweep(&mut state, &order, mdp, features, demos, config, &mut rng)?;
        // Each demonstration occupies at most `resample_draws` clusters.
        if state.num_clusters() > n * config.resample_draws {
            return Err(Error::Consistency(format!(
                "{} clusters for {n} demonstrations",
                state.num_clusters()
            )));
        }

        let mut grad_norms = Vec::with_capacity(state.num_clusters());
        let mut feature_gap = 0.0;
        for j in 0..state.num_clusters() {
            let col: Vec<f64> = state.assignments.iter().map(|b| b[j]).collect();
            let grad = stats
                .normalized_gradient(mdp, features, &state.clusters[j].policy, &col)
                .unwrap_or_else(|| vec![0.0; features.dim()]);
            let norm = sup_norm(&grad);
            grad_norms.push(norm);
            feature_gap += state.clusters[j].mass * mean_square(&grad);
            if norm < irl.grad_tol {
                continue;
            }
            let cluster = &mut state.clusters[j];
            ascend(&mut cluster.theta, &grad, irl.learning_rate);
            if !cluster.theta.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    cluster: Some(j),
                });
            }
            cluster.policy = soft_value_iteration_from(
                mdp,
                features,
                &cluster.theta,
                solver,
                Some(cluster.policy.soft_values()),
            )?;
        }

        let masses = state.nc();
        let prior: Vec<f64> = masses.iter().map(|c| c / n as f64).collect();
        let loglik: Vec<f64> = demos
            .iter()
            .flat_map(|tau| {
                state
                    .clusters
                    .iter()
                    .map(move |c| trajectory_log_likelihood(mdp, &c.policy, tau))
            })
            .collect();
        trace.records.push(CrpRecord {
            iteration,
            num_clusters: state.num_clusters(),
            total_loglik: mixture_log_likelihood(&loglik, &prior),
            masses,
            grad_norms: grad_norms.clone(),
            feature_gap: feature_gap / n as f64,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if grad_norms.iter().all(|&g| g < irl.grad_tol) {
            converged = true;
            break;
        }
    }

    Ok(CrpOutcome {
        model: state.to_model()?,
        beta: state.responsibilities()?,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_examples() {
        assert_eq!(crp_prior(&[], 2.5), vec![1.0]);
        assert_eq!(crp_prior(&[5.0, 3.0], 2.0), vec![0.5, 0.3, 0.2]);
        let p = crp_prior(&[1.0, 2.0, 4.0], 3.0);
        assert_eq!(p[3], 0.3);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(boot_strap(&[0.0, 1.0, 0.0], 7, &mut rng), vec![0.0, 1.0, 0.0]);
        let mut ones = 0;
        for _ in 0..2000 {
            let b = boot_strap(&[0.5, 0.5], 1, &mut rng);
            assert!(b == [1.0, 0.0] || b == [0.0, 1.0]);
            ones += (b[0] == 1.0) as usize;
        }
        assert!((900..1100).contains(&ones), "{ones}");
        let soft = boot_strap(&[0.2, 0.8], 4, &mut rng);
        assert!(soft.iter().all(|x| (x * 4.0).fract() == 0.0));
    }

    fn dummy_cluster(mass: f64) -> Cluster {
        Cluster {
            theta: RewardParams::zeros(1),
            policy: SoftPolicy::uniform(1, 1),
            mass,
        }
    }

    #[test]
    fn reseat_same_cluster_keeps_mass() {
        let mut s = ClusterState {
            clusters: vec![dummy_cluster(1.0), dummy_cluster(1.0)],
            assignments: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        s.reseat_demo(0, &[1.0, 0.0, 0.0], None).unwrap();
        assert_eq!(s.nc(), vec![1.0, 1.0]);
        assert_eq!(s.num_clusters(), 2);
    }

    #[test]
    fn reseat_moves_and_deletes() {
        let mut s = ClusterState {
            clusters: vec![dummy_cluster(2.0)],
            assignments: vec![vec![1.0], vec![1.0]],
        };
        let fresh = FreshCluster {
            theta: RewardParams::new(vec![0.5]),
            policy: SoftPolicy::uniform(1, 1),
        };
        s.reseat_demo(1, &[0.0, 1.0], Some(fresh)).unwrap();
        assert_eq!(s.nc(), vec![1.0, 1.0]);
        assert_eq!(s.assignments, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        // last demo leaves cluster 0.
        s.reseat_demo(0, &[0.0, 1.0], None).unwrap();
        assert_eq!(s.num_clusters(), 1);
        assert_eq!(s.nc(), vec![2.0]);
        assert_eq!(s.clusters[0].theta.as_slice(), &[0.5]);
        assert_eq!(s.assignments, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn reseat_requires_fresh_cluster_for_new_slot() {
        let mut s = ClusterState::empty(1);
        assert!(matches!(s.reseat_demo(0, &[1.0], None), Err(Error::Consistency(_))));
        let mut s = ClusterState::empty(1);
        assert!(s.reseat_demo(0, &[0.5, 0.5, 0.0], None).is_err());
    }

    #[test]
    fn posterior_fallback_and_symmetry() {
        let loglik = [f64::NEG_INFINITY, f64::NEG_INFINITY];
        assert_eq!(posterior_from_loglik(&loglik, &[0.7, 0.3]), vec![0.7, 0.3]);
        let even = posterior_from_loglik(&[-2.0, -2.0, -2.0], &[1.0 / 3.0; 3]);
        for b in even {
            assert_abs_diff_eq!(b, 1.0 / 3.0, epsilon = 1e-12);
        }
        let newslot = posterior_from_loglik(&[f64::NEG_INFINITY, -5.0], &[0.9, 0.1]);
        assert_eq!(newslot, vec![0.0, 1.0]);
    }

    #[test]
    fn settled_iteration() {
        let trace = CrpTrace {
            records: [1, 2, 3, 2, 3, 3, 3]
                .iter()
                .enumerate()
                .map(|(i, &k)| CrpRecord {
                    iteration: i,
                    num_clusters: k,
                    total_loglik: 0.0,
                    masses: vec![],
                    grad_norms: vec![],
                    feature_gap: 0.0,
                    wall_ms: 0.0,
                })
                .collect(),
        };
        assert_eq!(trace.settled_at(3), Some(4));
        assert_eq!(trace.settled_at(2), None);
    }

    #[test]
    fn config_validation() {
        let bad = CrpConfig {
            alpha: 0.0,
            ..CrpConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CrpConfig {
            resample_draws: 0,
            ..CrpConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
