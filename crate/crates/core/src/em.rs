//! Parametric behavior clustering: EM over a fixed number of reward clusters.
//!
//! Each EM iteration computes responsibilities `β` from the current
//! policies and prior, takes one weighted gradient-ascent step per cluster
//! reward and re-estimates the prior `Ψ` in closed form (column means of β).

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::{ascent_step, mean_square, sample_theta, seeded_rng, sup_norm, DemoStats, IrlConfig, IrlRecord, IrlTrace};
use crate::mdp::{DemonstrationSet, FeatureMap, RewardParams, TabularMdp};
use crate::solver::{log_sum_exp, soft_value_iteration_from, trajectory_log_likelihood, SoftPolicy};

/// Reward weights, mixing prior and cached policy for every cluster.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub thetas: Vec<RewardParams>,
    pub prior: Vec<f64>,
    pub policies: Vec<SoftPolicy>,
}

impl ClusterModel {
    pub fn new(thetas: Vec<RewardParams>, prior: Vec<f64>, policies: Vec<SoftPolicy>) -> Result<Self> {
        let m = thetas.len();
        if m == 0 || prior.len() != m || policies.len() != m {
            return Err(Error::Config(format!(
                "cluster model needs matching non-empty lists (thetas {m}, prior {}, policies {})",
                prior.len(),
                policies.len()
            )));
        }
        let total: f64 = prior.iter().sum();
        if prior.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel("cluster prior is not a distribution".into()));
        }
        Ok(Self {
            thetas,
            prior,
            policies,
        })
    }

    /// Solves a policy per reward and pairs it with `prior`.
    pub fn solve(
        mdp: &TabularMdp,
        features: &FeatureMap,
        thetas: Vec<RewardParams>,
        prior: Vec<f64>,
        config: &IrlConfig,
    ) -> Result<Self> {
        let policies = thetas
            .iter()
            .map(|t| soft_value_iteration_from(mdp, features, t, config.solver_options(), None))
            .collect::<Result<Vec<_>>>()?;
        Self::new(thetas, prior, policies)
    }

    pub fn num_clusters(&self) -> usize {
        self.thetas.len()
    }

    /// `log P(τⁱ|θ_j)` for every demo and cluster, row-major `n × m`.
    pub fn log_likelihoods(&self, mdp: &TabularMdp, demos: &DemonstrationSet) -> Vec<f64> {
        demos
            .iter()
            .flat_map(|tau| self.policies.iter().map(move |pi| trajectory_log_likelihood(mdp, pi, tau)))
            .collect()
    }

    /// Observed-data log-likelihood `Σ_i ln Σ_j P(τⁱ|θ_j) Ψ(c_j)`.
    pub fn observed_log_likelihood(&self, mdp: &TabularMdp, demos: &DemonstrationSet) -> f64 {
        mixture_log_likelihood(&self.log_likelihoods(mdp, demos), &self.prior)
    }
}

pub(crate) fn mixture_log_likelihood(loglik: &[f64], prior: &[f64]) -> f64 {
    let m = prior.len();
    let mut terms = vec![0.0; m];
    loglik
        .chunks_exact(m)
        .map(|row| {
            for ((t, l), p) in terms.iter_mut().zip(row).zip(prior) {
                *t = l + p.ln();
            }
            log_sum_exp(&terms)
        })
        .sum()
}

/// The `n × m` responsibility matrix; every row is a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityMatrix {
    n: usize,
    m: usize,
    beta: Vec<f64>,
}

impl ResponsibilityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::Config("responsibility matrix must be non-empty".into()));
        }
        let mut beta = Vec::with_capacity(n * m);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension {
                    what: "responsibility row",
                    expected: m,
                    got: row.len(),
                });
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|&b| !(0.0..=1.0).contains(&b)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!("responsibility row {i} is not a distribution")));
            }
            beta.extend(row);
        }
        Ok(Self { n, m, beta })
    }

    pub fn num_demos(&self) -> usize {
        self.n
    }

    pub fn num_clusters(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.beta[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.beta[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.beta.chunks_exact(self.m)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Index of the most responsible cluster per demo (lowest index on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &b)| if b > best.1 { (j, b) } else { best })
                    .0
            })
            .collect()
    }

    /// Reorders columns so that new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let beta = self.rows().flat_map(|r| perm.iter().map(move |&k| r[k])).collect();
        Self {
            n: self.n,
            m: self.m,
            beta,
        }
    }
}

/// Row-normalises `log β_ij = log P(τⁱ|θ_j) + log w_j` in log space.
/// Rows where every cluster is impossible fall back to `fallback`.
pub(crate) fn normalize_log_rows(loglik: &[f64], log_weights: &[f64], fallback: &[f64]) -> Vec<f64> {
    let m = log_weights.len();
    let mut out = Vec::with_capacity(loglik.len());
    let mut terms = vec![0.0; m];
    for row in loglik.chunks_exact(m) {
        for ((t, l), w) in terms.iter_mut().zip(row).zip(log_weights) {
            *t = l + w;
        }
        let norm = log_sum_exp(&terms);
        if norm == f64::NEG_INFINITY || !norm.is_finite() {
            out.extend_from_slice(fallback);
        } else {
            out.extend(terms.iter().map(|t| (t - norm).exp()));
        }
    }
    out
}

/// Responsibilities `β_ij ∝ P(τⁱ|θ_j) Ψ(c_j)`. A demo impossible under
/// every cluster gets a uniform row.
pub fn e_step(model: &ClusterModel, demos: &DemonstrationSet, mdp: &TabularMdp) -> ResponsibilityMatrix {
    let m = model.num_clusters();
    let loglik = model.log_likelihoods(mdp, demos);
    let log_prior: Vec<f64> = model.prior.iter().map(|p| p.ln()).collect();
    let uniform = vec![1.0 / m as f64; m];
    ResponsibilityMatrix {
        n: demos.len(),
        m,
        beta: normalize_log_rows(&loglik, &log_prior, &uniform),
    }
}

/// `Σ_i β_ij φ(τⁱ) − Σ_{s,a} β-weighted D(s,a|θ_j) φ(s,a)`.
///
/// The policy pass starts from the β-weighted start distribution and is
/// scaled by the cluster mass `Σ_i β_ij`. An empty cluster has zero gradient.
pub fn weighted_irl_gradient(
    mdp: &TabularMdp,
    features: &FeatureMap,
    theta: &RewardParams,
    demos: &DemonstrationSet,
    beta_col: &[f64],
    config: &IrlConfig,
) -> Result<Vec<f64>> {
    if beta_col.len() != demos.len() {
        return Err(Error::Dimension {
            what: "responsibility column",
            expected: demos.len(),
            got: beta_col.len(),
        });
    }
    let policy = soft_value_iteration_from(mdp, features, theta, config.solver_options(), None)?;
    let stats = DemoStats::new(features, demos, config.gamma, config.horizon_for(demos));
    let mass: f64 = beta_col.iter().sum();
    Ok(match stats.normalized_gradient(mdp, features, &policy, beta_col) {
        Some(g) => g.into_iter().map(|x| x * mass).collect(),
        None => vec![0.0; features.dim()],
    })
}

/// `Ψ(c_j) = Σ_i β_ij / n`.
pub fn m_step_prior(beta: &ResponsibilityMatrix) -> Vec<f64> {
    let n = beta.num_demos() as f64;
    (0..beta.num_clusters())
        .map(|j| beta.rows().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub irl: IrlConfig,
    /// Gradient steps per cluster per EM iteration.
    pub inner_steps: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            irl: IrlConfig::default(),
            inner_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmRecord {
    pub iteration: usize,
    /// Observed-data log-likelihood at the start of the iteration.
    pub em_loglik: f64,
    pub grad_norms: Vec<f64>,
    /// Mass-weighted mean squared feature-expectation gap.
    pub feature_gap: f64,
    pub prior: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    pub records: Vec<EmRecord>,
}

impl EmTrace {
    /// `iter,em_loglik,grad_inf_norm_<j>...,psi_<j>...,wall_ms`.
    pub fn to_csv(&self) -> String {
        let m = self.records.first().map_or(0, |r| r.prior.len());
        let mut out = String::from("iter,em_loglik");
        for j in 0..m {
            let _ = write!(out, ",grad_inf_norm_{j}");
        }
        for j in 0..m {
            let _ = write!(out, ",psi_{j}");
        }
        out.push_str(",wall_ms\n");
        for r in &self.records {
            let _ = write!(out, "{},{}", r.iteration, r.em_loglik);
            for g in &r.grad_norms {
                let _ = write!(out, ",{g}");
            }
            for p in &r.prior {
                let _ = write!(out, ",{p}");
            }
            let _ = writeln!(out, ",{:.3}", r.wall_ms);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: ClusterModel,
    pub beta: ResponsibilityMatrix,
    pub cluster_traces: Vec<IrlTrace>,
    pub trace: EmTrace,
    pub converged: bool,
}

/// EM with `m` clusters. Rewards start from i.i.d. seeded draws, the prior
/// from the uniform distribution.
pub fn run_parametric_bcirl(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demos: &DemonstrationSet,
    m: usize,
    config: &EmConfig,
) -> Result<EmOutcome> {
    let irl = &config.irl;
    irl.validate()?;
    if m == 0 {
        return Err(Error::Config("cluster count must be at least 1".into()));
    }
    if config.inner_steps == 0 {
        return Err(Error::Config("inner_steps must be at least 1".into()));
    }
    if !features.matches(mdp) {
        return Err(Error::Config("feature map does not match the MDP".into()));
    }
    demos.validate(mdp)?;

    let mut rng = seeded_rng(irl.seed);
    let thetas: Vec<RewardParams> = (0..m)
        .map(|_| sample_theta(&mut rng, features.dim(), irl.init_scale))
        .collect();
    let mut model = ClusterModel::solve(mdp, features, thetas, vec![1.0 / m as f64; m], irl)?;
    let stats = DemoStats::new(features, demos, irl.gamma, irl.horizon_for(demos));
    let clock = Instant::now();

    let mut cluster_traces = vec![IrlTrace::default(); m];
    let mut trace = EmTrace::default();
    let mut beta = e_step(&model, demos, mdp);
    let mut converged = false;

    for iteration in 0..irl.max_iters {
        let loglik = model.log_likelihoods(mdp, demos);
        let em_loglik = mixture_log_likelihood(&loglik, &model.prior);
        beta = e_step(&model, demos, mdp);

        let mut grad_norms = Vec::with_capacity(m);
        let mut feature_gap = 0.0;
        let mut moved = false;
        for j in 0..m {
            let col = beta.column(j);
            let mass: f64 = col.iter().sum();
            let mut weighted_ll = col
                .iter()
                .zip(loglik.iter().skip(j).step_by(m))
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, l)| w * l)
                .sum::<f64>();
            let mut first_norm = 0.0;
            for step in 0..config.inner_steps {
                let grad = stats
                    .normalized_gradient(mdp, features, &model.policies[j], &col)
                    .unwrap_or_else(|| vec![0.0; features.dim()]);
                let norm = sup_norm(&grad);
                if step == 0 {
                    first_norm = norm;
                    feature_gap += mass * mean_square(&grad);
                    cluster_traces[j].records.push(IrlRecord {
                        iteration,
                        log_likelihood: if mass > 0.0 { weighted_ll / mass } else { 0.0 },
                        grad_norm: norm,
                        feature_gap: mean_square(&grad),
                        theta: model.thetas[j].as_slice().to_vec(),
                        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
                    });
                }
                if norm < irl.grad_tol {
                    break;
                }
                let current = (&model.thetas[j], &model.policies[j], weighted_ll);
                let Some(next) = ascent_step(mdp, features, demos, &col, current, &grad, irl)
                    .map_err(|e| e.at(iteration, Some(j)))?
                else {
                    break;
                };
                model.thetas[j] = next.theta;
                model.policies[j] = next.policy;
                weighted_ll = next.loglik;
                moved = true;
            }
            grad_norms.push(first_norm);
        }
        trace.records.push(EmRecord {
            iteration,
            em_loglik,
            grad_norms: grad_norms.clone(),
            feature_gap: feature_gap / demos.len() as f64,
            prior: model.prior.clone(),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        let prior = m_step_prior(&beta);
        if grad_norms.iter().all(|&g| g < irl.grad_tol) {
            model.prior = prior;
            converged = true;
            break;
        }
        // Nothing can change once every step is rejected and the prior is fixed.
        let settled = !moved && prior == model.prior;
        model.prior = prior;
        if settled {
            break;
        }
    }

    Ok(EmOutcome {
        model,
        beta,
        cluster_traces,
        trace,
        converged,
    })
}
