//! `run`: one algorithm over every seed's dataset.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bcirl::em::ResponsibilityMatrix;
use bcirl::eval::MetricRecord;
use bcirl::io::{read_demos, write_json, ModelFile};
use bcirl::{run_maxent_irl, run_nonparametric_bcirl, run_parametric_bcirl, ClusterModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algo, RunConfig};
use crate::data::{Env, DEMOS_FILE};

pub const TRACE_FILE: &str = "trace.csv";
pub const MODEL_FILE: &str = "model.json";
pub const CONFIG_FILE: &str = "config.json";

/// Contents of `config.json` in a seed directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub converged: bool,
    pub iterations: usize,
    /// The effective configuration, with `seeds` narrowed to this seed.
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_loglik: f64,
    pub num_clusters: usize,
}

/// Per-iteration metrics plus the final model of one algorithm run.
struct Fit {
    records: Vec<MetricRecord>,
    model: ModelFile,
    converged: bool,
}

/// `loglik` in every trace row is the mean per demonstration.
fn fit(config: &RunConfig, env: &Env, demos: &bcirl::DemonstrationSet, seed: u64) -> Result<Fit> {
    let (mdp, features) = (env.mdp(), env.features());
    let n = demos.len() as f64;
    Ok(match config.algo {
        Algo::Maxent => {
            let out = run_maxent_irl(mdp, features, demos, &config.irl_config(seed))?;
            let records = out
                .trace
                .records
                .iter()
                .map(|r| MetricRecord {
                    iteration: r.iteration,
                    feature_gap_ms: r.feature_gap,
                    loglik: r.log_likelihood,
                    num_clusters: 1,
                    cluster_purity: None,
                    wall_ms: r.wall_ms,
                })
                .collect();
            let model = ClusterModel::new(vec![out.theta], vec![1.0], vec![out.policy])?;
            let beta = ResponsibilityMatrix::from_rows(vec![vec![1.0]; demos.len()])?;
            Fit {
                records,
                model: ModelFile::new(&model, &beta),
                converged: out.converged,
            }
        }
        Algo::BcirlEm => {
            let out = run_parametric_bcirl(mdp, features, demos, config.m, &config.em_config(seed))?;
            let records = out
                .trace
                .records
                .iter()
                .map(|r| MetricRecord {
                    iteration: r.iteration,
                    feature_gap_ms: r.feature_gap,
                    loglik: r.em_loglik / n,
                    num_clusters: r.prior.len(),
                    cluster_purity: None,
                    wall_ms: r.wall_ms,
                })
                .collect();
            Fit {
                records,
                model: ModelFile::new(&out.model, &out.beta),
                converged: out.converged,
            }
        }
        Algo::BcirlCrp => {
            let out = run_nonparametric_bcirl(mdp, features, demos, &config.crp_config(seed))?;
            let records = out
                .trace
                .records
                .iter()
                .map(|r| MetricRecord {
                    iteration: r.iteration,
                    feature_gap_ms: r.feature_gap,
                    loglik: r.total_loglik / n,
                    num_clusters: r.num_clusters,
                    cluster_purity: None,
                    wall_ms: r.wall_ms,
                })
                .collect();
            Fit {
                records,
                model: ModelFile::new(&out.model, &out.beta),
                converged: out.converged,
            }
        }
    })
}

pub fn write_trace(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn run_seed(config: &RunConfig, seed: u64) -> Result<SeedResult> {
    let data_dir = config.data_dir(seed);
    let demos_path = data_dir.join(DEMOS_FILE);
    if !demos_path.exists() {
        anyhow::bail!("{} not found; run gen-demos with the same config first", demos_path.display());
    }
    let demos = read_demos(&demos_path)?;
    let env = Env::build(&config.env, seed)?;
    let fit = fit(config, &env, &demos, seed).with_context(|| format!("seed {seed}"))?;

    let dir = config.run_dir(seed);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_trace(&dir.join(TRACE_FILE), &fit.records)?;
    write_json(&dir.join(MODEL_FILE), &fit.model)?;
    let record = SeedRecord {
        seed,
        data_dir,
        converged: fit.converged,
        iterations: fit.records.len(),
        config: RunConfig {
            seeds: vec![seed],
            ..config.clone()
        },
    };
    write_json(&dir.join(CONFIG_FILE), &record)?;
    let last = fit.records.last();
    Ok(SeedResult {
        seed,
        converged: fit.converged,
        iterations: fit.records.len(),
        final_loglik: last.map_or(f64::NAN, |r| r.loglik),
        num_clusters: fit.model.clusters.len(),
    })
}

/// Runs every seed on a pool of `config.jobs` threads; results come back in
/// seed order.
pub fn run_all(config: &RunConfig) -> Result<Vec<SeedResult>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build()?;
    pool.install(|| config.seeds.par_iter().map(|&s| run_seed(config, s)).collect())
}
