//! Run configuration: one environment, one algorithm, a list of seeds.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcirl::envs::{DrivingGridSpec, MacroGridSpec};
use bcirl::{CrpConfig, EmConfig, IrlConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSpec {
    MacroGrid(MacroGridSpec),
    Driving(DrivingGridSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Maxent,
    BcirlEm,
    BcirlCrp,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Maxent => "maxent",
            Algo::BcirlEm => "bcirl-em",
            Algo::BcirlCrp => "bcirl-crp",
        }
    }
}

/// Dataset shape for `gen-demos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSpec {
    /// Demonstrations per ground-truth behavior; 1 for the macro grid and
    /// 25 for driving when unset.
    pub per_behavior: Option<usize>,
    /// Extra rollouts with random actions, labelled as their own behavior.
    pub noise_demos: usize,
    pub noise_level: f64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            per_behavior: None,
            noise_demos: 0,
            noise_level: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub env: EnvSpec,
    #[serde(default)]
    pub demos: DemoSpec,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    /// Cluster count for `bcirl-em`.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_alpha")]
    pub crp_alpha: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_draws")]
    pub resample_draws: usize,
    /// Discount on feature counts and visitations.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_name() -> String {
    "run".into()
}
fn default_algo() -> Algo {
    Algo::BcirlCrp
}
fn default_m() -> usize {
    2
}
fn default_alpha() -> f64 {
    CrpConfig::default().alpha
}
fn default_lr() -> f64 {
    IrlConfig::default().learning_rate
}
fn default_grad_tol() -> f64 {
    IrlConfig::default().grad_tol
}
fn default_max_iters() -> usize {
    IrlConfig::default().max_iters
}
fn default_draws() -> usize {
    CrpConfig::default().resample_draws
}
fn default_gamma() -> f64 {
    IrlConfig::default().gamma
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_jobs() -> usize {
    1
}

/// Command-line values that replace their config key when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub algo: Option<Algo>,
    pub alpha: Option<f64>,
    pub lr: Option<f64>,
    pub max_iters: Option<usize>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(algo) = o.algo {
            self.algo = algo;
        }
        if let Some(alpha) = o.alpha {
            self.crp_alpha = alpha;
        }
        if let Some(lr) = o.lr {
            self.learning_rate = lr;
        }
        if let Some(n) = o.max_iters {
            self.max_iters = n;
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list must not be empty");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("name must be a non-empty path component");
        }
        self.crp_config(0).validate()?;
        if self.algo == Algo::BcirlEm && self.m == 0 {
            bail!("m must be at least 1");
        }
        Ok(())
    }

    pub fn irl_config(&self, seed: u64) -> IrlConfig {
        IrlConfig {
            learning_rate: self.learning_rate,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            gamma: self.gamma,
            seed,
            ..IrlConfig::default()
        }
    }

    pub fn em_config(&self, seed: u64) -> EmConfig {
        EmConfig {
            irl: self.irl_config(seed),
            ..EmConfig::default()
        }
    }

    pub fn crp_config(&self, seed: u64) -> CrpConfig {
        CrpConfig {
            alpha: self.crp_alpha,
            resample_draws: self.resample_draws,
            irl: self.irl_config(seed),
            ..CrpConfig::default()
        }
    }

    /// Where `gen-demos` writes and `run` reads the data for `seed`.
    pub fn data_dir(&self, seed: u64) -> PathBuf {
        self.out.join(&self.name).join("data").join(seed.to_string())
    }

    pub fn run_name(&self) -> String {
        format!("{}-{}", self.name, self.algo.name())
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out.join(self.run_name()).join(seed.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"env": {"macro_grid": {}}}"#).unwrap();
        assert_eq!(c.algo, Algo::BcirlCrp);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.env, EnvSpec::MacroGrid(MacroGridSpec::default()));
        c.validate().unwrap();
    }

    #[test]
    fn overrides_replace_keys() {
        let mut c: RunConfig = serde_json::from_str(r#"{"env": {"driving": {}}, "seeds": [1, 2]}"#).unwrap();
        c.apply(&Overrides {
            seeds: vec![7],
            algo: Some(Algo::Maxent),
            alpha: Some(5.0),
            ..Overrides::default()
        });
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.algo, Algo::Maxent);
        assert_eq!(c.crp_alpha, 5.0);
        assert_eq!(c.run_dir(7), PathBuf::from("out/run-maxent/7"));
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../configs/macro_grid.json"),
            include_str!("../../../configs/driving.json"),
            include_str!("../../../configs/driving_noise.json"),
        ] {
            let c: RunConfig = serde_json::from_str(text).unwrap();
            c.validate().unwrap();
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"env": {"driving": {}}, "alhpa": 1}"#).unwrap_err();
        assert!(err.to_string().contains("alhpa"));
    }
}
