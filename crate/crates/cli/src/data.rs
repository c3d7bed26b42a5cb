//! Environment construction and the on-disk dataset layout.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use bcirl::envs::{
    build_driving_gridworld, build_macro_gridworld, driving_demos, inject_inconsistent_demos, macro_grid_demos,
    scripted_policy, behavior_seed, DrivingGrid, DrivingGridSpec, DrivingStyle, LabeledDemoSet, MacroGrid,
    MacroGridSpec, Rollout,
};
use bcirl::io::{write_json, DemoFile, LabelFile};
use bcirl::solver::{soft_value_iteration, SolverOptions};
use bcirl::{FeatureMap, TabularMdp};
use serde::{Deserialize, Serialize};

use crate::config::{DemoSpec, EnvSpec};

pub const DEMOS_FILE: &str = "demos.json";
pub const LABELS_FILE: &str = "labels.json";
pub const TRUTH_FILE: &str = "truth.json";

/// Ground truth written next to the demonstrations. Scripted driving
/// styles have no reward vector, so `thetas` is empty for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub behaviors: Vec<String>,
    pub thetas: Vec<Vec<f64>>,
}

pub enum Env {
    MacroGrid(MacroGrid),
    Driving(DrivingGrid),
}

impl Env {
    /// Builds the environment with its seed replaced by `seed`.
    pub fn build(spec: &EnvSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            EnvSpec::MacroGrid(s) => Env::MacroGrid(build_macro_gridworld(&MacroGridSpec { seed, ..s.clone() })?),
            EnvSpec::Driving(s) => Env::Driving(build_driving_gridworld(&DrivingGridSpec { seed, ..s.clone() })?),
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        match self {
            Env::MacroGrid(g) => &g.mdp,
            Env::Driving(g) => &g.mdp,
        }
    }

    pub fn features(&self) -> &FeatureMap {
        match self {
            Env::MacroGrid(g) => &g.features,
            Env::Driving(g) => &g.features,
        }
    }

    pub fn dataset(&self, spec: &DemoSpec, seed: u64) -> Result<(LabeledDemoSet, TruthFile)> {
        let (set, mut truth, base, rollout) = match self {
            Env::MacroGrid(g) => {
                let set = macro_grid_demos(g, spec.per_behavior.unwrap_or(1), seed)?;
                let truth = TruthFile {
                    behaviors: (0..g.rewards.len()).map(|k| format!("reward-{k}")).collect(),
                    thetas: g.rewards.iter().map(|t| t.as_slice().to_vec()).collect(),
                };
                let base = soft_value_iteration(&g.mdp, &g.features, &g.rewards[0], SolverOptions::default())?;
                let rollout = Rollout {
                    max_len: g.spec.demo_len,
                    goal: None,
                };
                (set, truth, base, rollout)
            }
            Env::Driving(g) => {
                let set = driving_demos(g, spec.per_behavior.unwrap_or(25), seed)?;
                let truth = TruthFile {
                    behaviors: DrivingStyle::ALL.iter().map(|s| format!("{s:?}").to_lowercase()).collect(),
                    thetas: Vec::new(),
                };
                (set, truth, scripted_policy(DrivingStyle::Aggressive, g), g.rollout())
            }
        };
        if spec.noise_demos == 0 {
            return Ok((set, truth));
        }
        let noise_seed = behavior_seed(seed, truth.behaviors.len());
        let set = inject_inconsistent_demos(
            &set,
            self.mdp(),
            &base,
            spec.noise_demos,
            spec.noise_level,
            rollout,
            noise_seed,
        )?;
        truth.behaviors.push("noise".into());
        Ok((set, truth))
    }
}

pub fn write_dataset(dir: &Path, set: &LabeledDemoSet, truth: &TruthFile) -> Result<()> {
    write_json(&dir.join(DEMOS_FILE), &DemoFile::from(&set.demos))?;
    write_json(
        &dir.join(LABELS_FILE),
        &LabelFile {
            labels: set.labels.clone(),
        },
    )?;
    write_json(&dir.join(TRUTH_FILE), truth)?;
    Ok(())
}

pub fn read_labels(dir: &Path) -> Result<Vec<usize>> {
    let file: LabelFile = bcirl::io::read_json(&dir.join(LABELS_FILE)).context("reading labels")?;
    Ok(file.labels)
}

/// `n=50 len=12/31.4/60 labels={0: 25, 1: 25}`
pub fn summary(set: &LabeledDemoSet) -> String {
    let lens: Vec<usize> = set.demos.iter().map(|t| t.len()).collect();
    let min = lens.iter().min().copied().unwrap_or(0);
    let max = lens.iter().max().copied().unwrap_or(0);
    let mean = lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64;
    let mut counts = BTreeMap::new();
    for &l in &set.labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    format!("n={} len={min}/{mean:.1}/{max} labels={counts:?}", set.len())
}
