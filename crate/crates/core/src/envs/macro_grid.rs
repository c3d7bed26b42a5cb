//! Square gridworld with slippery compass moves and macro-cell indicator
//! features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::demos::{behavior_seed, generate_demos, LabeledDemoSet, Rollout};
use crate::error::{Error, Result};
use crate::irl::seeded_rng;
use crate::mdp::{FeatureMap, RewardParams, TabularMdp};
use crate::solver::{soft_value_iteration, SolverOptions};

/// Compass moves as `(d_row, d_col)`: north, south, east, west.
pub const MOVES: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacroGridSpec {
    pub grid_size: usize,
    pub macro_size: usize,
    /// Probability that the intended move fails and a uniformly random
    /// direction executes instead.
    pub slip_prob: f64,
    pub num_rewards: usize,
    /// Probability that a macro-cell reward is zero.
    pub reward_zero_prob: f64,
    /// Range of the nonzero macro-cell rewards.
    pub reward_range: (f64, f64),
    pub discount: f64,
    pub demo_len: usize,
    pub seed: u64,
}

impl Default for MacroGridSpec {
    fn default() -> Self {
        Self {
            grid_size: 8,
            macro_size: 2,
            slip_prob: 0.2,
            num_rewards: 3,
            reward_zero_prob: 0.8,
            reward_range: (-1.0, 1.0),
            discount: 0.9,
            demo_len: 24,
            seed: 0,
        }
    }
}

impl MacroGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.macro_size == 0 || self.grid_size % self.macro_size != 0 {
            return Err(Error::Config("grid_size must be a positive multiple of macro_size".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::Config("slip_prob must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.reward_zero_prob) {
            return Err(Error::Config("reward_zero_prob must lie in [0, 1]".into()));
        }
        if !(self.reward_range.0 <= self.reward_range.1) {
            return Err(Error::Config("reward_range must be ordered".into()));
        }
        if self.demo_len == 0 {
            return Err(Error::Config("demo_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn feature_dim(&self) -> usize {
        let per_side = self.grid_size / self.macro_size;
        per_side * per_side
    }

    pub fn macro_cell(&self, state: usize) -> usize {
        let (row, col) = (state / self.grid_size, state % self.grid_size);
        let per_side = self.grid_size / self.macro_size;
        (row / self.macro_size) * per_side + col / self.macro_size
    }
}

#[derive(Debug, Clone)]
pub struct MacroGrid {
    pub spec: MacroGridSpec,
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub rewards: Vec<RewardParams>,
}

/// Builds the MDP and features, and samples `num_rewards` ground-truth
/// rewards from the spec's seed.
pub fn build_macro_gridworld(spec: &MacroGridSpec) -> Result<MacroGrid> {
    spec.validate()?;
    let n = spec.grid_size;
    let ns = spec.num_states();
    let na = MOVES.len();
    let target = |s: usize, (dr, dc): (i64, i64)| -> usize {
        let (r, c) = ((s / n) as i64 + dr, (s % n) as i64 + dc);
        if r < 0 || c < 0 || r >= n as i64 || c >= n as i64 {
            s
        } else {
            r as usize * n + c as usize
        }
    };
    let mut transition = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            row[target(s, MOVES[a])] += 1.0 - spec.slip_prob;
            if spec.slip_prob > 0.0 {
                for &m in &MOVES {
                    row[target(s, m)] += spec.slip_prob / na as f64;
                }
            }
        }
    }
    let mdp = TabularMdp::new(ns, na, transition, spec.discount, vec![1.0 / ns as f64; ns])?;

    let dim = spec.feature_dim();
    let mut per_state = vec![0.0; ns * dim];
    for s in 0..ns {
        per_state[s * dim + spec.macro_cell(s)] = 1.0;
    }
    let features = FeatureMap::from_state_features(na, dim, &per_state)?;

    let mut rng = seeded_rng(spec.seed);
    let rewards = (0..spec.num_rewards)
        .map(|_| sample_macro_reward(spec, &mut rng))
        .collect();
    Ok(MacroGrid {
        spec: spec.clone(),
        mdp,
        features,
        rewards,
    })
}

/// Each macro cell is zero with probability `reward_zero_prob`, otherwise
/// uniform over `reward_range`.
pub fn sample_macro_reward<R: Rng>(spec: &MacroGridSpec, rng: &mut R) -> RewardParams {
    let (lo, hi) = spec.reward_range;
    RewardParams::new(
        (0..spec.feature_dim())
            .map(|_| {
                if rng.random::<f64>() < spec.reward_zero_prob {
                    0.0
                } else {
                    lo + (hi - lo) * rng.random::<f64>()
                }
            })
            .collect(),
    )
}

/// `per_reward` rollouts of length `spec.demo_len` from each ground-truth
/// reward's soft-optimal policy, labelled by reward index.
pub fn macro_grid_demos(grid: &MacroGrid, per_reward: usize, seed: u64) -> Result<LabeledDemoSet> {
    let rollout = Rollout {
        max_len: grid.spec.demo_len,
        goal: None,
    };
    let parts = grid
        .rewards
        .iter()
        .enumerate()
        .map(|(k, theta)| {
            let policy = soft_value_iteration(&grid.mdp, &grid.features, theta, SolverOptions::default())?;
            let demos = generate_demos(&grid.mdp, &policy, per_reward, rollout, behavior_seed(seed, k))?;
            LabeledDemoSet::new(demos, vec![k; per_reward])
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDemoSet::concat(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let g = build_macro_gridworld(&MacroGridSpec::default()).unwrap();
        assert_eq!(g.mdp.num_states(), 64);
        assert_eq!(g.mdp.num_actions(), 4);
        assert_eq!(g.features.dim(), 16);
        assert_eq!(g.rewards.len(), 3);
    }

    #[test]
    fn slip_free_grid_is_deterministic() {
        let spec = MacroGridSpec {
            slip_prob: 0.0,
            ..MacroGridSpec::default()
        };
        let g = build_macro_gridworld(&spec).unwrap();
        for s in 0..64 {
            for a in 0..4 {
                let row = g.mdp.row(s, a);
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            }
        }
        // north from the top row stays put, east from cell 0 goes to 1.
        assert_eq!(g.mdp.prob(0, 0, 0), 1.0);
        assert_eq!(g.mdp.prob(0, 2, 1), 1.0);
    }

    #[test]
    fn slip_mass_is_spread() {
        let g = build_macro_gridworld(&MacroGridSpec::default()).unwrap();
        // interior cell 9 (row 1, col 1) moving east.
        assert!((g.mdp.prob(9, 2, 10) - 0.85).abs() < 1e-12);
        assert!((g.mdp.prob(9, 2, 1) - 0.05).abs() < 1e-12);
        // corner 0 moving north: north and west slips stay put.
        assert!((g.mdp.prob(0, 0, 0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn macro_indicators_partition_states() {
        let g = build_macro_gridworld(&MacroGridSpec::default()).unwrap();
        for s in 0..64 {
            for a in 0..4 {
                let phi = g.features.get(s, a);
                assert_eq!(phi.iter().filter(|&&x| x == 1.0).count(), 1);
                assert_eq!(phi.iter().sum::<f64>(), 1.0);
            }
        }
        let spec = &g.spec;
        assert_eq!(spec.macro_cell(0), 0);
        assert_eq!(spec.macro_cell(9), 0);
        assert_eq!(spec.macro_cell(63), 15);
    }

    #[test]
    fn rejects_indivisible_grid() {
        let spec = MacroGridSpec {
            grid_size: 7,
            ..MacroGridSpec::default()
        };
        assert!(build_macro_gridworld(&spec).is_err());
    }
}
