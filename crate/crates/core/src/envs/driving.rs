//! Multi-lane driving gridworld with slower traffic, in the traffic frame.
//!
//! Traffic moves at constant speed, so in the frame moving with it the other
//! cars stand still and the agent advances `agent_speed - traffic_speed`
//! cells per step. A handful of seeded traffic layouts are folded into the
//! state; the initial distribution picks a layout and a start lane at random.
//! Reaching the far end of the track leads to an absorbing goal state with
//! zero features.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::demos::{behavior_seed, generate_demos, LabeledDemoSet, Rollout};
use crate::error::{Error, Result};
use crate::irl::seeded_rng;
use crate::mdp::{FeatureMap, TabularMdp};
use crate::solver::SoftPolicy;

pub const NUM_ACTIONS: usize = 6;
pub const RIGHT: usize = 0;
pub const LEFT: usize = 1;
pub const HARD_RIGHT: usize = 2;
pub const HARD_LEFT: usize = 3;
pub const FORWARD: usize = 4;
pub const BREAK: usize = 5;
pub const ACTION_NAMES: [&str; NUM_ACTIONS] = ["right", "left", "hard-right", "hard-left", "forward", "break"];

/// Lateral offset of each action (lanes grow to the right).
const LANE_SHIFT: [i64; NUM_ACTIONS] = [1, -1, 2, -2, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Far,
    Vicinity,
    Overtaking,
}

impl Zone {
    pub fn index(self) -> usize {
        match self {
            Zone::Far => 0,
            Zone::Vicinity => 1,
            Zone::Overtaking => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivingGridSpec {
    pub lanes: usize,
    /// Track length in cells.
    pub length: usize,
    /// Upper bound on cars per layout; placement skips cells that crowd an
    /// existing car.
    pub num_other_cars: usize,
    pub agent_speed: usize,
    pub traffic_speed: usize,
    pub action_success: f64,
    /// Number of distinct seeded traffic layouts.
    pub num_layouts: usize,
    /// Traffic occupies lanes `traffic_min_lane..lanes`.
    pub traffic_min_lane: usize,
    /// Longitudinal distance (cells ahead) up to which a car is "in the vicinity".
    pub vicinity_cells: usize,
    /// Cars further than this many lanes away are ignored by the zone map.
    pub lateral_reach: usize,
    pub discount: f64,
    pub max_states: usize,
    /// Scripted-policy probability of the style's preferred action.
    pub style_prob: f64,
    pub seed: u64,
}

impl Default for DrivingGridSpec {
    fn default() -> Self {
        Self {
            lanes: 3,
            length: 60,
            num_other_cars: 16,
            agent_speed: 2,
            traffic_speed: 1,
            action_success: 0.95,
            num_layouts: 3,
            traffic_min_lane: 2,
            vicinity_cells: 3,
            lateral_reach: 2,
            discount: 0.95,
            max_states: 50_000,
            style_prob: 0.95,
            seed: 0,
        }
    }
}

impl DrivingGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lanes == 0 {
            return Err(Error::Config("lanes must be at least 1".into()));
        }
        if !(self.action_success > 0.0 && self.action_success <= 1.0) {
            return Err(Error::Config("action_success must lie in (0, 1]".into()));
        }
        if self.agent_speed <= self.traffic_speed {
            return Err(Error::Config("agent must be faster than traffic".into()));
        }
        if self.length < 8 || self.num_layouts == 0 {
            return Err(Error::Config("track needs length >= 8 and at least one layout".into()));
        }
        if self.traffic_min_lane >= self.lanes {
            return Err(Error::Config("traffic_min_lane must be below lanes".into()));
        }
        if !(self.style_prob > 0.0 && self.style_prob <= 1.0) {
            return Err(Error::Config("style_prob must lie in (0, 1]".into()));
        }
        let states = self.num_states();
        if states > self.max_states {
            return Err(Error::Config(format!(
                "driving grid needs {states} states, above the cap of {}",
                self.max_states
            )));
        }
        let cells = (self.length - 6) * (self.lanes - self.traffic_min_lane);
        if self.num_other_cars > cells {
            return Err(Error::Config("too many cars for the track".into()));
        }
        Ok(())
    }

    /// Road states plus one absorbing goal.
    pub fn num_states(&self) -> usize {
        self.num_layouts * self.length * self.lanes + 1
    }

    pub fn goal_state(&self) -> usize {
        self.num_states() - 1
    }

    pub fn feature_dim(&self) -> usize {
        3 * NUM_ACTIONS + 1
    }

    fn relative_speed(&self) -> usize {
        self.agent_speed - self.traffic_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Car {
    pub x: usize,
    pub lane: usize,
}

/// Position of the agent on the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoadCell {
    pub layout: usize,
    pub x: usize,
    pub lane: usize,
}

#[derive(Debug, Clone)]
pub struct DrivingGrid {
    pub spec: DrivingGridSpec,
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub layouts: Vec<Vec<Car>>,
}

impl DrivingGrid {
    pub fn state_of(&self, cell: RoadCell) -> usize {
        (cell.layout * self.spec.length + cell.x) * self.spec.lanes + cell.lane
    }

    /// `None` for the goal state.
    pub fn cell_of(&self, state: usize) -> Option<RoadCell> {
        if state >= self.spec.goal_state() {
            return None;
        }
        let lanes = self.spec.lanes;
        let length = self.spec.length;
        Some(RoadCell {
            layout: state / (length * lanes),
            x: (state / lanes) % length,
            lane: state % lanes,
        })
    }

    fn occupied(&self, layout: usize, x: usize, lane: usize) -> bool {
        self.layouts[layout].iter().any(|c| c.x == x && c.lane == lane)
    }

    /// The nearest relevant car and the zone it puts the agent in.
    pub fn zone(&self, state: usize) -> (Zone, Option<Car>) {
        let Some(cell) = self.cell_of(state) else {
            return (Zone::Far, None);
        };
        let reach = self.spec.lateral_reach as i64;
        let near = |c: &&Car| (c.lane as i64 - cell.lane as i64).abs() <= reach;
        let cars = &self.layouts[cell.layout];
        let overtaking = cars
            .iter()
            .filter(near)
            .filter(|c| c.x <= cell.x && cell.x <= c.x + 1)
            .min_by_key(|c| ((c.lane as i64 - cell.lane as i64).abs(), cell.x - c.x));
        if let Some(c) = overtaking {
            return (Zone::Overtaking, Some(*c));
        }
        let ahead = cars
            .iter()
            .filter(near)
            .filter(|c| c.x > cell.x && c.x - cell.x <= self.spec.vicinity_cells)
            .min_by_key(|c| (c.x - cell.x, (c.lane as i64 - cell.lane as i64).abs()));
        match ahead {
            Some(c) => (Zone::Vicinity, Some(*c)),
            None => (Zone::Far, None),
        }
    }

    /// Cell reached when action `a` succeeds from road cell `cell`.
    fn intended(&self, cell: RoadCell, a: usize) -> Option<RoadCell> {
        let max_lane = self.spec.lanes as i64 - 1;
        let lane = (cell.lane as i64 + LANE_SHIFT[a]).clamp(0, max_lane) as usize;
        let dx = if a == BREAK { 0 } else { self.spec.relative_speed() };
        let x = cell.x + dx;
        if x >= self.spec.length - 1 {
            return None;
        }
        if self.occupied(cell.layout, x, lane) {
            return Some(cell);
        }
        Some(RoadCell { x, lane, ..cell })
    }

    /// Normalised longitudinal distance to the end of the track.
    pub fn distance_to_goal(&self, state: usize) -> f64 {
        match self.cell_of(state) {
            Some(cell) => (self.spec.length - 1 - cell.x) as f64 / (self.spec.length - 1) as f64,
            None => 0.0,
        }
    }
}

fn sample_layout<R: Rng>(spec: &DrivingGridSpec, rng: &mut R) -> Vec<Car> {
    let mut cells: Vec<Car> = (4..spec.length - 2)
        .flat_map(|x| (spec.traffic_min_lane..spec.lanes).map(move |lane| Car { x, lane }))
        .collect();
    cells.shuffle(rng);
    let mut cars: Vec<Car> = Vec::with_capacity(spec.num_other_cars);
    for cell in cells {
        if cars.len() == spec.num_other_cars {
            break;
        }
        // keep cars apart longitudinally in the same and adjacent lanes
        let clash = cars
            .iter()
            .any(|c| (c.x as i64 - cell.x as i64).abs() < 3 && (c.lane as i64 - cell.lane as i64).abs() <= 1);
        if !clash {
            cars.push(cell);
        }
    }
    cars.sort_by_key(|c| (c.x, c.lane));
    cars
}

/// Builds the driving MDP and its 19 features: zone × action indicators
/// followed by the scaled distance to the goal.
pub fn build_driving_gridworld(spec: &DrivingGridSpec) -> Result<DrivingGrid> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let layouts: Vec<Vec<Car>> = (0..spec.num_layouts).map(|_| sample_layout(spec, &mut rng)).collect();

    let ns = spec.num_states();
    let goal = spec.goal_state();
    let mut initial = vec![0.0; ns];
    let start_mass = 1.0 / (spec.num_layouts * spec.lanes) as f64;

    // A placeholder MDP lets the geometry helpers run before the real one exists.
    let mut grid = DrivingGrid {
        spec: spec.clone(),
        mdp: TabularMdp::new(1, 1, vec![1.0], 0.0, vec![1.0])?,
        features: FeatureMap::new(1, 1, 1, vec![0.0])?,
        layouts,
    };

    let mut transition = vec![0.0; ns * NUM_ACTIONS * ns];
    for s in 0..ns {
        for a in 0..NUM_ACTIONS {
            let row = &mut transition[(s * NUM_ACTIONS + a) * ns..(s * NUM_ACTIONS + a + 1) * ns];
            let Some(cell) = grid.cell_of(s) else {
                row[goal] = 1.0;
                continue;
            };
            let next = grid.intended(cell, a).map_or(goal, |c| grid.state_of(c));
            row[next] += spec.action_success;
            row[s] += 1.0 - spec.action_success;
        }
    }
    for layout in 0..spec.num_layouts {
        for lane in 0..spec.lanes {
            initial[grid.state_of(RoadCell { layout, x: 0, lane })] = start_mass;
        }
    }
    let mdp = TabularMdp::new(ns, NUM_ACTIONS, transition, spec.discount, initial)?;

    let dim = spec.feature_dim();
    let mut values = vec![0.0; ns * NUM_ACTIONS * dim];
    for s in 0..goal {
        let zone = grid.zone(s).0;
        let dist = grid.distance_to_goal(s);
        for a in 0..NUM_ACTIONS {
            let phi = &mut values[(s * NUM_ACTIONS + a) * dim..(s * NUM_ACTIONS + a + 1) * dim];
            phi[zone.index() * NUM_ACTIONS + a] = 1.0;
            phi[dim - 1] = dist;
        }
    }
    grid.features = FeatureMap::new(ns, NUM_ACTIONS, dim, values)?;
    grid.mdp = mdp;
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrivingStyle {
    /// Overtakes and cuts in front of the car it just passed.
    Aggressive,
    /// Keeps as far from traffic as it can.
    Evasive,
}

/// Hard-coded stochastic policy for a driving style: the preferred action
/// gets `spec.style_prob`, the rest is spread evenly.
pub fn scripted_policy(style: DrivingStyle, grid: &DrivingGrid) -> SoftPolicy {
    let ns = grid.spec.num_states();
    let p = grid.spec.style_prob;
    let rest = (1.0 - p) / (NUM_ACTIONS - 1) as f64;
    let mut probs = vec![0.0; ns * NUM_ACTIONS];
    for s in 0..ns {
        let preferred = match grid.cell_of(s) {
            Some(cell) => preferred_action(style, grid, s, cell),
            None => FORWARD,
        };
        for a in 0..NUM_ACTIONS {
            probs[s * NUM_ACTIONS + a] = if a == preferred { p } else { rest };
        }
    }
    SoftPolicy::from_probs(ns, NUM_ACTIONS, probs).expect("scripted rows are distributions")
}

impl DrivingStyle {
    pub const ALL: [DrivingStyle; 2] = [DrivingStyle::Aggressive, DrivingStyle::Evasive];
}

impl DrivingGrid {
    /// Episodes end at the goal or after twice the track length.
    pub fn rollout(&self) -> Rollout {
        Rollout {
            max_len: 2 * self.spec.length,
            goal: Some(self.spec.goal_state()),
        }
    }
}

/// `per_style` scripted rollouts of each style, aggressive first, labelled
/// by position in [`DrivingStyle::ALL`].
pub fn driving_demos(grid: &DrivingGrid, per_style: usize, seed: u64) -> Result<LabeledDemoSet> {
    let parts = DrivingStyle::ALL
        .iter()
        .enumerate()
        .map(|(k, &style)| {
            let policy = scripted_policy(style, grid);
            let demos = generate_demos(&grid.mdp, &policy, per_style, grid.rollout(), behavior_seed(seed, k))?;
            LabeledDemoSet::new(demos, vec![k; per_style])
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDemoSet::concat(parts)
}

fn toward(from: usize, to: usize) -> usize {
    if to > from {
        RIGHT
    } else {
        LEFT
    }
}

fn preferred_action(style: DrivingStyle, grid: &DrivingGrid, state: usize, cell: RoadCell) -> usize {
    let (zone, car) = grid.zone(state);
    let Some(car) = car else {
        return FORWARD;
    };
    let last_lane = grid.spec.lanes - 1;
    match (style, zone) {
        (_, Zone::Far) => FORWARD,
        (DrivingStyle::Aggressive, Zone::Vicinity) => {
            if car.lane == cell.lane {
                // pass on the left when there is room
                if cell.lane > 0 {
                    LEFT
                } else {
                    RIGHT
                }
            } else {
                FORWARD
            }
        }
        (DrivingStyle::Aggressive, Zone::Overtaking) => {
            if car.lane == cell.lane {
                FORWARD
            } else {
                toward(cell.lane, car.lane)
            }
        }
        (DrivingStyle::Evasive, _) => {
            let away = if car.lane >= cell.lane { LEFT } else { RIGHT };
            let blocked = (away == LEFT && cell.lane == 0) || (away == RIGHT && cell.lane == last_lane);
            if blocked {
                FORWARD
            } else {
                away
            }
        }
    }
}
