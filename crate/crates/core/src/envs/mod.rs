//! Benchmark environments and demonstration generators.

pub mod demos;
pub mod driving;
pub mod macro_grid;

pub use demos::{behavior_seed, generate_demos, inject_inconsistent_demos, noisy_policy, LabeledDemoSet, Rollout};
pub use driving::{build_driving_gridworld, driving_demos, scripted_policy, DrivingGrid, DrivingGridSpec, DrivingStyle, Zone};
pub use macro_grid::{build_macro_gridworld, macro_grid_demos, MacroGrid, MacroGridSpec};
