//! Behavior-clustering maximum-entropy inverse reinforcement learning on
//! tabular MDPs.
//!
//! The crate learns one or more linear reward functions from demonstrations:
//!
//! - [`irl::run_maxent_irl`] fits a single reward.
//! - [`em::run_parametric_bcirl`] fits a fixed number of rewards with EM.
//! - [`crp::run_nonparametric_bcirl`] grows and prunes clusters under a
//!   Chinese-restaurant-process prior.
//!
//! ```
//! use bcirl::envs::{build_macro_gridworld, MacroGridSpec};
//! use bcirl::solver::{soft_value_iteration, SolverOptions};
//!
//! let grid = build_macro_gridworld(&MacroGridSpec::default()).unwrap();
//! let pi = soft_value_iteration(&grid.mdp, &grid.features, &grid.rewards[0], SolverOptions::default()).unwrap();
//! assert!(pi.converged);
//! ```

pub mod crp;
pub mod em;
pub mod envs;
pub mod error;
pub mod eval;
pub mod io;
pub mod irl;
pub mod mdp;
pub mod solver;

pub use crp::{run_nonparametric_bcirl, CrpConfig, CrpOutcome, CrpTrace};
pub use em::{run_parametric_bcirl, ClusterModel, EmConfig, EmOutcome, EmTrace, ResponsibilityMatrix};
pub use error::{Error, Result};
pub use irl::{run_maxent_irl, IrlConfig, IrlOutcome, IrlTrace};
pub use mdp::{DemonstrationSet, FeatureMap, RewardParams, TabularMdp, Trajectory};
pub use solver::{soft_value_iteration, SoftPolicy, SolverOptions, VisitationTable};

/// The guide's code samples, compiled and run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/mdps.md")]
    pub mod mdps {}
    #[doc = include_str!("../../../book/src/maxent.md")]
    pub mod maxent {}
    #[doc = include_str!("../../../book/src/em.md")]
    pub mod em {}
    #[doc = include_str!("../../../book/src/crp.md")]
    pub mod crp {}
    #[doc = include_str!("../../../book/src/environments.md")]
    pub mod environments {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
