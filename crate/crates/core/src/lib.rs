//! Distributionally robust differential dynamic programming.
//!
//! The solver works on any [`OcpModel`] and is generic over the scalar type;
//! the aliases at the bottom fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod baselines;
pub mod benchmarks;
pub mod disturbance;
pub mod error;
pub mod evaluation;
pub mod forward;
pub mod problem;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod transport;

pub use backward::{NominalTrajectories, PolicyStep};
pub use baselines::Controller;
pub use disturbance::{DisturbanceDataset, TrueDistribution};
pub use error::{Error, Result};
pub use evaluation::{EvalConfig, EvalReport};
pub use problem::{Dims, OcpModel};
pub use scalar::Real;
pub use solver::{solve, tune_lambda, Solution, SolverConfig};

pub type Dataset = DisturbanceDataset<f64>;
pub type Trajectories = NominalTrajectories<f64>;
pub type Policy = PolicyStep<f64>;
pub type SolutionF64 = Solution<f64>;
