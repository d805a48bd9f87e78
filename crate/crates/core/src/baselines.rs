//! Comparison controllers built from the same backward/forward machinery:
//! a deterministic box-constrained DDP and a soft-constrained minimax DDP
//! in the spirit of game-theoretic DDP.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::disturbance::DisturbanceDataset;
use crate::error::{Error, Result};
use crate::problem::OcpModel;
use crate::scalar::Real;
use crate::solver::{solve, solve_with, Adversary, Solution, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    DrDdp,
    BoxDdp,
    /// `gamma = None` calibrates the attenuation weight on a log grid.
    MinimaxDdp {
        gamma: Option<f64>,
    },
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::DrDdp => "dr-ddp",
            Controller::BoxDdp => "box-ddp",
            Controller::MinimaxDdp { .. } => "minimax-ddp",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "dr-ddp" | "drddp" => Ok(Controller::DrDdp),
            "box-ddp" | "boxddp" => Ok(Controller::BoxDdp),
            "minimax-ddp" | "minimax" | "gt-ddp" => Ok(Controller::MinimaxDdp { gamma: None }),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// Deterministic DDP: disturbances fixed at zero, control bounds enforced by
/// the projected-Newton backward pass.
pub fn solve_box_ddp<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    config: &SolverConfig,
) -> Result<Solution<T>> {
    solve_with(model, x0, Adversary::Disabled, config, None)
}

/// Minimax DDP: a single zero atom with penalty `gamma`, so the adversary
/// maximizes `cost - gamma |w|^2` with no data. Fails with a curvature error
/// when `gamma` is too small for the maximization to be concave.
pub fn solve_minimax_ddp<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    config: &SolverConfig,
    gamma: f64,
) -> Result<Solution<T>> {
    if !(gamma > 0.0) {
        return Err(Error::Config("minimax gamma must be positive".into()));
    }
    let dims = model.dims();
    let origin = DisturbanceDataset::zeros(dims.horizon, dims.n_w);
    let adversary = Adversary::Empirical { dataset: &origin, lambda: T::lit(gamma), strict_curvature: true };
    solve_with(model, x0, adversary, config, None)
}

/// Half-decade grid from 1e-2 to 1e8.
pub fn default_gamma_grid() -> Vec<f64> {
    (-4..=16).map(|k| 10f64.powf(k as f64 / 2.0)).collect()
}

/// Twice the smallest grid value for which the minimax solve keeps the
/// adversary curvature negative definite.
pub fn calibrate_minimax_gamma<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    config: &SolverConfig,
    grid: &[f64],
) -> Result<f64> {
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for gamma in grid {
        match solve_minimax_ddp(model, x0, config, gamma) {
            Ok(_) => return Ok(2.0 * gamma),
            Err(Error::Curvature { .. }) | Err(Error::Backward { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config("no minimax gamma on the grid keeps the adversary curvature negative definite".into()))
}

/// Solves with the requested controller. Returns the solution and, for the
/// minimax baseline, the attenuation weight used.
pub fn solve_controller<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    dataset: &DisturbanceDataset<T>,
    controller: Controller,
    config: &SolverConfig,
) -> Result<(Solution<T>, Option<f64>)> {
    match controller {
        Controller::DrDdp => Ok((solve(model, x0, dataset, config)?, None)),
        Controller::BoxDdp => Ok((solve_box_ddp(model, x0, config)?, None)),
        Controller::MinimaxDdp { gamma } => {
            let gamma = match gamma {
                Some(g) => g,
                None => calibrate_minimax_gamma(model, x0, config, &default_gamma_grid())?,
            };
            Ok((solve_minimax_ddp(model, x0, config, gamma)?, Some(gamma)))
        }
    }
}
