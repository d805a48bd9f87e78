//! The outer DR-DDP loop and penalty tuning.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::backward::{
    backward_pass, BackwardOptions, GainFailure, NominalTrajectories, Penalty, PolicyStep, Regularization,
};
use crate::disturbance::DisturbanceDataset;
use crate::error::{Error, Result};
use crate::evaluation::estimate_sup_j_lambda;
use crate::forward::{clamp_control, draw_atom_schedule, line_search, rollout, LineSearchConfig};
use crate::problem::OcpModel;
use crate::rng::{substream, Stream};
use crate::scalar::{max_abs, Real};
use crate::transport::{guaranteed_bound, AmbiguityParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Ambiguity radius, only used for bound reporting.
    pub theta: f64,
    pub max_iters: usize,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub regularization: Regularization,
    pub line_search: LineSearchConfig,
    pub seed: u64,
    pub gauss_newton: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1e4,
            theta: 0.1,
            max_iters: 200,
            cost_tolerance: 1e-6,
            gradient_tolerance: 1e-6,
            regularization: Regularization::default(),
            line_search: LineSearchConfig::default(),
            seed: 0,
            gauss_newton: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(self.cost_tolerance > 0.0) || !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::Config("theta must be nonnegative".into()));
        }
        let ls = &self.line_search;
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0) || !(ls.alpha0 > 0.0 && ls.alpha0 <= 1.0) || ls.max_trials == 0 {
            return Err(Error::Config(
                "line search needs alpha0 in (0, 1], backtrack in (0, 1) and at least one trial".into(),
            ));
        }
        Ok(())
    }
}

/// Who chooses the disturbance during the solve.
#[derive(Debug, Clone, Copy)]
pub enum Adversary<'a, T: Real> {
    /// Disturbances fixed at zero, no penalty terms.
    Disabled,
    Empirical {
        dataset: &'a DisturbanceDataset<T>,
        lambda: T,
        /// Report a curvature error instead of regularizing the adversary.
        strict_curvature: bool,
    },
}

impl<'a, T: Real> Adversary<'a, T> {
    pub fn penalty(&self) -> Option<Penalty<'a, T>> {
        match *self {
            Adversary::Disabled => None,
            Adversary::Empirical { dataset, lambda, .. } => Some(Penalty { dataset, lambda }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost_penalized: f64,
    pub cost_nominal: f64,
    pub alpha: f64,
    pub mu: f64,
    pub accepted: bool,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    /// Policies with the accepted step size folded into the feedforwards.
    pub policies: Vec<PolicyStep<T>>,
    /// Trajectories the policies are expanded around.
    pub reference: NominalTrajectories<T>,
    /// Trajectories produced by the last accepted rollout.
    pub nominal: NominalTrajectories<T>,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalty weight of the adversary, if any.
    pub lambda: Option<f64>,
}

impl<T: Real> Solution<T> {
    /// Wall time of each iteration in seconds.
    pub fn timing(&self) -> Vec<f64> {
        self.history.iter().filter(|r| r.iteration > 0).map(|r| r.wall_time).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.history.iter().rev().find(|r| r.accepted).map_or(f64::NAN, |r| r.cost_penalized)
    }

    /// Control law `u_bar + k + K (x - x_bar)` at step `t`, clamped.
    pub fn control<M: OcpModel<T> + ?Sized>(&self, model: &M, t: usize, x: &DVector<T>) -> DVector<T> {
        let p = &self.policies[t];
        let mut u = &self.reference.u[t] + &p.k + &p.gain_k * (x - &self.reference.x[t]);
        clamp_control(&mut u, &model.control_lower(), &model.control_upper());
        u
    }

    /// Writes `iteration, J_lambda, nominal_cost, alpha, mu`.
    pub fn write_iterations_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "J_lambda", "nominal_cost", "alpha", "mu", "accepted"])?;
        for r in &self.history {
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.cost_penalized),
                format!("{:e}", r.cost_nominal),
                format!("{:e}", r.alpha),
                format!("{:e}", r.mu),
                u8::from(r.accepted).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nominal from `controls` (zero if absent) with the disturbance at the
/// empirical mean, or at zero when the adversary is disabled.
fn initial_nominal<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    adversary: &Adversary<'_, T>,
    controls: Option<&[DVector<T>]>,
) -> Result<NominalTrajectories<T>> {
    let dims = model.dims();
    let lower = model.control_lower();
    let upper = model.control_upper();
    let mut x = vec![x0.clone()];
    let mut us = Vec::with_capacity(dims.horizon);
    let mut ws = Vec::with_capacity(dims.horizon);
    for t in 0..dims.horizon {
        let mut u = match controls {
            Some(c) => c[t].clone(),
            None => DVector::zeros(dims.n_u),
        };
        if u.len() != dims.n_u {
            return Err(Error::Dimension { context: "initial control", expected: dims.n_u, actual: u.len() });
        }
        clamp_control(&mut u, &lower, &upper);
        let w = match adversary {
            Adversary::Disabled => DVector::zeros(dims.n_w),
            Adversary::Empirical { dataset, .. } => dataset.mean(t).clone(),
        };
        let next = model.dynamics(&x[t], &u, &w, t);
        x.push(next);
        us.push(u);
        ws.push(w);
    }
    Ok(NominalTrajectories { x, u: us, w: ws })
}

fn check_inputs<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    adversary: &Adversary<'_, T>,
    controls: Option<&[DVector<T>]>,
) -> Result<()> {
    let dims = model.dims();
    if x0.len() != dims.n_x {
        return Err(Error::Dimension { context: "initial state", expected: dims.n_x, actual: x0.len() });
    }
    if let Some(c) = controls {
        if c.len() != dims.horizon {
            return Err(Error::Dimension {
                context: "initial control sequence",
                expected: dims.horizon,
                actual: c.len(),
            });
        }
    }
    let lower = model.control_lower();
    let upper = model.control_upper();
    if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
        return Err(Error::Config("control lower bound exceeds upper bound".into()));
    }
    if let Adversary::Empirical { dataset, lambda, .. } = adversary {
        if dataset.horizon() != dims.horizon {
            return Err(Error::Dimension {
                context: "dataset horizon",
                expected: dims.horizon,
                actual: dataset.horizon(),
            });
        }
        if dataset.dim() != dims.n_w {
            return Err(Error::Dimension { context: "dataset disturbance", expected: dims.n_w, actual: dataset.dim() });
        }
        if !(*lambda > T::zero()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
    }
    Ok(())
}

/// DR-DDP with the dataset and the penalty weight from `config`.
pub fn solve<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    dataset: &DisturbanceDataset<T>,
    config: &SolverConfig,
) -> Result<Solution<T>> {
    let adversary = Adversary::Empirical { dataset, lambda: T::lit(config.lambda), strict_curvature: false };
    solve_with(model, x0, adversary, config, None)
}

/// The general loop shared by DR-DDP and the baselines.
pub fn solve_with<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    adversary: Adversary<'_, T>,
    config: &SolverConfig,
    controls: Option<&[DVector<T>]>,
) -> Result<Solution<T>> {
    config.validate()?;
    check_inputs(model, x0, &adversary, controls)?;
    let dims = model.dims();
    let penalty = adversary.penalty();
    let strict = matches!(adversary, Adversary::Empirical { strict_curvature: true, .. });
    let n_atoms = penalty.map_or(0, |p| p.dataset.sample_count());
    let atoms = draw_atom_schedule(&mut substream(config.seed, Stream::ForwardPass, 0), dims.horizon, n_atoms);

    let mut nominal = initial_nominal(model, x0, &adversary, controls)?;
    let zero: Vec<PolicyStep<T>> =
        (0..dims.horizon).map(|_| PolicyStep::zeros(dims.n_x, dims.n_u, dims.n_w, n_atoms)).collect();
    let start = rollout(model, &nominal, &zero, T::zero(), &atoms, penalty);
    if start.diverged {
        return Err(Error::Backward { iteration: 0, step: 0, reason: "initial rollout diverged".into() });
    }
    let mut cost = start.cost_penalized;
    let mut cost_nominal = start.cost_nominal;
    let mut reg = config.regularization;
    let mut history = vec![IterationRecord {
        iteration: 0,
        cost_penalized: cost.as_f64(),
        cost_nominal: start.cost_nominal.as_f64(),
        alpha: 0.0,
        mu: reg.mu,
        accepted: true,
        wall_time: 0.0,
    }];
    let mut policies = zero;
    let mut reference = nominal.clone();
    let mut warm: Option<Vec<PolicyStep<T>>> = None;
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=config.max_iters {
        iterations = iteration;
        let clock = Instant::now();
        let back = loop {
            let options = BackwardOptions { mu: reg.mu, gauss_newton: config.gauss_newton };
            match backward_pass(model, &nominal, penalty, options, warm.as_deref()) {
                Ok(b) => break b,
                Err(f) => {
                    if strict && f.cause == GainFailure::Adversary {
                        return Err(Error::Curvature {
                            step: f.step,
                            penalty: penalty.map_or(f64::NAN, |p| p.lambda.as_f64()),
                        });
                    }
                    log::debug!("iteration {iteration}: {} at step {} (mu {:e})", f.cause.describe(), f.step, reg.mu);
                    if !reg.bump() {
                        return Err(Error::Backward { iteration, step: f.step, reason: f.cause.describe().into() });
                    }
                }
            }
        };
        let max_k = back.policies.iter().fold(T::zero(), |m, p| m.max(max_abs(&p.k)));
        if max_k < T::lit(config.gradient_tolerance) {
            policies = back.policies;
            reference = nominal.clone();
            history.push(IterationRecord {
                iteration,
                cost_penalized: cost.as_f64(),
                cost_nominal: cost_nominal.as_f64(),
                alpha: 0.0,
                mu: reg.mu,
                accepted: false,
                wall_time: clock.elapsed().as_secs_f64(),
            });
            converged = true;
            break;
        }
        let trial =
            line_search(model, &nominal, cost, &back.policies, &back.expected, &atoms, penalty, &config.line_search);
        let wall_time = clock.elapsed().as_secs_f64();
        history.push(IterationRecord {
            iteration,
            cost_penalized: trial.cost_penalized.as_f64(),
            cost_nominal: trial.cost_nominal.as_f64(),
            alpha: trial.alpha.as_f64(),
            mu: reg.mu,
            accepted: trial.accepted,
            wall_time,
        });
        if trial.accepted {
            let change = (cost - trial.cost_penalized).abs() / cost.abs().max(T::one());
            policies = back.policies.iter().map(|p| p.scaled(trial.alpha)).collect();
            reference = std::mem::replace(&mut nominal, trial.trajectories);
            cost = trial.cost_penalized;
            cost_nominal = trial.cost_nominal;
            warm = Some(back.policies);
            reg.relax();
            log::debug!("iteration {iteration}: J {:e}, alpha {:e}", cost.as_f64(), trial.alpha.as_f64());
            if change < T::lit(config.cost_tolerance) {
                converged = true;
                break;
            }
        } else if !reg.bump() {
            log::info!("line search failed at the regularization cap, stopping at iteration {iteration}");
            break;
        }
    }
    Ok(Solution {
        policies,
        reference,
        nominal,
        history,
        iterations,
        converged,
        lambda: penalty.map(|p| p.lambda.as_f64()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub lambda: f64,
    pub penalty_term: f64,
    pub sup_j_lambda: f64,
    pub bound: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub lambda_star: f64,
    pub estimates: Vec<BoundEstimate>,
}

impl TuningResult {
    /// Writes `lambda, penalty_term, sup_J_lambda_est, bound, minimizer`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "penalty_term", "sup_J_lambda_est", "bound", "converged", "minimizer"])?;
        for e in &self.estimates {
            w.write_record([
                format!("{:e}", e.lambda),
                format!("{:e}", e.penalty_term),
                format!("{:e}", e.sup_j_lambda),
                format!("{:e}", e.bound),
                u8::from(e.converged).to_string(),
                u8::from(e.lambda == self.lambda_star).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid search for the penalty weight minimizing `lambda T theta^2 + sup J_lambda`,
/// with the supremum estimated by `eval_runs` rollouts under the computed
/// worst-case distribution. Unconverged candidates are reported but never
/// selected; ties go to the smaller weight.
#[allow(clippy::too_many_arguments)]
pub fn tune_lambda<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    dataset: &DisturbanceDataset<T>,
    theta: f64,
    grid: &[f64],
    eval_runs: usize,
    seed: u64,
    base: &SolverConfig,
) -> Result<TuningResult> {
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("lambda grid must be non-empty and positive".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let horizon = model.dims().horizon;
    let rows: Vec<Result<BoundEstimate>> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let params = AmbiguityParams::new(theta, lambda, horizon)?;
            let config = SolverConfig { lambda, theta, seed, ..base.clone() };
            let solution = match solve(model, x0, dataset, &config) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("lambda {lambda:e}: {e}");
                    return Ok(BoundEstimate {
                        lambda,
                        penalty_term: params.penalty_term(),
                        sup_j_lambda: f64::NAN,
                        bound: f64::NAN,
                        converged: false,
                    });
                }
            };
            let est = estimate_sup_j_lambda(model, &solution, dataset, lambda, eval_runs, seed ^ (idx as u64) << 32)?;
            Ok(BoundEstimate {
                lambda,
                penalty_term: params.penalty_term(),
                sup_j_lambda: est.mean,
                bound: guaranteed_bound(&params, est.mean),
                converged: solution.converged,
            })
        })
        .collect();
    let estimates = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let best = estimates
        .iter()
        .filter(|e| e.converged && e.bound.is_finite())
        .fold(None::<&BoundEstimate>, |best, e| match best {
            Some(b) if b.bound <= e.bound => Some(b),
            _ => Some(e),
        })
        .ok_or_else(|| Error::Tuning("no candidate penalty weight converged".into()))?;
    Ok(TuningResult { lambda_star: best.lambda, estimates })
}
