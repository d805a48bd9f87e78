//! Forward rollouts of the policy pair and the backtracking line search.

use nalgebra::DVector;
use rand::Rng;

use crate::backward::{ExpectedChange, NominalTrajectories, Penalty, PolicyStep};
use crate::problem::OcpModel;
use crate::scalar::Real;

/// States larger than this in magnitude abort a rollout.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult<T: Real> {
    pub trajectories: NominalTrajectories<T>,
    /// Penalized objective along the realized atoms.
    pub cost_penalized: T,
    /// `sum l + l_f` without the transport penalty.
    pub cost_nominal: T,
    pub alpha: T,
    pub accepted: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub alpha0: f64,
    pub backtrack: f64,
    pub max_trials: usize,
    /// Fraction of the predicted change a step has to realize.
    pub sufficient: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig { alpha0: 1.0, backtrack: 0.5, max_trials: 10, sufficient: 1e-4 }
    }
}

/// Atom index per step, drawn uniformly. One schedule is shared by every
/// rollout of a solve so that costs at different step sizes are comparable.
pub fn draw_atom_schedule<R: Rng + ?Sized>(rng: &mut R, horizon: usize, n_atoms: usize) -> Vec<usize> {
    (0..horizon).map(|_| rng.random_range(0..n_atoms.max(1))).collect()
}

pub(crate) fn clamp_control<T: Real>(u: &mut DVector<T>, lower: &DVector<T>, upper: &DVector<T>) {
    for i in 0..u.len() {
        u[i] = u[i].max(lower[i]).min(upper[i]);
    }
}

fn diverged<T: Real>(x: &DVector<T>) -> bool {
    x.iter().any(|v| !v.is_finite_value() || v.abs() > T::lit(DIVERGENCE_LIMIT))
}

/// Executes `u = u_bar + alpha k + K dx` and `w = w_bar + alpha h_i + H dx`
/// from `x0` where `i = atoms[t]`. Without a penalty the disturbance stays
/// at its nominal value.
pub fn rollout<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    nominal: &NominalTrajectories<T>,
    policies: &[PolicyStep<T>],
    alpha: T,
    atoms: &[usize],
    penalty: Option<Penalty<'_, T>>,
) -> RolloutResult<T> {
    let horizon = nominal.horizon();
    let lower = model.control_lower();
    let upper = model.control_upper();
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut us = Vec::with_capacity(horizon);
    let mut ws = Vec::with_capacity(horizon);
    let mut x = nominal.x[0].clone();
    let mut penalized = T::zero();
    let mut running = T::zero();
    let mut blown = false;
    for t in 0..horizon {
        let p = &policies[t];
        let dx = &x - &nominal.x[t];
        let mut u = &nominal.u[t] + &p.k * alpha + &p.gain_k * &dx;
        clamp_control(&mut u, &lower, &upper);
        let (w, transport) = match penalty {
            Some(Penalty { dataset, lambda }) => {
                let i = atoms[t];
                let w = &nominal.w[t] + &p.h_i[i] * alpha + &p.gain_h * &dx;
                let d = (&w - dataset.sample(t, i)).norm_squared();
                (w, lambda * d)
            }
            None => (nominal.w[t].clone(), T::zero()),
        };
        let stage = model.running_cost(&x, &u, t);
        running += stage;
        penalized += stage - transport;
        let next = model.dynamics(&x, &u, &w, t);
        xs.push(x);
        us.push(u);
        ws.push(w);
        x = next;
        if diverged(&x) {
            blown = true;
            break;
        }
    }
    let terminal = if blown { T::infinity() } else { model.terminal_cost(&x) };
    xs.push(x);
    let cost_nominal = running + terminal;
    let cost_penalized = penalized + terminal;
    RolloutResult {
        trajectories: NominalTrajectories { x: xs, u: us, w: ws },
        cost_penalized,
        cost_nominal,
        alpha,
        accepted: false,
        diverged: blown || !cost_penalized.is_finite_value(),
    }
}

/// Tries `alpha0, beta alpha0, ...` and accepts the first rollout whose
/// penalized cost change `actual` satisfies
/// `actual - predicted <= (1 - c) |predicted|`.
///
/// For a predicted decrease this is the Armijo condition `actual <= c predicted`.
/// A predicted increase, which the maximizing player can cause, is accepted
/// when the realized increase stays within the same relative band.
/// On exhaustion the best finite trial is returned with `accepted = false`.
#[allow(clippy::too_many_arguments)]
pub fn line_search<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    nominal: &NominalTrajectories<T>,
    incumbent_cost: T,
    policies: &[PolicyStep<T>],
    expected: &ExpectedChange<T>,
    atoms: &[usize],
    penalty: Option<Penalty<'_, T>>,
    config: &LineSearchConfig,
) -> RolloutResult<T> {
    let c = T::lit(config.sufficient);
    let mut alpha = T::lit(config.alpha0);
    let mut best: Option<RolloutResult<T>> = None;
    for _ in 0..config.max_trials.max(1) {
        let mut trial = rollout(model, nominal, policies, alpha, atoms, penalty);
        if !trial.diverged {
            let predicted = expected.predicted(atoms, alpha);
            let actual = trial.cost_penalized - incumbent_cost;
            if actual - predicted <= (T::one() - c) * predicted.abs() {
                trial.accepted = true;
                return trial;
            }
            if best.as_ref().is_none_or(|b| trial.cost_penalized < b.cost_penalized) {
                best = Some(trial);
            }
        } else if best.is_none() {
            best = Some(trial);
        }
        alpha *= T::lit(config.backtrack);
    }
    best.expect("at least one trial")
}
