//! Backward pass: local quadratic models of the sample-wise Q-functions,
//! saddle-point gains for the controller and the worst-case distribution,
//! and the value-function recursion.

mod box_qp;
mod expansion;
mod gains;

use nalgebra::{DMatrix, DVector};

use crate::disturbance::DisturbanceDataset;
use crate::problem::{eval_terminal_derivs, OcpModel};
use crate::scalar::{symmetrize, Real};

pub use box_qp::{box_qp, BoxQpResult, BoxQpStatus};
pub use expansion::q_expand;
pub use gains::{compute_gains, compute_gains_boxed};

/// Quadratic model `v0 + v_x'dx + dx'v_xx dx / 2` of the value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueExpansion<T: Real> {
    pub v0: T,
    pub v_x: DVector<T>,
    pub v_xx: DMatrix<T>,
}

/// The dataset and penalty weight that define the adversary.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a, T: Real> {
    pub dataset: &'a DisturbanceDataset<T>,
    pub lambda: T,
}

/// Second-order coefficients of the sample-wise Q-functions at one step.
///
/// `penalty` is `None` when the adversary is disabled; the disturbance
/// blocks are then still filled in but the gains ignore them.
#[derive(Debug, Clone, PartialEq)]
pub struct QExpansion<T: Real> {
    pub qbar: T,
    pub q_x: DVector<T>,
    pub q_u: DVector<T>,
    pub qbar_w: DVector<T>,
    pub q_w_i: Vec<DVector<T>>,
    pub q_xx: DMatrix<T>,
    pub q_uu: DMatrix<T>,
    pub q_ww: DMatrix<T>,
    pub q_xu: DMatrix<T>,
    pub q_xw: DMatrix<T>,
    pub q_uw: DMatrix<T>,
    pub penalty: Option<T>,
}

/// Affine control law `du = K dx + k` and the atoms `dw_i = H dx + h_i` of
/// the worst-case distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep<T: Real> {
    pub gain_k: DMatrix<T>,
    pub k: DVector<T>,
    pub gain_h: DMatrix<T>,
    pub h_i: Vec<DVector<T>>,
    pub h_bar: DVector<T>,
}

impl<T: Real> PolicyStep<T> {
    pub fn zeros(n_x: usize, n_u: usize, n_w: usize, n_atoms: usize) -> Self {
        PolicyStep {
            gain_k: DMatrix::zeros(n_u, n_x),
            k: DVector::zeros(n_u),
            gain_h: DMatrix::zeros(n_w, n_x),
            h_i: vec![DVector::zeros(n_w); n_atoms],
            h_bar: DVector::zeros(n_w),
        }
    }

    /// Copy with feedforward terms multiplied by `alpha`.
    pub fn scaled(&self, alpha: T) -> Self {
        PolicyStep {
            gain_k: self.gain_k.clone(),
            k: &self.k * alpha,
            gain_h: self.gain_h.clone(),
            h_i: self.h_i.iter().map(|h| h * alpha).collect(),
            h_bar: &self.h_bar * alpha,
        }
    }
}

/// Why the gains at a step could not be formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainFailure {
    /// `mu I - Q_ww` is not positive definite.
    Adversary,
    /// The controller Schur complement is not positive definite.
    Controller,
    /// The control QP hit its iteration limit or lost definiteness.
    BoxQp,
    NonFinite,
}

impl GainFailure {
    pub fn describe(self) -> &'static str {
        match self {
            GainFailure::Adversary => "adversary curvature not negative definite",
            GainFailure::Controller => "controller curvature not positive definite",
            GainFailure::BoxQp => "box-constrained QP did not converge",
            GainFailure::NonFinite => "non-finite expansion",
        }
    }
}

/// Scalar Levenberg-Marquardt style regularization shared by both players.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub mu: f64,
    pub increase: f64,
    pub decrease: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { mu: 0.0, increase: 10.0, decrease: 2.0, min: 1e-8, max: 1e10 }
    }
}

impl Regularization {
    /// Returns `false` once the cap is exceeded.
    pub fn bump(&mut self) -> bool {
        self.mu = (self.mu * self.increase).max(self.min);
        self.mu <= self.max
    }

    pub fn relax(&mut self) {
        self.mu /= self.decrease;
        if self.mu < self.min {
            self.mu = 0.0;
        }
    }
}

/// Coefficients of the predicted change of the penalized cost at one step
/// as a function of the step size: `alpha * lin + alpha^2 * quad`, split into
/// the controller part and one part per dataset atom.
#[derive(Debug, Clone, PartialEq)]
pub struct StepChange<T: Real> {
    pub lin_u: T,
    pub quad_u: T,
    pub lin_w: Vec<T>,
    pub quad_w: Vec<T>,
}

impl<T: Real> StepChange<T> {
    fn from_gains(q: &QExpansion<T>, p: &PolicyStep<T>) -> Self {
        let half = T::lit(0.5);
        let uw_k = q.q_uw.tr_mul(&p.k);
        StepChange {
            lin_u: q.q_u.dot(&p.k),
            quad_u: half * p.k.dot(&(&q.q_uu * &p.k)),
            lin_w: q.q_w_i.iter().zip(&p.h_i).map(|(qw, h)| qw.dot(h)).collect(),
            quad_w: p.h_i.iter().map(|h| half * h.dot(&(&q.q_ww * h)) + uw_k.dot(h)).collect(),
        }
    }
}

/// Predicted change along a whole trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedChange<T: Real> {
    pub steps: Vec<StepChange<T>>,
}

impl<T: Real> ExpectedChange<T> {
    /// `(d1, d2)` such that the predicted change is `alpha d1 + alpha^2 d2`
    /// for the rollout that uses atom `atoms[t]` at step `t`.
    pub fn along(&self, atoms: &[usize]) -> (T, T) {
        self.steps.iter().enumerate().fold((T::zero(), T::zero()), |(d1, d2), (t, s)| {
            let (lw, qw) = match atoms.get(t).and_then(|&i| s.lin_w.get(i).zip(s.quad_w.get(i))) {
                Some((l, q)) => (*l, *q),
                None => (T::zero(), T::zero()),
            };
            (d1 + s.lin_u + lw, d2 + s.quad_u + qw)
        })
    }

    /// Atom-averaged coefficients.
    pub fn averaged(&self) -> (T, T) {
        self.steps.iter().fold((T::zero(), T::zero()), |(d1, d2), s| {
            let n = T::from_usize(s.lin_w.len().max(1)).unwrap();
            let lw = s.lin_w.iter().fold(T::zero(), |a, b| a + *b) / n;
            let qw = s.quad_w.iter().fold(T::zero(), |a, b| a + *b) / n;
            (d1 + s.lin_u + lw, d2 + s.quad_u + qw)
        })
    }

    pub fn predicted(&self, atoms: &[usize], alpha: T) -> T {
        let (d1, d2) = self.along(atoms);
        alpha * d1 + alpha * alpha * d2
    }
}

/// Substitutes the gains into the quadratic model and returns the induced
/// value expansion. Exact for any gains, so it is always applied to the
/// unregularized coefficients.
pub fn value_update<T: Real>(q: &QExpansion<T>, p: &PolicyStep<T>) -> ValueExpansion<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let (k, h) = (&p.k, &p.h_bar);
    let (gk, gh) = (&p.gain_k, &p.gain_h);
    let v0 = q.qbar
        + q.q_u.dot(k)
        + q.qbar_w.dot(h)
        + half * k.dot(&(&q.q_uu * k))
        + half * h.dot(&(&q.q_ww * h))
        + k.dot(&(&q.q_uw * h));
    let v_x = &q.q_x
        + &q.q_xu * k
        + gk.tr_mul(&(&q.q_u + &q.q_uu * k + &q.q_uw * h))
        + &q.q_xw * h
        + gh.tr_mul(&(&q.qbar_w + &q.q_ww * h + q.q_uw.tr_mul(k)));
    let mut v_xx = &q.q_xx
        + gk.tr_mul(&(&q.q_uu * gk))
        + gh.tr_mul(&(&q.q_ww * gh))
        + (&q.q_xu * gk) * two
        + gk.tr_mul(&(&q.q_uw * gh)) * two
        + (&q.q_xw * gh) * two;
    symmetrize(&mut v_xx);
    ValueExpansion { v0, v_x, v_xx }
}

/// Nominal trajectories the expansions are taken around.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectories<T: Real> {
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub w: Vec<DVector<T>>,
}

impl<T: Real> NominalTrajectories<T> {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardResult<T: Real> {
    pub policies: Vec<PolicyStep<T>>,
    pub value0: ValueExpansion<T>,
    pub expected: ExpectedChange<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardFailure {
    pub step: usize,
    pub cause: GainFailure,
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    pub mu: f64,
    pub gauss_newton: bool,
}

/// One sweep from `T - 1` down to `0`. `warm` optionally supplies previous
/// feedforwards to warm-start the box QP.
pub fn backward_pass<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    nominal: &NominalTrajectories<T>,
    penalty: Option<Penalty<'_, T>>,
    options: BackwardOptions,
    warm: Option<&[PolicyStep<T>]>,
) -> Result<BackwardResult<T>, BackwardFailure> {
    let horizon = nominal.horizon();
    let lower = model.control_lower();
    let upper = model.control_upper();
    let boxed = lower.iter().chain(upper.iter()).any(|b| b.is_finite_value());
    let mu = T::lit(options.mu);

    let term = eval_terminal_derivs(model, &nominal.x[horizon])
        .map_err(|_| BackwardFailure { step: horizon, cause: GainFailure::NonFinite })?;
    let mut value = ValueExpansion { v0: model.terminal_cost(&nominal.x[horizon]), v_x: term.l_x, v_xx: term.l_xx };
    let mut policies = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let fail = |cause| BackwardFailure { step: t, cause };
        let q = q_expand(model, &value, &nominal.x[t], &nominal.u[t], &nominal.w[t], t, penalty, options.gauss_newton)
            .map_err(|_| fail(GainFailure::NonFinite))?;
        let policy = if boxed {
            let warm_k = warm.map(|w| &w[t].k);
            compute_gains_boxed(&q, mu, &lower, &upper, &nominal.u[t], warm_k).map_err(fail)?
        } else {
            compute_gains(&q, mu).map_err(fail)?
        };
        value = value_update(&q, &policy);
        if !value.v0.is_finite_value() || value.v_x.iter().chain(value.v_xx.iter()).any(|v| !v.is_finite_value()) {
            return Err(fail(GainFailure::NonFinite));
        }
        steps.push(StepChange::from_gains(&q, &policy));
        policies.push(policy);
    }
    policies.reverse();
    steps.reverse();
    Ok(BackwardResult { policies, value0: value, expected: ExpectedChange { steps } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::LinearQuadratic;
    use nalgebra::{dmatrix, dvector};

    fn scalar_q(q_uu: f64, q_ww: f64, q_uw: f64, q_u: f64) -> QExpansion<f64> {
        QExpansion {
            qbar: 0.0,
            q_x: dvector![0.0],
            q_u: dvector![q_u],
            qbar_w: dvector![0.0],
            q_w_i: vec![dvector![0.0]],
            q_xx: dmatrix![1.0],
            q_uu: dmatrix![q_uu],
            q_ww: dmatrix![q_ww],
            q_xu: dmatrix![0.0],
            q_xw: dmatrix![0.0],
            q_uw: dmatrix![q_uw],
            penalty: Some(1.0),
        }
    }

    #[test]
    fn zero_gains_reduce_to_expansion() {
        let mut q = scalar_q(2.0, -4.0, 1.0, 1.0);
        q.qbar = 3.5;
        q.q_x = dvector![0.7];
        let v = value_update(&q, &PolicyStep::zeros(1, 1, 1, 1));
        assert_eq!(v.v0, 3.5);
        assert_eq!(v.v_x, q.q_x);
        assert_eq!(v.v_xx, q.q_xx);
    }

    #[test]
    fn value_is_saddle_value_at_origin() {
        let q = scalar_q(2.0, -4.0, 1.0, 1.0);
        let p = compute_gains(&q, 0.0).unwrap();
        let (u, w) = (p.k[0], p.h_bar[0]);
        let direct = u + 0.5 * 2.0 * u * u + 0.5 * -4.0 * w * w + u * w;
        assert!((value_update(&q, &p).v0 - direct).abs() < 1e-14);
    }

    #[test]
    fn regularization_schedule() {
        let mut reg = Regularization::default();
        assert!(reg.bump());
        assert_eq!(reg.mu, 1e-8);
        assert!(reg.bump());
        assert!((reg.mu - 1e-7).abs() < 1e-22);
        reg.relax();
        reg.relax();
        reg.relax();
        reg.relax();
        assert_eq!(reg.mu, 0.0);
        reg.mu = 1e10;
        assert!(!reg.bump());
    }

    #[test]
    fn zero_cost_problem_has_zero_gains() {
        let lq = LinearQuadratic::<f64>::new(
            dmatrix![1.0, 0.1; 0.0, 1.0],
            dmatrix![0.0; 0.1],
            dmatrix![0.1; 0.0],
            DMatrix::zeros(2, 2),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(2, 2),
            5,
        )
        .unwrap();
        // Zero control weight makes the controller curvature singular; the
        // regularized pass must still return zero gains.
        let ds = DisturbanceDataset::zeros(5, 1);
        let nominal = NominalTrajectories {
            x: vec![dvector![0.0, 0.0]; 6],
            u: vec![dvector![0.0]; 5],
            w: vec![dvector![0.0]; 5],
        };
        let res = backward_pass(
            &lq,
            &nominal,
            Some(Penalty { dataset: &ds, lambda: 1.0 }),
            BackwardOptions { mu: 1e-6, gauss_newton: false },
            None,
        )
        .unwrap();
        assert_eq!(res.value0.v0, 0.0);
        for p in &res.policies {
            assert!(p.gain_k.iter().chain(p.k.iter()).chain(p.gain_h.iter()).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_step_lq_matches_hand_solve() {
        // x' = x + u + w, l = x^2 + u^2, lf = x^2, atoms {-1, 1}, lambda = 2.
        let lq = LinearQuadratic::<f64>::new(
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            1,
        )
        .unwrap();
        let ds = DisturbanceDataset::new(vec![vec![dvector![-1.0], dvector![1.0]]]).unwrap();
        let x0 = 0.5;
        let nominal =
            NominalTrajectories { x: vec![dvector![x0], dvector![x0]], u: vec![dvector![0.0]], w: vec![dvector![0.0]] };
        let res = backward_pass(
            &lq,
            &nominal,
            Some(Penalty { dataset: &ds, lambda: 2.0 }),
            BackwardOptions { mu: 0.0, gauss_newton: false },
            None,
        )
        .unwrap();
        // Per atom: max_w (x+u+w)^2 - 2 (w - a)^2  =>  w = x + u + 2a.
        // Averaged objective in u: x^2 + u^2 + 2 (x+u)^2 + const  =>  u = -2x/3.
        let p = &res.policies[0];
        assert!((p.k[0] - (-2.0 * x0 / 3.0)).abs() < 1e-12);
        assert!((p.gain_k[(0, 0)] + 2.0 / 3.0).abs() < 1e-12);
        for (i, a) in [-1.0, 1.0].iter().enumerate() {
            let w_star = x0 + p.k[0] + 2.0 * a;
            assert!((p.h_i[i][0] - w_star).abs() < 1e-12);
        }
        let value = |x: f64| {
            let u = -2.0 * x / 3.0;
            [-1.0f64, 1.0]
                .iter()
                .map(|a| {
                    let w = x + u + 2.0 * a;
                    x * x + u * u + (x + u + w).powi(2) - 2.0 * (w - a).powi(2)
                })
                .sum::<f64>()
                / 2.0
        };
        assert!((res.value0.v0 - value(x0)).abs() < 1e-12);
    }
}
