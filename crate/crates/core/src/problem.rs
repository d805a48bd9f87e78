//! Optimal control problem definition and derivative evaluation.
//!
//! A model supplies discrete-time dynamics `x' = f(x, u, w, t)`, a running cost
//! `l(x, u, t)`, a terminal cost `l_f(x)` and optional control bounds. Analytic
//! derivatives are optional: the default trait methods fall back to central
//! finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{first_non_finite, symmetrize, vec_non_finite, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(n_x: usize, n_u: usize, n_w: usize, horizon: usize) -> Result<Self> {
        for (name, v) in [("n_x", n_x), ("n_u", n_u), ("n_w", n_w), ("horizon", horizon)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(Dims { n_x, n_u, n_w, horizon })
    }
}

/// First-order dynamics Jacobians plus second-order tensors contracted with
/// the next-step value gradient (`V_x . f_xx` and friends).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsDerivs<T: Real> {
    pub f_x: DMatrix<T>,
    pub f_u: DMatrix<T>,
    pub f_w: DMatrix<T>,
    pub vfxx: DMatrix<T>,
    pub vfuu: DMatrix<T>,
    pub vfww: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostDerivs<T: Real> {
    pub l_x: DVector<T>,
    pub l_u: DVector<T>,
    pub l_xx: DMatrix<T>,
    pub l_uu: DMatrix<T>,
    pub l_xu: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDerivs<T: Real> {
    pub l_x: DVector<T>,
    pub l_xx: DMatrix<T>,
}

/// A finite-horizon stochastic optimal control problem.
///
/// Implementations must be pure: evaluation workers call them concurrently.
pub trait OcpModel<T: Real>: Send + Sync {
    fn dims(&self) -> Dims;

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, t: usize) -> DVector<T>;

    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> T;

    fn terminal_cost(&self, x: &DVector<T>) -> T;

    fn control_lower(&self) -> DVector<T> {
        DVector::from_element(self.dims().n_u, -T::infinity())
    }

    fn control_upper(&self) -> DVector<T> {
        DVector::from_element(self.dims().n_u, T::infinity())
    }

    /// Distance between the controlled body and the nearest obstacle, for
    /// models that have one.
    fn clearance(&self, _x: &DVector<T>) -> Option<T> {
        None
    }

    fn dynamics_derivs(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        w: &DVector<T>,
        t: usize,
        v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        finite_diff::dynamics_derivs(self, x, u, w, t, v_x)
    }

    fn cost_derivs(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> CostDerivs<T> {
        finite_diff::cost_derivs(self, x, u, t)
    }

    fn terminal_derivs(&self, x: &DVector<T>) -> TerminalDerivs<T> {
        finite_diff::terminal_derivs(self, x)
    }
}

impl<T: Real, M: OcpModel<T> + ?Sized> OcpModel<T> for &M {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, t: usize) -> DVector<T> {
        (**self).dynamics(x, u, w, t)
    }
    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> T {
        (**self).running_cost(x, u, t)
    }
    fn terminal_cost(&self, x: &DVector<T>) -> T {
        (**self).terminal_cost(x)
    }
    fn control_lower(&self) -> DVector<T> {
        (**self).control_lower()
    }
    fn control_upper(&self) -> DVector<T> {
        (**self).control_upper()
    }
    fn clearance(&self, x: &DVector<T>) -> Option<T> {
        (**self).clearance(x)
    }
    fn dynamics_derivs(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        w: &DVector<T>,
        t: usize,
        v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        (**self).dynamics_derivs(x, u, w, t, v_x)
    }
    fn cost_derivs(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> CostDerivs<T> {
        (**self).cost_derivs(x, u, t)
    }
    fn terminal_derivs(&self, x: &DVector<T>) -> TerminalDerivs<T> {
        (**self).terminal_derivs(x)
    }
}

/// Adapter that ignores a model's analytic derivatives and differentiates it
/// numerically instead.
pub struct FiniteDifference<'a, M: ?Sized>(pub &'a M);

impl<T: Real, M: OcpModel<T> + ?Sized> OcpModel<T> for FiniteDifference<'_, M> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, t: usize) -> DVector<T> {
        self.0.dynamics(x, u, w, t)
    }
    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> T {
        self.0.running_cost(x, u, t)
    }
    fn terminal_cost(&self, x: &DVector<T>) -> T {
        self.0.terminal_cost(x)
    }
    fn control_lower(&self) -> DVector<T> {
        self.0.control_lower()
    }
    fn control_upper(&self) -> DVector<T> {
        self.0.control_upper()
    }
    fn clearance(&self, x: &DVector<T>) -> Option<T> {
        self.0.clearance(x)
    }
}

/// Central finite differences.
///
/// First derivatives use the step `max(h, h * |x_j|)` with `h = 1e-6` in
/// double precision; second derivatives use a larger base step.
pub mod finite_diff {
    use super::*;

    fn first_base<T: Real>() -> T {
        T::default_epsilon().sqrt().max(T::lit(1e-6))
    }

    fn second_base<T: Real>() -> T {
        T::default_epsilon().sqrt().sqrt().max(T::lit(1e-4))
    }

    fn step<T: Real>(base: T, c: T) -> T {
        base.max(base * c.abs())
    }

    /// Jacobian of `g` at `z`, one column per coordinate.
    pub fn jacobian<T: Real, F>(z: &DVector<T>, rows: usize, g: F) -> DMatrix<T>
    where
        F: Fn(&DVector<T>) -> DVector<T>,
    {
        let base = first_base::<T>();
        let mut jac = DMatrix::zeros(rows, z.len());
        let mut zp = z.clone();
        let mut zm = z.clone();
        for j in 0..z.len() {
            let h = step(base, z[j]);
            zp[j] = z[j] + h;
            zm[j] = z[j] - h;
            let width = zp[j] - zm[j];
            let col = (g(&zp) - g(&zm)) / width;
            jac.set_column(j, &col);
            zp[j] = z[j];
            zm[j] = z[j];
        }
        jac
    }

    pub fn gradient<T: Real, F>(z: &DVector<T>, g: F) -> DVector<T>
    where
        F: Fn(&DVector<T>) -> T,
    {
        let jac = jacobian(z, 1, |p| DVector::from_element(1, g(p)));
        jac.row(0).transpose()
    }

    /// Symmetric Hessian of a scalar function by second differences.
    pub fn hessian<T: Real, F>(z: &DVector<T>, g: F) -> DMatrix<T>
    where
        F: Fn(&DVector<T>) -> T,
    {
        let base = second_base::<T>();
        let n = z.len();
        let steps: Vec<T> = z.iter().map(|&c| step(base, c)).collect();
        let g0 = g(z);
        let mut hess = DMatrix::zeros(n, n);
        let mut p = z.clone();
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        for i in 0..n {
            let hi = steps[i];
            p[i] = z[i] + hi;
            let gp = g(&p);
            p[i] = z[i] - hi;
            let gm = g(&p);
            p[i] = z[i];
            hess[(i, i)] = (gp - two * g0 + gm) / (hi * hi);
            for j in (i + 1)..n {
                let hj = steps[j];
                let mut eval = |si: T, sj: T| {
                    p[i] = z[i] + si * hi;
                    p[j] = z[j] + sj * hj;
                    let v = g(&p);
                    p[i] = z[i];
                    p[j] = z[j];
                    v
                };
                let one = T::one();
                let v = (eval(one, one) - eval(one, -one) - eval(-one, one) + eval(-one, -one)) / (four * hi * hj);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        hess
    }

    pub fn dynamics_derivs<T: Real, M: OcpModel<T> + ?Sized>(
        model: &M,
        x: &DVector<T>,
        u: &DVector<T>,
        w: &DVector<T>,
        t: usize,
        v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        let n_x = x.len();
        let f_x = jacobian(x, n_x, |p| model.dynamics(p, u, w, t));
        let f_u = jacobian(u, n_x, |p| model.dynamics(x, p, w, t));
        let f_w = jacobian(w, n_x, |p| model.dynamics(x, u, p, t));
        let vfxx = hessian(x, |p| v_x.dot(&model.dynamics(p, u, w, t)));
        let vfuu = hessian(u, |p| v_x.dot(&model.dynamics(x, p, w, t)));
        let vfww = hessian(w, |p| v_x.dot(&model.dynamics(x, u, p, t)));
        DynamicsDerivs { f_x, f_u, f_w, vfxx, vfuu, vfww }
    }

    pub fn cost_derivs<T: Real, M: OcpModel<T> + ?Sized>(
        model: &M,
        x: &DVector<T>,
        u: &DVector<T>,
        t: usize,
    ) -> CostDerivs<T> {
        let (n_x, n_u) = (x.len(), u.len());
        let z = DVector::from_iterator(n_x + n_u, x.iter().chain(u.iter()).copied());
        let split = |p: &DVector<T>| (p.rows(0, n_x).into_owned(), p.rows(n_x, n_u).into_owned());
        let cost = |p: &DVector<T>| {
            let (px, pu) = split(p);
            model.running_cost(&px, &pu, t)
        };
        let grad = gradient(&z, cost);
        let hess = hessian(&z, cost);
        CostDerivs {
            l_x: grad.rows(0, n_x).into_owned(),
            l_u: grad.rows(n_x, n_u).into_owned(),
            l_xx: hess.view((0, 0), (n_x, n_x)).into_owned(),
            l_uu: hess.view((n_x, n_x), (n_u, n_u)).into_owned(),
            l_xu: hess.view((0, n_x), (n_x, n_u)).into_owned(),
        }
    }

    pub fn terminal_derivs<T: Real, M: OcpModel<T> + ?Sized>(model: &M, x: &DVector<T>) -> TerminalDerivs<T> {
        TerminalDerivs { l_x: gradient(x, |p| model.terminal_cost(p)), l_xx: hessian(x, |p| model.terminal_cost(p)) }
    }
}

fn check_dims<T: Real>(context: &'static str, v: &DVector<T>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension { context, expected, actual: v.len() });
    }
    Ok(())
}

fn finite_matrix<T: Real>(what: &'static str, m: &DMatrix<T>) -> Result<()> {
    match first_non_finite(m) {
        Some((row, col, value)) => Err(Error::Derivative { what, row, col, value: value.as_f64() }),
        None => Ok(()),
    }
}

fn finite_vector<T: Real>(what: &'static str, v: &DVector<T>) -> Result<()> {
    match vec_non_finite(v) {
        Some((row, value)) => Err(Error::Derivative { what, row, col: 0, value: value.as_f64() }),
        None => Ok(()),
    }
}

/// Evaluates dynamics derivatives, symmetrizes the contracted tensors and
/// rejects non-finite entries.
pub fn eval_dynamics_derivs<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x: &DVector<T>,
    u: &DVector<T>,
    w: &DVector<T>,
    t: usize,
    v_x: &DVector<T>,
) -> Result<DynamicsDerivs<T>> {
    let dims = model.dims();
    check_dims("state", x, dims.n_x)?;
    check_dims("input", u, dims.n_u)?;
    check_dims("disturbance", w, dims.n_w)?;
    check_dims("value gradient", v_x, dims.n_x)?;
    let mut d = model.dynamics_derivs(x, u, w, t, v_x);
    symmetrize(&mut d.vfxx);
    symmetrize(&mut d.vfuu);
    symmetrize(&mut d.vfww);
    finite_matrix("f_x", &d.f_x)?;
    finite_matrix("f_u", &d.f_u)?;
    finite_matrix("f_w", &d.f_w)?;
    finite_matrix("vfxx", &d.vfxx)?;
    finite_matrix("vfuu", &d.vfuu)?;
    finite_matrix("vfww", &d.vfww)?;
    Ok(d)
}

pub fn eval_cost_derivs<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x: &DVector<T>,
    u: &DVector<T>,
    t: usize,
) -> Result<CostDerivs<T>> {
    let dims = model.dims();
    if t >= dims.horizon {
        return Err(Error::Config(format!("running cost step {t} outside horizon {}", dims.horizon)));
    }
    check_dims("state", x, dims.n_x)?;
    check_dims("input", u, dims.n_u)?;
    let mut d = model.cost_derivs(x, u, t);
    symmetrize(&mut d.l_xx);
    symmetrize(&mut d.l_uu);
    finite_vector("l_x", &d.l_x)?;
    finite_vector("l_u", &d.l_u)?;
    finite_matrix("l_xx", &d.l_xx)?;
    finite_matrix("l_uu", &d.l_uu)?;
    finite_matrix("l_xu", &d.l_xu)?;
    Ok(d)
}

pub fn eval_terminal_derivs<T: Real, M: OcpModel<T> + ?Sized>(model: &M, x: &DVector<T>) -> Result<TerminalDerivs<T>> {
    check_dims("state", x, model.dims().n_x)?;
    let mut d = model.terminal_derivs(x);
    symmetrize(&mut d.l_xx);
    finite_vector("terminal l_x", &d.l_x)?;
    finite_matrix("terminal l_xx", &d.l_xx)?;
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct TrialPoint<T: Real> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub w: DVector<T>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedEntry {
    pub point: usize,
    pub block: &'static str,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    /// Largest relative error per derivative block.
    pub max_rel_err: Vec<(&'static str, f64)>,
    pub flagged: Vec<FlaggedEntry>,
    pub tolerance: f64,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().fold(0.0, |m, (_, e)| m.max(*e))
    }
}

pub const DERIVATIVE_CHECK_TOLERANCE: f64 = 1e-4;

/// `|a - b| / max(1, |a|, |b|)`: relative for large entries, absolute near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Compares the model's first derivatives against central finite differences.
pub fn check_derivatives<T: Real, M: OcpModel<T> + ?Sized>(model: &M, points: &[TrialPoint<T>]) -> DerivativeReport {
    check_derivatives_with_tolerance(model, points, DERIVATIVE_CHECK_TOLERANCE)
}

pub fn check_derivatives_with_tolerance<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    points: &[TrialPoint<T>],
    tolerance: f64,
) -> DerivativeReport {
    let numeric = FiniteDifference(model);
    let blocks = ["f_x", "f_u", "f_w", "l_x", "l_u", "terminal l_x"];
    let mut max_rel_err: Vec<(&'static str, f64)> = blocks.iter().map(|b| (*b, 0.0)).collect();
    let mut flagged = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let v_x = DVector::zeros(p.x.len());
        let ad = model.dynamics_derivs(&p.x, &p.u, &p.w, p.t, &v_x);
        let nd = finite_diff::dynamics_derivs(&numeric, &p.x, &p.u, &p.w, p.t, &v_x);
        let ac = model.cost_derivs(&p.x, &p.u, p.t);
        let nc = finite_diff::cost_derivs(&numeric, &p.x, &p.u, p.t);
        let at = model.terminal_derivs(&p.x);
        let nt = finite_diff::terminal_derivs(&numeric, &p.x);
        let pairs: [(&DMatrix<T>, &DMatrix<T>); 3] = [(&ad.f_x, &nd.f_x), (&ad.f_u, &nd.f_u), (&ad.f_w, &nd.f_w)];
        let vec_pairs: [(&DVector<T>, &DVector<T>); 3] = [(&ac.l_x, &nc.l_x), (&ac.l_u, &nc.l_u), (&at.l_x, &nt.l_x)];
        let mut compare = |slot: usize, row: usize, col: usize, a: T, b: T| {
            let (a, b) = (a.as_f64(), b.as_f64());
            let err = if a.is_finite() && b.is_finite() { relative_error(a, b) } else { f64::INFINITY };
            let entry = &mut max_rel_err[slot].1;
            *entry = entry.max(err);
            if err > tolerance {
                flagged.push(FlaggedEntry {
                    point: k,
                    block: blocks[slot],
                    row,
                    col,
                    analytic: a,
                    numeric: b,
                    rel_err: err,
                });
            }
        };
        for (slot, (a, n)) in pairs.iter().enumerate() {
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    compare(slot, i, j, a[(i, j)], n[(i, j)]);
                }
            }
        }
        for (s, (a, n)) in vec_pairs.iter().enumerate() {
            for i in 0..a.len() {
                compare(3 + s, i, 0, a[i], n[i]);
            }
        }
    }
    DerivativeReport { max_rel_err, flagged, tolerance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::LinearQuadratic;
    use nalgebra::{dmatrix, dvector};

    /// f = x + u + w^2, l = x^2 + u^2.
    struct Scalar;

    impl OcpModel<f64> for Scalar {
        fn dims(&self) -> Dims {
            Dims::new(1, 1, 1, 3).unwrap()
        }
        fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, _t: usize) -> DVector<f64> {
            dvector![x[0] + u[0] + w[0] * w[0]]
        }
        fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _t: usize) -> f64 {
            x[0] * x[0] + u[0] * u[0]
        }
        fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
            x[0] * x[0]
        }
    }

    /// Same as `Scalar` but with an analytic Jacobian whose sign is wrong.
    struct WrongSign;

    impl OcpModel<f64> for WrongSign {
        fn dims(&self) -> Dims {
            Scalar.dims()
        }
        fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, t: usize) -> DVector<f64> {
            Scalar.dynamics(x, u, w, t)
        }
        fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: usize) -> f64 {
            Scalar.running_cost(x, u, t)
        }
        fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
            Scalar.terminal_cost(x)
        }
        fn dynamics_derivs(
            &self,
            x: &DVector<f64>,
            u: &DVector<f64>,
            w: &DVector<f64>,
            t: usize,
            v_x: &DVector<f64>,
        ) -> DynamicsDerivs<f64> {
            let mut d = finite_diff::dynamics_derivs(self, x, u, w, t, v_x);
            d.f_u = -d.f_u;
            d
        }
    }

    #[test]
    fn scalar_quadratic_disturbance() {
        let d =
            eval_dynamics_derivs(&Scalar, &dvector![0.3], &dvector![-0.2], &dvector![0.7], 0, &dvector![2.0]).unwrap();
        assert!((d.f_w[(0, 0)] - 1.4).abs() < 1e-8);
        assert!((d.vfww[(0, 0)] - 4.0).abs() < 1e-5);
        assert!(d.vfxx[(0, 0)].abs() < 1e-5);
    }

    #[test]
    fn linear_model_has_exact_jacobians_and_no_curvature() {
        let lq = LinearQuadratic::new(
            dmatrix![1.0, 0.1; 0.0, 1.0],
            dmatrix![0.0; 0.1],
            dmatrix![0.05, 0.0; 0.0, 0.05],
            dmatrix![1.0, 0.0; 0.0, 2.0],
            dmatrix![0.5],
            dmatrix![3.0, 0.0; 0.0, 3.0],
            4,
        )
        .unwrap();
        let x = dvector![0.4, -0.3];
        let d = eval_dynamics_derivs(&lq, &x, &dvector![0.2], &dvector![0.0, 0.1], 0, &dvector![1.0, -2.0]).unwrap();
        assert_eq!(d.f_x, lq.a);
        assert_eq!(d.f_u, lq.b);
        assert_eq!(d.f_w, lq.d);
        assert!(d.vfxx.iter().chain(d.vfuu.iter()).chain(d.vfww.iter()).all(|v| *v == 0.0));
        let c = eval_cost_derivs(&lq, &x, &dvector![0.2], 0).unwrap();
        assert_eq!(c.l_xx, &lq.q * 2.0);
        assert_eq!(c.l_uu, &lq.r * 2.0);
        assert!(c.l_xu.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn finite_difference_matches_linear_model() {
        let lq = LinearQuadratic::random(Dims::new(4, 2, 2, 5).unwrap(), 11);
        let points: Vec<_> = (0..5)
            .map(|k| {
                let s = k as f64 * 0.1;
                TrialPoint {
                    x: DVector::from_fn(4, |i, _| (i as f64 + s).sin()),
                    u: DVector::from_fn(2, |i, _| (i as f64 - s).cos()),
                    w: DVector::from_fn(2, |i, _| 0.1 * (i as f64 + 2.0 * s).sin()),
                    t: k,
                }
            })
            .collect();
        let report = check_derivatives(&lq, &points);
        assert!(report.passed());
        assert!(report.worst() < 1e-9, "worst {}", report.worst());
    }

    #[test]
    fn wrong_sign_is_flagged() {
        let points = vec![TrialPoint { x: dvector![0.5], u: dvector![0.3], w: dvector![0.1], t: 0 }];
        let report = check_derivatives(&WrongSign, &points);
        assert!(!report.passed());
        assert!(report.flagged.iter().all(|f| f.block == "f_u"));
        assert!(check_derivatives(&Scalar, &points).passed());
    }

    #[test]
    fn non_finite_derivative_is_reported_with_entry() {
        struct Blowup;
        impl OcpModel<f64> for Blowup {
            fn dims(&self) -> Dims {
                Dims::new(2, 1, 1, 1).unwrap()
            }
            fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _w: &DVector<f64>, _t: usize) -> DVector<f64> {
                dvector![x[0], x[1].sqrt() + u[0]]
            }
            fn running_cost(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: usize) -> f64 {
                0.0
            }
            fn terminal_cost(&self, _x: &DVector<f64>) -> f64 {
                0.0
            }
        }
        let err =
            eval_dynamics_derivs(&Blowup, &dvector![1.0, 0.0], &dvector![0.0], &dvector![0.0], 0, &dvector![0.0, 0.0])
                .unwrap_err();
        match err {
            Error::Derivative { what, row, col, .. } => assert_eq!((what, row, col), ("f_x", 1, 1)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = eval_dynamics_derivs(&Scalar, &dvector![0.0, 1.0], &dvector![0.0], &dvector![0.0], 0, &dvector![0.0])
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { context: "state", .. }));
        assert!(eval_cost_derivs(&Scalar, &dvector![0.0], &dvector![0.0], 3).is_err());
    }

    #[test]
    fn cost_evaluation_is_deterministic() {
        let lq = LinearQuadratic::<f64>::random(Dims::new(3, 2, 1, 4).unwrap(), 5);
        let x = dvector![0.1, 0.2, 0.3];
        let u = dvector![0.5, -0.5];
        assert_eq!(lq.running_cost(&x, &u, 0).to_bits(), lq.running_cost(&x, &u, 0).to_bits());
    }
}
