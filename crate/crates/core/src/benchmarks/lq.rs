use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{CostDerivs, Dims, DynamicsDerivs, OcpModel, TerminalDerivs};
use crate::rng::{substream, Stream};
use crate::scalar::Real;

/// Linear dynamics `x' = A x + B u + D w` with quadratic costs
/// `x'Qx + u'Ru` and terminal cost `x'Qf x`.
#[derive(Debug, Clone)]
pub struct LinearQuadratic<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub d: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub qf: DMatrix<T>,
    pub horizon: usize,
    pub lower: Option<DVector<T>>,
    pub upper: Option<DVector<T>>,
}

impl<T: Real> LinearQuadratic<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        d: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        qf: DMatrix<T>,
        horizon: usize,
    ) -> Result<Self> {
        let n_x = a.nrows();
        let check = |context: &'static str, m: &DMatrix<T>, rows: usize, cols: Option<usize>| {
            if m.nrows() != rows {
                return Err(Error::Dimension { context, expected: rows, actual: m.nrows() });
            }
            if let Some(c) = cols {
                if m.ncols() != c {
                    return Err(Error::Dimension { context, expected: c, actual: m.ncols() });
                }
            }
            Ok(())
        };
        check("A", &a, n_x, Some(n_x))?;
        check("B", &b, n_x, None)?;
        check("D", &d, n_x, None)?;
        check("Q", &q, n_x, Some(n_x))?;
        check("R", &r, b.ncols(), Some(b.ncols()))?;
        check("Qf", &qf, n_x, Some(n_x))?;
        Dims::new(n_x, b.ncols(), d.ncols(), horizon)?;
        Ok(LinearQuadratic { a, b, d, q, r, qf, horizon, lower: None, upper: None })
    }

    /// Random well-conditioned instance: mildly unstable dynamics, PSD state
    /// weights and a positive definite control weight.
    pub fn random(dims: Dims, seed: u64) -> Self {
        let mut rng = substream(seed, Stream::Benchmark, 0);
        let mut normal = |rows: usize, cols: usize, scale: f64| {
            DMatrix::from_fn(rows, cols, |_, _| T::lit(scale * rng.sample::<f64, _>(StandardNormal)))
        };
        let (n_x, n_u, n_w) = (dims.n_x, dims.n_u, dims.n_w);
        let a = DMatrix::identity(n_x, n_x) + normal(n_x, n_x, 0.1 / (n_x as f64).sqrt());
        let b = normal(n_x, n_u, 0.5);
        let d = normal(n_x, n_w, 0.3);
        let mq = normal(n_x, n_x, 1.0 / (n_x as f64).sqrt());
        let q = mq.transpose() * &mq + DMatrix::identity(n_x, n_x) * T::lit(0.5);
        let mr = normal(n_u, n_u, 0.3);
        let r = mr.transpose() * &mr + DMatrix::identity(n_u, n_u) * T::lit(0.5);
        let qf = q.clone() * T::lit(2.0);
        LinearQuadratic { a, b, d, q, r, qf, horizon: dims.horizon, lower: None, upper: None }
    }

    pub fn with_bounds(mut self, lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        if lower.len() != self.b.ncols() || upper.len() != self.b.ncols() {
            return Err(Error::Dimension { context: "control bounds", expected: self.b.ncols(), actual: lower.len() });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::Config("control lower bound exceeds upper bound".into()));
        }
        self.lower = Some(lower);
        self.upper = Some(upper);
        Ok(self)
    }
}

impl<T: Real> OcpModel<T> for LinearQuadratic<T> {
    fn dims(&self) -> Dims {
        Dims { n_x: self.a.nrows(), n_u: self.b.ncols(), n_w: self.d.ncols(), horizon: self.horizon }
    }

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, _t: usize) -> DVector<T> {
        &self.a * x + &self.b * u + &self.d * w
    }

    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, _t: usize) -> T {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u))
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.qf * x))
    }

    fn control_lower(&self) -> DVector<T> {
        self.lower.clone().unwrap_or_else(|| DVector::from_element(self.b.ncols(), -T::infinity()))
    }

    fn control_upper(&self) -> DVector<T> {
        self.upper.clone().unwrap_or_else(|| DVector::from_element(self.b.ncols(), T::infinity()))
    }

    fn dynamics_derivs(
        &self,
        _x: &DVector<T>,
        _u: &DVector<T>,
        _w: &DVector<T>,
        _t: usize,
        _v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        let Dims { n_x, n_u, n_w, .. } = self.dims();
        DynamicsDerivs {
            f_x: self.a.clone(),
            f_u: self.b.clone(),
            f_w: self.d.clone(),
            vfxx: DMatrix::zeros(n_x, n_x),
            vfuu: DMatrix::zeros(n_u, n_u),
            vfww: DMatrix::zeros(n_w, n_w),
        }
    }

    fn cost_derivs(&self, x: &DVector<T>, u: &DVector<T>, _t: usize) -> CostDerivs<T> {
        let two = T::lit(2.0);
        let qs = (&self.q + self.q.transpose()) * T::lit(0.5);
        let rs = (&self.r + self.r.transpose()) * T::lit(0.5);
        CostDerivs {
            l_x: &qs * x * two,
            l_u: &rs * u * two,
            l_xx: qs * two,
            l_uu: rs * two,
            l_xu: DMatrix::zeros(x.len(), u.len()),
        }
    }

    fn terminal_derivs(&self, x: &DVector<T>) -> TerminalDerivs<T> {
        let qs = (&self.qf + self.qf.transpose()) * T::lit(0.5);
        TerminalDerivs { l_x: &qs * x * T::lit(2.0), l_xx: qs * T::lit(2.0) }
    }
}
