use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::disturbance::{draw_dataset, DisturbanceDataset, TrueDistribution};
use crate::error::{Error, Result};
use crate::problem::{CostDerivs, Dims, DynamicsDerivs, OcpModel, TerminalDerivs};
use crate::rng::{substream, Stream};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KuramotoParams {
    pub oscillators: usize,
    pub horizon: usize,
    pub dt: f64,
    pub coupling: f64,
    /// Variance of the natural frequencies around zero.
    pub omega_variance: f64,
    pub noise_mean: f64,
    pub noise_variance: f64,
    pub control_weight: f64,
    /// Initial phases are drawn uniformly from `[-spread, spread]`.
    pub initial_spread: f64,
}

impl Default for KuramotoParams {
    fn default() -> Self {
        KuramotoParams {
            oscillators: 8,
            horizon: 100,
            dt: 0.03,
            coupling: 1.0,
            omega_variance: 0.004,
            noise_mean: 0.001,
            noise_variance: 0.001,
            control_weight: 1e-4,
            initial_spread: 1.0,
        }
    }
}

/// Discrete Kuramoto oscillators whose coupling strength is the control:
/// `theta_i' = theta_i + dt (omega_i + K u sum_j sin(theta_j - theta_i)) + w_i`.
/// The cost `sum_{i,j} sin^2(theta_j - theta_i)` rewards synchrony.
#[derive(Debug, Clone)]
pub struct KuramotoBenchmark<T: Real> {
    pub params: KuramotoParams,
    omega: DVector<T>,
    initial: DVector<T>,
}

impl<T: Real> KuramotoBenchmark<T> {
    /// Natural frequencies and initial phases are drawn from the benchmark
    /// substream of `seed`.
    pub fn new(params: KuramotoParams, seed: u64) -> Result<Self> {
        if params.oscillators < 2 {
            return Err(Error::Config("the Kuramoto model needs at least two oscillators".into()));
        }
        if params.horizon == 0 || !(params.dt > 0.0) {
            return Err(Error::Config("Kuramoto horizon and dt must be positive".into()));
        }
        if [params.omega_variance, params.noise_variance, params.control_weight, params.initial_spread]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Config("Kuramoto variances and weights must be nonnegative".into()));
        }
        let mut rng = substream(seed, Stream::Benchmark, 0);
        let normal = Normal::new(0.0, params.omega_variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let l = params.oscillators;
        let omega = DVector::from_fn(l, |_, _| T::lit(normal.sample(&mut rng)));
        let spread = params.initial_spread;
        let initial =
            DVector::from_fn(l, |_, _| T::lit(if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 }));
        Ok(KuramotoBenchmark { params, omega, initial })
    }

    pub fn initial_state(&self) -> DVector<T> {
        self.initial.clone()
    }

    pub fn omega(&self) -> &DVector<T> {
        &self.omega
    }

    pub fn true_distribution(&self) -> TrueDistribution {
        TrueDistribution::isotropic_gaussian(
            self.params.noise_mean,
            self.params.noise_variance,
            self.params.oscillators,
        )
    }

    pub fn dataset(&self, n: usize, seed: u64) -> Result<DisturbanceDataset<T>> {
        draw_dataset(&self.true_distribution(), self.params.horizon, n, seed)
    }

    /// `sum_j sin(theta_j - theta_k)` for every `k`.
    fn coupling_sums(x: &DVector<T>) -> DVector<T> {
        DVector::from_fn(x.len(), |k, _| x.iter().fold(T::zero(), |acc, &xj| acc + (xj - x[k]).sin()))
    }

    fn phase_cost(x: &DVector<T>) -> T {
        let mut total = T::zero();
        for &xi in x.iter() {
            for &xj in x.iter() {
                let s = (xj - xi).sin();
                total += s * s;
            }
        }
        total
    }

    fn phase_derivs(x: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let n = x.len();
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                if j == k {
                    continue;
                }
                let d = two * (x[k] - x[j]);
                g[k] += two * d.sin();
                let c = four * d.cos();
                h[(k, k)] += c;
                h[(k, j)] -= c;
            }
        }
        (g, h)
    }
}

impl<T: Real> OcpModel<T> for KuramotoBenchmark<T> {
    fn dims(&self) -> Dims {
        let l = self.params.oscillators;
        Dims { n_x: l, n_u: 1, n_w: l, horizon: self.params.horizon }
    }

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, _t: usize) -> DVector<T> {
        let dt = T::lit(self.params.dt);
        let ku = T::lit(self.params.coupling) * u[0];
        let sums = Self::coupling_sums(x);
        DVector::from_fn(x.len(), |k, _| x[k] + dt * (self.omega[k] + ku * sums[k]) + w[k])
    }

    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, _t: usize) -> T {
        Self::phase_cost(x) + T::lit(self.params.control_weight) * u[0] * u[0]
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        Self::phase_cost(x)
    }

    fn dynamics_derivs(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        _w: &DVector<T>,
        _t: usize,
        v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        let n = x.len();
        let dt = T::lit(self.params.dt);
        let dtk = dt * T::lit(self.params.coupling);
        let scale = dtk * u[0];
        let mut f_x = DMatrix::identity(n, n);
        let mut vfxx = DMatrix::zeros(n, n);
        for k in 0..n {
            let ck = scale * v_x[k];
            for j in 0..n {
                if j == k {
                    continue;
                }
                let d = x[j] - x[k];
                let c = scale * d.cos();
                f_x[(k, j)] += c;
                f_x[(k, k)] -= c;
                // Hessian of sin(theta_j - theta_k) is -s (e_j - e_k)(e_j - e_k)'.
                let s = ck * d.sin();
                vfxx[(j, j)] -= s;
                vfxx[(k, k)] -= s;
                vfxx[(j, k)] += s;
                vfxx[(k, j)] += s;
            }
        }
        let f_u = DMatrix::from_column_slice(n, 1, (Self::coupling_sums(x) * dtk).as_slice());
        DynamicsDerivs {
            f_x,
            f_u,
            f_w: DMatrix::identity(n, n),
            vfxx,
            vfuu: DMatrix::zeros(1, 1),
            vfww: DMatrix::zeros(n, n),
        }
    }

    fn cost_derivs(&self, x: &DVector<T>, u: &DVector<T>, _t: usize) -> CostDerivs<T> {
        let (l_x, l_xx) = Self::phase_derivs(x);
        let two_c = T::lit(2.0 * self.params.control_weight);
        CostDerivs {
            l_x,
            l_u: DVector::from_element(1, two_c * u[0]),
            l_xx,
            l_uu: DMatrix::from_element(1, 1, two_c),
            l_xu: DMatrix::zeros(x.len(), 1),
        }
    }

    fn terminal_derivs(&self, x: &DVector<T>) -> TerminalDerivs<T> {
        let (l_x, l_xx) = Self::phase_derivs(x);
        TerminalDerivs { l_x, l_xx }
    }
}
