use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::disturbance::{draw_dataset, DisturbanceDataset, TrueDistribution};
use crate::error::{Error, Result};
use crate::problem::{CostDerivs, Dims, DynamicsDerivs, OcpModel, TerminalDerivs};
use crate::scalar::Real;

/// Scenario and weights of the car benchmark. The reference and obstacle
/// drift default to straight constant-speed crossings and can be replaced by
/// explicit per-step tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarParams {
    pub horizon: usize,
    pub dt: f64,
    pub wheelbase: f64,
    pub q: f64,
    pub r: f64,
    pub q_obs: f64,
    pub r_obs: f64,
    pub r_safe: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Initial car pose `[p_x, p_y, phi]`.
    pub start: [f64; 3],
    /// End point of the straight reference path.
    pub goal: [f64; 2],
    pub obstacle_start: [f64; 2],
    pub obstacle_end: [f64; 2],
    /// Half-width of the uniform obstacle disturbance.
    pub noise: f64,
    /// Explicit reference poses for steps `0..=horizon`.
    pub reference: Option<Vec<[f64; 3]>>,
    /// Explicit obstacle displacement for steps `0..horizon`.
    pub drift: Option<Vec<[f64; 2]>>,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            horizon: 800,
            dt: 0.05,
            wheelbase: 1.0,
            q: 10.0,
            r: 0.1,
            q_obs: 20.0,
            r_obs: 0.2,
            r_safe: 0.2,
            lower: [0.0, -0.6],
            upper: [10.0, 0.6],
            start: [0.0, 0.0, 0.0],
            goal: [10.0, 0.0],
            obstacle_start: [5.0, -2.5],
            obstacle_end: [5.0, 2.5],
            noise: 0.001,
            reference: None,
            drift: None,
        }
    }
}

/// Kinematic bicycle avoiding a drifting obstacle whose position is
/// perturbed by the disturbance.
///
/// State `[p_x, p_y, phi, o_x, o_y]`, input `[v, delta]`.
#[derive(Debug, Clone)]
pub struct CarBenchmark<T: Real> {
    pub params: CarParams,
    reference: Vec<[T; 3]>,
    drift: Vec<[T; 2]>,
}

impl<T: Real> CarBenchmark<T> {
    pub fn new(params: CarParams) -> Result<Self> {
        let p = &params;
        if p.horizon == 0 {
            return Err(Error::Config("car horizon must be positive".into()));
        }
        for (name, v) in [("dt", p.dt), ("wheelbase", p.wheelbase), ("r_obs", p.r_obs), ("r_safe", p.r_safe)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("car {name} must be positive")));
            }
        }
        if [p.q, p.r, p.q_obs, p.noise].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("car weights and noise must be nonnegative".into()));
        }
        if p.lower.iter().zip(&p.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("car control bounds need lower <= upper".into()));
        }
        let n = p.horizon as f64;
        let reference = match &p.reference {
            Some(r) if r.len() != p.horizon + 1 => {
                return Err(Error::Dimension { context: "car reference", expected: p.horizon + 1, actual: r.len() })
            }
            Some(r) => r.clone(),
            None => (0..=p.horizon)
                .map(|t| {
                    let s = t as f64 / n;
                    let dx = p.goal[0] - p.start[0];
                    let dy = p.goal[1] - p.start[1];
                    [p.start[0] + s * dx, p.start[1] + s * dy, dy.atan2(dx)]
                })
                .collect(),
        };
        let drift = match &p.drift {
            Some(d) if d.len() != p.horizon => {
                return Err(Error::Dimension { context: "car obstacle drift", expected: p.horizon, actual: d.len() })
            }
            Some(d) => d.clone(),
            None => {
                let step =
                    [(p.obstacle_end[0] - p.obstacle_start[0]) / n, (p.obstacle_end[1] - p.obstacle_start[1]) / n];
                vec![step; p.horizon]
            }
        };
        Ok(CarBenchmark {
            reference: reference.iter().map(|r| r.map(T::lit)).collect(),
            drift: drift.iter().map(|d| d.map(T::lit)).collect(),
            params,
        })
    }

    pub fn initial_state(&self) -> DVector<T> {
        let p = &self.params;
        DVector::from_iterator(
            5,
            [p.start[0], p.start[1], p.start[2], p.obstacle_start[0], p.obstacle_start[1]].into_iter().map(T::lit),
        )
    }

    pub fn true_distribution(&self) -> TrueDistribution {
        TrueDistribution::uniform_box(-self.params.noise, self.params.noise, 2)
    }

    pub fn dataset(&self, n: usize, seed: u64) -> Result<DisturbanceDataset<T>> {
        draw_dataset(&self.true_distribution(), self.params.horizon, n, seed)
    }

    pub fn reference(&self, t: usize) -> [T; 3] {
        self.reference[t]
    }

    fn spread(&self) -> T {
        T::lit(self.params.r_obs + self.params.r_safe)
    }

    fn obstacle_term(&self, x: &DVector<T>) -> (T, T, T) {
        let dx = x[0] - x[3];
        let dy = x[1] - x[4];
        let s2 = self.spread() * self.spread();
        let c = T::lit(self.params.q_obs) * (-(dx * dx + dy * dy) / (s2 + s2)).exp();
        (c, dx, dy)
    }

    fn state_cost(&self, x: &DVector<T>, t: usize) -> T {
        let r = self.reference[t];
        let tracking = (0..3).fold(T::zero(), |acc, i| acc + (x[i] - r[i]) * (x[i] - r[i]));
        T::lit(self.params.q) * tracking + self.obstacle_term(x).0
    }

    fn state_derivs(&self, x: &DVector<T>, t: usize) -> (DVector<T>, DMatrix<T>) {
        let r = self.reference[t];
        let two_q = T::lit(2.0 * self.params.q);
        let mut g = DVector::zeros(5);
        let mut h = DMatrix::zeros(5, 5);
        for i in 0..3 {
            g[i] = two_q * (x[i] - r[i]);
            h[(i, i)] = two_q;
        }
        let (c, dx, dy) = self.obstacle_term(x);
        let s2 = self.spread() * self.spread();
        let d = [dx, dy];
        for a in 0..2 {
            let ga = -c * d[a] / s2;
            g[a] += ga;
            g[a + 3] -= ga;
            for b in 0..2 {
                let delta = if a == b { T::one() } else { T::zero() };
                let m = c * (d[a] * d[b] / (s2 * s2) - delta / s2);
                h[(a, b)] += m;
                h[(a + 3, b + 3)] += m;
                h[(a, b + 3)] -= m;
                h[(a + 3, b)] -= m;
            }
        }
        (g, h)
    }
}

impl<T: Real> OcpModel<T> for CarBenchmark<T> {
    fn dims(&self) -> Dims {
        Dims { n_x: 5, n_u: 2, n_w: 2, horizon: self.params.horizon }
    }

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>, t: usize) -> DVector<T> {
        let dt = T::lit(self.params.dt);
        let l = T::lit(self.params.wheelbase);
        let (v, delta, phi) = (u[0], u[1], x[2]);
        let d = self.drift[t];
        DVector::from_vec(vec![
            x[0] + dt * v * phi.cos(),
            x[1] + dt * v * phi.sin(),
            phi + dt * v / l * delta.tan(),
            x[3] + d[0] + w[0],
            x[4] + d[1] + w[1],
        ])
    }

    fn running_cost(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> T {
        self.state_cost(x, t) + T::lit(self.params.r) * u.norm_squared()
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        self.state_cost(x, self.params.horizon)
    }

    fn control_lower(&self) -> DVector<T> {
        DVector::from_iterator(2, self.params.lower.iter().map(|v| T::lit(*v)))
    }

    fn control_upper(&self) -> DVector<T> {
        DVector::from_iterator(2, self.params.upper.iter().map(|v| T::lit(*v)))
    }

    fn clearance(&self, x: &DVector<T>) -> Option<T> {
        let (_, dx, dy) = self.obstacle_term(x);
        Some((dx * dx + dy * dy).sqrt())
    }

    fn dynamics_derivs(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        _w: &DVector<T>,
        _t: usize,
        v_x: &DVector<T>,
    ) -> DynamicsDerivs<T> {
        let dt = T::lit(self.params.dt);
        let l = T::lit(self.params.wheelbase);
        let (v, delta, phi) = (u[0], u[1], x[2]);
        let (s, c) = (phi.sin(), phi.cos());
        let sec2 = T::one() / (delta.cos() * delta.cos());

        let mut f_x = DMatrix::identity(5, 5);
        f_x[(0, 2)] = -dt * v * s;
        f_x[(1, 2)] = dt * v * c;
        let mut f_u = DMatrix::zeros(5, 2);
        f_u[(0, 0)] = dt * c;
        f_u[(1, 0)] = dt * s;
        f_u[(2, 0)] = dt * delta.tan() / l;
        f_u[(2, 1)] = dt * v * sec2 / l;
        let mut f_w = DMatrix::zeros(5, 2);
        f_w[(3, 0)] = T::one();
        f_w[(4, 1)] = T::one();

        let mut vfxx = DMatrix::zeros(5, 5);
        vfxx[(2, 2)] = -dt * v * (v_x[0] * c + v_x[1] * s);
        let mut vfuu = DMatrix::zeros(2, 2);
        let cross = v_x[2] * dt * sec2 / l;
        vfuu[(0, 1)] = cross;
        vfuu[(1, 0)] = cross;
        vfuu[(1, 1)] = v_x[2] * T::lit(2.0) * dt * v * sec2 * delta.tan() / l;
        DynamicsDerivs { f_x, f_u, f_w, vfxx, vfuu, vfww: DMatrix::zeros(2, 2) }
    }

    fn cost_derivs(&self, x: &DVector<T>, u: &DVector<T>, t: usize) -> CostDerivs<T> {
        let (l_x, l_xx) = self.state_derivs(x, t);
        let two_r = T::lit(2.0 * self.params.r);
        CostDerivs { l_x, l_u: u * two_r, l_xx, l_uu: DMatrix::identity(2, 2) * two_r, l_xu: DMatrix::zeros(5, 2) }
    }

    fn terminal_derivs(&self, x: &DVector<T>) -> TerminalDerivs<T> {
        let (l_x, l_xx) = self.state_derivs(x, self.params.horizon);
        TerminalDerivs { l_x, l_xx }
    }
}
