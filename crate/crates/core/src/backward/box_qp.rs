//! Projected-Newton solver for `min x'Hx/2 + g'x` subject to `lo <= x <= hi`.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

const MAX_ITER: usize = 100;
const MIN_GRAD: f64 = 1e-8;
const MIN_REL_IMPROVE: f64 = 1e-15;
const STEP_DEC: f64 = 0.6;
const MIN_STEP: f64 = 1e-22;
const ARMIJO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxQpStatus {
    NotPositiveDefinite,
    MaxIterations,
    NoDescent,
    SmallImprovement,
    SmallGradient,
    AllClamped,
}

#[derive(Debug, Clone)]
pub struct BoxQpResult<T: Real> {
    pub x: DVector<T>,
    pub status: BoxQpStatus,
    /// Coordinates held at a bound at the solution.
    pub clamped: Vec<bool>,
    pub iterations: usize,
}

fn clamp<T: Real>(x: &DVector<T>, lo: &DVector<T>, hi: &DVector<T>) -> DVector<T> {
    DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i]))
}

fn objective<T: Real>(h: &DMatrix<T>, g: &DVector<T>, x: &DVector<T>) -> T {
    x.dot(g) + T::lit(0.5) * x.dot(&(h * x))
}

fn active_set<T: Real>(x: &DVector<T>, grad: &DVector<T>, lo: &DVector<T>, hi: &DVector<T>) -> Vec<bool> {
    (0..x.len()).map(|i| (x[i] == lo[i] && grad[i] > T::zero()) || (x[i] == hi[i] && grad[i] < T::zero())).collect()
}

fn indices(mask: &[bool], want: bool) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m == want).map(|(i, _)| i).collect()
}

pub fn box_qp<T: Real>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    lo: &DVector<T>,
    hi: &DVector<T>,
    x0: &DVector<T>,
) -> BoxQpResult<T> {
    let n = g.len();
    let mut x = clamp(x0, lo, hi);
    let mut value = objective(h, g, &x);
    let mut clamped = vec![false; n];
    let mut chol = None;
    let mut old_value = value;
    let mut status = BoxQpStatus::MaxIterations;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        if iter > 0 && (old_value - value) < T::lit(MIN_REL_IMPROVE) * old_value.abs() {
            status = BoxQpStatus::SmallImprovement;
            break;
        }
        old_value = value;
        let grad = g + h * &x;
        let old_clamped = std::mem::replace(&mut clamped, active_set(&x, &grad, lo, hi));
        let free = indices(&clamped, false);
        if free.is_empty() {
            status = BoxQpStatus::AllClamped;
            break;
        }
        if iter == 0 || old_clamped != clamped {
            chol = h.select_rows(&free).select_columns(&free).cholesky();
            if chol.is_none() {
                status = BoxQpStatus::NotPositiveDefinite;
                break;
            }
        }
        let grad_free = grad.select_rows(&free);
        if grad_free.norm() < T::lit(MIN_GRAD) {
            status = BoxQpStatus::SmallGradient;
            break;
        }
        // Newton step on the free subspace with clamped coordinates fixed.
        let x_clamped = DVector::from_fn(n, |i, _| if clamped[i] { x[i] } else { T::zero() });
        let grad_clamped = g + h * x_clamped;
        let newton = chol.as_ref().unwrap().solve(&grad_clamped.select_rows(&free));
        let mut search = DVector::zeros(n);
        for (k, &i) in free.iter().enumerate() {
            search[i] = -newton[k] - x[i];
        }
        let sdotg = search.dot(&grad);
        if sdotg >= T::zero() {
            status = BoxQpStatus::NoDescent;
            break;
        }
        let mut step = T::one();
        let mut candidate = clamp(&(&x + &search * step), lo, hi);
        let mut cand_value = objective(h, g, &candidate);
        let mut too_small = false;
        while (cand_value - old_value) / (step * sdotg) < T::lit(ARMIJO) {
            step *= T::lit(STEP_DEC);
            candidate = clamp(&(&x + &search * step), lo, hi);
            cand_value = objective(h, g, &candidate);
            if step < T::lit(MIN_STEP) {
                too_small = true;
                break;
            }
        }
        if too_small {
            status = BoxQpStatus::NoDescent;
            break;
        }
        x = candidate;
        value = cand_value;
    }
    let grad = g + h * &x;
    let clamped = active_set(&x, &grad, lo, hi);
    BoxQpResult { x, status, clamped, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};

    /// Minimum over all 3^n assignments of each coordinate to lower bound,
    /// upper bound or free, keeping only feasible stationary candidates.
    fn enumerate(h: &DMatrix<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
        let n = g.len();
        let mut best = f64::INFINITY;
        for code in 0..3usize.pow(n as u32) {
            let mut state = vec![0; n];
            let mut c = code;
            for s in state.iter_mut() {
                *s = c % 3;
                c /= 3;
            }
            let mut x = DVector::zeros(n);
            for i in 0..n {
                match state[i] {
                    1 => x[i] = lo[i],
                    2 => x[i] = hi[i],
                    _ => {}
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
            if !free.is_empty() {
                let fixed = DVector::from_fn(n, |i, _| if state[i] == 0 { 0.0 } else { x[i] });
                let rhs = -(g + h * fixed).select_rows(&free);
                let sol = h.select_rows(&free).select_columns(&free).lu().solve(&rhs).unwrap();
                for (k, &i) in free.iter().enumerate() {
                    x[i] = sol[k];
                }
            }
            if (0..n).all(|i| x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12) {
                best = best.min(objective(h, g, &x));
            }
        }
        best
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let h = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
            let g = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let lo = DVector::from_fn(3, |_, _| rng.random_range(-1.5..0.0));
            let hi = DVector::from_fn(3, |i, _| lo[i] + rng.random_range(0.1..2.0));
            let x0 = DVector::zeros(3);
            let res = box_qp(&h, &g, &lo, &hi, &x0);
            assert_ne!(res.status, BoxQpStatus::MaxIterations);
            let got = objective(&h, &g, &res.x);
            let want = enumerate(&h, &g, &lo, &hi);
            assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn one_dimensional_clamp() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let res = box_qp(&h, &dvector![-10.0], &dvector![-1.0], &dvector![1.0], &dvector![0.0]);
        assert_eq!(res.x[0], 1.0);
        assert_eq!(res.clamped, vec![true]);
    }

    #[test]
    fn indefinite_hessian_reported() {
        let h = DMatrix::from_element(1, 1, -1.0);
        let res = box_qp(&h, &dvector![0.1], &dvector![-1.0], &dvector![1.0], &dvector![0.0]);
        assert_eq!(res.status, BoxQpStatus::NotPositiveDefinite);
    }
}
