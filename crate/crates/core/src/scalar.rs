//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the solver can run on (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal or parameter into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion used for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

pub(crate) fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest absolute entry, `0` for empty input.
pub(crate) fn max_abs<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub(crate) fn first_non_finite<T: Real>(m: &DMatrix<T>) -> Option<(usize, usize, T)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite_value() {
                return Some((i, j, m[(i, j)]));
            }
        }
    }
    None
}

pub(crate) fn vec_non_finite<T: Real>(v: &DVector<T>) -> Option<(usize, T)> {
    v.iter().enumerate().find(|(_, x)| !x.is_finite_value()).map(|(i, x)| (i, *x))
}
