use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::box_qp::{box_qp, BoxQpStatus};
use super::{GainFailure, PolicyStep, QExpansion};
use crate::scalar::Real;

/// Controller subproblem after the adversary has been eliminated:
/// minimize `du'S du / 2 + du'(g + B dx)`.
struct Reduced<T: Real> {
    adversary: Option<Cholesky<T, Dyn>>,
    s: DMatrix<T>,
    b: DMatrix<T>,
    g: DVector<T>,
}

fn reduce<T: Real>(q: &QExpansion<T>, mu: T) -> Result<Reduced<T>, GainFailure> {
    let n_u = q.q_uu.nrows();
    let mut s = &q.q_uu + DMatrix::identity(n_u, n_u) * mu;
    let mut b = q.q_xu.transpose();
    let mut g = q.q_u.clone();
    let adversary = match q.penalty {
        Some(_) => {
            let n_w = q.q_ww.nrows();
            let nww = DMatrix::identity(n_w, n_w) * mu - &q.q_ww;
            let chol = nww.cholesky().ok_or(GainFailure::Adversary)?;
            // -Q_ww^{-1} becomes Nww^{-1}, so the Schur terms change sign.
            let inv_uw = chol.solve(&q.q_uw.transpose());
            s += &q.q_uw * &inv_uw;
            b += inv_uw.tr_mul(&q.q_xw.transpose());
            g += inv_uw.tr_mul(&q.qbar_w);
            Some(chol)
        }
        None => None,
    };
    Ok(Reduced { adversary, s, b, g })
}

fn adversary_gains<T: Real>(
    q: &QExpansion<T>,
    chol: Option<&Cholesky<T, Dyn>>,
    gain_k: DMatrix<T>,
    k: DVector<T>,
) -> PolicyStep<T> {
    let n_x = q.q_xx.nrows();
    let n_w = q.q_ww.nrows();
    match chol {
        Some(chol) => {
            let gain_h = chol.solve(&(q.q_uw.tr_mul(&gain_k) + q.q_xw.transpose()));
            let uw_k = q.q_uw.tr_mul(&k);
            let h_i = q.q_w_i.iter().map(|qw| chol.solve(&(&uw_k + qw))).collect();
            let h_bar = chol.solve(&(&uw_k + &q.qbar_w));
            PolicyStep { gain_k, k, gain_h, h_i, h_bar }
        }
        None => PolicyStep { gain_k, k, gain_h: DMatrix::zeros(n_w, n_x), h_i: Vec::new(), h_bar: DVector::zeros(n_w) },
    }
}

fn finite<T: Real>(p: PolicyStep<T>) -> Result<PolicyStep<T>, GainFailure> {
    let all = p
        .gain_k
        .iter()
        .chain(p.k.iter())
        .chain(p.gain_h.iter())
        .chain(p.h_bar.iter())
        .chain(p.h_i.iter().flat_map(|h| h.iter()));
    for v in all {
        if !v.is_finite_value() {
            return Err(GainFailure::NonFinite);
        }
    }
    Ok(p)
}

/// Unconstrained saddle-point gains with regularization `mu` on both players.
pub fn compute_gains<T: Real>(q: &QExpansion<T>, mu: T) -> Result<PolicyStep<T>, GainFailure> {
    let r = reduce(q, mu)?;
    let chol = r.s.cholesky().ok_or(GainFailure::Controller)?;
    let gain_k = -chol.solve(&r.b);
    let k = -chol.solve(&r.g);
    finite(adversary_gains(q, r.adversary.as_ref(), gain_k, k))
}

/// Saddle-point gains with the control confined to `[lower, upper]`.
///
/// The adversary is eliminated first; the remaining control problem is a
/// box QP in the feedforward. Feedback rows of clamped inputs are zero.
pub fn compute_gains_boxed<T: Real>(
    q: &QExpansion<T>,
    mu: T,
    lower: &DVector<T>,
    upper: &DVector<T>,
    u_bar: &DVector<T>,
    warm: Option<&DVector<T>>,
) -> Result<PolicyStep<T>, GainFailure> {
    let r = reduce(q, mu)?;
    let lo = lower - u_bar;
    let hi = upper - u_bar;
    let start = warm.cloned().unwrap_or_else(|| DVector::zeros(u_bar.len()));
    let qp = box_qp(&r.s, &r.g, &lo, &hi, &start);
    if matches!(qp.status, BoxQpStatus::MaxIterations | BoxQpStatus::NotPositiveDefinite) {
        return Err(GainFailure::BoxQp);
    }
    let n_u = u_bar.len();
    let n_x = q.q_xx.nrows();
    let free: Vec<usize> = (0..n_u).filter(|&i| !qp.clamped[i]).collect();
    let mut gain_k = DMatrix::zeros(n_u, n_x);
    if !free.is_empty() {
        let s_ff = r.s.select_rows(&free).select_columns(&free);
        let b_f = r.b.select_rows(&free);
        let chol = s_ff.cholesky().ok_or(GainFailure::Controller)?;
        let k_free = -chol.solve(&b_f);
        for (row, &i) in free.iter().enumerate() {
            gain_k.set_row(i, &k_free.row(row));
        }
    }
    finite(adversary_gains(q, r.adversary.as_ref(), gain_k, qp.x))
}
