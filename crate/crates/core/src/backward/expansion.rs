use nalgebra::{DMatrix, DVector};

use super::{Penalty, QExpansion, ValueExpansion};
use crate::error::{Error, Result};
use crate::problem::{eval_cost_derivs, eval_dynamics_derivs, OcpModel};
use crate::scalar::{first_non_finite, symmetrize, vec_non_finite, Real};

/// Assembles the quadratic model of the sample-wise Q-functions around
/// `(x, u, w)` at step `t`.
///
/// With `gauss_newton` the contracted second derivatives of the dynamics
/// are dropped.
#[allow(clippy::too_many_arguments)]
pub fn q_expand<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    next: &ValueExpansion<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    w: &DVector<T>,
    t: usize,
    penalty: Option<Penalty<'_, T>>,
    gauss_newton: bool,
) -> Result<QExpansion<T>> {
    let dyn_d = eval_dynamics_derivs(model, x, u, w, t, &next.v_x)?;
    let cost = eval_cost_derivs(model, x, u, t)?;
    let (f_x, f_u, f_w) = (&dyn_d.f_x, &dyn_d.f_u, &dyn_d.f_w);
    let vxx = &next.v_xx;
    let vxx_fx = vxx * f_x;
    let vxx_fu = vxx * f_u;
    let vxx_fw = vxx * f_w;

    let mut q_xx = &cost.l_xx + f_x.tr_mul(&vxx_fx);
    let mut q_uu = &cost.l_uu + f_u.tr_mul(&vxx_fu);
    let mut q_ww = f_w.tr_mul(&vxx_fw);
    if !gauss_newton {
        q_xx += &dyn_d.vfxx;
        q_uu += &dyn_d.vfuu;
        q_ww += &dyn_d.vfww;
    }
    let q_xu = &cost.l_xu + f_x.tr_mul(&vxx_fu);
    let q_xw = f_x.tr_mul(&vxx_fw);
    let q_uw = f_u.tr_mul(&vxx_fw);
    let q_x = &cost.l_x + f_x.tr_mul(&next.v_x);
    let q_u = &cost.l_u + f_u.tr_mul(&next.v_x);
    let fw_vx = f_w.tr_mul(&next.v_x);
    let stage = model.running_cost(x, u, t) + next.v0;

    let (qbar, qbar_w, q_w_i, lambda) = match penalty {
        Some(Penalty { dataset, lambda }) => {
            let two_lambda = T::lit(2.0) * lambda;
            let n_w = w.len();
            q_ww -= DMatrix::identity(n_w, n_w) * two_lambda;
            let (mean, cov) = dataset.empirical_moments(t);
            let q_w_i: Vec<DVector<T>> = dataset.samples_at(t).iter().map(|s| &fw_vx - (w - s) * two_lambda).collect();
            let qbar_w = &fw_vx - (w - mean) * two_lambda;
            let trace_term = if cov.iter().all(|c| *c == T::zero()) {
                T::zero()
            } else {
                let solved = q_ww.clone().lu().solve(cov).ok_or(Error::Derivative {
                    what: "Q_ww",
                    row: 0,
                    col: 0,
                    value: 0.0,
                })?;
                solved.trace()
            };
            let qbar =
                stage - lambda * (w - mean).norm_squared() - lambda * cov.trace() - two_lambda * lambda * trace_term;
            (qbar, qbar_w, q_w_i, Some(lambda))
        }
        None => (stage, fw_vx, Vec::new(), None),
    };

    symmetrize(&mut q_xx);
    symmetrize(&mut q_uu);
    symmetrize(&mut q_ww);
    let q = QExpansion { qbar, q_x, q_u, qbar_w, q_w_i, q_xx, q_uu, q_ww, q_xu, q_xw, q_uw, penalty: lambda };
    check_finite(&q)?;
    Ok(q)
}

fn check_finite<T: Real>(q: &QExpansion<T>) -> Result<()> {
    let mats = [
        ("Q_xx", &q.q_xx),
        ("Q_uu", &q.q_uu),
        ("Q_ww", &q.q_ww),
        ("Q_xu", &q.q_xu),
        ("Q_xw", &q.q_xw),
        ("Q_uw", &q.q_uw),
    ];
    for (what, m) in mats {
        if let Some((row, col, v)) = first_non_finite(m) {
            return Err(Error::Derivative { what, row, col, value: v.as_f64() });
        }
    }
    let vecs = std::iter::once(("Q_x", &q.q_x))
        .chain(std::iter::once(("Q_u", &q.q_u)))
        .chain(std::iter::once(("Q_w", &q.qbar_w)))
        .chain(q.q_w_i.iter().map(|v| ("Q_w_i", v)));
    for (what, v) in vecs {
        if let Some((row, val)) = vec_non_finite(v) {
            return Err(Error::Derivative { what, row, col: 0, value: val.as_f64() });
        }
    }
    if !q.qbar.is_finite_value() {
        return Err(Error::Derivative { what: "Q", row: 0, col: 0, value: q.qbar.as_f64() });
    }
    Ok(())
}
