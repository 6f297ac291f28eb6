//! Multiplicative update rules, channel weights and the objective.

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, norm_l2p, Matrix, RealVector};
use crate::solver::config::{Loss, NormMode};
use crate::sparsity::{pow_exponent, sparsity_penalty};

/// `X - M A`, computed in place over the product.
pub(crate) fn residual(x: &Matrix, m: &Matrix, a: &Matrix) -> Result<Matrix> {
    let mut e = matmul(m, a)?;
    if e.shape() != x.shape() {
        return Err(Error::Shape {
            op: "residual",
            left: x.shape(),
            right: e.shape(),
        });
    }
    for (v, &xv) in e.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *v = xv - *v;
    }
    Ok(e)
}

/// Diagonal of the channel-weight matrix `U`.
///
/// `U_ll = (p/2) (||e^l||^2 + eps)^((p-2)/2)`, where `e^l` is row `l` of the
/// residual. For `p = 1` this is `1 / (2 sqrt(||e^l||^2 + eps))`; for `p = 2`
/// every weight is 1.
pub fn channel_weights(
    x: &Matrix,
    m: &Matrix,
    a: &Matrix,
    eps_guard: f64,
    p: f64,
) -> Result<RealVector> {
    let e = residual(x, m, a)?;
    Ok(weights_from_residual(&e, eps_guard, p))
}

pub(crate) fn weights_from_residual(e: &Matrix, eps_guard: f64, p: f64) -> RealVector {
    (0..e.rows())
        .map(|l| {
            let sq = e.row(l).iter().fold(0.0, |acc, v| acc + v * v) + eps_guard;
            if p == 1.0 {
                0.5 / sq.sqrt()
            } else if p == 2.0 {
                1.0
            } else {
                0.5 * p * sq.powf(0.5 * (p - 2.0))
            }
        })
        .collect::<Vec<_>>()
        .into()
}

/// `M <- M o (U X A^T) / (U M A A^T + phi)`.
pub fn update_m(m: &Matrix, a: &Matrix, x: &Matrix, u: &[f64], phi: f64) -> Result<Matrix> {
    if x.rows() != m.rows() || u.len() != m.rows() {
        return Err(Error::Shape {
            op: "update_m",
            left: m.shape(),
            right: x.shape(),
        });
    }
    let num = matmul_nt(x, a)?.scale_rows(u);
    let den = matmul(m, &matmul_nt(a, a)?)?.scale_rows(u);
    Ok(ratio_update(m, &num, &den, |_| phi))
}

/// `A <- A o (M^T U X) / (M^T U M A + lambda (1 - H) o (A + xi)^-H + phi)`.
#[allow(clippy::too_many_arguments)]
pub fn update_a(
    a: &Matrix,
    m: &Matrix,
    x: &Matrix,
    u: &[f64],
    lambda: f64,
    h_mat: &Matrix,
    xi: f64,
    phi: f64,
) -> Result<Matrix> {
    if x.rows() != m.rows() || u.len() != m.rows() || h_mat.shape() != a.shape() {
        return Err(Error::Shape {
            op: "update_a",
            left: a.shape(),
            right: h_mat.shape(),
        });
    }
    let um = m.scale_rows(u);
    let num = matmul_tn(&um, x)?;
    let mut den = matmul(&matmul_tn(&um, m)?, a)?;
    add_penalty_gradient(&mut den, a, lambda, h_mat, xi);
    Ok(ratio_update(a, &num, &den, |_| phi))
}

/// Adds `lambda (1 - H) o (A + xi)^-H` to `den`.
pub(crate) fn add_penalty_gradient(
    den: &mut Matrix,
    a: &Matrix,
    lambda: f64,
    h_mat: &Matrix,
    xi: f64,
) {
    if lambda == 0.0 {
        return;
    }
    for ((d, &v), &h) in den
        .as_mut_slice()
        .iter_mut()
        .zip(a.as_slice())
        .zip(h_mat.as_slice())
    {
        *d += lambda * (1.0 - h) * pow_exponent(v + xi, -h);
    }
}

/// `cur o num / (den + guard(row))`, entry-wise.
pub(crate) fn ratio_update(
    cur: &Matrix,
    num: &Matrix,
    den: &Matrix,
    guard: impl Fn(usize) -> f64,
) -> Matrix {
    let mut out = cur.clone();
    for r in 0..cur.rows() {
        let g = guard(r);
        let (nr, dr) = (num.row(r), den.row(r));
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v *= nr[c] / (dr[c] + g);
        }
    }
    out
}

/// Scales each row of `A` to unit norm and the matching column of `M` by the
/// same factor, leaving `M A` unchanged. All-zero rows are left untouched.
pub fn renormalize(m: &Matrix, a: &Matrix, mode: NormMode) -> (Matrix, Matrix) {
    let mut m = m.clone();
    let mut a = a.clone();
    for k in 0..a.rows() {
        let norm = match mode {
            NormMode::L1Rows => a.row(k).iter().fold(0.0, |acc, v| acc + v.abs()),
            NormMode::L2Rows => crate::linalg::l2(a.row(k)),
        };
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        a.row_mut(k).iter_mut().for_each(|v| *v /= norm);
        for l in 0..m.rows() {
            m[(l, k)] *= norm;
        }
    }
    (m, a)
}

/// Objective value split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub loss: f64,
    pub penalty: f64,
}

/// `loss + lambda * ||(A + xi)^(1 - H)||_1`, with the loss chosen by tag.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    x: &Matrix,
    m: &Matrix,
    a: &Matrix,
    lambda: f64,
    h_mat: &Matrix,
    xi: f64,
    loss: Loss,
    p: f64,
) -> Result<Objective> {
    objective_from_residual(&residual(x, m, a)?, a, lambda, h_mat, xi, loss, p)
}

/// [`objective`] for a residual that is already at hand.
pub(crate) fn objective_from_residual(
    e: &Matrix,
    a: &Matrix,
    lambda: f64,
    h_mat: &Matrix,
    xi: f64,
    loss: Loss,
    p: f64,
) -> Result<Objective> {
    let loss_term = loss_value(e, loss, p)?;
    let penalty = if lambda == 0.0 {
        0.0
    } else {
        lambda * sparsity_penalty(a, h_mat, xi)?
    };
    Ok(Objective {
        total: loss_term + penalty,
        loss: loss_term,
        penalty,
    })
}

pub(crate) fn loss_value(e: &Matrix, loss: Loss, p: f64) -> Result<f64> {
    Ok(match loss {
        Loss::Frobenius => {
            let f = e.frobenius_norm();
            0.5 * f * f
        }
        Loss::L21 => 0.5 * norm_l2p(e, 1.0)?,
        Loss::L2p => 0.5 * norm_l2p(e, p)?,
    })
}
