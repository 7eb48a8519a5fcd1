//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{GlmfError, Result};

/// Relative ridge added to the normal equations when they are not positive definite.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// Solve the symmetric positive (semi)definite system `gram · b = rhs`.
///
/// Falls back to a ridge of `RIDGE_FACTOR · trace / r` on the diagonal when the
/// Cholesky factorization fails. The flag reports whether the ridge engaged.
pub fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(chol) = gram.clone().cholesky() {
        let sol = chol.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return (sol, false);
        }
    }
    let r = gram.nrows();
    let trace = gram.trace();
    let mut lambda = RIDGE_FACTOR * if trace > 0.0 { trace / r as f64 } else { 1.0 };
    let mut ridged = gram;
    loop {
        let mut g = ridged.clone();
        for i in 0..r {
            g[(i, i)] += lambda;
        }
        if let Some(chol) = g.cholesky() {
            let sol = chol.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return (sol, true);
            }
        }
        // Indefinite through roundoff; grow the ridge until it factors.
        lambda *= 10.0;
        if !lambda.is_finite() {
            for i in 0..r {
                ridged[(i, i)] = 1.0;
            }
            return (DVector::zeros(r), true);
        }
    }
}

/// Weighted least squares `argmin_b Σ w2_i (s_i − d_i·b)²` over the rows of `design`.
pub fn weighted_least_squares(
    design: &DMatrix<f64>,
    w2: &[f64],
    response: &[f64],
) -> (DVector<f64>, bool) {
    let r = design.ncols();
    let mut gram = DMatrix::<f64>::zeros(r, r);
    let mut rhs = DVector::<f64>::zeros(r);
    for (i, (&w, &s)) in w2.iter().zip(response).enumerate() {
        if w == 0.0 {
            continue;
        }
        for a in 0..r {
            let da = design[(i, a)] * w;
            rhs[a] += da * s;
            for b in 0..=a {
                gram[(a, b)] += da * design[(i, b)];
            }
        }
    }
    for a in 0..r {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    solve_normal_equations(gram, &rhs)
}

/// Thin SVD with singular values sorted in decreasing order and a fixed sign
/// convention (largest-magnitude entry of each right vector positive).
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(mat: &DMatrix<f64>) -> Result<SortedSvd> {
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(GlmfError::InvalidData("SVD input is not finite".into()));
    }
    let svd = mat.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| GlmfError::InvalidData("SVD failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| GlmfError::InvalidData("SVD failed".into()))?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut u_s = DMatrix::zeros(mat.nrows(), k);
    let mut v_s = DMatrix::zeros(mat.ncols(), k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut vcol = v_t.row(src).transpose();
        let mut ucol = u.column(src).into_owned();
        let pivot = vcol
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            vcol.neg_mut();
            ucol.neg_mut();
        }
        v_s.set_column(dst, &vcol);
        u_s.set_column(dst, &ucol);
        sv.push(svd.singular_values[src]);
    }
    Ok(SortedSvd {
        u: u_s,
        singular_values: sv,
        v: v_s,
    })
}

impl SortedSvd {
    /// Rank-`r` reconstruction `U_r Σ_r V_rᵀ`.
    pub fn truncated(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.singular_values.len());
        let mut us = self.u.columns(0, r).into_owned();
        for j in 0..r {
            us.column_mut(j).scale_mut(self.singular_values[j]);
        }
        us * self.v.columns(0, r).transpose()
    }
}

/// Top-`r` right singular vectors as columns.
pub fn top_right_singular_vectors(mat: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let svd = sorted_svd(mat)?;
    if r > svd.singular_values.len() {
        return Err(GlmfError::RankTooLarge {
            rank: r,
            available: svd.singular_values.len(),
        });
    }
    Ok(svd.v.columns(0, r).into_owned())
}

pub fn frobenius_relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    let diff = (new - old).norm();
    let base = old.norm();
    if base > 0.0 {
        diff / base
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Vertically stack two matrices with equal column counts.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Horizontally stack two matrices with equal row counts.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_sorted_and_exact() {
        let m = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 0.0, 4.0, //
            -1.0, 0.5, 3.0, 2.0, //
            0.0, 1.0, 1.0, -2.0,
        ]);
        let svd = sorted_svd(&m).unwrap();
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!((svd.truncated(3) - &m).norm() < 1e-12);
    }

    #[test]
    fn ridge_engages_on_singular_gram() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        let (sol, ridged) = solve_normal_equations(gram, &rhs);
        assert!(ridged);
        assert!(sol.iter().all(|v| v.is_finite()));
        assert!((sol[0] + sol[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rank_beyond_spectrum_is_rejected() {
        let m = DMatrix::from_element(2, 3, 1.0);
        assert!(matches!(
            top_right_singular_vectors(&m, 3),
            Err(GlmfError::RankTooLarge { .. })
        ));
    }
}
