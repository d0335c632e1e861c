//! Small dense linear-algebra helpers: PSD tests, projections and factor bases.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Smallest eigenvalue of the symmetric part of `m` (zero for an empty matrix).
pub fn min_eigenvalue<R: Real>(m: &DMatrix<R>) -> R {
    if m.nrows() == 0 {
        return R::zero();
    }
    let sym = symmetrize(m);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(R::max_value().unwrap(), |a, b| if b < a { b } else { a })
}

pub fn symmetrize<R: Real>(m: &DMatrix<R>) -> DMatrix<R> {
    (m + m.transpose()) * R::lit(0.5)
}

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry<R: Real>(m: &DMatrix<R>) -> R {
    let mut worst = R::zero();
    for i in 0..m.nrows() {
        for j in 0..i {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Zero out negative eigenvalues of the symmetric part.
pub fn project_psd<R: Real>(m: &DMatrix<R>) -> DMatrix<R> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| if l < R::zero() { R::zero() } else { l });
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    symmetrize(&out)
}

/// Deterministic factor `R` (d×r, r = numerical rank) with `q = R Rᵀ`.
///
/// Outer-product Cholesky with diagonal pivoting; stops once the largest
/// remaining diagonal entry falls to `tol`. The columns come back in the order
/// original coordinates were pivoted, so the same input always yields the same
/// basis.
pub fn pivoted_cholesky<R: Real>(q: &DMatrix<R>, tol: R) -> DMatrix<R> {
    let d = q.nrows();
    let mut a = symmetrize(q);
    let mut cols: Vec<DVector<R>> = Vec::new();
    let mut used = vec![false; d];
    for _ in 0..d {
        let mut piv = None;
        let mut best = tol;
        for i in 0..d {
            if !used[i] && a[(i, i)] > best {
                best = a[(i, i)];
                piv = Some(i);
            }
        }
        let Some(p) = piv else { break };
        used[p] = true;
        let s = a[(p, p)].sqrt();
        let col = DVector::from_fn(d, |i, _| if used[i] && i != p { R::zero() } else { a[(i, p)] / s });
        a -= &col * col.transpose();
        cols.push(col);
    }
    if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse<R: Real>(m: &DMatrix<R>) -> DMatrix<R> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let eps = R::default_epsilon() * R::lit(m.nrows().max(m.ncols()) as f64) * R::lit(16.0);
    let svd = m.clone().svd(true, true);
    let max_s = svd.singular_values.iter().copied().fold(R::zero(), |a, b| if b > a { b } else { a });
    svd.pseudo_inverse(eps * (R::one() + max_s)).expect("svd computed with both factors")
}

/// Spectral norm (largest singular value).
pub fn operator_norm<R: Real>(m: &DMatrix<R>) -> R {
    if m.nrows() == 0 || m.ncols() == 0 {
        return R::zero();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(R::zero(), |a, b| if b > a { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_helpers::*;

    mod approx_helpers {
        use nalgebra::DMatrix;
        pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
            (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
        }
    }

    #[test]
    fn pivoted_cholesky_reproduces_rank_deficient_matrix() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0]);
        let q = &v * v.transpose();
        let r = pivoted_cholesky(&q, 1e-12);
        assert_eq!(r.ncols(), 2);
        assert!(max_abs_diff(&(&r * r.transpose()), &q) < 1e-12);
    }

    #[test]
    fn zero_matrix_has_empty_factor() {
        let r = pivoted_cholesky(&DMatrix::<f64>::zeros(2, 2), 1e-12);
        assert_eq!(r.shape(), (2, 0));
    }

    #[test]
    fn projection_clears_negative_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        assert_eq!(min_eigenvalue(&m), -2.0);
        let p = project_psd(&m);
        assert!(max_abs_diff(&p, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])) < 1e-14);
    }

    #[test]
    fn pseudo_inverse_of_tall_factor() {
        let r: DMatrix<f64> = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let p: DMatrix<f64> = pseudo_inverse(&r);
        assert!((p[(0, 0)] - 3.0 / 25.0).abs() < 1e-15);
        assert!((operator_norm::<f64>(&r) - 5.0).abs() < 1e-12);
    }
}
