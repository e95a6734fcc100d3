//! Small dense helpers shared by the projector constructions.

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Relative singular-value floor below which a frame is declared rank deficient.
pub const RANK_TOL: f64 = 1e-8;

/// Ratio of smallest to largest singular value of `a` (0 for a zero matrix).
pub fn singular_ratio(a: &Matrix) -> f64 {
    if a.ncols() == 0 {
        return 1.0;
    }
    let Some((_, s)) = thin_svd(a) else {
        return 0.0;
    };
    let max = s.max();
    if max <= 0.0 || !max.is_finite() {
        return 0.0;
    }
    // SVD of an n x m matrix with n < m only yields n values; missing ones are zeros
    if a.nrows() < a.ncols() {
        return 0.0;
    }
    s.min() / max
}

/// Thin SVD `(U, σ)` with singular values in decreasing order, or `None`
/// when the input is not finite.
///
/// nalgebra's bidiagonal SVD returns wrong factors for some small
/// rank-deficient inputs, so this goes through faer.
pub fn thin_svd(a: &Matrix) -> Option<(Matrix, Vector)> {
    let (n, m) = a.shape();
    let k = n.min(m);
    if k == 0 {
        return Some((Matrix::zeros(n, 0), Vector::zeros(0)));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return None;
    }
    let fa = faer::Mat::<f64>::from_fn(n, m, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().ok()?;
    let (u, s) = (svd.U(), svd.S().column_vector());
    Some((Matrix::from_fn(n, k, |i, j| u[(i, j)]), Vector::from_fn(k, |i, _| s[i])))
}

/// Fails with `RankDeficient` unless `a` has full column rank.
pub fn require_full_column_rank(a: &Matrix) -> Result<()> {
    let ratio = singular_ratio(a);
    if ratio < RANK_TOL {
        Err(Error::RankDeficient { ratio })
    } else {
        Ok(())
    }
}

/// Cholesky factorization that reports failure as `NotPositiveDefinite`.
pub fn cholesky(a: &Matrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::NotPositiveDefinite(format!("{what} has no Cholesky factor")))
}

/// `y^T G z`.
pub fn metric_dot(g: &Matrix, y: &Vector, z: &Vector) -> f64 {
    y.dot(&(g * z))
}

/// Modified Gram-Schmidt in the metric `g`.
///
/// Vectors in `seed` are assumed metric-orthonormal already; columns of
/// `candidates` are orthogonalized against them and against each other.
/// A column whose residual is below `drop_tol` times its own metric norm is
/// dropped. Returns only the new vectors (seeds excluded).
pub fn metric_gram_schmidt(g: &Matrix, seed: &[Vector], candidates: &Matrix, drop_tol: f64) -> Vec<Vector> {
    let mut basis: Vec<Vector> = seed.to_vec();
    let mut out = Vec::new();
    for col in candidates.column_iter() {
        let original: Vector = col.into_owned();
        let norm0 = metric_dot(g, &original, &original).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = original.clone();
        // two passes keep orthogonality at rounding level
        for _ in 0..2 {
            for q in &basis {
                let c = metric_dot(g, q, &r);
                r.axpy(-c, q, 1.0);
            }
        }
        let norm = metric_dot(g, &r, &r).sqrt();
        if norm < drop_tol * norm0 {
            continue;
        }
        r /= norm;
        basis.push(r.clone());
        out.push(r);
    }
    out
}

/// Stack vectors as matrix columns; `rows` fixes the shape when empty.
pub fn columns(rows: usize, vs: &[Vector]) -> Matrix {
    let mut m = Matrix::zeros(rows, vs.len());
    for (j, v) in vs.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thin_svd_spans_rank_deficient_columns() {
        // rank one, where nalgebra's SVD returns a U outside the column span
        let col = Vector::from_vec(vec![
            0.8703846314528315,
            -0.15314903607604138,
            -0.1251212548577977,
            -0.44200881983616197,
        ]);
        let a = Matrix::from_columns(&[&col * 0.0895144, col.clone()]);
        let (u, s) = thin_svd(&a).unwrap();
        assert!(s[1] <= 1e-15 * s[0]);
        let u0 = u.column(0).into_owned();
        let cos = u0.dot(&col).abs() / col.norm();
        assert!((cos - 1.0).abs() < 1e-14);
        assert!(thin_svd(&Matrix::from_element(2, 2, f64::NAN)).is_none());
    }

    #[test]
    fn gram_schmidt_drops_dependent_columns() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 0.5]));
        let c = Matrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let q = metric_gram_schmidt(&g, &[], &c, 1e-10);
        assert_eq!(q.len(), 2);
        for a in &q {
            for b in &q {
                let d = metric_dot(&g, a, b);
                if std::ptr::eq(a, b) {
                    assert!((d - 1.0).abs() < 1e-14);
                } else {
                    assert!(d.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rank_ratio_of_wide_or_zero_matrix() {
        assert_eq!(singular_ratio(&Matrix::zeros(3, 1)), 0.0);
        assert!(require_full_column_rank(&Matrix::identity(3, 2)).is_ok());
        assert!(matches!(
            require_full_column_rank(&Matrix::from_column_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])),
            Err(Error::RankDeficient { .. })
        ));
    }
}
