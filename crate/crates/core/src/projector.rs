//! Projectors onto `T_x(M)`.
//!
//! The thermodynamic projector acts on `Q = Q₀ ⊕ Q₀^⊥ ⊕ ζν` (metric-orthogonal
//! sum, `Q₀ ∈ W₀ = T_x(M) ∩ ker dH`, `ζ = <Q|ν>_x`) as
//!
//! ```text
//! P_x Q = Q₀ + ζ ν_W / <ν_W|ν>_x
//! ```
//!
//! where `ν` and `ν_W` are the unit antigradients of `H` on `R^n` and of
//! `H_M` on `T_x(M)`. It is the only projector onto `T_x(M)` that keeps
//! every dissipative vector dissipative, and it keeps `dH/dt` unchanged.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, columns};
use crate::lyapunov::LyapunovFunction;
use crate::manifold::{tangent_frame, Chart, TangentFrame};
use crate::{Matrix, Vector};

/// Residual floor for the Gram-Schmidt construction of `W₀`.
pub const W0_DROP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorMode {
    General,
    Curve,
    OrthogonalFallback,
}

/// Point-local projector with the data it was built from.
#[derive(Clone, Debug)]
pub struct ThermodynamicProjector {
    pub x: Vector,
    pub matrix: Matrix,
    /// Unit antigradient of `H`; absent in fallback mode.
    pub nu: Option<Vector>,
    /// Unit antigradient of `H_M` in `T_x(M)`; absent in fallback mode.
    pub nu_w: Option<Vector>,
    /// Metric-orthonormal basis of `W₀`, `n × (m-1)`.
    pub w0_basis: Matrix,
    /// `1 / <ν_W|ν>_x`.
    pub scale: Option<f64>,
    pub mode: ProjectorMode,
}

impl ThermodynamicProjector {
    pub fn apply(&self, q: &Vector) -> Vector {
        &self.matrix * q
    }
}

/// Metric-orthogonal projector onto `span(subspace_basis)`.
#[derive(Clone, Debug)]
pub struct OrthogonalProjector {
    pub x: Vector,
    pub matrix: Matrix,
    pub subspace_basis: Matrix,
}

/// `B (Bᵀ G B)⁻¹ Bᵀ G` with `G = Hes_x(H)`.
pub fn orthogonal_projector(h: &LyapunovFunction, x: &Vector, basis: &Matrix) -> Result<OrthogonalProjector> {
    check_dim(h.dim(), basis.nrows())?;
    let g = h.hessian(x)?;
    linalg::require_full_column_rank(basis)?;
    Ok(OrthogonalProjector {
        x: x.clone(),
        matrix: metric_orthogonal_matrix(&g, basis)?,
        subspace_basis: basis.clone(),
    })
}

fn metric_orthogonal_matrix(g: &Matrix, basis: &Matrix) -> Result<Matrix> {
    let gb = g * basis;
    let gram = basis.transpose() * &gb;
    let chol = linalg::cholesky(&gram, "subspace Gram matrix").map_err(|_| Error::RankDeficient { ratio: 0.0 })?;
    Ok(basis * chol.solve(&gb.transpose()))
}

/// Euclidean orthogonal projector `B (BᵀB)⁻¹ Bᵀ`, ignoring the Hessian metric.
pub fn euclidean_projector(basis: &Matrix) -> Result<Matrix> {
    linalg::require_full_column_rank(basis)?;
    metric_orthogonal_matrix(&Matrix::identity(basis.nrows(), basis.nrows()), basis)
}

fn check_noncritical(frame: &TangentFrame, h: &LyapunovFunction) -> Result<()> {
    let grad_norm = frame.grad.norm();
    if grad_norm < h.tol_grad(&frame.x) {
        Err(Error::AtCriticalPoint { grad_norm })
    } else {
        Ok(())
    }
}

fn unit_antigradient_in(frame: &TangentFrame) -> Vector {
    let e = frame.metric.solve(&frame.grad);
    let len = frame.metric.norm(&e);
    -e / len
}

/// Rank-one projector `e_x ∇Hᵀ / (∇H · e_x)` for a curve (`m = 1`).
pub fn curve_projector(h: &LyapunovFunction, chart: &Chart, p: &Vector) -> Result<ThermodynamicProjector> {
    check_dim(1, chart.m())?;
    let frame = tangent_frame(chart, h, p)?;
    curve_projector_from_frame(h, &frame)
}

pub fn curve_projector_from_frame(h: &LyapunovFunction, frame: &TangentFrame) -> Result<ThermodynamicProjector> {
    check_dim(1, frame.m())?;
    check_noncritical(frame, h)?;
    let t = frame.transversality();
    if !t.transversal {
        return Err(Error::NonTransversal {
            diagnostic: t.diagnostic,
        });
    }
    let e = frame.basis.column(0).into_owned();
    let de = frame.grad.dot(&e);
    let matrix = &e * frame.grad.transpose() / de;
    let nu = unit_antigradient_in(frame);
    let nu_w = frame.unit_tangent_antigradient()?;
    let scale = 1.0 / frame.metric.inner(&nu_w, &nu);
    Ok(ThermodynamicProjector {
        x: frame.x.clone(),
        matrix,
        nu: Some(nu),
        nu_w: Some(nu_w),
        w0_basis: Matrix::zeros(frame.x.len(), 0),
        scale: Some(scale),
        mode: ProjectorMode::Curve,
    })
}

/// General construction for any `m`.
pub fn thermodynamic_projector(h: &LyapunovFunction, chart: &Chart, p: &Vector) -> Result<ThermodynamicProjector> {
    let frame = tangent_frame(chart, h, p)?;
    thermodynamic_projector_from_frame(h, &frame)
}

pub fn thermodynamic_projector_from_frame(
    h: &LyapunovFunction,
    frame: &TangentFrame,
) -> Result<ThermodynamicProjector> {
    check_noncritical(frame, h)?;
    let n = frame.x.len();
    let g = &frame.metric.hess;
    let nu = unit_antigradient_in(frame);
    let nu_w = frame.unit_tangent_antigradient()?;

    let w0 = linalg::metric_gram_schmidt(g, std::slice::from_ref(&nu_w), &frame.basis, W0_DROP_TOL);
    if w0.len() + 1 != frame.m() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let w0_basis = columns(n, &w0);

    let overlap = frame.metric.inner(&nu_w, &nu);
    let scale = 1.0 / overlap;
    // Q ↦ Σ_k w_k <w_k|Q> + ν_W <ν|Q> / <ν_W|ν>
    let matrix = (&w0_basis * w0_basis.transpose() + &nu_w * nu.transpose() * scale) * g;

    Ok(ThermodynamicProjector {
        x: frame.x.clone(),
        matrix,
        nu: Some(nu),
        nu_w: Some(nu_w),
        w0_basis,
        scale: Some(scale),
        mode: ProjectorMode::General,
    })
}

/// Metric-orthogonal projector onto `T_x(M)`, used at (or near) critical
/// points of `H` or `H_M` where the general construction is undefined.
pub fn near_equilibrium_projector(h: &LyapunovFunction, chart: &Chart, p: &Vector) -> Result<ThermodynamicProjector> {
    let frame = tangent_frame(chart, h, p)?;
    near_equilibrium_projector_from_frame(h, &frame)
}

pub fn near_equilibrium_projector_from_frame(
    h: &LyapunovFunction,
    frame: &TangentFrame,
) -> Result<ThermodynamicProjector> {
    let tol = h.tol_grad(&frame.x);
    let grad_norm = frame.grad.norm();
    let reduced = frame.reduced_differential().norm();
    if grad_norm >= tol && reduced >= tol {
        log::debug!(
            "orthogonal fallback used away from critical points (|grad H| = {grad_norm:e}, |J^T grad H| = {reduced:e})"
        );
    }
    let matrix = metric_orthogonal_matrix(&frame.metric.hess, &frame.basis)?;
    Ok(ThermodynamicProjector {
        x: frame.x.clone(),
        matrix,
        nu: None,
        nu_w: None,
        w0_basis: Matrix::zeros(frame.x.len(), 0),
        scale: None,
        mode: ProjectorMode::OrthogonalFallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{make_f_divergence, make_quadratic, FDivergenceSpec};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn quad_id(n: usize) -> LyapunovFunction {
        make_quadratic(Matrix::identity(n, n), Vector::zeros(n)).unwrap()
    }

    /// Independent oracle: metric Gram-Schmidt of the basis, then Σ q qᵀ G.
    fn gram_schmidt_projector(g: &Matrix, basis: &Matrix) -> Matrix {
        let n = basis.nrows();
        let q = linalg::metric_gram_schmidt(g, &[], basis, 1e-12);
        let mut p = Matrix::zeros(n, n);
        for qi in &q {
            p += qi * (g * qi).transpose();
        }
        p
    }

    #[test]
    fn orthogonal_projector_examples() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let p = orthogonal_projector(&quad_id(2), &Vector::zeros(2), &e1).unwrap();
        assert_relative_eq!(p.matrix, Matrix::from_diagonal(&v(&[1.0, 0.0])));

        let sk = make_f_divergence(FDivergenceSpec::kl_shifted(v(&[1.0, 1.0]))).unwrap();
        let x = v(&[2.0, 4.0]);
        let ones = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = orthogonal_projector(&sk, &x, &ones).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_relative_eq!(p.matrix, expected, epsilon = 1e-15);
        let oracle = gram_schmidt_projector(&sk.hessian(&x).unwrap(), &ones);
        assert_relative_eq!(p.matrix, oracle, epsilon = 1e-14);

        let p = orthogonal_projector(&sk, &x, &Matrix::identity(2, 2)).unwrap();
        assert_relative_eq!(p.matrix, Matrix::identity(2, 2), epsilon = 1e-14);

        let dep = Matrix::from_column_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            orthogonal_projector(&sk, &x, &dep),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn orthogonal_projector_is_self_adjoint() {
        let g = Matrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let h = make_quadratic(g.clone(), Vector::zeros(3)).unwrap();
        let b = Matrix::from_column_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        let p = orthogonal_projector(&h, &v(&[1.0, 1.0, 1.0]), &b).unwrap().matrix;
        let y = v(&[0.3, -1.0, 2.0]);
        let z = v(&[1.5, 0.2, -0.7]);
        let lhs = (&p * &y).dot(&(&g * &z));
        let rhs = y.dot(&(&g * (&p * &z)));
        assert!((lhs - rhs).abs() < 1e-12);
        assert_relative_eq!(&p * &p, p.clone(), epsilon = 1e-12);
    }

    #[test]
    fn curve_projector_examples() {
        let h = quad_id(2);
        let chart = Chart::line(v(&[0.0, 2.0]), v(&[1.0, 0.0])).unwrap();
        let p = curve_projector(&h, &chart, &v(&[1.0])).unwrap();
        let x = v(&[1.0, 2.0]);
        let q = v(&[0.0, -2.0]);
        let pq = p.apply(&q);
        assert_relative_eq!(pq, v(&[-4.0, 0.0]), epsilon = 1e-15);
        assert_eq!(x.dot(&q), -4.0);
        assert_relative_eq!(x.dot(&pq), -4.0, epsilon = 1e-15);
        assert_relative_eq!(p.apply(&v(&[1.0, 0.0])), v(&[1.0, 0.0]));
        assert_relative_eq!(p.apply(&v(&[-2.0, 1.0])), Vector::zeros(2));
        let general = thermodynamic_projector(&h, &chart, &v(&[1.0])).unwrap();
        assert_relative_eq!(general.matrix, p.matrix, epsilon = 1e-14);
        assert_eq!(p.mode, ProjectorMode::Curve);
    }

    #[test]
    fn curve_projector_errors() {
        let h = quad_id(2);
        let chart = Chart::line(v(&[0.0, 2.0]), v(&[1.0, 0.0])).unwrap();
        assert!(matches!(
            curve_projector(&h, &chart, &v(&[0.0])),
            Err(Error::NonTransversal { .. })
        ));
        let plane = Chart::affine(Vector::zeros(3), Matrix::identity(3, 2)).unwrap();
        assert!(matches!(
            curve_projector(&quad_id(3), &plane, &v(&[1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_subspace_through_center_gives_orthogonal_projector() {
        let h = quad_id(2);
        let chart = Chart::line(Vector::zeros(2), v(&[1.0, 0.0])).unwrap();
        let tp = thermodynamic_projector(&h, &chart, &v(&[2.0])).unwrap();
        assert_eq!(tp.w0_basis.ncols(), 0);
        assert_relative_eq!(tp.nu.clone().unwrap(), v(&[-1.0, 0.0]));
        assert_relative_eq!(tp.nu_w.clone().unwrap(), v(&[-1.0, 0.0]));
        assert_relative_eq!(tp.scale.unwrap(), 1.0);
        assert_relative_eq!(tp.matrix, Matrix::from_diagonal(&v(&[1.0, 0.0])), epsilon = 1e-15);
    }

    #[test]
    fn pure_nu_component_maps_to_scaled_nu_w() {
        let h = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 2.0, 0.5]))).unwrap();
        let chart = Chart::paraboloid(v(&[1.0, 1.0, 0.7]), 0.4).unwrap();
        let p = v(&[0.3, -0.2]);
        let tp = thermodynamic_projector(&h, &chart, &p).unwrap();
        let nu = tp.nu.clone().unwrap();
        let nu_w = tp.nu_w.clone().unwrap();
        let out = tp.apply(&nu);
        assert_relative_eq!(out, &nu_w * tp.scale.unwrap(), epsilon = 1e-12);
        let grad = h.grad(&tp.x).unwrap();
        assert_relative_eq!(grad.dot(&out), grad.dot(&nu), epsilon = 1e-12);
        assert!(tp.scale.unwrap() > 0.0);
        assert_eq!(tp.w0_basis.ncols(), 1);
    }

    #[test]
    fn thermodynamic_projector_at_equilibrium_reports_critical_point() {
        let h = quad_id(2);
        let chart = Chart::parabola(Vector::zeros(2)).unwrap();
        assert!(matches!(
            thermodynamic_projector(&h, &chart, &v(&[0.0])),
            Err(Error::AtCriticalPoint { .. })
        ));
        let fb = near_equilibrium_projector(&h, &chart, &v(&[0.0])).unwrap();
        assert_eq!(fb.mode, ProjectorMode::OrthogonalFallback);
        assert_relative_eq!(fb.matrix, Matrix::from_diagonal(&v(&[1.0, 0.0])), epsilon = 1e-15);
    }

    #[test]
    fn near_equilibrium_on_linear_subspace_is_orthogonal_projector() {
        let g = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let c = v(&[1.0, -1.0, 0.5]);
        let h = make_quadratic(g, c.clone()).unwrap();
        let dirs = Matrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let chart = Chart::affine(c.clone(), dirs.clone()).unwrap();
        let fb = near_equilibrium_projector(&h, &chart, &Vector::zeros(2)).unwrap();
        let orth = orthogonal_projector(&h, &c, &dirs).unwrap();
        assert_eq!(fb.matrix, orth.matrix);
    }
}
