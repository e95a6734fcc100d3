//! Lyapunov functions, the Hessian (Shahshahani) metric, and gradients in it.
//!
//! Two families are provided: strongly convex quadratics
//! `H(x) = ½ (x-c)ᵀ G (x-c)` and f-divergences
//! `H(x) = Σ x_i^eq f(x_i / x_i^eq)` on the positive orthant.

use std::fmt;
use std::sync::Arc;

use nalgebra::linalg::Cholesky;
use nalgebra::{Dyn, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::{Matrix, Vector};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Convex generator `f` with its first two derivatives and equilibrium weights.
#[derive(Clone)]
pub struct FDivergenceSpec {
    pub id: String,
    pub f: ScalarFn,
    pub f1: ScalarFn,
    pub f2: ScalarFn,
    pub x_eq: Vector,
}

impl fmt::Debug for FDivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FDivergenceSpec")
            .field("id", &self.id)
            .field("x_eq", &self.x_eq.as_slice())
            .finish()
    }
}

impl FDivergenceSpec {
    pub fn new(
        id: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x_eq: Vector,
    ) -> Self {
        Self {
            id: id.into(),
            f: Arc::new(f),
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            x_eq,
        }
    }

    /// Kullback-Leibler, `f(z) = z ln z`.
    pub fn kl(x_eq: Vector) -> Self {
        Self::new("kl", |z| z * z.ln(), |z| 1.0 + z.ln(), |z| 1.0 / z, x_eq)
    }

    /// Shifted Kullback-Leibler, `f(z) = z (ln z - 1)`; minimized at `x_eq`.
    pub fn kl_shifted(x_eq: Vector) -> Self {
        Self::new("kl_shifted", |z| z * (z.ln() - 1.0), |z| z.ln(), |z| 1.0 / z, x_eq)
    }

    /// Relative Burg entropy, `f(z) = -ln z`.
    pub fn burg(x_eq: Vector) -> Self {
        Self::new("burg", |z| -z.ln(), |z| -1.0 / z, |z| 1.0 / (z * z), x_eq)
    }

    /// Power family `f(z) = (z^α - 1 - α(z-1)) / (α(α-1))`, `α ∉ {0, 1}`.
    ///
    /// This is the parametrized generator behind the `custom_f` catalog entry.
    pub fn power(alpha: f64, x_eq: Vector) -> Result<Self> {
        if !alpha.is_finite() || alpha == 0.0 || alpha == 1.0 {
            return Err(Error::InvalidInput(format!(
                "power f-divergence needs alpha outside {{0, 1}}, got {alpha}"
            )));
        }
        let a = alpha;
        Ok(Self::new(
            "custom_f",
            move |z: f64| (z.powf(a) - 1.0 - a * (z - 1.0)) / (a * (a - 1.0)),
            move |z: f64| (z.powf(a - 1.0) - 1.0) / (a - 1.0),
            move |z: f64| z.powf(a - 2.0),
            x_eq,
        ))
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Quadratic { g: Matrix, center: Vector },
    FDivergence(FDivergenceSpec),
}

/// Where `H` may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Whole,
    PositiveOrthant,
}

/// Evaluator bundle for a strongly convex Lyapunov function.
#[derive(Clone, Debug)]
pub struct LyapunovFunction {
    dim: usize,
    kind: Kind,
    domain: Domain,
    equilibrium: Option<Vector>,
    convexity_floor: f64,
}

impl LyapunovFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Catalog id: `quadratic`, `kl`, `kl_shifted`, `burg`, or `custom_f`.
    pub fn id(&self) -> &str {
        match &self.kind {
            Kind::Quadratic { .. } => "quadratic",
            Kind::FDivergence(spec) => &spec.id,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Global minimizer of `H`, if it has one. Burg entropy on the open
    /// orthant is unbounded below and reports `None`.
    pub fn equilibrium(&self) -> Option<&Vector> {
        self.equilibrium.as_ref()
    }

    /// The point the function is anchored at: the quadratic center or the
    /// f-divergence weights `x^eq`.
    pub fn reference_point(&self) -> &Vector {
        match &self.kind {
            Kind::Quadratic { center, .. } => center,
            Kind::FDivergence(spec) => &spec.x_eq,
        }
    }

    /// Lower bound on Hessian eigenvalues over the domain. For f-divergences
    /// no uniform bound exists on the unbounded orthant; the floor is the
    /// smallest positive normal number and positivity is checked per point.
    pub fn convexity_floor(&self) -> f64 {
        self.convexity_floor
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.dim
            && x.iter().all(|v| v.is_finite())
            && match self.domain {
                Domain::Whole => true,
                Domain::PositiveOrthant => x.iter().all(|&v| v > 0.0),
            }
    }

    pub fn check_domain(&self, x: &Vector) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::DomainViolation(format!(
                "{} is undefined at {:?}",
                self.id(),
                x.as_slice()
            )))
        }
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            Kind::Quadratic { g, center } => {
                let d = x - center;
                0.5 * d.dot(&(g * &d))
            }
            Kind::FDivergence(s) => x.iter().zip(s.x_eq.iter()).map(|(&xi, &ei)| ei * (s.f)(xi / ei)).sum(),
        })
    }

    /// Vector of partial derivatives `∂H/∂x_i`.
    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            Kind::Quadratic { g, center } => g * (x - center),
            Kind::FDivergence(s) => x.zip_map(&s.x_eq, |xi, ei| (s.f1)(xi / ei)),
        })
    }

    pub fn hessian(&self, x: &Vector) -> Result<Matrix> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            Kind::Quadratic { g, .. } => g.clone(),
            Kind::FDivergence(s) => Matrix::from_diagonal(&x.zip_map(&s.x_eq, |xi, ei| (s.f2)(xi / ei) / ei)),
        })
    }

    /// Metric data at `x`: Hessian and its Cholesky factor.
    pub fn metric_point(&self, x: &Vector) -> Result<MetricPoint> {
        let hess = self.hessian(x)?;
        let factor = Cholesky::new(hess.clone()).ok_or(Error::SingularHessian)?;
        Ok(MetricPoint {
            x: x.clone(),
            hess,
            factor,
        })
    }

    /// Gradient norm below which `x` is treated as a critical point:
    /// `1e-10 (1 + ‖x - x_ref‖)`, with `x_ref` the equilibrium when it
    /// exists and the reference point otherwise.
    pub fn tol_grad(&self, x: &Vector) -> f64 {
        let anchor = self.equilibrium.as_ref().unwrap_or(self.reference_point());
        1e-10 * (1.0 + (x - anchor).norm())
    }
}

/// Hessian metric `<y|z>_x = yᵀ Hes_x(H) z` frozen at one base point.
#[derive(Clone, Debug)]
pub struct MetricPoint {
    pub x: Vector,
    pub hess: Matrix,
    pub factor: Cholesky<f64, Dyn>,
}

impl MetricPoint {
    pub fn inner(&self, y: &Vector, z: &Vector) -> f64 {
        linalg::metric_dot(&self.hess, y, z)
    }

    pub fn norm(&self, y: &Vector) -> f64 {
        self.inner(y, y).max(0.0).sqrt()
    }

    /// Solve `Hes · u = rhs`.
    pub fn solve(&self, rhs: &Vector) -> Vector {
        self.factor.solve(rhs)
    }
}

/// `H(x) = ½ (x-c)ᵀ G (x-c)`; Hessian is exactly `G`.
pub fn make_quadratic(g: Matrix, center: Vector) -> Result<LyapunovFunction> {
    let n = center.len();
    if n == 0 {
        return Err(Error::InvalidInput("zero-dimensional state space".into()));
    }
    check_dim(n, g.nrows())?;
    check_dim(n, g.ncols())?;
    let scale = g.amax().max(f64::MIN_POSITIVE);
    if (&g - g.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite("G is not symmetric".into()));
    }
    let min_eig = SymmetricEigen::new(g.clone()).eigenvalues.min();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue of G is {min_eig:e}"
        )));
    }
    Ok(LyapunovFunction {
        dim: n,
        equilibrium: Some(center.clone()),
        kind: Kind::Quadratic { g, center },
        domain: Domain::Whole,
        convexity_floor: min_eig,
    })
}

/// `H(x) = Σ x_i^eq f(x_i / x_i^eq)` restricted to the positive orthant.
pub fn make_f_divergence(spec: FDivergenceSpec) -> Result<LyapunovFunction> {
    let n = spec.x_eq.len();
    if n == 0 {
        return Err(Error::InvalidInput("zero-dimensional state space".into()));
    }
    if spec.x_eq.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::DomainViolation(format!(
            "equilibrium weights must be positive, got {:?}",
            spec.x_eq.as_slice()
        )));
    }
    for z in convexity_probe_points() {
        let c = (spec.f2)(z);
        if !(c > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "f''({z:e}) = {c:e} for generator {}",
                spec.id
            )));
        }
    }
    let equilibrium = critical_ratio(&*spec.f1).map(|z| &spec.x_eq * z);
    Ok(LyapunovFunction {
        dim: n,
        equilibrium,
        kind: Kind::FDivergence(spec),
        domain: Domain::PositiveOrthant,
        convexity_floor: f64::MIN_POSITIVE,
    })
}

fn convexity_probe_points() -> impl Iterator<Item = f64> {
    (-30..=30).map(|k| 10f64.powf(k as f64 / 10.0))
}

/// Root of the increasing function `f'` on (0, ∞), if it changes sign.
fn critical_ratio(f1: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Option<f64> {
    let (mut lo, mut hi) = (1e-12_f64, 1e12_f64);
    if !(f1(lo) < 0.0 && f1(hi) > 0.0) {
        return if f1(1.0) == 0.0 { Some(1.0) } else { None };
    }
    // bisection in log space
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f1(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let mid = (lo * hi).sqrt();
    // snap to exact roots such as z = 1
    for cand in [1.0, (-1.0f64).exp()] {
        if (mid / cand - 1.0).abs() < 1e-12 {
            return Some(cand);
        }
    }
    Some(mid)
}

/// `<y|z>_x`.
pub fn shahshahani_inner(h: &LyapunovFunction, x: &Vector, y: &Vector, z: &Vector) -> Result<f64> {
    check_dim(h.dim(), y.len())?;
    check_dim(h.dim(), z.len())?;
    let hess = h.hessian(x)?;
    Ok(linalg::metric_dot(&hess, y, z))
}

/// Riesz representative of `dH` in the Hessian metric: `e_x = Hes⁻¹ ∇H`.
pub fn shahshahani_gradient(h: &LyapunovFunction, x: &Vector) -> Result<Vector> {
    let grad = h.grad(x)?;
    let metric = h.metric_point(x)?;
    Ok(metric.solve(&grad))
}

/// `ν = -e_x / ‖e_x‖_x`, the unit normal to `ker dH` pointing downhill.
pub fn unit_antigradient(h: &LyapunovFunction, x: &Vector) -> Result<Vector> {
    let grad = h.grad(x)?;
    let grad_norm = grad.norm();
    if grad_norm < h.tol_grad(x) {
        return Err(Error::AtCriticalPoint { grad_norm });
    }
    let metric = h.metric_point(x)?;
    let e = metric.solve(&grad);
    let len = metric.norm(&e);
    Ok(-e / len)
}

/// Euclidean cosine between `-e_x` and the Newton step `-Hes⁻¹ ∇H`
/// computed by an independent LU solve. Equals 1 up to rounding.
pub fn newton_direction_check(h: &LyapunovFunction, x: &Vector) -> Result<f64> {
    let grad = h.grad(x)?;
    let grad_norm = grad.norm();
    if grad_norm < h.tol_grad(x) {
        return Err(Error::AtCriticalPoint { grad_norm });
    }
    let e = shahshahani_gradient(h, x)?;
    let newton = h.hessian(x)?.lu().solve(&grad).ok_or(Error::SingularHessian)?;
    Ok(e.dot(&newton) / (e.norm() * newton.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn fd_grad(h: &LyapunovFunction, x: &Vector) -> Vector {
        Vector::from_fn(x.len(), |i, _| {
            let step = 1e-6 * (1.0 + x[i].abs());
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += step;
            b[i] -= step;
            (h.value(&a).unwrap() - h.value(&b).unwrap()) / (2.0 * step)
        })
    }

    fn identity_quadratic(n: usize) -> LyapunovFunction {
        make_quadratic(Matrix::identity(n, n), Vector::zeros(n)).unwrap()
    }

    #[test]
    fn quadratic_identity_values() {
        let h = identity_quadratic(2);
        let x = v(&[3.0, 4.0]);
        assert_eq!(h.value(&x).unwrap(), 12.5);
        assert_eq!(h.grad(&x).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(h.hessian(&x).unwrap(), Matrix::identity(2, 2));
        let c = Vector::zeros(2);
        assert_eq!(h.value(&c).unwrap(), 0.0);
        assert_eq!(h.grad(&c).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn shifted_diagonal_quadratic_matches_finite_differences() {
        let g = Matrix::from_diagonal(&v(&[2.0, 1.0]));
        let h = make_quadratic(g, v(&[1.0, 0.0])).unwrap();
        let x = v(&[2.0, 2.0]);
        assert_relative_eq!(h.value(&x).unwrap(), 3.0, epsilon = 1e-15);
        assert_eq!(h.grad(&x).unwrap(), v(&[2.0, 2.0]));
        assert_relative_eq!(fd_grad(&h, &x), v(&[2.0, 2.0]), epsilon = 1e-8);
    }

    #[test]
    fn quadratic_rejects_indefinite_and_bad_shapes() {
        let g = Matrix::from_diagonal(&v(&[1.0, -1.0]));
        assert!(matches!(
            make_quadratic(g, Vector::zeros(2)),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            make_quadratic(Matrix::identity(3, 3), Vector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let skew = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(make_quadratic(skew, Vector::zeros(2)).is_err());
    }

    #[test]
    fn burg_formulas() {
        let h = make_f_divergence(FDivergenceSpec::burg(v(&[1.0, 1.0]))).unwrap();
        let x = v(&[2.0, 3.0]);
        assert_relative_eq!(h.grad(&x).unwrap(), v(&[-0.5, -1.0 / 3.0]), epsilon = 1e-15);
        assert_relative_eq!(
            h.hessian(&x).unwrap(),
            Matrix::from_diagonal(&v(&[0.25, 1.0 / 9.0])),
            epsilon = 1e-15
        );
        assert!(h.equilibrium().is_none());
        let e = shahshahani_gradient(&h, &x).unwrap();
        assert_relative_eq!(e, v(&[-2.0, -3.0]), epsilon = 1e-12);
    }

    #[test]
    fn kl_at_weights() {
        let h = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 1.0]))).unwrap();
        let x = v(&[1.0, 1.0]);
        assert_eq!(h.value(&x).unwrap(), 0.0);
        assert_eq!(h.grad(&x).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(h.hessian(&x).unwrap(), Matrix::identity(2, 2));
        assert_relative_eq!(fd_grad(&h, &x), v(&[1.0, 1.0]), epsilon = 1e-8);
        // unconstrained minimizer of z ln z is z = 1/e
        let eq = h.equilibrium().unwrap();
        assert_relative_eq!(eq[0], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn kl_shahshahani_gradient() {
        let h = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 1.0]))).unwrap();
        let e = shahshahani_gradient(&h, &v(&[2.0, 1.0])).unwrap();
        assert_relative_eq!(e, v(&[2.0 * (1.0 + 2f64.ln()), 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn shifted_kl_equilibrium_is_critical() {
        let h = make_f_divergence(FDivergenceSpec::kl_shifted(v(&[1.0, 1.0]))).unwrap();
        let x = v(&[1.0, 1.0]);
        assert_eq!(h.grad(&x).unwrap(), Vector::zeros(2));
        assert_eq!(h.equilibrium().unwrap(), &x);
        assert!(matches!(unit_antigradient(&h, &x), Err(Error::AtCriticalPoint { .. })));
    }

    #[test]
    fn f_divergence_positivity_wall() {
        let h = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 1.0]))).unwrap();
        assert!(matches!(h.value(&v(&[0.0, 1.0])), Err(Error::DomainViolation(_))));
        assert!(matches!(h.grad(&v(&[1.0, -2.0])), Err(Error::DomainViolation(_))));
        assert!(make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 0.0]))).is_err());
    }

    #[test]
    fn nonconvex_generator_rejected() {
        let spec = FDivergenceSpec::new("custom_f", |z| -z * z, |z| -2.0 * z, |_| -2.0, v(&[1.0]));
        assert!(matches!(make_f_divergence(spec), Err(Error::NotPositiveDefinite(_))));
        assert!(FDivergenceSpec::power(1.0, v(&[1.0])).is_err());
    }

    #[test]
    fn power_family_is_minimized_at_weights() {
        let h = make_f_divergence(FDivergenceSpec::power(2.5, v(&[0.5, 2.0])).unwrap()).unwrap();
        let eq = h.equilibrium().unwrap().clone();
        assert_relative_eq!(eq, v(&[0.5, 2.0]), epsilon = 1e-15);
        assert_eq!(h.value(&eq).unwrap(), 0.0);
    }

    #[test]
    fn inner_products() {
        let kl = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 1.0]))).unwrap();
        let ip = shahshahani_inner(&kl, &v(&[1.0, 1.0]), &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!(ip, 0.0);

        let sk = make_f_divergence(FDivergenceSpec::kl_shifted(v(&[1.0, 1.0]))).unwrap();
        let one = v(&[1.0, 1.0]);
        let ip = shahshahani_inner(&sk, &v(&[2.0, 4.0]), &one, &one).unwrap();
        assert_relative_eq!(ip, 0.75, epsilon = 1e-15);

        let q = identity_quadratic(2);
        let y = v(&[3.0, 0.0]);
        assert_eq!(shahshahani_inner(&q, &v(&[-7.0, 2.0]), &y, &y).unwrap(), 9.0);
    }

    #[test]
    fn unit_antigradient_cases() {
        let q = identity_quadratic(2);
        let nu = unit_antigradient(&q, &v(&[3.0, 4.0])).unwrap();
        assert_relative_eq!(nu, v(&[-0.6, -0.8]), epsilon = 1e-15);
        assert!(matches!(
            unit_antigradient(&q, &Vector::zeros(2)),
            Err(Error::AtCriticalPoint { .. })
        ));

        let burg = make_f_divergence(FDivergenceSpec::burg(v(&[1.0, 1.0]))).unwrap();
        let x = v(&[2.0, 3.0]);
        let nu = unit_antigradient(&burg, &x).unwrap();
        let m = burg.metric_point(&x).unwrap();
        assert_relative_eq!(m.inner(&nu, &nu), 1.0, epsilon = 1e-10);
        assert!(burg.grad(&x).unwrap().dot(&nu) < 0.0);
    }

    #[test]
    fn newton_direction_is_shahshahani_gradient() {
        let g = Matrix::from_diagonal(&v(&[2.0, 1.0]));
        let q = make_quadratic(g, Vector::zeros(2)).unwrap();
        let kl = make_f_divergence(FDivergenceSpec::kl(v(&[1.0, 1.0]))).unwrap();
        let burg = make_f_divergence(FDivergenceSpec::burg(v(&[1.0, 1.0]))).unwrap();
        for (h, x) in [(&q, v(&[1.0, 1.0])), (&kl, v(&[2.0, 1.0])), (&burg, v(&[2.0, 3.0]))] {
            assert_relative_eq!(newton_direction_check(h, &x).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert!(newton_direction_check(&q, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn metric_factor_reproduces_hessian() {
        let g = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let h = make_quadratic(g.clone(), Vector::zeros(3)).unwrap();
        let m = h.metric_point(&v(&[1.0, 2.0, 3.0])).unwrap();
        let l = m.factor.l();
        assert!((&l * l.transpose() - &g).amax() <= 1e-10 * g.amax());
        assert_relative_eq!(h.convexity_floor(), SymmetricEigen::new(g).eigenvalues.min());
    }
}
