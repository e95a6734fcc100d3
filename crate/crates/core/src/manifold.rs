//! Ansatz manifolds given by charts `F: B_m → R^n`, their tangent frames,
//! and the gradient of `H_M = H ∘ F` in the restricted Hessian metric.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::lyapunov::{LyapunovFunction, MetricPoint};
use crate::{Matrix, Vector};

pub type EmbedFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

#[derive(Clone)]
enum ChartKind {
    /// `origin + D p`
    Affine {
        origin: Vector,
        directions: Matrix,
    },
    /// `Σ_k c_k p^k`
    Polynomial {
        coeffs: Vec<Vector>,
    },
    /// `offset + (p_1, .., p_m, κ Σ p_i²)`
    Paraboloid {
        offset: Vector,
        curvature: f64,
    },
    /// `(1 - p) a + p b`
    ConvexCombination {
        a: Vector,
        b: Vector,
    },
    /// `center + r (cos p, sin p)`
    Circle {
        center: Vector,
        radius: f64,
    },
    Custom {
        embed: EmbedFn,
        jac: Option<JacobianFn>,
    },
}

/// Injective immersion of an `m`-dimensional parameter box into `R^n`.
#[derive(Clone)]
pub struct Chart {
    m: usize,
    n: usize,
    id: &'static str,
    kind: ChartKind,
    param_domain: Vec<(f64, f64)>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("id", &self.id)
            .field("m", &self.m)
            .field("n", &self.n)
            .field("param_domain", &self.param_domain)
            .finish()
    }
}

impl Chart {
    fn build(m: usize, n: usize, id: &'static str, kind: ChartKind) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!("chart dimensions m={m}, n={n}")));
        }
        Ok(Self {
            m,
            n,
            id,
            kind,
            param_domain: vec![(f64::NEG_INFINITY, f64::INFINITY); m],
        })
    }

    /// Affine subspace `origin + span(directions)`.
    pub fn affine(origin: Vector, directions: Matrix) -> Result<Self> {
        check_dim(origin.len(), directions.nrows())?;
        Self::build(
            directions.ncols(),
            origin.len(),
            "affine",
            ChartKind::Affine { origin, directions },
        )
    }

    /// Straight line `origin + p · direction`.
    pub fn line(origin: Vector, direction: Vector) -> Result<Self> {
        let n = direction.len();
        let mut c = Self::affine(origin, Matrix::from_column_slice(n, 1, direction.as_slice()))?;
        c.id = "line";
        Ok(c)
    }

    /// Polynomial curve `Σ_k coeffs[k] p^k`.
    pub fn polynomial(coeffs: Vec<Vector>) -> Result<Self> {
        let n = coeffs
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::InvalidInput("polynomial chart needs coefficients".into()))?;
        for c in &coeffs {
            check_dim(n, c.len())?;
        }
        Self::build(1, n, "polynomial", ChartKind::Polynomial { coeffs })
    }

    /// Graph of `κ ‖p‖²` over `R^m`, shifted by `offset ∈ R^{m+1}`.
    pub fn paraboloid(offset: Vector, curvature: f64) -> Result<Self> {
        if offset.len() < 2 {
            return Err(Error::InvalidInput("paraboloid needs n >= 2".into()));
        }
        let m = offset.len() - 1;
        let id = if m == 1 { "parabola" } else { "paraboloid" };
        Self::build(m, m + 1, id, ChartKind::Paraboloid { offset, curvature })
    }

    /// `(p, p²)` shifted by `offset`.
    pub fn parabola(offset: Vector) -> Result<Self> {
        check_dim(2, offset.len())?;
        Self::paraboloid(offset, 1.0)
    }

    /// `(1 - p) a + p b` for `p ∈ [0, 1]`.
    pub fn convex_combination(a: Vector, b: Vector) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        let n = a.len();
        let mut c = Self::build(1, n, "convex_combination", ChartKind::ConvexCombination { a, b })?;
        c.param_domain = vec![(0.0, 1.0)];
        Ok(c)
    }

    /// Circle in the plane.
    pub fn circle(center: Vector, radius: f64) -> Result<Self> {
        check_dim(2, center.len())?;
        Self::build(1, 2, "circle", ChartKind::Circle { center, radius })
    }

    /// User-supplied embedding; without `jac` the Jacobian is taken by
    /// central differences.
    pub fn custom(
        m: usize,
        n: usize,
        embed: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jac: Option<JacobianFn>,
    ) -> Result<Self> {
        Self::build(
            m,
            n,
            "custom",
            ChartKind::Custom {
                embed: Arc::new(embed),
                jac,
            },
        )
    }

    pub fn with_domain(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_dim(self.m, bounds.len())?;
        if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidInput("empty parameter interval".into()));
        }
        self.param_domain = bounds;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn id(&self) -> &'static str {
        self.id
    }

    pub fn param_domain(&self) -> &[(f64, f64)] {
        &self.param_domain
    }

    pub fn contains(&self, p: &Vector) -> bool {
        p.len() == self.m
            && p.iter()
                .zip(&self.param_domain)
                .all(|(&v, &(lo, hi))| v.is_finite() && v >= lo && v <= hi)
    }

    /// Whether the chart ships an analytic Jacobian.
    pub fn has_analytic_jacobian(&self) -> bool {
        !matches!(self.kind, ChartKind::Custom { jac: None, .. })
    }

    /// `F(p)` without domain checks.
    pub fn embed(&self, p: &Vector) -> Result<Vector> {
        check_dim(self.m, p.len())?;
        Ok(match &self.kind {
            ChartKind::Affine { origin, directions } => origin + directions * p,
            ChartKind::Polynomial { coeffs } => {
                // Horner
                let t = p[0];
                let mut acc = Vector::zeros(self.n);
                for c in coeffs.iter().rev() {
                    acc = acc * t + c;
                }
                acc
            }
            ChartKind::Paraboloid { offset, curvature } => {
                let mut x = offset.clone();
                for i in 0..self.m {
                    x[i] += p[i];
                }
                x[self.m] += curvature * p.norm_squared();
                x
            }
            ChartKind::ConvexCombination { a, b } => a * (1.0 - p[0]) + b * p[0],
            ChartKind::Circle { center, radius } => {
                center + Vector::from_vec(vec![radius * p[0].cos(), radius * p[0].sin()])
            }
            ChartKind::Custom { embed, .. } => {
                let x = embed(p);
                check_dim(self.n, x.len())?;
                x
            }
        })
    }

    /// `n × m` matrix `∂F_i/∂p_j`.
    pub fn jac(&self, p: &Vector) -> Result<Matrix> {
        check_dim(self.m, p.len())?;
        Ok(match &self.kind {
            ChartKind::Affine { directions, .. } => directions.clone(),
            ChartKind::Polynomial { coeffs } => {
                let t = p[0];
                let mut acc = Vector::zeros(self.n);
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + c * k as f64;
                }
                Matrix::from_column_slice(self.n, 1, acc.as_slice())
            }
            ChartKind::Paraboloid { curvature, .. } => {
                let mut j = Matrix::zeros(self.n, self.m);
                for i in 0..self.m {
                    j[(i, i)] = 1.0;
                    j[(self.m, i)] = 2.0 * curvature * p[i];
                }
                j
            }
            ChartKind::ConvexCombination { a, b } => Matrix::from_column_slice(self.n, 1, (b - a).as_slice()),
            ChartKind::Circle { radius, .. } => {
                Matrix::from_column_slice(2, 1, &[-radius * p[0].sin(), radius * p[0].cos()])
            }
            ChartKind::Custom { jac: Some(jac), .. } => {
                let j = jac(p);
                check_dim(self.n, j.nrows())?;
                check_dim(self.m, j.ncols())?;
                j
            }
            ChartKind::Custom { jac: None, .. } => self.fd_jacobian(p)?,
        })
    }

    /// Central-difference Jacobian with step `1e-6 (1 + |p_j|)`.
    pub fn fd_jacobian(&self, p: &Vector) -> Result<Matrix> {
        let mut j = Matrix::zeros(self.n, self.m);
        for k in 0..self.m {
            let h = 1e-6 * (1.0 + p[k].abs());
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[k] += h;
            minus[k] -= h;
            let d = (self.embed(&plus)? - self.embed(&minus)?) / (2.0 * h);
            j.set_column(k, &d);
        }
        Ok(j)
    }
}

/// Tangent space of `M` at `F(p)` together with the metric data there.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub p: Vector,
    pub x: Vector,
    /// Columns span `T_x(M)`.
    pub basis: Matrix,
    /// `Jᵀ Hes J`.
    pub metric_gram: Matrix,
    pub metric: MetricPoint,
    /// `∇H(x)`.
    pub grad: Vector,
}

impl TangentFrame {
    /// Builds a frame from an explicit tangent basis at `x`.
    pub fn at_point(h: &LyapunovFunction, x: Vector, basis: Matrix) -> Result<Self> {
        check_dim(h.dim(), x.len())?;
        check_dim(h.dim(), basis.nrows())?;
        let metric = h.metric_point(&x)?;
        linalg::require_full_column_rank(&basis)?;
        let grad = h.grad(&x)?;
        let metric_gram = basis.transpose() * &metric.hess * &basis;
        let p = Vector::zeros(basis.ncols());
        Ok(Self {
            p,
            x,
            basis,
            metric_gram,
            metric,
            grad,
        })
    }

    pub fn m(&self) -> usize {
        self.basis.ncols()
    }

    /// `Jᵀ ∇H`, the differential of `H_M` in chart coordinates.
    pub fn reduced_differential(&self) -> Vector {
        self.basis.transpose() * &self.grad
    }

    /// `1e-8 (1 + ‖∇H‖)`.
    pub fn tol_transversal(&self) -> f64 {
        1e-8 * (1.0 + self.grad.norm())
    }

    pub fn transversality(&self) -> Transversality {
        let diagnostic = self.reduced_differential().norm();
        Transversality {
            transversal: diagnostic >= self.tol_transversal(),
            diagnostic,
        }
    }

    /// Solve `metric_gram · c = rhs`.
    pub fn solve_gram(&self, rhs: &Vector) -> Result<Vector> {
        let chol = linalg::cholesky(&self.metric_gram, "tangent Gram matrix")
            .map_err(|_| Error::RankDeficient { ratio: 0.0 })?;
        Ok(chol.solve(rhs))
    }

    /// `g_M ∈ T_x(M)` with `<g_M|v>_x = dH(v)` for every tangent `v`.
    pub fn restricted_gradient(&self) -> Result<Vector> {
        let c = self.solve_gram(&self.reduced_differential())?;
        Ok(&self.basis * c)
    }

    /// `ν_W = -g_M / ‖g_M‖_x`.
    pub fn unit_tangent_antigradient(&self) -> Result<Vector> {
        let t = self.transversality();
        if !t.transversal {
            return Err(Error::NonTransversal {
                diagnostic: t.diagnostic,
            });
        }
        let g = self.restricted_gradient()?;
        let len = self.metric.norm(&g);
        Ok(-g / len)
    }
}

/// Outcome of the transversality test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transversality {
    pub transversal: bool,
    /// `‖Jᵀ ∇H(x)‖`.
    pub diagnostic: f64,
}

pub fn tangent_frame(chart: &Chart, h: &LyapunovFunction, p: &Vector) -> Result<TangentFrame> {
    check_dim(chart.m(), p.len())?;
    check_dim(h.dim(), chart.n())?;
    if !chart.contains(p) {
        return Err(Error::DomainViolation(format!(
            "parameter {:?} outside chart box {:?}",
            p.as_slice(),
            chart.param_domain()
        )));
    }
    let x = chart.embed(p)?;
    let mut frame = TangentFrame::at_point(h, x, chart.jac(p)?)?;
    frame.p = p.clone();
    Ok(frame)
}

pub fn restricted_gradient(chart: &Chart, h: &LyapunovFunction, p: &Vector) -> Result<Vector> {
    tangent_frame(chart, h, p)?.restricted_gradient()
}

pub fn unit_tangent_antigradient(chart: &Chart, h: &LyapunovFunction, p: &Vector) -> Result<Vector> {
    tangent_frame(chart, h, p)?.unit_tangent_antigradient()
}

pub fn transversality_check(chart: &Chart, h: &LyapunovFunction, p: &Vector) -> Result<Transversality> {
    Ok(tangent_frame(chart, h, p)?.transversality())
}
