//! Constructive evidence that the thermodynamic projector is the only
//! projector onto `T_x(M)` that keeps dissipative fields dissipative.
//!
//! Three constructions are provided:
//! - rank-one operators `A_a z = -v <v|z>`, `v = P̃y - a y`, which are
//!   dissipative for a quadratic `H` but become non-dissipative after
//!   projection by any projector `P̃` that is not metric-orthogonal;
//! - fields `B_a(x) = -v_x dH(v_x)`, `v_x = P_x y - a y`, that do the same
//!   near an equilibrium for a projector field;
//! - kernel tilts of the thermodynamic projector, each of which admits a
//!   dissipative vector whose projection has positive `dH/dt`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{dissipation, VectorField, SIGN_TOL};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, columns};
use crate::lyapunov::{LyapunovFunction, MetricPoint};
use crate::manifold::{tangent_frame, Chart};
use crate::projector::{thermodynamic_projector_from_frame, ThermodynamicProjector};
use crate::{Matrix, Vector};

/// `‖P̃y‖_x` below this (relative to `‖y‖_x`) means `y` is no witness.
const WITNESS_TOL: f64 = 1e-10;

/// `A z = -v <v|z>_x` together with `v`.
#[derive(Clone, Debug)]
pub struct RankOneOperator {
    pub matrix: Matrix,
    pub v: Vector,
}

/// Builds `A_a` for the projector matrix `proj`, metric taken at `x_context`.
///
/// `y` must be metric-orthogonal to the image of `proj`; the operator only
/// witnesses a violation when `proj · y ≠ 0`.
pub fn rank_one_operator(
    h: &LyapunovFunction,
    x_context: &Vector,
    proj: &Matrix,
    y: &Vector,
    a: f64,
) -> Result<RankOneOperator> {
    let metric = h.metric_point(x_context)?;
    check_square(h.dim(), proj)?;
    check_dim(h.dim(), y.len())?;
    let image = image_basis(proj)?;
    let y_norm = metric.norm(y);
    if y_norm == 0.0 {
        return Err(Error::InvalidInput("witness direction is zero".into()));
    }
    for col in image.column_iter() {
        let c = col.into_owned();
        if metric.inner(&c, y).abs() > 1e-9 * y_norm * metric.norm(&c) {
            return Err(Error::InvalidInput(
                "y is not metric-orthogonal to the image of the projector".into(),
            ));
        }
    }
    let py = proj * y;
    if metric.norm(&py) <= WITNESS_TOL * y_norm {
        return Err(Error::NoWitness);
    }
    let v = &py - y * a;
    let matrix = -&v * (&metric.hess * &v).transpose();
    Ok(RankOneOperator { matrix, v })
}

/// Direction `y ⟂ im(proj)` maximizing `‖proj·y‖_x`, or `NoWitness` when the
/// projector annihilates the whole metric-orthogonal complement of its image.
pub fn witness_direction(h: &LyapunovFunction, x: &Vector, proj: &Matrix) -> Result<Vector> {
    let metric = h.metric_point(x)?;
    check_square(h.dim(), proj)?;
    let n = h.dim();
    let image = image_basis(proj)?;
    let img = linalg::metric_gram_schmidt(&metric.hess, &[], &image, 1e-10);
    let complement = linalg::metric_gram_schmidt(&metric.hess, &img, &Matrix::identity(n, n), 1e-8);
    let best = complement
        .into_iter()
        .map(|y| (metric.norm(&(proj * &y)), y))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((norm, y)) if norm > WITNESS_TOL => Ok(y),
        _ => Err(Error::NoWitness),
    }
}

fn check_square(n: usize, m: &Matrix) -> Result<()> {
    check_dim(n, m.nrows())?;
    check_dim(n, m.ncols())
}

/// Orthonormal (Euclidean) basis of the column space of `m`.
fn image_basis(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    let (u, s) = linalg::thin_svd(m).ok_or_else(|| Error::InvalidInput("projector has non-finite entries".into()))?;
    let smax = s.max();
    let cols: Vec<Vector> = s
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-10 * smax.max(1.0))
        .map(|(j, _)| u.column(j).into_owned())
        .collect();
    Ok(columns(n, &cols))
}

/// Result of evaluating `A_a` at the proof's witness `x = x_eq + P̃y`.
#[derive(Clone, Debug, Serialize)]
pub struct RankOneDemo {
    pub a: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub witness: Vec<f64>,
    /// `dH(A(x - x_eq))`
    pub full_dissipation: f64,
    /// `dH(P̃ A(x - x_eq))`
    pub reduced_dissipation: f64,
    pub violation: bool,
}

/// Evaluates the linear field `W(x) = A_a (x - x_eq)` at `x = x_eq + P̃y`.
/// Needs a quadratic `H` (constant metric); `y` is searched when absent.
pub fn rank_one_demo(h: &LyapunovFunction, proj: &Matrix, y: Option<&Vector>, a: f64) -> Result<RankOneDemo> {
    if h.id() != "quadratic" {
        return Err(Error::InvalidInput("rank-one demonstration needs a quadratic H".into()));
    }
    let center = h.equilibrium().expect("quadratic has a center").clone();
    let y = match y {
        Some(y) => y.clone(),
        None => witness_direction(h, &center, proj)?,
    };
    let op = rank_one_operator(h, &center, proj, &y, a)?;
    let offset = proj * &y;
    let x = &center + &offset;
    let w = &op.matrix * &offset;
    let full = dissipation(h, &x, &w)?;
    let reduced = dissipation(h, &x, &(proj * &w))?;
    Ok(RankOneDemo {
        a,
        y: y.as_slice().to_vec(),
        v: op.v.as_slice().to_vec(),
        witness: x.as_slice().to_vec(),
        full_dissipation: full,
        reduced_dissipation: reduced,
        violation: full <= 0.0 && reduced > SIGN_TOL,
    })
}

pub type ProjectorField = Arc<dyn Fn(&Vector) -> Result<Matrix> + Send + Sync>;

/// `B_a(x) = -v_x dH_x(v_x)`, `v_x = P_x y - a y`; `dH(B_a) = -(dH(v_x))² ≤ 0`.
pub fn near_equilibrium_field(h: &LyapunovFunction, projector_field: ProjectorField, y: Vector, a: f64) -> VectorField {
    let h = h.clone();
    VectorField::new(h.dim(), "near_equilibrium_b", move |x| {
        let p = projector_field(x)?;
        let v = &p * &y - &y * a;
        let d = h.grad(x)?.dot(&v);
        Ok(-v * d)
    })
}

/// One probe point of the near-equilibrium search.
#[derive(Clone, Debug, Serialize)]
pub struct NearEquilibriumProbe {
    pub eps: f64,
    pub x: Vec<f64>,
    pub full_dissipation: f64,
    pub reduced_dissipation: f64,
    pub violation: bool,
}

/// Evaluates `field` at `x_eq + ε·direction` for each `ε` and records the
/// full and projected dissipation.
pub fn search_near_equilibrium(
    h: &LyapunovFunction,
    projector_field: &ProjectorField,
    field: &VectorField,
    direction: &Vector,
    eps: &[f64],
) -> Result<Vec<NearEquilibriumProbe>> {
    let eq = h
        .equilibrium()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no equilibrium", h.id())))?
        .clone();
    eps.iter()
        .map(|&e| {
            let x = &eq + direction * e;
            let w = field.eval(&x)?;
            let p = projector_field(&x)?;
            let full = dissipation(h, &x, &w)?;
            let reduced = dissipation(h, &x, &(&p * &w))?;
            Ok(NearEquilibriumProbe {
                eps: e,
                x: x.as_slice().to_vec(),
                full_dissipation: full,
                reduced_dissipation: reduced,
                violation: full <= 0.0 && reduced > SIGN_TOL,
            })
        })
        .collect()
}

/// Thermodynamic projector with its kernel tilted.
///
/// The ζ-functional `<ν|·>/<ν_W|ν>` is replaced by the renormalized
/// `l_ε = <εu - ν|·> / <εu - ν|ν_W>` with `u` metric-unit and orthogonal to
/// `ν` and `W₀`; the result is still a projector with image `T_x(M)`.
#[derive(Clone, Debug)]
pub struct ProjectorPerturbation {
    pub base: Matrix,
    pub tilt_direction: Vector,
    pub magnitude: f64,
    pub matrix: Matrix,
    /// Riesz representative of the tilted functional.
    pub functional: Vector,
}

pub fn tilt_projector(
    base: &ThermodynamicProjector,
    metric: &MetricPoint,
    direction: &Vector,
    magnitude: f64,
) -> Result<ProjectorPerturbation> {
    let (Some(nu), Some(nu_w)) = (&base.nu, &base.nu_w) else {
        return Err(Error::InvalidInput(
            "fallback projectors carry no normals to tilt".into(),
        ));
    };
    let g = &metric.hess;
    let mut seed: Vec<Vector> = vec![nu.clone()];
    seed.extend(base.w0_basis.column_iter().map(|c| c.into_owned()));
    let u = linalg::metric_gram_schmidt(
        g,
        &seed,
        &columns(direction.len(), std::slice::from_ref(direction)),
        1e-8,
    );
    let Some(mut u) = u.into_iter().next() else {
        return Err(Error::InvalidInput("tilt direction lies in span(ν, W₀)".into()));
    };
    if metric.inner(&u, nu_w) > 0.0 {
        u = -u;
    }
    let l = &u * magnitude - nu;
    let functional = &l / metric.inner(&l, nu_w);
    let matrix = (&base.w0_basis * base.w0_basis.transpose() + nu_w * functional.transpose()) * g;
    Ok(ProjectorPerturbation {
        base: base.matrix.clone(),
        tilt_direction: u,
        magnitude,
        matrix,
        functional,
    })
}

/// Outcome for one tilt magnitude.
#[derive(Clone, Debug, Serialize)]
pub struct TiltResult {
    pub tilt: f64,
    pub violation_found: bool,
    /// Deterministic witness (metric-unit, dissipative).
    pub witness: Option<Vec<f64>>,
    pub full_dissipation: Option<f64>,
    pub reduced_dissipation: Option<f64>,
    /// Reduced dissipation of the witness; positive means violation.
    pub margin: Option<f64>,
    pub monte_carlo_trials: usize,
    pub monte_carlo_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub seed: u64,
    pub tilt_direction: Vec<f64>,
    pub results: Vec<TiltResult>,
}

/// For each tilt, looks for a dissipative `Q` with `dH(P̃Q) > 0`.
///
/// The deterministic witness follows the half-space argument: with `r` the
/// Riesz representative of the tilted functional and `r⊥` its part
/// orthogonal to `ν`, `Q = -r⊥ + δν` has `dH(Q) < 0` yet a negative tilted
/// functional, hence `dH(P̃Q) > 0`. A Monte-Carlo pass with `trials` random
/// dissipative vectors follows.
pub fn uniqueness_sweep(
    h: &LyapunovFunction,
    chart: &Chart,
    p: &Vector,
    tilts: &[f64],
    trials: usize,
    seed: u64,
) -> Result<UniquenessReport> {
    let frame = tangent_frame(chart, h, p)?;
    let base = thermodynamic_projector_from_frame(h, &frame)?;
    let n = frame.x.len();
    if chart.m() >= n {
        return Err(Error::InvalidInput(
            "T_x(M) is the whole space; the projector is the identity".into(),
        ));
    }
    let metric = &frame.metric;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = loop {
        let d = random_vector(&mut rng, n);
        if let Ok(t) = tilt_projector(&base, metric, &d, 0.0) {
            break t.tilt_direction;
        }
    };
    let nu = base.nu.clone().expect("general projector has ν");

    let mut results = Vec::with_capacity(tilts.len());
    for &tilt in tilts {
        if !(tilt >= 0.0 && tilt.is_finite()) {
            return Err(Error::InvalidInput(format!("tilt must be nonnegative, got {tilt}")));
        }
        let pert = tilt_projector(&base, metric, &direction, tilt)?;
        let mut res = TiltResult {
            tilt,
            violation_found: false,
            witness: None,
            full_dissipation: None,
            reduced_dissipation: None,
            margin: None,
            monte_carlo_trials: trials,
            monte_carlo_violations: 0,
        };

        let r = &pert.functional;
        let r_nu = metric.inner(r, &nu);
        let r_perp = r - &nu * r_nu;
        let perp_sq = metric.inner(&r_perp, &r_perp);
        if perp_sq > 1e-24 * metric.inner(r, r) {
            let delta = if r_nu > 0.0 { 0.5 * perp_sq / r_nu } else { 1.0 };
            let mut q = &nu * delta - &r_perp;
            q /= metric.norm(&q);
            let full = frame.grad.dot(&q);
            let reduced = frame.grad.dot(&(&pert.matrix * &q));
            res.violation_found = full <= 0.0 && reduced > SIGN_TOL;
            res.witness = Some(q.as_slice().to_vec());
            res.full_dissipation = Some(full);
            res.reduced_dissipation = Some(reduced);
            res.margin = Some(reduced);
        }

        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..trials {
            let mut q = random_vector(&mut sample_rng, n);
            let len = metric.norm(&q);
            if len == 0.0 {
                continue;
            }
            q /= len;
            if frame.grad.dot(&q) > 0.0 {
                q = -q;
            }
            let reduced = frame.grad.dot(&(&pert.matrix * &q));
            if reduced > SIGN_TOL {
                res.monte_carlo_violations += 1;
            }
        }
        res.violation_found |= res.monte_carlo_violations > 0;
        results.push(res);
    }
    Ok(UniquenessReport {
        x: frame.x.as_slice().to_vec(),
        p: p.as_slice().to_vec(),
        seed,
        tilt_direction: direction.as_slice().to_vec(),
        results,
    })
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Re-evaluates a stored witness: `(dH(Q), dH(P̃Q))`.
pub fn evaluate_witness(h: &LyapunovFunction, x: &Vector, proj: &Matrix, q: &Vector) -> Result<(f64, f64)> {
    Ok((dissipation(h, x, q)?, dissipation(h, x, &(proj * q))?))
}
