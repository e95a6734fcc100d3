//! Vector fields, reduced dynamics in chart coordinates, fixed-step RK4
//! integration, and the entropy-production audit.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::lyapunov::LyapunovFunction;
use crate::manifold::{tangent_frame, Chart, TangentFrame};
use crate::projector::{
    curve_projector_from_frame, euclidean_projector, near_equilibrium_projector_from_frame,
    thermodynamic_projector_from_frame,
};
use crate::{Matrix, Vector};

pub type FieldFn = Arc<dyn Fn(&Vector) -> Result<Vector> + Send + Sync>;

/// `x ↦ W(x)`. Dissipativity is measured, never assumed.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    label: String,
    eval: FieldFn,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

impl VectorField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        let w = (self.eval)(x)?;
        check_dim(self.dim, w.len())?;
        Ok(w)
    }
}

/// `dH/dt` along `q` at `x`: `∇H(x) · q`.
pub fn dissipation(h: &LyapunovFunction, x: &Vector, q: &Vector) -> Result<f64> {
    check_dim(h.dim(), q.len())?;
    Ok(h.grad(x)?.dot(q))
}

/// `W(x) = K (x - x_ref)`.
pub fn make_linear_field(k: Matrix, x_ref: Vector) -> Result<VectorField> {
    check_dim(k.nrows(), k.ncols())?;
    check_dim(k.nrows(), x_ref.len())?;
    Ok(VectorField::new(x_ref.len(), "linear", move |x| Ok(&k * (x - &x_ref))))
}

/// Euclidean steepest descent `W(x) = -∇H(x)`.
pub fn make_gradient_flow(h: &LyapunovFunction) -> VectorField {
    let h = h.clone();
    VectorField::new(h.dim(), "gradient_flow", move |x| Ok(-h.grad(x)?))
}

/// Markov kinetics `W(x) = K x` for a rate matrix with nonnegative
/// off-diagonal entries, zero column sums, and `K x_eq = 0`.
pub fn make_markov_field(k: Matrix, x_eq: Vector) -> Result<VectorField> {
    let n = x_eq.len();
    check_dim(n, k.nrows())?;
    check_dim(n, k.ncols())?;
    for j in 0..n {
        for i in 0..n {
            if i != j && k[(i, j)] < 0.0 {
                return Err(Error::BadRateMatrix(format!(
                    "negative rate K[{i}][{j}] = {}",
                    k[(i, j)]
                )));
            }
        }
        let s: f64 = k.column(j).sum();
        if s.abs() > 1e-12 {
            return Err(Error::BadRateMatrix(format!("column {j} sums to {s:e}")));
        }
    }
    let r = &k * &x_eq;
    if r.amax() > 1e-10 * (1.0 + k.amax() * x_eq.amax()) {
        return Err(Error::BadRateMatrix(format!(
            "x_eq is not stationary: |K x_eq| = {:e}",
            r.amax()
        )));
    }
    Ok(VectorField::new(n, "markov", move |x| Ok(&k * x)))
}

pub fn zero_field(n: usize) -> VectorField {
    VectorField::new(n, "zero", move |_| Ok(Vector::zeros(n)))
}

/// How `W(x)` is mapped onto `T_x(M)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProjectorPolicy {
    /// General thermodynamic projector; metric-orthogonal fallback at
    /// critical points of `H`.
    Thermodynamic,
    /// Rank-one closed form, `m = 1` only.
    Curve,
    /// Orthogonal in the Hessian metric.
    Orthogonal,
    /// Orthogonal in the Euclidean metric.
    OrthogonalEuclidean,
    /// A fixed `n × n` matrix applied at every point.
    CustomMatrix(Matrix),
}

impl ProjectorPolicy {
    pub fn id(&self) -> &'static str {
        match self {
            ProjectorPolicy::Thermodynamic => "thermodynamic",
            ProjectorPolicy::Curve => "curve",
            ProjectorPolicy::Orthogonal => "orthogonal",
            ProjectorPolicy::OrthogonalEuclidean => "orthogonal_euclidean",
            ProjectorPolicy::CustomMatrix(_) => "custom_matrix",
        }
    }
}

/// `H`, `M`, `W`, and the projection rule.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub h: LyapunovFunction,
    pub chart: Chart,
    pub field: VectorField,
    pub policy: ProjectorPolicy,
}

impl ReducedSystem {
    pub fn new(h: LyapunovFunction, chart: Chart, field: VectorField, policy: ProjectorPolicy) -> Result<Self> {
        check_dim(h.dim(), chart.n())?;
        check_dim(h.dim(), field.dim())?;
        match &policy {
            ProjectorPolicy::Curve => check_dim(1, chart.m())?,
            ProjectorPolicy::CustomMatrix(m) => {
                check_dim(h.dim(), m.nrows())?;
                check_dim(h.dim(), m.ncols())?;
            }
            _ => {}
        }
        Ok(Self {
            h,
            chart,
            field,
            policy,
        })
    }

    /// Projection matrix at the frame's base point.
    pub fn projector_matrix(&self, frame: &TangentFrame) -> Result<Matrix> {
        match &self.policy {
            ProjectorPolicy::Thermodynamic => match thermodynamic_projector_from_frame(&self.h, frame) {
                Ok(p) => Ok(p.matrix),
                Err(Error::AtCriticalPoint { grad_norm }) => {
                    log::debug!(
                        "critical point of H at {:?} (|grad| = {grad_norm:e}); orthogonal fallback",
                        frame.x.as_slice()
                    );
                    Ok(near_equilibrium_projector_from_frame(&self.h, frame)?.matrix)
                }
                Err(e) => Err(e),
            },
            ProjectorPolicy::Curve => Ok(curve_projector_from_frame(&self.h, frame)?.matrix),
            ProjectorPolicy::Orthogonal => Ok(near_equilibrium_projector_from_frame(&self.h, frame)?.matrix),
            ProjectorPolicy::OrthogonalEuclidean => euclidean_projector(&frame.basis),
            ProjectorPolicy::CustomMatrix(m) => Ok(m.clone()),
        }
    }
}

/// Everything computed in one evaluation of the reduced right-hand side.
#[derive(Clone, Debug)]
pub struct ReducedEval {
    pub p_dot: Vector,
    pub x: Vector,
    pub w: Vector,
    /// `P_x W(x)`.
    pub projected: Vector,
    pub diss_full: f64,
    pub diss_reduced: f64,
    /// `‖J ṗ - P_x W‖`.
    pub residual: f64,
}

pub fn reduced_eval(system: &ReducedSystem, p: &Vector) -> Result<ReducedEval> {
    let frame = tangent_frame(&system.chart, &system.h, p)?;
    let w = system.field.eval(&frame.x)?;
    let pm = system.projector_matrix(&frame)?;
    let v = &pm * &w;
    // metric normal equations (Jᵀ G J) ṗ = Jᵀ G v
    let rhs = frame.basis.transpose() * (&frame.metric.hess * &v);
    let p_dot = frame.solve_gram(&rhs)?;
    let residual = (&frame.basis * &p_dot - &v).norm();
    Ok(ReducedEval {
        diss_full: frame.grad.dot(&w),
        diss_reduced: frame.grad.dot(&v),
        residual,
        p_dot,
        x: frame.x,
        w,
        projected: v,
    })
}

/// `ṗ` with `J ṗ = P_x W(F(p))`.
pub fn reduced_rhs(system: &ReducedSystem, p: &Vector) -> Result<Vector> {
    Ok(reduced_eval(system, p)?.p_dot)
}

/// Reduced trajectory with per-step dissipation bookkeeping.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub params: Vec<Vector>,
    pub states: Vec<Vector>,
    pub h_values: Vec<f64>,
    pub full_dissipation: Vec<f64>,
    pub reduced_dissipation: Vec<f64>,
    pub dt: f64,
    pub steps_requested: usize,
    /// `StepFailure` when integration halted early.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn m(&self) -> usize {
        self.params.first().map_or(0, |p| p.len())
    }

    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    /// Writes `t,p_1..p_m,x_1..x_n,H,diss_full,diss_reduced`, floats with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, m: usize, n: usize, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("p_{i}")));
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["H", "diss_full", "diss_reduced"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[k])];
            row.extend(self.params[k].iter().map(|&v| fmt_f64(v)));
            row.extend(self.states[k].iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(self.h_values[k]));
            row.push(fmt_f64(self.full_dissipation[k]));
            row.push(fmt_f64(self.reduced_dissipation[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Round-trippable float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Classical fixed-step RK4 on `reduced_rhs`.
pub fn integrate(system: &ReducedSystem, p0: &Vector, dt: f64, steps: usize) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    check_dim(system.chart.m(), p0.len())?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        params: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        h_values: Vec::with_capacity(steps + 1),
        full_dissipation: Vec::with_capacity(steps + 1),
        reduced_dissipation: Vec::with_capacity(steps + 1),
        dt,
        steps_requested: steps,
        failure: None,
    };
    let fail = |step: usize, cause: Error| Error::StepFailure {
        step,
        cause: Box::new(cause),
    };

    let mut p = p0.clone();
    let mut t = 0.0;
    for step in 0..=steps {
        let here = match reduced_eval(system, &p).and_then(|e| Ok((system.h.value(&e.x)?, e))) {
            Ok(v) => v,
            Err(e) => {
                log::info!("integration halted at step {step}: {e}");
                traj.failure = Some(fail(step, e));
                break;
            }
        };
        let (hv, eval) = here;
        traj.times.push(t);
        traj.params.push(p.clone());
        traj.states.push(eval.x.clone());
        traj.h_values.push(hv);
        traj.full_dissipation.push(eval.diss_full);
        traj.reduced_dissipation.push(eval.diss_reduced);
        if eval.diss_full > 0.0 {
            log::debug!("field not dissipative at t = {t}: dH/dt = {:e}", eval.diss_full);
        }
        if step == steps {
            break;
        }
        match rk4_step(system, &p, &eval, hv, dt) {
            Ok(next) => {
                p = next;
                t = (step + 1) as f64 * dt;
            }
            Err(e) => {
                log::info!("integration halted at step {}: {e}", step + 1);
                traj.failure = Some(fail(step + 1, e));
                break;
            }
        }
    }
    Ok(traj)
}

fn rk4_step(system: &ReducedSystem, p: &Vector, first: &ReducedEval, h0: f64, dt: f64) -> Result<Vector> {
    let k1 = &first.p_dot;
    let e2 = reduced_eval(system, &(p + k1 * (0.5 * dt)))?;
    let e3 = reduced_eval(system, &(p + &e2.p_dot * (0.5 * dt)))?;
    let e4 = reduced_eval(system, &(p + &e3.p_dot * dt))?;
    let next = p + (k1 + &e2.p_dot * 2.0 + &e3.p_dot * 2.0 + &e4.p_dot) * (dt / 6.0);
    if !system.chart.contains(&next) {
        return Err(Error::DomainViolation(format!(
            "parameter {:?} left the chart box",
            next.as_slice()
        )));
    }
    // A value-preserving projector cannot raise H along a dissipative field,
    // so a jump beyond the local error means the step crossed a critical
    // point of H on M, where ṗ is unbounded.
    if matches!(system.policy, ProjectorPolicy::Thermodynamic | ProjectorPolicy::Curve)
        && [first, &e2, &e3, &e4].iter().all(|e| e.diss_full <= 0.0)
    {
        let h1 = system.h.value(&system.chart.embed(&next)?)?;
        let rise = h1 - h0;
        if rise > monotonicity_allowance(dt, h0) {
            return Err(Error::NonTransversal { diagnostic: rise });
        }
    }
    Ok(next)
}

/// RK4 local error allowance for a rise of `H` over one step.
pub(crate) fn monotonicity_allowance(dt: f64, h: f64) -> f64 {
    10.0 * dt.powi(5) + 1e-12 * (1.0 + h.abs())
}

/// Summary of a trajectory's dissipation bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub max_dissipation_gap: f64,
    pub sign_violations: usize,
    pub monotonicity_violations: usize,
    pub steps_completed: usize,
    pub status: String,
}

/// Reduced dissipation above this while the full one is `≤ 0` counts as a
/// sign violation.
pub const SIGN_TOL: f64 = 1e-12;

/// Compares full and reduced dissipation pointwise and checks that `H`
/// does not grow beyond the RK4 local error allowance `10 dt⁵`.
pub fn audit(traj: &Trajectory) -> AuditReport {
    let max_dissipation_gap = traj
        .full_dissipation
        .iter()
        .zip(&traj.reduced_dissipation)
        .map(|(f, r)| (f - r).abs())
        .fold(0.0, f64::max);
    let sign_violations = traj
        .full_dissipation
        .iter()
        .zip(&traj.reduced_dissipation)
        .filter(|(&f, &r)| f <= 0.0 && r > SIGN_TOL)
        .count();
    let monotonicity_violations = traj
        .h_values
        .windows(2)
        .filter(|w| w[1] > w[0] + monotonicity_allowance(traj.dt, w[0]))
        .count();
    AuditReport {
        max_dissipation_gap,
        sign_violations,
        monotonicity_violations,
        steps_completed: traj.len().saturating_sub(1),
        status: match &traj.failure {
            None => "ok".into(),
            Some(Error::StepFailure { cause, .. }) => format!("step_failure:{}", cause.kind()),
            Some(e) => format!("failure:{}", e.kind()),
        },
    }
}
