//! Turns parsed configurations into core objects, collecting every reason a
//! scenario cannot run.

use dissipath_core::dynamics::{
    make_gradient_flow, make_linear_field, make_markov_field, zero_field, ProjectorPolicy, VectorField,
};
use dissipath_core::lyapunov::{make_f_divergence, make_quadratic, FDivergenceSpec, LyapunovFunction};
use dissipath_core::manifold::{tangent_frame, Chart};
use dissipath_core::tree::{validate_monotone, ArcCurve, ArcSpec, MonotoneTree, TreeNode, TreeState};
use dissipath_core::{Error, Matrix, Vector};
use serde::Serialize;

use crate::config::{
    ArcCurveConfig, ChartConfig, FieldConfig, GeometryConfig, LyapunovConfig, PolicyConfig, Row, ScenarioConfig,
    TreeConfig,
};

/// One machine-readable validation failure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reason {
    pub kind: String,
    pub message: String,
}

impl Reason {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<Error> for Reason {
    fn from(e: Error) -> Self {
        Reason::new(e.kind(), e.to_string())
    }
}

pub fn vector(v: &Row) -> Vector {
    Vector::from_column_slice(v)
}

pub fn matrix(rows: &[Row], what: &str) -> Result<Matrix, Reason> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Reason::new(
            "dimension-mismatch",
            format!("{what}: rows have different lengths"),
        ));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn columns(cols: &[Row], what: &str) -> Result<Matrix, Reason> {
    Ok(matrix(cols, what)?.transpose())
}

pub fn lyapunov(cfg: &LyapunovConfig) -> Result<LyapunovFunction, Reason> {
    let h = match cfg {
        LyapunovConfig::Quadratic { matrix: g, center } => {
            make_quadratic(matrix(g, "lyapunov.matrix")?, vector(center))
        }
        LyapunovConfig::Kl { x_eq } => make_f_divergence(FDivergenceSpec::kl(vector(x_eq))),
        LyapunovConfig::KlShifted { x_eq } => make_f_divergence(FDivergenceSpec::kl_shifted(vector(x_eq))),
        LyapunovConfig::Burg { x_eq } => make_f_divergence(FDivergenceSpec::burg(vector(x_eq))),
        LyapunovConfig::CustomF { alpha, x_eq } => {
            FDivergenceSpec::power(*alpha, vector(x_eq)).and_then(make_f_divergence)
        }
    };
    Ok(h?)
}

fn boxed(chart: Result<Chart, Error>, domain: &Option<Vec<[f64; 2]>>) -> Result<Chart, Reason> {
    let chart = chart?;
    Ok(match domain {
        Some(d) => chart.with_domain(d.iter().map(|b| (b[0], b[1])).collect())?,
        None => chart,
    })
}

pub fn chart(cfg: &ChartConfig) -> Result<Chart, Reason> {
    match cfg {
        ChartConfig::Line {
            origin,
            direction,
            domain,
        } => boxed(Chart::line(vector(origin), vector(direction)), domain),
        ChartConfig::Affine {
            origin,
            directions,
            domain,
        } => boxed(
            Chart::affine(vector(origin), columns(directions, "chart.directions")?),
            domain,
        ),
        ChartConfig::Polynomial { coeffs, domain } => {
            boxed(Chart::polynomial(coeffs.iter().map(vector).collect()), domain)
        }
        ChartConfig::Parabola { offset, domain } => boxed(Chart::parabola(vector(offset)), domain),
        ChartConfig::Paraboloid {
            offset,
            curvature,
            domain,
        } => boxed(Chart::paraboloid(vector(offset), *curvature), domain),
        ChartConfig::ConvexCombination { a, b } => Ok(Chart::convex_combination(vector(a), vector(b))?),
        ChartConfig::Circle { center, radius, domain } => boxed(Chart::circle(vector(center), *radius), domain),
    }
}

pub fn tree(cfg: &TreeConfig, h: &LyapunovFunction) -> Result<MonotoneTree, Reason> {
    let nodes: Vec<TreeNode> = cfg
        .nodes
        .iter()
        .map(|n| TreeNode {
            id: n.id.clone(),
            position: vector(&n.position),
        })
        .collect();
    let position = |id: &str| {
        nodes
            .iter()
            .find(|n| n.id == id)
            .map(|n| n.position.clone())
            .ok_or_else(|| Reason::new("not-a-tree", format!("arc refers to unknown node {id}")))
    };
    let mut arcs = Vec::with_capacity(cfg.arcs.len());
    for arc in &cfg.arcs {
        let (a, b) = (position(&arc.from)?, position(&arc.to)?);
        let curve = match &arc.curve {
            ArcCurveConfig::Segment => ArcCurve::Segment { a, b },
            ArcCurveConfig::QuadraticBezier { control } => ArcCurve::QuadraticBezier {
                p0: a,
                p1: vector(control),
                p2: b,
            },
        };
        arcs.push(ArcSpec {
            id: arc.id.clone(),
            from: arc.from.clone(),
            to: arc.to.clone(),
            curve,
        });
    }
    Ok(MonotoneTree::new(nodes, arcs, h)?)
}

pub fn field(cfg: &FieldConfig, h: &LyapunovFunction) -> Result<VectorField, Reason> {
    let f = match cfg {
        FieldConfig::Linear { matrix: k, x_ref } => make_linear_field(matrix(k, "field.matrix")?, vector(x_ref))?,
        FieldConfig::GradientFlow => make_gradient_flow(h),
        FieldConfig::Markov { rates, x_eq } => make_markov_field(matrix(rates, "field.rates")?, vector(x_eq))?,
        FieldConfig::Zero => zero_field(h.dim()),
    };
    if f.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: f.dim(),
        }
        .into());
    }
    Ok(f)
}

pub fn policy(cfg: &PolicyConfig) -> Result<ProjectorPolicy, Reason> {
    Ok(match cfg {
        PolicyConfig::Thermodynamic => ProjectorPolicy::Thermodynamic,
        PolicyConfig::Curve => ProjectorPolicy::Curve,
        PolicyConfig::Orthogonal => ProjectorPolicy::Orthogonal,
        PolicyConfig::OrthogonalEuclidean => ProjectorPolicy::OrthogonalEuclidean,
        PolicyConfig::CustomMatrix(rows) => ProjectorPolicy::CustomMatrix(matrix(rows, "projector_policy")?),
    })
}

/// A scenario that passed validation.
pub struct Scenario {
    pub h: LyapunovFunction,
    pub field: VectorField,
    pub geometry: Geometry,
    pub dt: f64,
    pub steps: usize,
}

pub enum Geometry {
    Chart {
        chart: Chart,
        policy: ProjectorPolicy,
        p0: Vector,
    },
    Tree {
        tree: MonotoneTree,
        start: TreeState,
    },
}

fn check_dim(reasons: &mut Vec<Reason>, what: &str, expected: usize, got: usize) -> bool {
    if expected != got {
        reasons.push(Reason::new(
            "dimension-mismatch",
            format!("{what}: expected dimension {expected}, got {got}"),
        ));
    }
    expected == got
}

/// Full static validation; on success every object needed to run is built.
pub fn scenario(cfg: &ScenarioConfig) -> Result<Scenario, Vec<Reason>> {
    let mut reasons = Vec::new();
    let integ = &cfg.integration;
    if !(integ.dt > 0.0 && integ.dt.is_finite()) {
        reasons.push(Reason::new(
            "invalid-input",
            format!("dt must be positive, got {}", integ.dt),
        ));
    }
    let h = lyapunov(&cfg.lyapunov).map_err(|r| vec![r])?;
    let n = h.dim();
    let field = field(&cfg.field, &h).map_err(|r| reasons.push(r)).ok();

    let geometry = match &cfg.geometry {
        GeometryConfig::Chart(c) => chart_geometry(cfg, c, &h, &mut reasons),
        GeometryConfig::Tree(t) => tree_geometry(cfg, t, &h, &mut reasons),
    };
    if let Some(Geometry::Chart { chart, .. }) = &geometry {
        check_dim(&mut reasons, "chart embedding", n, chart.n());
    }
    match (field, geometry, reasons.is_empty()) {
        (Some(field), Some(geometry), true) => Ok(Scenario {
            h,
            field,
            geometry,
            dt: integ.dt,
            steps: integ.steps,
        }),
        _ => Err(reasons),
    }
}

fn chart_geometry(
    cfg: &ScenarioConfig,
    c: &ChartConfig,
    h: &LyapunovFunction,
    reasons: &mut Vec<Reason>,
) -> Option<Geometry> {
    let chart = chart(c).map_err(|r| reasons.push(r)).ok()?;
    let policy = policy(&cfg.projector_policy).map_err(|r| reasons.push(r)).ok()?;
    if cfg.integration.tree_state.is_some() {
        reasons.push(Reason::new("invalid-input", "tree_state given for a chart geometry"));
    }
    let Some(p0) = cfg.integration.p0.as_ref().map(vector) else {
        reasons.push(Reason::new(
            "invalid-input",
            "integration.p0 is required for a chart geometry",
        ));
        return None;
    };
    if !check_dim(reasons, "integration.p0", chart.m(), p0.len()) || chart.n() != h.dim() {
        return None;
    }
    match &policy {
        ProjectorPolicy::Curve if chart.m() != 1 => {
            reasons.push(Reason::new("invalid-input", "curve policy needs a one-parameter chart"));
        }
        ProjectorPolicy::CustomMatrix(m) if m.shape() != (h.dim(), h.dim()) => {
            reasons.push(Reason::new(
                "dimension-mismatch",
                format!(
                    "custom projector is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols(),
                    n = h.dim()
                ),
            ));
        }
        _ => {}
    }
    // positive definiteness, immersion rank and domain at p0
    let frame = match tangent_frame(&chart, h, &p0) {
        Ok(f) => f,
        Err(e) => {
            reasons.push(e.into());
            return None;
        }
    };
    if matches!(policy, ProjectorPolicy::Thermodynamic | ProjectorPolicy::Curve) {
        let critical = frame.grad.norm() < h.tol_grad(&frame.x);
        let tr = frame.transversality();
        if !tr.transversal && !critical {
            reasons.push(Reason::new(
                "non-transversal",
                format!(
                    "dH vanishes on the tangent space at p0 (diagnostic {:e})",
                    tr.diagnostic
                ),
            ));
        }
    }
    Some(Geometry::Chart { chart, policy, p0 })
}

fn tree_geometry(
    cfg: &ScenarioConfig,
    t: &TreeConfig,
    h: &LyapunovFunction,
    reasons: &mut Vec<Reason>,
) -> Option<Geometry> {
    for node in &t.nodes {
        if !check_dim(reasons, &format!("node {}", node.id), h.dim(), node.position.len()) {
            return None;
        }
    }
    let tree = tree(t, h).map_err(|r| reasons.push(r)).ok()?;
    match validate_monotone(&tree, h, t.validation_grid) {
        Ok(rep) if rep.passed => {}
        Ok(rep) => {
            if !rep.unique_root {
                reasons.push(Reason::new("monotonicity", "minimum of H over nodes is not unique"));
            }
            for (arc, s, d) in rep.offending_arcs {
                reasons.push(Reason::new(
                    "monotonicity",
                    format!("arc {arc}: dH/ds = {d:e} below the floor at s = {s}"),
                ));
            }
        }
        Err(e) => reasons.push(e.into()),
    }
    if cfg.integration.p0.is_some() {
        reasons.push(Reason::new("invalid-input", "p0 given for a tree geometry"));
    }
    if !matches!(cfg.projector_policy, PolicyConfig::Thermodynamic) {
        reasons.push(Reason::new(
            "invalid-input",
            "trees carry their own projection; projector_policy must be thermodynamic",
        ));
    }
    let Some(st) = &cfg.integration.tree_state else {
        reasons.push(Reason::new(
            "invalid-input",
            "integration.tree_state is required for a tree geometry",
        ));
        return None;
    };
    let arc = match &st.arc {
        None => None,
        Some(id) => match tree.arc_index(id) {
            Some(k) => Some(k),
            None => {
                reasons.push(Reason::new("not-a-tree", format!("unknown arc {id}")));
                return None;
            }
        },
    };
    let start = tree.state(h, arc, st.s).map_err(|e| reasons.push(e.into())).ok()?;
    Some(Geometry::Tree { tree, start })
}
