//! Monotone trees: projection of dissipative dynamics onto a tree of arcs
//! along which `H` is strictly monotone.
//!
//! `h = H(x)` serves as the internal coordinate on each root path and the
//! motion is defined by `dh/dt = dH(W(x))`. Arcs are stored oriented away
//! from the root, so a dissipative field always moves a state toward `s = 0`
//! and, across nodes, onto the parent arc.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use crate::dynamics::{dissipation, fmt_f64, monotonicity_allowance, AuditReport, VectorField, SIGN_TOL};
use crate::error::{check_dim, Error, Result};
use crate::lyapunov::LyapunovFunction;
use crate::manifold::Chart;
use crate::Vector;

/// Floor on `dH/ds` along arcs.
pub const DELTA_MONO: f64 = 1e-6;

/// Endpoint mismatch allowed between an arc and its nodes.
const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum ArcCurve {
    Segment { a: Vector, b: Vector },
    QuadraticBezier { p0: Vector, p1: Vector, p2: Vector },
}

impl ArcCurve {
    pub fn dim(&self) -> usize {
        match self {
            ArcCurve::Segment { a, .. } => a.len(),
            ArcCurve::QuadraticBezier { p0, .. } => p0.len(),
        }
    }

    pub fn point(&self, s: f64) -> Vector {
        match self {
            ArcCurve::Segment { a, b } => a * (1.0 - s) + b * s,
            ArcCurve::QuadraticBezier { p0, p1, p2 } => {
                let u = 1.0 - s;
                p0 * (u * u) + p1 * (2.0 * u * s) + p2 * (s * s)
            }
        }
    }

    pub fn derivative(&self, s: f64) -> Vector {
        match self {
            ArcCurve::Segment { a, b } => b - a,
            ArcCurve::QuadraticBezier { p0, p1, p2 } => (p1 - p0) * (2.0 * (1.0 - s)) + (p2 - p1) * (2.0 * s),
        }
    }

    pub fn start(&self) -> Vector {
        self.point(0.0)
    }

    pub fn end(&self) -> Vector {
        self.point(1.0)
    }

    /// Same curve traversed from `end` to `start`.
    pub fn reversed(&self) -> Self {
        match self {
            ArcCurve::Segment { a, b } => ArcCurve::Segment {
                a: b.clone(),
                b: a.clone(),
            },
            ArcCurve::QuadraticBezier { p0, p1, p2 } => ArcCurve::QuadraticBezier {
                p0: p2.clone(),
                p1: p1.clone(),
                p2: p0.clone(),
            },
        }
    }

    /// The arc as a one-dimensional chart with `p = s ∈ [0, 1]`.
    pub fn to_chart(&self) -> Result<Chart> {
        match self {
            ArcCurve::Segment { a, b } => Chart::convex_combination(a.clone(), b.clone()),
            ArcCurve::QuadraticBezier { p0, p1, p2 } => {
                // p0 + 2(p1 - p0) s + (p0 - 2 p1 + p2) s²
                Chart::polynomial(vec![p0.clone(), (p1 - p0) * 2.0, p0 - p1 * 2.0 + p2])?.with_domain(vec![(0.0, 1.0)])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: String,
    pub position: Vector,
}

/// Arc between two nodes; after construction `from` is the rootward end.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeArc {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub curve: ArcCurve,
}

/// Arc description before orientation: endpoints given by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub curve: ArcCurve,
}

#[derive(Clone, Debug)]
pub struct MonotoneTree {
    nodes: Vec<TreeNode>,
    arcs: Vec<TreeArc>,
    root: usize,
    /// Arc entering each node from the root side (`None` for the root).
    parent_arc: Vec<Option<usize>>,
}

impl MonotoneTree {
    /// Checks the tree structure, picks the node of least `H` as root, and
    /// orients every arc away from it.
    pub fn new(nodes: Vec<TreeNode>, arcs: Vec<ArcSpec>, h: &LyapunovFunction) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::NotATree("no nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            check_dim(h.dim(), node.position.len())?;
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::NotATree(format!("duplicate node id {}", node.id)));
            }
        }
        if arcs.len() + 1 != nodes.len() {
            return Err(Error::NotATree(format!(
                "{} nodes need {} arcs, got {}",
                nodes.len(),
                nodes.len() - 1,
                arcs.len()
            )));
        }
        let mut seen_arcs = HashMap::new();
        let mut ends = Vec::with_capacity(arcs.len());
        for (k, a) in arcs.iter().enumerate() {
            if seen_arcs.insert(a.id.clone(), k).is_some() {
                return Err(Error::NotATree(format!("duplicate arc id {}", a.id)));
            }
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::NotATree(format!("arc {} references unknown node {id}", a.id)))
            };
            let (u, w) = (lookup(&a.from)?, lookup(&a.to)?);
            if u == w {
                return Err(Error::NotATree(format!("arc {} is a loop", a.id)));
            }
            check_dim(h.dim(), a.curve.dim())?;
            if (a.curve.start() - &nodes[u].position).norm() > ENDPOINT_TOL
                || (a.curve.end() - &nodes[w].position).norm() > ENDPOINT_TOL
            {
                return Err(Error::InvalidInput(format!(
                    "arc {} endpoints do not match nodes {} and {}",
                    a.id, a.from, a.to
                )));
            }
            ends.push((u, w));
        }

        let mut hv = Vec::with_capacity(nodes.len());
        for node in &nodes {
            hv.push(h.value(&node.position)?);
        }
        let root = (0..nodes.len())
            .min_by(|&i, &j| hv[i].total_cmp(&hv[j]))
            .expect("nonempty");

        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes.len()];
        for (k, &(u, w)) in ends.iter().enumerate() {
            adj[u].push((w, k));
            adj[w].push((u, k));
        }
        let mut parent_arc = vec![None; nodes.len()];
        let mut visited = vec![false; nodes.len()];
        let mut oriented: Vec<Option<TreeArc>> = vec![None; arcs.len()];
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(u) = queue.pop_front() {
            for &(w, k) in &adj[u] {
                if visited[w] {
                    continue;
                }
                visited[w] = true;
                parent_arc[w] = Some(k);
                let spec = &arcs[k];
                let curve = if ends[k].0 == u {
                    spec.curve.clone()
                } else {
                    spec.curve.reversed()
                };
                oriented[k] = Some(TreeArc {
                    id: spec.id.clone(),
                    from: u,
                    to: w,
                    curve,
                });
                queue.push_back(w);
            }
        }
        if visited.iter().any(|v| !v) {
            // |E| = |V| - 1 and disconnected means a cycle somewhere
            return Err(Error::NotATree("graph is disconnected or has a cycle".into()));
        }
        let arcs = oriented.into_iter().map(|a| a.expect("every arc reached")).collect();
        Ok(Self {
            nodes,
            arcs,
            root,
            parent_arc,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[TreeArc] {
        &self.arcs
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn arc_index(&self, id: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn parent_arc(&self, node: usize) -> Option<usize> {
        self.parent_arc[node]
    }

    /// State on arc `arc` at parameter `s`, or at the root when `arc` is `None`.
    /// A state at `s = 0` is moved onto the parent arc's `s = 1` end.
    pub fn state(&self, h: &LyapunovFunction, arc: Option<usize>, s: f64) -> Result<TreeState> {
        let Some(k) = arc else {
            let x = self.nodes[self.root].position.clone();
            return Ok(TreeState {
                arc: None,
                s: 0.0,
                h: h.value(&x)?,
                x,
            });
        };
        if k >= self.arcs.len() || !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidInput(format!("no tree point at arc {k}, s = {s}")));
        }
        if s == 0.0 {
            return self.node_state(h, self.arcs[k].from);
        }
        let x = self.arcs[k].curve.point(s);
        Ok(TreeState {
            arc: Some(k),
            s,
            h: h.value(&x)?,
            x,
        })
    }

    /// State sitting at a node.
    pub fn node_state(&self, h: &LyapunovFunction, node: usize) -> Result<TreeState> {
        match self.parent_arc[node] {
            None => self.state(h, None, 0.0),
            Some(k) => {
                let x = self.nodes[node].position.clone();
                Ok(TreeState {
                    arc: Some(k),
                    s: 1.0,
                    h: h.value(&x)?,
                    x,
                })
            }
        }
    }
}

/// Position on the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeState {
    /// `None` at the root.
    pub arc: Option<usize>,
    pub s: f64,
    pub x: Vector,
    pub h: f64,
}

impl TreeState {
    pub fn at_root(&self) -> bool {
        self.arc.is_none()
    }
}

/// Result of the monotonicity validation.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneReport {
    pub passed: bool,
    pub unique_root: bool,
    /// `(arc id, s, dH/ds)` of the worst grid point on each failing arc.
    pub offending_arcs: Vec<(String, f64, f64)>,
    pub min_derivative: f64,
}

fn central_dh_ds(h: &LyapunovFunction, curve: &ArcCurve, s: f64) -> Result<f64> {
    let step = 1e-6;
    let plus = h.value(&curve.point(s + step))?;
    let minus = h.value(&curve.point(s - step))?;
    Ok((plus - minus) / (2.0 * step))
}

/// Checks `d(H∘curve)/ds ≥ δ_mono` on `grid` equally spaced points per arc
/// (central differences) and that the root is the unique minimum over nodes.
pub fn validate_monotone(tree: &MonotoneTree, h: &LyapunovFunction, grid: usize) -> Result<MonotoneReport> {
    let grid = grid.max(2);
    let hv: Vec<f64> = tree.nodes.iter().map(|n| h.value(&n.position)).collect::<Result<_>>()?;
    let root_h = hv[tree.root];
    let unique_root = hv.iter().enumerate().all(|(i, &v)| i == tree.root || v > root_h);

    let mut offending_arcs = Vec::new();
    let mut min_derivative = f64::INFINITY;
    for arc in &tree.arcs {
        let mut worst: Option<(f64, f64)> = None;
        for k in 0..grid {
            let s = k as f64 / (grid - 1) as f64;
            let d = central_dh_ds(h, &arc.curve, s)?;
            min_derivative = min_derivative.min(d);
            if d < DELTA_MONO && worst.is_none_or(|(_, wd)| d < wd) {
                worst = Some((s, d));
            }
        }
        if let Some((s, d)) = worst {
            offending_arcs.push((arc.id.clone(), s, d));
        }
    }
    if tree.arcs.is_empty() {
        min_derivative = f64::INFINITY;
    }
    Ok(MonotoneReport {
        passed: unique_root && offending_arcs.is_empty(),
        unique_root,
        offending_arcs,
        min_derivative,
    })
}

/// Arc indices from the state's arc down to the root.
pub fn path_to_root(tree: &MonotoneTree, state: &TreeState) -> Vec<usize> {
    let mut path = Vec::new();
    let mut cur = state.arc;
    while let Some(k) = cur {
        path.push(k);
        cur = tree.parent_arc[tree.arcs[k].from];
    }
    path
}

/// Velocity on the current arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeRhs {
    pub ds_dt: f64,
    /// `(ds/dt) · dH/ds`.
    pub dh_dt: f64,
    /// `dH(W(x))` in the full space.
    pub diss_full: f64,
    pub at_root: bool,
}

/// `ds/dt = dH(W(x)) / (dH/ds)`; zero and flagged at the root.
pub fn tree_reduced_rhs(
    tree: &MonotoneTree,
    h: &LyapunovFunction,
    field: &VectorField,
    state: &TreeState,
) -> Result<TreeRhs> {
    let w = field.eval(&state.x)?;
    let diss_full = dissipation(h, &state.x, &w)?;
    let Some(k) = state.arc else {
        return Ok(TreeRhs {
            ds_dt: 0.0,
            dh_dt: 0.0,
            diss_full,
            at_root: true,
        });
    };
    let (ds_dt, dh_ds) = arc_speed(tree, h, field, k, state.s)?;
    Ok(TreeRhs {
        ds_dt,
        dh_dt: ds_dt * dh_ds,
        diss_full,
        at_root: false,
    })
}

/// `(ds/dt, dH/ds)` on arc `k` at parameter `s` (which may sit slightly
/// outside `[0, 1]` during RK stages).
fn arc_speed(tree: &MonotoneTree, h: &LyapunovFunction, field: &VectorField, k: usize, s: f64) -> Result<(f64, f64)> {
    let arc = &tree.arcs[k];
    let x = arc.curve.point(s);
    let grad = h.grad(&x)?;
    let dh_ds = grad.dot(&arc.curve.derivative(s));
    if !(dh_ds >= DELTA_MONO) {
        return Err(Error::MonotonicityFloorViolated {
            arc: arc.id.clone(),
            s,
            derivative: dh_ds,
        });
    }
    let w = field.eval(&x)?;
    Ok((grad.dot(&w) / dh_ds, dh_ds))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeRow {
    pub t: f64,
    pub arc: Option<usize>,
    pub s: f64,
    pub x: Vector,
    pub h: f64,
    pub dh_dt: f64,
    pub diss_full: f64,
    pub at_root: bool,
}

#[derive(Clone, Debug)]
pub struct TreeTrajectory {
    pub rows: Vec<TreeRow>,
    pub dt: f64,
    pub failure: Option<Error>,
}

impl TreeTrajectory {
    /// Writes `t,arc_id,s,x_1..x_n,h,diss_full`; the root is written as
    /// arc id `root`.
    pub fn write_csv<W: Write>(&self, tree: &MonotoneTree, n: usize, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string(), "arc_id".into(), "s".into()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["h".to_string(), "diss_full".into()]);
        writeln!(out, "{}", header.join(","))?;
        for r in &self.rows {
            let mut row = vec![
                fmt_f64(r.t),
                r.arc.map_or("root".to_string(), |k| tree.arcs[k].id.clone()),
                fmt_f64(r.s),
            ];
            row.extend(r.x.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(r.h));
            row.push(fmt_f64(r.diss_full));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// RK4 in `s` on the current arc. When a step would cross `s = 0` the
/// crossing time is located by linear interpolation in `h`, the state moves
/// to the node, and the remainder of the step continues on the parent arc.
/// At the root the state is clamped.
pub fn integrate_tree(
    tree: &MonotoneTree,
    h: &LyapunovFunction,
    field: &VectorField,
    state0: &TreeState,
    dt: f64,
    steps: usize,
) -> Result<TreeTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let mut traj = TreeTrajectory {
        rows: Vec::with_capacity(steps + 1),
        dt,
        failure: None,
    };
    let mut state = state0.clone();
    for step in 0..=steps {
        let t = step as f64 * dt;
        match tree_reduced_rhs(tree, h, field, &state) {
            Ok(rhs) => traj.rows.push(TreeRow {
                t,
                arc: state.arc,
                s: state.s,
                x: state.x.clone(),
                h: state.h,
                dh_dt: rhs.dh_dt,
                diss_full: rhs.diss_full,
                at_root: rhs.at_root,
            }),
            Err(e) => {
                traj.failure = Some(Error::StepFailure {
                    step,
                    cause: Box::new(e),
                });
                break;
            }
        }
        if step == steps {
            break;
        }
        match advance(tree, h, field, &state, dt) {
            Ok(next) => state = next,
            Err(e) => {
                traj.failure = Some(Error::StepFailure {
                    step: step + 1,
                    cause: Box::new(e),
                });
                break;
            }
        }
    }
    Ok(traj)
}

/// Same bookkeeping as [`crate::dynamics::audit`], with the recorded `dh/dt`
/// in place of the reduced dissipation.
pub fn audit_tree(traj: &TreeTrajectory) -> AuditReport {
    let rows = &traj.rows;
    AuditReport {
        max_dissipation_gap: rows
            .iter()
            .filter(|r| !r.at_root)
            .map(|r| (r.dh_dt - r.diss_full).abs())
            .fold(0.0, f64::max),
        sign_violations: rows.iter().filter(|r| r.diss_full <= 0.0 && r.dh_dt > SIGN_TOL).count(),
        monotonicity_violations: rows
            .windows(2)
            .filter(|w| w[1].h > w[0].h + monotonicity_allowance(traj.dt, w[0].h))
            .count(),
        steps_completed: rows.len().saturating_sub(1),
        status: match &traj.failure {
            None => "ok".into(),
            Some(Error::StepFailure { cause, .. }) => format!("step_failure:{}", cause.kind()),
            Some(e) => format!("failure:{}", e.kind()),
        },
    }
}

fn advance(
    tree: &MonotoneTree,
    h: &LyapunovFunction,
    field: &VectorField,
    state: &TreeState,
    dt: f64,
) -> Result<TreeState> {
    let mut state = state.clone();
    let mut remaining = dt;
    // each crossing consumes one arc, so this bounds the loop
    for _ in 0..=tree.arcs.len() {
        let Some(k) = state.arc else {
            return Ok(state);
        };
        if remaining <= 0.0 {
            return Ok(state);
        }
        // stages that overshoot the node are evaluated at the node
        let f = |s: f64| arc_speed(tree, h, field, k, s.max(0.0)).map(|(v, _)| v);
        let s0 = state.s;
        let k1 = f(s0)?;
        let k2 = f(s0 + 0.5 * remaining * k1)?;
        let k3 = f(s0 + 0.5 * remaining * k2)?;
        let k4 = f(s0 + remaining * k3)?;
        let s1 = s0 + remaining * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;

        if s1 > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "state left arc {} away from the root (s = {s1}); field is not dissipative here",
                tree.arcs[k].id
            )));
        }
        if s1 > 0.0 {
            let s1 = s1.min(1.0);
            let x = tree.arcs[k].curve.point(s1);
            return Ok(TreeState {
                arc: Some(k),
                s: s1,
                h: h.value(&x)?,
                x,
            });
        }
        // crossing the rootward node inside this step
        let node = tree.arcs[k].from;
        let h_node = h.value(&tree.nodes[node].position)?;
        let frac = match h.value(&tree.arcs[k].curve.point(s1)) {
            Ok(h_end) if state.h > h_end => (state.h - h_node) / (state.h - h_end),
            // extrapolated point outside the domain of H: interpolate in s
            _ => s0 / (s0 - s1),
        }
        .clamp(0.0, 1.0);
        remaining -= frac * remaining;
        state = tree.node_state(h, node)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_gradient_flow, zero_field};
    use crate::lyapunov::make_quadratic;
    use crate::Matrix;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn h_shifted() -> LyapunovFunction {
        make_quadratic(Matrix::identity(2, 2), v(&[-1.0, 0.0])).unwrap()
    }

    fn node(id: &str, xs: &[f64]) -> TreeNode {
        TreeNode {
            id: id.into(),
            position: v(xs),
        }
    }

    fn seg(id: &str, from: &str, to: &str, a: &[f64], b: &[f64]) -> ArcSpec {
        ArcSpec {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            curve: ArcCurve::Segment { a: v(a), b: v(b) },
        }
    }

    fn two_arc_tree() -> MonotoneTree {
        MonotoneTree::new(
            vec![
                node("root", &[0.0, 0.0]),
                node("a", &[1.0, 0.0]),
                node("b", &[1.0, 1.0]),
            ],
            vec![
                seg("A", "root", "a", &[0.0, 0.0], &[1.0, 0.0]),
                seg("B", "root", "b", &[0.0, 0.0], &[1.0, 1.0]),
            ],
            &h_shifted(),
        )
        .unwrap()
    }

    #[test]
    fn two_arc_tree_is_monotone() {
        let t = two_arc_tree();
        assert_eq!(t.nodes()[t.root()].id, "root");
        let rep = validate_monotone(&t, &h_shifted(), 101).unwrap();
        assert!(rep.passed, "{rep:?}");
        // hand derivative: dH/ds = s + 1 on A, 2s + 1 on B, minimum 1 at s = 0
        assert!((rep.min_derivative - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_arc_fails_at_its_start() {
        let t = MonotoneTree::new(
            vec![node("r", &[0.0, 0.0]), node("up", &[0.0, 1.0])],
            vec![seg("C", "r", "up", &[0.0, 0.0], &[0.0, 1.0])],
            &h_shifted(),
        )
        .unwrap();
        let rep = validate_monotone(&t, &h_shifted(), 11).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.offending_arcs.len(), 1);
        let (id, s, d) = &rep.offending_arcs[0];
        assert_eq!(id, "C");
        assert_eq!(*s, 0.0);
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn single_node_tree_passes() {
        let t = MonotoneTree::new(vec![node("only", &[2.0, 2.0])], vec![], &h_shifted()).unwrap();
        assert!(validate_monotone(&t, &h_shifted(), 10).unwrap().passed);
        let st = t.state(&h_shifted(), None, 0.0).unwrap();
        assert!(path_to_root(&t, &st).is_empty());
    }

    #[test]
    fn structural_errors() {
        let h = h_shifted();
        let nodes = vec![node("r", &[0.0, 0.0]), node("a", &[1.0, 0.0]), node("b", &[2.0, 0.0])];
        // cycle r-a-r plus isolated b
        let cyc = MonotoneTree::new(
            nodes.clone(),
            vec![
                seg("x", "r", "a", &[0.0, 0.0], &[1.0, 0.0]),
                seg("y", "a", "r", &[1.0, 0.0], &[0.0, 0.0]),
            ],
            &h,
        );
        assert!(matches!(cyc, Err(Error::NotATree(_))));
        let short = MonotoneTree::new(nodes.clone(), vec![seg("x", "r", "a", &[0.0, 0.0], &[1.0, 0.0])], &h);
        assert!(matches!(short, Err(Error::NotATree(_))));
        let bad_end = MonotoneTree::new(
            nodes[..2].to_vec(),
            vec![seg("x", "r", "a", &[0.0, 0.0], &[1.5, 0.0])],
            &h,
        );
        assert!(matches!(bad_end, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn arcs_are_reoriented_away_from_root() {
        let h = h_shifted();
        let t = MonotoneTree::new(
            vec![node("r", &[0.0, 0.0]), node("a", &[1.0, 0.0])],
            vec![seg("x", "a", "r", &[1.0, 0.0], &[0.0, 0.0])],
            &h,
        )
        .unwrap();
        let arc = &t.arcs()[0];
        assert_eq!(t.nodes()[arc.from].id, "r");
        assert_eq!(arc.curve.point(0.0), v(&[0.0, 0.0]));
    }

    #[test]
    fn paths_to_root() {
        let t = two_arc_tree();
        let h = h_shifted();
        let b = t.arc_index("B").unwrap();
        let st = t.state(&h, Some(b), 0.5).unwrap();
        assert_eq!(path_to_root(&t, &st), vec![b]);
        let root = t.state(&h, None, 0.0).unwrap();
        assert!(path_to_root(&t, &root).is_empty());

        let chain = MonotoneTree::new(
            vec![
                node("root", &[0.0, 0.0]),
                node("a", &[1.0, 0.0]),
                node("b", &[2.0, 0.0]),
            ],
            vec![
                seg("ab", "a", "b", &[1.0, 0.0], &[2.0, 0.0]),
                seg("ra", "root", "a", &[0.0, 0.0], &[1.0, 0.0]),
            ],
            &h,
        )
        .unwrap();
        let ab = chain.arc_index("ab").unwrap();
        let st = chain.state(&h, Some(ab), 0.3).unwrap();
        let ids: Vec<&str> = path_to_root(&chain, &st)
            .iter()
            .map(|&k| chain.arcs()[k].id.as_str())
            .collect();
        assert_eq!(ids, ["ab", "ra"]);
        // H strictly decreasing along the path
        let hs: Vec<f64> = path_to_root(&chain, &st)
            .iter()
            .map(|&k| h.value(&chain.arcs()[k].curve.start()).unwrap())
            .collect();
        assert!(hs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn reduced_rhs_on_arc_end() {
        let t = two_arc_tree();
        let h = h_shifted();
        let a = t.arc_index("A").unwrap();
        let st = t.state(&h, Some(a), 1.0).unwrap();
        let rhs = tree_reduced_rhs(&t, &h, &make_gradient_flow(&h), &st).unwrap();
        assert_relative_eq!(rhs.diss_full, -4.0, epsilon = 1e-14);
        assert_relative_eq!(rhs.ds_dt, -2.0, epsilon = 1e-14);
        assert!(!rhs.at_root);

        let rhs0 = tree_reduced_rhs(&t, &h, &zero_field(2), &st).unwrap();
        assert_eq!(rhs0.ds_dt, 0.0);

        let root = t.state(&h, None, 0.0).unwrap();
        let r = tree_reduced_rhs(&t, &h, &make_gradient_flow(&h), &root).unwrap();
        assert!(r.at_root);
        assert_eq!(r.ds_dt, 0.0);
    }

    #[test]
    fn floor_violation_at_runtime() {
        let h = h_shifted();
        let t = MonotoneTree::new(
            vec![node("r", &[0.0, 0.0]), node("up", &[0.0, 1.0])],
            vec![seg("C", "r", "up", &[0.0, 0.0], &[0.0, 1.0])],
            &h,
        )
        .unwrap();
        let k = t.arc_index("C").unwrap();
        let st = t.state(&h, Some(k), 1e-9).unwrap();
        assert!(matches!(
            tree_reduced_rhs(&t, &h, &make_gradient_flow(&h), &st),
            Err(Error::MonotonicityFloorViolated { .. })
        ));
    }

    #[test]
    fn integration_clamps_at_root() {
        let t = two_arc_tree();
        let h = h_shifted();
        let b = t.arc_index("B").unwrap();
        let st = t.state(&h, Some(b), 1.0).unwrap();
        let traj = integrate_tree(&t, &h, &make_gradient_flow(&h), &st, 0.01, 300).unwrap();
        assert!(traj.failure.is_none());
        assert_eq!(traj.rows.len(), 301);
        assert!(traj.rows.windows(2).all(|w| w[1].h <= w[0].h));
        let last = traj.rows.last().unwrap();
        assert!(last.at_root);
        assert_eq!(last.x, v(&[0.0, 0.0]));

        let root = t.state(&h, None, 0.0).unwrap();
        let still = integrate_tree(&t, &h, &make_gradient_flow(&h), &root, 0.1, 10).unwrap();
        assert!(still.rows.iter().all(|r| r.x == root.x && r.at_root));
    }

    #[test]
    fn node_crossing_continues_on_parent_arc() {
        let h = h_shifted();
        let chain = MonotoneTree::new(
            vec![
                node("root", &[0.0, 0.0]),
                node("a", &[1.0, 0.0]),
                node("b", &[2.0, 1.0]),
            ],
            vec![
                seg("ra", "root", "a", &[0.0, 0.0], &[1.0, 0.0]),
                seg("ab", "a", "b", &[1.0, 0.0], &[2.0, 1.0]),
            ],
            &h,
        )
        .unwrap();
        let ab = chain.arc_index("ab").unwrap();
        let ra = chain.arc_index("ra").unwrap();
        let st = chain.state(&h, Some(ab), 1.0).unwrap();
        let traj = integrate_tree(&chain, &h, &make_gradient_flow(&h), &st, 0.02, 200).unwrap();
        let arcs: Vec<Option<usize>> = traj.rows.iter().map(|r| r.arc).collect();
        let first_ra = arcs.iter().position(|a| *a == Some(ra)).unwrap();
        assert!(arcs[..first_ra].iter().all(|a| *a == Some(ab)));
        assert!(traj.rows.windows(2).all(|w| w[1].h <= w[0].h));
        // x stays on the polyline: rows on "ra" have y = 0
        assert!(traj.rows.iter().filter(|r| r.arc == Some(ra)).all(|r| r.x[1] == 0.0));
        assert!(traj.rows.last().unwrap().at_root);
    }

    #[test]
    fn bezier_reverse_and_chart_agree() {
        let c = ArcCurve::QuadraticBezier {
            p0: v(&[0.0, 0.0]),
            p1: v(&[1.0, 2.0]),
            p2: v(&[3.0, 1.0]),
        };
        let chart = c.to_chart().unwrap();
        for s in [0.0, 0.25, 0.6, 1.0] {
            let p = Vector::from_element(1, s);
            assert_relative_eq!(chart.embed(&p).unwrap(), c.point(s), epsilon = 1e-14);
            assert_relative_eq!(
                chart.jac(&p).unwrap().column(0).into_owned(),
                c.derivative(s),
                epsilon = 1e-14
            );
            assert_relative_eq!(c.reversed().point(1.0 - s), c.point(s), epsilon = 1e-14);
        }
    }
}
