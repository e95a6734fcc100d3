//! Subcommand implementations. Each returns an [`Outcome`] carrying the exit
//! code and the JSON document printed on stdout.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dissipath_core::counterexamples::{rank_one_demo, uniqueness_sweep, RankOneDemo, UniquenessReport};
use dissipath_core::dynamics::{audit, integrate, AuditReport, ReducedSystem};
use dissipath_core::projector::{euclidean_projector, orthogonal_projector};
use dissipath_core::tree::{audit_tree, integrate_tree};
use dissipath_core::{catalog, Error};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::build::{self, Geometry, Reason};
use crate::config::{CounterexampleConfig, Format, NamedProjector, ProjectorChoice, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Ok = 0,
    Validation = 2,
    Parse = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct Outcome {
    pub exit: Exit,
    pub report: Value,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Self { exit: Exit::Ok, report }
    }

    fn invalid(reasons: Vec<Reason>) -> Self {
        Self {
            exit: Exit::Validation,
            report: json!({ "valid": false, "reasons": reasons }),
        }
    }

    fn parse(message: String) -> Self {
        Self {
            exit: Exit::Parse,
            report: json!({ "error": "parse", "message": message }),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            exit: Exit::Io,
            report: json!({ "error": "io", "path": path.display().to_string(), "message": e.to_string() }),
        }
    }
}

/// Reads and parses a config. JSON syntax errors are parse failures; well-formed
/// JSON that does not fit the schema is a validation failure.
fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Outcome> {
    let text = fs::read_to_string(path).map_err(|e| Outcome::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Outcome::invalid(vec![Reason::new("schema", e.to_string())]),
        _ => Outcome::parse(e.to_string()),
    })
}

pub fn validate(path: &Path) -> Outcome {
    let cfg: ScenarioConfig = match load(path) {
        Ok(c) => c,
        Err(o) => return o,
    };
    match build::scenario(&cfg) {
        Ok(_) => Outcome::ok(json!({ "valid": true, "reasons": [] })),
        Err(reasons) => Outcome::invalid(reasons),
    }
}

/// Runs one scenario, writing outputs below `out` (or the config's
/// `output.dir`, or the current directory).
pub fn run(path: &Path, out: Option<&Path>) -> Outcome {
    let cfg: ScenarioConfig = match load(path) {
        Ok(c) => c,
        Err(o) => return o,
    };
    let scenario = match build::scenario(&cfg) {
        Ok(s) => s,
        Err(reasons) => return Outcome::invalid(reasons),
    };
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = fs::create_dir_all(&dir) {
        return Outcome::io(&dir, e);
    }
    let n = scenario.h.dim();
    let (csv, report) = match scenario.geometry {
        Geometry::Chart { chart, policy, p0 } => {
            let m = chart.m();
            let system = match ReducedSystem::new(scenario.h, chart, scenario.field, policy) {
                Ok(s) => s,
                Err(e) => return Outcome::invalid(vec![e.into()]),
            };
            let traj = match integrate(&system, &p0, scenario.dt, scenario.steps) {
                Ok(t) => t,
                Err(e) => return Outcome::invalid(vec![e.into()]),
            };
            let mut csv = Vec::new();
            traj.write_csv(m, n, &mut csv).expect("writing to memory");
            (csv, audit(&traj))
        }
        Geometry::Tree { tree, start } => {
            let traj = match integrate_tree(&tree, &scenario.h, &scenario.field, &start, scenario.dt, scenario.steps) {
                Ok(t) => t,
                Err(e) => return Outcome::invalid(vec![e.into()]),
            };
            let mut csv = Vec::new();
            traj.write_csv(&tree, n, &mut csv).expect("writing to memory");
            (csv, audit_tree(&traj))
        }
    };
    if report.status != "ok" {
        log::warn!("{}: integration stopped early ({})", path.display(), report.status);
    }
    let csv = String::from_utf8(csv).expect("CSV is ASCII");
    let mut written = Vec::new();
    for format in &cfg.output.formats {
        let (file, body) = match format {
            Format::Csv => (dir.join(format!("{}.csv", cfg.output.trajectory)), csv.clone()),
            Format::Json => (
                dir.join(format!("{}.json", cfg.output.trajectory)),
                serde_json::to_string_pretty(&csv_to_json(&csv)).expect("serializable"),
            ),
        };
        if let Err(e) = fs::write(&file, body) {
            return Outcome::io(&file, e);
        }
        written.push(file.display().to_string());
    }
    let audit_path = dir.join(&cfg.output.audit);
    if let Err(e) = write_json(&audit_path, &report) {
        return Outcome::io(&audit_path, e);
    }
    written.push(audit_path.display().to_string());
    Outcome::ok(json!({ "audit": audit_json(&report), "outputs": written }))
}

fn audit_json(report: &AuditReport) -> Value {
    serde_json::to_value(report).expect("serializable")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

/// `{"columns": [...], "rows": [[...], ...]}` with numeric cells as numbers.
fn csv_to_json(csv: &str) -> Value {
    let mut lines = csv.lines();
    let columns: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Vec<Value>> = lines
        .map(|line| {
            line.split(',')
                .map(|cell| match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => json!(v),
                    _ => json!(cell),
                })
                .collect()
        })
        .collect();
    json!({ "columns": columns, "rows": rows })
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum RankOneOutcome {
    Witness(RankOneDemo),
    NoWitness,
}

pub fn counterexample(path: &Path) -> Outcome {
    let cfg: CounterexampleConfig = match load(path) {
        Ok(c) => c,
        Err(o) => return o,
    };
    match counterexample_report(&cfg) {
        Ok(report) => {
            if let Some(out) = &cfg.output {
                let dir = PathBuf::from(out.dir.as_deref().unwrap_or("."));
                let file = dir.join(&out.report);
                if let Err(e) = fs::create_dir_all(&dir).and_then(|_| write_json(&file, &report)) {
                    return Outcome::io(&file, e);
                }
            }
            Outcome::ok(report)
        }
        Err(reasons) => Outcome::invalid(reasons),
    }
}

fn counterexample_report(cfg: &CounterexampleConfig) -> Result<Value, Vec<Reason>> {
    let h = build::lyapunov(&cfg.lyapunov).map_err(|r| vec![r])?;
    let mut report = json!({ "seed": cfg.seed, "lyapunov": h.id() });
    if let Some(r1) = &cfg.rank_one {
        let proj = match &r1.projector {
            ProjectorChoice::Matrix(rows) => build::matrix(rows, "rank_one.projector").map_err(|r| vec![r])?,
            ProjectorChoice::Named(kind) => {
                let Some(span) = &r1.subspace else {
                    return Err(vec![Reason::new(
                        "invalid-input",
                        "named projectors need rank_one.subspace",
                    )]);
                };
                let basis = build::matrix(span, "rank_one.subspace")
                    .map_err(|r| vec![r])?
                    .transpose();
                let at = h.reference_point().clone();
                match kind {
                    NamedProjector::Orthogonal => orthogonal_projector(&h, &at, &basis).map(|p| p.matrix),
                    NamedProjector::Euclidean => euclidean_projector(&basis),
                }
                .map_err(|e| vec![e.into()])?
            }
        };
        let y = r1.y.as_ref().map(build::vector);
        let outcome = match rank_one_demo(&h, &proj, y.as_ref(), r1.a) {
            Ok(demo) => RankOneOutcome::Witness(demo),
            Err(Error::NoWitness) => RankOneOutcome::NoWitness,
            Err(e) => return Err(vec![e.into()]),
        };
        report["rank_one"] = serde_json::to_value(outcome).expect("serializable");
    }
    if let Some(u) = &cfg.uniqueness {
        let chart = build::chart(&u.chart).map_err(|r| vec![r])?;
        let sweep: UniquenessReport = uniqueness_sweep(&h, &chart, &build::vector(&u.p), &u.tilts, u.trials, cfg.seed)
            .map_err(|e| vec![Reason::from(e)])?;
        report["uniqueness"] = serde_json::to_value(sweep).expect("serializable");
    }
    Ok(report)
}

pub fn catalog_listing() -> Value {
    json!({
        "lyapunov": catalog::LYAPUNOV,
        "charts": catalog::CHARTS,
        "fields": catalog::FIELDS,
        "tree_arcs": catalog::TREE_ARCS,
        "projector_policies": catalog::POLICIES,
    })
}

/// Writes every schema into `out`, or prints them keyed by file name.
pub fn schema(out: Option<&Path>) -> Exit {
    let schemas = crate::config::schemas();
    let Some(dir) = out else {
        let all: serde_json::Map<String, Value> = schemas
            .into_iter()
            .map(|(name, s)| (name.to_string(), s.to_value()))
            .collect();
        println!("{}", serde_json::to_string_pretty(&all).expect("serializable"));
        return Exit::Ok;
    };
    for (name, s) in schemas {
        let file = dir.join(name);
        if let Err(e) = fs::create_dir_all(dir).and_then(|_| write_json(&file, &s)) {
            eprintln!("{}: {e}", file.display());
            return Exit::Io;
        }
    }
    Exit::Ok
}
