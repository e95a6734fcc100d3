//! JSON scenario and counterexample configurations.
//!
//! Matrices are written as lists of rows, vectors as plain lists.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub type Row = Vec<f64>;

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LyapunovConfig {
    /// `½ (x - c)ᵀ G (x - c)`
    Quadratic {
        matrix: Vec<Row>,
        center: Row,
    },
    Kl {
        x_eq: Row,
    },
    KlShifted {
        x_eq: Row,
    },
    Burg {
        x_eq: Row,
    },
    /// Power-family f-divergence with exponent `alpha`.
    CustomF {
        alpha: f64,
        x_eq: Row,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartConfig {
    Line {
        origin: Row,
        direction: Row,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    Affine {
        origin: Row,
        /// One entry per tangent direction.
        directions: Vec<Row>,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    /// `Σ_k c_k p^k`
    Polynomial {
        coeffs: Vec<Row>,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    Parabola {
        offset: Row,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    Paraboloid {
        offset: Row,
        curvature: f64,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
    ConvexCombination {
        a: Row,
        b: Row,
    },
    Circle {
        center: Row,
        radius: f64,
        #[serde(default)]
        domain: Option<Vec<[f64; 2]>>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub position: Row,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArcCurveConfig {
    Segment,
    QuadraticBezier { control: Row },
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArcConfig {
    pub id: String,
    pub from: String,
    pub to: String,
    pub curve: ArcCurveConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub nodes: Vec<NodeConfig>,
    pub arcs: Vec<ArcConfig>,
    #[serde(default = "default_grid")]
    pub validation_grid: usize,
}

fn default_grid() -> usize {
    101
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Chart(ChartConfig),
    Tree(TreeConfig),
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    /// `W(x) = K (x - x_ref)`
    Linear {
        matrix: Vec<Row>,
        x_ref: Row,
    },
    /// `W = -∇H`
    GradientFlow,
    /// `W(x) = K x` with `K x_eq = 0`
    Markov {
        rates: Vec<Row>,
        x_eq: Row,
    },
    Zero,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyConfig {
    #[default]
    Thermodynamic,
    Curve,
    Orthogonal,
    OrthogonalEuclidean,
    CustomMatrix(Vec<Row>),
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TreeStateConfig {
    /// Arc id, or `None` for the root.
    #[serde(default)]
    pub arc: Option<String>,
    #[serde(default)]
    pub s: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default)]
    pub p0: Option<Row>,
    #[serde(default)]
    pub tree_state: Option<TreeStateConfig>,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, JsonSchema, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_audit")]
    pub audit: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_trajectory() -> String {
    "trajectory".into()
}

fn default_audit() -> String {
    "audit.json".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: default_trajectory(),
            audit: default_audit(),
            formats: default_formats(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub lyapunov: LyapunovConfig,
    pub geometry: GeometryConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub projector_policy: PolicyConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum NamedProjector {
    Orthogonal,
    Euclidean,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(untagged)]
pub enum ProjectorChoice {
    Named(NamedProjector),
    Matrix(Vec<Row>),
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RankOneConfig {
    pub projector: ProjectorChoice,
    /// Spanning vectors of the image, for named projectors.
    #[serde(default)]
    pub subspace: Option<Vec<Row>>,
    #[serde(default)]
    pub y: Option<Row>,
    pub a: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    pub chart: ChartConfig,
    pub p: Row,
    pub tilts: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    10_000
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default)]
    pub seed: u64,
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub rank_one: Option<RankOneConfig>,
    #[serde(default)]
    pub uniqueness: Option<UniquenessConfig>,
    #[serde(default)]
    pub output: Option<CounterexampleOutput>,
}

#[derive(Clone, Debug, Deserialize, Serialize, JsonSchema, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleOutput {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_report")]
    pub report: String,
}

fn default_report() -> String {
    "counterexample.json".into()
}

/// JSON schemas for the two config files, as `(file name, schema)`.
pub fn schemas() -> [(&'static str, schemars::Schema); 2] {
    [
        ("scenario.schema.json", schemars::schema_for!(ScenarioConfig)),
        (
            "counterexample.schema.json",
            schemars::schema_for!(CounterexampleConfig),
        ),
    ]
}
