//! JSON scenario files.
//!
//! ```json
//! {
//!   "grid":   { "n1": 4, "n2": 4, "w1": 1.0, "w2": 1.0 },
//!   "system": { "total_bw_hz": 5e6, "xi_bits": 0.1, "seed": 2024, "trials": 100 },
//!   "users":  [ { "alpha_ur": 1e-11, "alpha_ub": 1e-13, "alpha_rb": 1e-10,
//!                 "sigma2_relay_dbm": -120, "sigma2_bs_dbm": -120,
//!                 "p_user_max_w": 0.1, "p_relay_max_w": 0.1, "rate_min_bps": 5e5 } ],
//!   "sweep":  { "variable": "num_ports", "values": [1, 2, 3, 4],
//!               "schemes": ["proposed", "tas", "avg_bandwidth", "random_power"] }
//! }
//! ```
//!
//! Optional keys: `users[i].p_user_min_w` and `users[i].p_relay_min_w`
//! (both or neither; derived from the maxima otherwise), `sweep.schemes`
//! (all four by default), `correlation` (explicit port correlation matrix,
//! rows of numbers) and `engine` (`target_abs_error`, `max_samples`, `seed`
//! of the MVN integrator). Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::allocator::UserConfig;
use crate::channel::{CorrelationMatrix, PortGrid};
use crate::error::Error;
use crate::harness::{dbm_to_watts, BenchScheme, Scenario, SweepSpec, SweepVariable};
use crate::mvncdf::MvnConfig;
use crate::outage::LinkBudget;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    grid: GridSection,
    system: SystemSection,
    users: Vec<UserSection>,
    #[serde(default)]
    sweep: Option<SweepSection>,
    #[serde(default)]
    correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    engine: Option<EngineSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n1: usize,
    n2: usize,
    w1: f64,
    w2: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    total_bw_hz: f64,
    xi_bits: f64,
    seed: u64,
    trials: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserSection {
    alpha_ur: f64,
    alpha_ub: f64,
    alpha_rb: f64,
    sigma2_relay_dbm: f64,
    sigma2_bs_dbm: f64,
    p_user_max_w: f64,
    p_relay_max_w: f64,
    rate_min_bps: f64,
    #[serde(default)]
    p_user_min_w: Option<f64>,
    #[serde(default)]
    p_relay_min_w: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum VariableName {
    NumUsers,
    NumPorts,
    RelayPowerMax,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    Proposed,
    Tas,
    AvgBandwidth,
    RandomPower,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: VariableName,
    values: Vec<f64>,
    #[serde(default)]
    schemes: Option<Vec<SchemeName>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineSection {
    #[serde(default)]
    target_abs_error: Option<f64>,
    #[serde(default)]
    max_samples: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Why a scenario file could not be turned into a [`Scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    Io { path: String, message: String },
    /// Malformed JSON.
    Syntax { offset: usize, line: usize, column: usize, message: String },
    /// Well-formed JSON that does not fit the schema.
    Schema { path: String, message: String },
    /// A value outside its physical range.
    Invalid { path: String, message: String },
    /// A model-level failure while building the scenario.
    Model { path: String, source: Error },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            ScenarioError::Syntax {
                offset,
                line,
                column,
                message,
            } => write!(f, "malformed JSON at byte offset {offset} (line {line}, column {column}): {message}"),
            ScenarioError::Schema { path, message } => write!(f, "at `{path}`: {message}"),
            ScenarioError::Invalid { path, message } => write!(f, "at `{path}`: {message}"),
            ScenarioError::Model { path, source } => write!(f, "at `{path}`: {source}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

/// Parsed scenario plus its optional sweep.
#[derive(Debug, Clone)]
pub struct ScenarioDocument {
    pub scenario: Scenario,
    pub sweep: Option<SweepSpec>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioDocument, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let root: FileRoot = match serde_path_to_error::deserialize(&mut de) {
        Ok(root) => root,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            return Err(classify(text, path, inner));
        }
    };
    de.end().map_err(|e| classify(text, String::new(), e))?;
    build(root)
}

fn classify(text: &str, path: String, e: serde_json::Error) -> ScenarioError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => ScenarioError::Schema {
            path,
            message: e.to_string(),
        },
        _ => ScenarioError::Syntax {
            offset: byte_offset(text, e.line(), e.column()),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be nonnegative and finite, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be finite, got {v}")))
    }
}

fn model(path: impl Into<String>) -> impl FnOnce(Error) -> ScenarioError {
    let path = path.into();
    move |source| ScenarioError::Model { path, source }
}

fn build(root: FileRoot) -> Result<ScenarioDocument, ScenarioError> {
    let g = &root.grid;
    if g.n1 == 0 || g.n2 == 0 {
        return Err(invalid("grid", "port counts must be at least 1"));
    }
    let grid = PortGrid::new(g.n1, g.n2, nonnegative("grid.w1", g.w1)?, nonnegative("grid.w2", g.w2)?)
        .map_err(model("grid"))?;

    let s = &root.system;
    let total_bw = positive("system.total_bw_hz", s.total_bw_hz)?;
    let xi = positive("system.xi_bits", s.xi_bits)?;
    if s.trials == 0 {
        return Err(invalid("system.trials", "must be at least 1"));
    }
    if root.users.is_empty() {
        return Err(invalid("users", "at least one user is required"));
    }

    let mut users = Vec::with_capacity(root.users.len());
    for (i, u) in root.users.iter().enumerate() {
        let p = |field: &str| format!("users[{i}].{field}");
        let lb = LinkBudget::new(
            positive(&p("alpha_ur"), u.alpha_ur)?,
            positive(&p("alpha_ub"), u.alpha_ub)?,
            positive(&p("alpha_rb"), u.alpha_rb)?,
            dbm_to_watts(finite(&p("sigma2_relay_dbm"), u.sigma2_relay_dbm)?),
            dbm_to_watts(finite(&p("sigma2_bs_dbm"), u.sigma2_bs_dbm)?),
        )
        .map_err(model(format!("users[{i}]")))?;
        let pu_max = positive(&p("p_user_max_w"), u.p_user_max_w)?;
        let pr_max = positive(&p("p_relay_max_w"), u.p_relay_max_w)?;
        let rate_min = nonnegative(&p("rate_min_bps"), u.rate_min_bps)?;
        let cfg = match (u.p_user_min_w, u.p_relay_min_w) {
            (None, None) => UserConfig::with_derived_min(lb, pu_max, pr_max, rate_min, xi),
            (Some(pu), Some(pr)) => UserConfig::new(
                lb,
                pu_max,
                pr_max,
                nonnegative(&p("p_user_min_w"), pu)?,
                nonnegative(&p("p_relay_min_w"), pr)?,
                rate_min,
            ),
            _ => {
                return Err(invalid(
                    format!("users[{i}]"),
                    "p_user_min_w and p_relay_min_w must be given together",
                ))
            }
        }
        .map_err(model(format!("users[{i}]")))?;
        users.push(cfg);
    }

    let mut scenario = Scenario::new(users, grid, total_bw, xi, s.seed, s.trials).map_err(model("system"))?;
    let mut mvn = MvnConfig::default().with_seed(s.seed);
    if let Some(e) = &root.engine {
        if let Some(t) = e.target_abs_error {
            mvn.target_abs_error = t;
        }
        if let Some(m) = e.max_samples {
            mvn.max_samples = m;
        }
        if let Some(seed) = e.seed {
            mvn.seed = seed;
        }
        mvn.validate().map_err(model("engine"))?;
    }
    scenario.mvn = mvn;

    if let Some(rows) = &root.correlation {
        let n = rows.len();
        if n != scenario.grid.num_ports() {
            return Err(invalid(
                "correlation",
                format!("expected {} rows for the port grid, got {n}", scenario.grid.num_ports()),
            ));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("correlation[{r}]"), format!("expected {n} entries, got {}", row.len())));
            }
        }
        let m = DMatrix::from_fn(n, n, |a, b| rows[a][b]);
        scenario.correlation = Some(CorrelationMatrix::from_entries(m).map_err(model("correlation"))?);
    }
    scenario.validate().map_err(model("system"))?;

    let sweep = match root.sweep {
        None => None,
        Some(sw) => {
            let variable = match sw.variable {
                VariableName::NumUsers => SweepVariable::NumUsers,
                VariableName::NumPorts => SweepVariable::NumPorts,
                VariableName::RelayPowerMax => SweepVariable::RelayPowerMax,
            };
            let schemes = match sw.schemes {
                None => BenchScheme::ALL.to_vec(),
                Some(list) => list
                    .into_iter()
                    .map(|s| match s {
                        SchemeName::Proposed => BenchScheme::Proposed,
                        SchemeName::Tas => BenchScheme::Tas,
                        SchemeName::AvgBandwidth => BenchScheme::AvgBandwidth,
                        SchemeName::RandomPower => BenchScheme::RandomPower,
                    })
                    .collect(),
            };
            Some(SweepSpec::new(variable, sw.values, schemes).map_err(model("sweep"))?)
        }
    };
    Ok(ScenarioDocument { scenario, sweep })
}
