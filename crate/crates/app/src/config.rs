//! Flat `section.key = value` run configuration.
//!
//! Grammar, one statement per line:
//!
//! ```text
//! line    := blank | comment | header | assign
//! comment := '#' anything
//! header  := '[' ident ']'            sets the prefix for following keys
//! assign  := key '=' value [comment]
//! key     := ident | ident '.' ident   a dotted key ignores the header
//! value   := number | 'true' | 'false' | '"' chars '"' | bare word
//! ```
//!
//! Every key is checked against a fixed schema. Keys unknown to the schema
//! or not used by the chosen experiment, duplicates, missing required keys
//! and type mismatches are errors that carry the line number.
//!
//! Dispatch note: `hydro-run` with `physics.eps = 0` integrates the
//! Vlasov-Euler system; `eps > 0` integrates Vlasov-Navier-Stokes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseDiagram,
    Interface,
    KineticRun,
    HydroRun,
    InsRun,
    Transport,
    Validate,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::PhaseDiagram,
        Experiment::Interface,
        Experiment::KineticRun,
        Experiment::HydroRun,
        Experiment::InsRun,
        Experiment::Transport,
        Experiment::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::Interface => "interface",
            Experiment::KineticRun => "kinetic-run",
            Experiment::HydroRun => "hydro-run",
            Experiment::InsRun => "ins-run",
            Experiment::Transport => "transport",
            Experiment::Validate => "validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
    /// One of a fixed set of words.
    Choice(&'static [&'static str]),
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Int => "an integer".into(),
            Kind::Float => "a number".into(),
            Kind::Bool => "a boolean".into(),
            Kind::Str => "a string".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
        }
    }
}

#[derive(Clone, Copy)]
enum Need {
    Required,
    Optional,
    Default(Default_),
}

#[derive(Clone, Copy)]
enum Default_ {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(&'static str),
}

impl Default_ {
    fn value(self) -> Value {
        match self {
            Default_::Int(i) => Value::Int(i),
            Default_::Float(x) => Value::Float(x),
            Default_::Bool(b) => Value::Bool(b),
            Default_::Str(s) => Value::Str(s.to_string()),
        }
    }
}

struct Field {
    key: &'static str,
    kind: Kind,
    need: Need,
    used_by: &'static [Experiment],
}

use Experiment::*;

const ALL: &[Experiment] = &Experiment::ALL;
const SPATIAL: &[Experiment] = &[PhaseDiagram, Interface, KineticRun, HydroRun, InsRun];
const DYNAMIC: &[Experiment] = &[KineticRun, HydroRun, InsRun];
const WITH_T: &[Experiment] = &[Interface, KineticRun, HydroRun, InsRun, Transport];
const VELOCITY: &[Experiment] = &[KineticRun, Transport];
const SHAPES: &[&str] = &["tophat", "smooth_bump", "gaussian", "none"];

const fn f(key: &'static str, kind: Kind, need: Need, used_by: &'static [Experiment]) -> Field {
    Field { key, kind, need, used_by }
}

const SCHEMA: &[Field] = &[
    f("experiment", Kind::Str, Need::Required, ALL),
    f("grid.extent", Kind::Float, Need::Default(Default_::Float(16.0)), SPATIAL),
    f("grid.cells", Kind::Int, Need::Default(Default_::Int(64)), SPATIAL),
    f("grid.extent_y", Kind::Float, Need::Optional, DYNAMIC),
    f("grid.cells_y", Kind::Int, Need::Optional, DYNAMIC),
    f("grid.dim_v", Kind::Int, Need::Default(Default_::Int(1)), VELOCITY),
    f("grid.v_max", Kind::Float, Need::Default(Default_::Float(6.0)), VELOCITY),
    f("grid.nodes", Kind::Int, Need::Default(Default_::Int(64)), VELOCITY),
    f("potential.shape", Kind::Choice(SHAPES), Need::Default(Default_::Str("tophat")), SPATIAL),
    f("potential.radius", Kind::Float, Need::Default(Default_::Float(1.0)), SPATIAL),
    f("potential.amplitude", Kind::Float, Need::Required, SPATIAL),
    f("physics.T", Kind::Float, Need::Required, WITH_T),
    f("physics.rho", Kind::Float, Need::Required, &[PhaseDiagram, Interface, KineticRun, HydroRun, InsRun, Transport]),
    f("physics.phi0", Kind::Float, Need::Default(Default_::Float(0.0)), DYNAMIC),
    f("physics.u0", Kind::Float, Need::Default(Default_::Float(0.0)), DYNAMIC),
    f("physics.u_dir", Kind::Choice(&["x", "y"]), Need::Default(Default_::Str("x")), &[KineticRun, HydroRun]),
    f("physics.mode", Kind::Int, Need::Default(Default_::Int(1)), DYNAMIC),
    f("physics.mode_y", Kind::Int, Need::Default(Default_::Int(0)), DYNAMIC),
    f("physics.noise", Kind::Float, Need::Default(Default_::Float(0.0)), DYNAMIC),
    f("physics.eps", Kind::Float, Need::Default(Default_::Float(1.0)), &[KineticRun, HydroRun]),
    f("physics.nu_collision", Kind::Float, Need::Default(Default_::Float(1.0)), &[KineticRun, HydroRun, InsRun, Transport]),
    f("physics.scaling", Kind::Choice(&["euler", "parabolic"]), Need::Default(Default_::Str("euler")), &[KineticRun]),
    f("physics.dof", Kind::Int, Need::Optional, &[HydroRun]),
    f("coefficients.nu", Kind::Float, Need::Optional, &[HydroRun, InsRun]),
    f("coefficients.kappa", Kind::Float, Need::Optional, &[HydroRun, InsRun]),
    f("coefficients.d", Kind::Float, Need::Optional, &[HydroRun, InsRun]),
    f("solver.dt", Kind::Float, Need::Optional, DYNAMIC),
    f("solver.cfl", Kind::Float, Need::Default(Default_::Float(0.5)), DYNAMIC),
    f("solver.t_end", Kind::Float, Need::Required, DYNAMIC),
    f("solver.stride", Kind::Int, Need::Default(Default_::Int(10)), DYNAMIC),
    f("solver.snapshot_stride", Kind::Int, Need::Default(Default_::Int(0)), DYNAMIC),
    f("solver.seed", Kind::Int, Need::Default(Default_::Int(0)), ALL),
    f("solver.scheme", Kind::Choice(&["pfc", "upwind", "spectral"]), Need::Default(Default_::Str("pfc")), &[KineticRun]),
    f("solver.hydro_scheme", Kind::Choice(&["finite_volume", "spectral_rk4"]), Need::Default(Default_::Str("finite_volume")), &[HydroRun]),
    f("solver.limiter", Kind::Choice(&["minmod", "van_leer", "mc"]), Need::Default(Default_::Str("mc")), &[HydroRun]),
    f("phase.t_min", Kind::Float, Need::Default(Default_::Float(0.05)), &[PhaseDiagram]),
    f("phase.t_max", Kind::Float, Need::Default(Default_::Float(1.5)), &[PhaseDiagram]),
    f("phase.points", Kind::Int, Need::Default(Default_::Int(60)), &[PhaseDiagram]),
    f("interface.seed", Kind::Choice(&["tanh", "step"]), Need::Default(Default_::Str("tanh")), &[Interface]),
    f("interface.anderson", Kind::Int, Need::Default(Default_::Int(0)), &[Interface]),
    f("interface.tolerance", Kind::Float, Need::Default(Default_::Float(1e-12)), &[Interface]),
    f("interface.max_iterations", Kind::Int, Need::Default(Default_::Int(50000)), &[Interface]),
    f("ins.variant", Kind::Choice(&["reduced", "full"]), Need::Default(Default_::Str("reduced")), &[InsRun]),
    f("ins.dealias", Kind::Bool, Need::Default(Default_::Bool(true)), &[InsRun]),
    f("transport.model", Kind::Choice(&["bgk", "exact", "both"]), Need::Default(Default_::Str("bgk")), &[Transport]),
    f("transport.cross_section", Kind::Choice(&["hard_spheres", "isotropic"]), Need::Default(Default_::Str("hard_spheres")), &[Transport]),
    f("validate.criteria", Kind::Str, Need::Default(Default_::Str("all")), &[Validate]),
    f("output.dir", Kind::Str, Need::Default(Default_::Str("out")), ALL),
    f("output.snapshots", Kind::Bool, Need::Default(Default_::Bool(true)), ALL),
];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            key: key.map(str::to_string),
            message: message.into(),
        }
    }
}

/// A validated configuration: the chosen experiment and every key it uses,
/// with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    values: BTreeMap<&'static str, Value>,
    /// Keys taken from defaults rather than the text.
    defaulted: Vec<&'static str>,
}

fn parse_value(raw: &str) -> Value {
    if let Some(inner) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        return Value::Str(inner.to_string());
    }
    match raw {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Value::Int(i);
    }
    if let Ok(x) = raw.parse::<f64>() {
        return Value::Float(x);
    }
    Value::Str(raw.to_string())
}

fn coerce(value: Value, kind: Kind) -> Option<Value> {
    match (kind, value) {
        (Kind::Int, v @ Value::Int(_)) => Some(v),
        (Kind::Float, Value::Int(i)) => Some(Value::Float(i as f64)),
        (Kind::Float, v @ Value::Float(_)) => Some(v),
        (Kind::Bool, v @ Value::Bool(_)) => Some(v),
        (Kind::Str, v @ Value::Str(_)) => Some(v),
        (Kind::Choice(c), Value::Str(s)) if c.contains(&s.as_str()) => Some(Value::Str(s)),
        _ => None,
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut section: Option<String> = None;
    let mut raw: BTreeMap<&'static str, (Value, usize)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let no = idx + 1;
        let body = strip_comment(line).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            if !is_ident(name) {
                return Err(ConfigError::at(no, None, format!("invalid section header '[{name}]'")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::at(no, None, format!("expected 'key = value', found '{body}'")))?;
        let key = key.trim();
        let value = value.trim();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.len() > 2 || !parts.iter().all(|p| is_ident(p)) {
            return Err(ConfigError::at(no, Some(key), format!("invalid key '{key}'")));
        }
        let full = match (&section, parts.len()) {
            (Some(s), 1) if key != "experiment" => format!("{s}.{key}"),
            _ => key.to_string(),
        };
        if value.is_empty() {
            return Err(ConfigError::at(no, Some(&full), format!("missing value for '{full}'")));
        }
        let field = SCHEMA
            .iter()
            .find(|f| f.key == full)
            .ok_or_else(|| ConfigError::at(no, Some(&full), format!("unknown key '{full}'")))?;
        let parsed = coerce(parse_value(value), field.kind).ok_or_else(|| {
            ConfigError::at(no, Some(&full), format!("'{full}' must be {}, got '{value}'", field.kind.describe()))
        })?;
        if let Some((_, first)) = raw.get(field.key) {
            return Err(ConfigError::at(no, Some(&full), format!("duplicate key '{full}' (first set on line {first})")));
        }
        raw.insert(field.key, (parsed, no));
    }

    let experiment = match raw.get("experiment") {
        Some((Value::Str(s), no)) => s.parse::<Experiment>().map_err(|e| ConfigError::at(*no, Some("experiment"), e))?,
        _ => {
            return Err(ConfigError {
                line: None,
                key: Some("experiment".into()),
                message: "missing required key 'experiment'".into(),
            })
        }
    };

    let mut values = BTreeMap::new();
    let mut defaulted = Vec::new();
    for field in SCHEMA {
        let used = field.used_by.contains(&experiment);
        match raw.remove(field.key) {
            Some((_, no)) if !used => {
                return Err(ConfigError::at(
                    no,
                    Some(field.key),
                    format!("key '{}' is not used by experiment '{experiment}'", field.key),
                ));
            }
            Some((v, _)) => {
                values.insert(field.key, v);
            }
            None if !used => {}
            None => match field.need {
                Need::Required => {
                    return Err(ConfigError {
                        line: None,
                        key: Some(field.key.into()),
                        message: format!("missing required key '{}' for experiment '{experiment}'", field.key),
                    })
                }
                Need::Optional => {}
                Need::Default(d) => {
                    values.insert(field.key, d.value());
                    defaulted.push(field.key);
                }
            },
        }
    }
    let cfg = RunConfig {
        experiment,
        values,
        defaulted,
    };
    cfg.check_ranges()?;
    Ok(cfg)
}

impl RunConfig {
    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.opt_f64(key).unwrap_or_else(|| panic!("config key '{key}' has no number"))
    }

    pub fn opt_f64(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Int(i)) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        self.opt_usize(key).unwrap_or_else(|| panic!("config key '{key}' has no integer"))
    }

    pub fn opt_usize(&self, key: &str) -> Option<usize> {
        match self.get(key) {
            Some(Value::Int(i)) => Some(*i as usize),
            _ => None,
        }
    }

    pub fn u64(&self, key: &str) -> u64 {
        match self.get(key) {
            Some(Value::Int(i)) => *i as u64,
            _ => panic!("config key '{key}' has no integer"),
        }
    }

    pub fn bool(&self, key: &str) -> bool {
        match self.get(key) {
            Some(Value::Bool(b)) => *b,
            _ => panic!("config key '{key}' has no boolean"),
        }
    }

    pub fn str(&self, key: &str) -> &str {
        match self.get(key) {
            Some(Value::Str(s)) => s,
            _ => panic!("config key '{key}' has no string"),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Replaces a value after parsing (command-line overrides).
    pub fn set(&mut self, key: &'static str, value: Value) -> Result<(), ConfigError> {
        let field = SCHEMA.iter().find(|f| f.key == key).ok_or_else(|| ConfigError {
            line: None,
            key: Some(key.into()),
            message: format!("unknown key '{key}'"),
        })?;
        let v = coerce(value, field.kind).ok_or_else(|| ConfigError {
            line: None,
            key: Some(key.into()),
            message: format!("'{key}' must be {}", field.kind.describe()),
        })?;
        self.values.insert(field.key, v);
        self.defaulted.retain(|k| *k != key);
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<&'static str, Value> {
        &self.values
    }

    /// Canonical text of the configuration: one `key = value` line per key
    /// in schema order, defaults marked.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for field in SCHEMA {
            if let Some(v) = self.values.get(field.key) {
                out.push_str(&format!("{} = {v}", field.key));
                if self.defaulted.contains(&field.key) {
                    out.push_str("  # default");
                }
                out.push('\n');
            }
        }
        out
    }

    fn range_error(&self, key: &str, message: &str) -> ConfigError {
        ConfigError {
            line: None,
            key: Some(key.into()),
            message: format!("'{key}' {message}"),
        }
    }

    fn check_ranges(&self) -> Result<(), ConfigError> {
        let positive = [
            "grid.extent",
            "grid.extent_y",
            "grid.v_max",
            "potential.radius",
            "physics.T",
            "physics.rho",
            "physics.nu_collision",
            "solver.dt",
            "solver.cfl",
            "solver.t_end",
            "phase.t_min",
            "phase.t_max",
            "interface.tolerance",
            "coefficients.nu",
            "coefficients.kappa",
            "coefficients.d",
        ];
        for key in positive {
            if let Some(x) = self.opt_f64(key) {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(self.range_error(key, &format!("must be positive, got {x}")));
                }
            }
        }
        for key in ["grid.cells", "grid.cells_y", "grid.nodes", "grid.dim_v", "solver.stride", "phase.points", "interface.max_iterations", "physics.dof"] {
            if let Some(Value::Int(i)) = self.get(key) {
                if *i < 1 {
                    return Err(self.range_error(key, &format!("must be at least 1, got {i}")));
                }
            }
        }
        for key in ["solver.snapshot_stride", "interface.anderson", "solver.seed", "physics.mode", "physics.mode_y"] {
            if let Some(Value::Int(i)) = self.get(key) {
                if *i < 0 {
                    return Err(self.range_error(key, &format!("must be nonnegative, got {i}")));
                }
            }
        }
        if let Some(x) = self.opt_f64("physics.eps") {
            let (lower_ok, range) = if self.experiment == Experiment::HydroRun {
                (x >= 0.0, "[0, 1]")
            } else {
                (x > 0.0, "(0, 1]")
            };
            if !lower_ok || x > 1.0 {
                return Err(self.range_error("physics.eps", &format!("must lie in {range}, got {x}")));
            }
        }
        if let Some(x) = self.opt_f64("potential.amplitude") {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(self.range_error("potential.amplitude", &format!("must be nonnegative, got {x}")));
            }
        }
        if self.contains("grid.cells_y") && !self.contains("grid.extent_y") {
            return Err(self.range_error("grid.cells_y", "needs grid.extent_y"));
        }
        if let (Some(a), Some(b)) = (self.opt_f64("phase.t_min"), self.opt_f64("phase.t_max")) {
            if a >= b {
                return Err(self.range_error("phase.t_min", "must be below phase.t_max"));
            }
        }
        Ok(())
    }
}
