//! Scenario files: a JSON document with one task and the sections it needs.
//!
//! Loading is two-staged. The text is parsed into a JSON tree (syntax errors
//! carry line and column), `key=value` overrides are applied to the tree, and
//! the tree is then converted to [`Scenario`] with unknown keys rejected. The
//! second stage, [`Scenario::validate`], compiles expressions and builds the
//! library objects; nothing is integrated before it succeeds.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use trajcomplete::gpw::GpwSpacetime;
use trajcomplete::hypotheses::Claim;
use trajcomplete::{BoundData, ChartManifold, ForceSystem, IntegratorConfig, PhiFunction};

use crate::catalog;
use crate::error::{CliError, Result};
use crate::expr::{Env, Expr, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Integrate,
    Certify,
    Envelope,
    GpwGeodesic,
    GpwMap,
    CompareLemma,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Integrate => "integrate",
            Task::Certify => "certify",
            Task::Envelope => "envelope",
            Task::GpwGeodesic => "gpw-geodesic",
            Task::GpwMap => "gpw-map",
            Task::CompareLemma => "compare-lemma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldSpec {
    Catalog(String),
    Metric(MetricSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub metric: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    /// Declared by the author; completeness verdicts require it.
    #[serde(default)]
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Catalog(String),
    Matrix(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSpec {
    pub potential: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<TensorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWaveSpec {
    pub f1: String,
    pub f2: String,
    pub f: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_wave: Option<PlaneWaveSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default = "zero_expr")]
    pub alpha0: String,
    #[serde(default = "zero_expr")]
    pub beta0: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
    /// Half-width of the time window; defaults to the integrator horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_times")]
    pub times: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

fn zero_expr() -> String {
    "0".into()
}

fn default_times() -> usize {
    21
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_ceiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl IntegratorSpec {
    pub fn resolve(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_step: self.max_step.unwrap_or(d.max_step),
            horizon: self.horizon.unwrap_or(d.horizon),
            speed_ceiling: self.speed_ceiling.unwrap_or(d.speed_ceiling),
            min_step_fraction: self.min_step_fraction.unwrap_or(d.min_step_fraction),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSpec {
    #[default]
    Forward,
    Backward,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    #[serde(default)]
    pub direction: DirectionSpec,
    /// Bracket the blow-up time with tightened tolerances.
    #[serde(default = "yes")]
    pub refine: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimName {
    TheoremG01,
    ForwardProp,
    BackwardProp,
    Corollary2,
    Corollary3,
}

impl ClaimName {
    fn claim(self) -> Claim {
        match self {
            ClaimName::TheoremG01 => Claim::TheoremG01,
            ClaimName::ForwardProp => Claim::ForwardProp,
            ClaimName::BackwardProp => Claim::BackwardProp,
            ClaimName::Corollary2 => Claim::Corollary2,
            ClaimName::Corollary3 => Claim::Corollary3,
        }
    }

    fn is_wave(self) -> bool {
        matches!(self, ClaimName::Corollary2 | ClaimName::Corollary3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub samples: usize,
    pub seed: u64,
    /// Initial positions satisfy `|x − center| ≤ radius`.
    pub radius: f64,
    /// Initial velocities satisfy `|ẋ| ≤ speed_radius`.
    pub speed_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Relative tolerance of the finite-difference check of `dv/dt`.
    #[serde(default = "default_fd_tol")]
    pub fd_tol: f64,
}

fn default_fd_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    pub x0: Vec<f64>,
    pub xdot0: Vec<f64>,
    #[serde(default)]
    pub u0: f64,
    pub udot0: f64,
    #[serde(default)]
    pub v0: f64,
    pub vdot0: f64,
    /// Also integrate the full geodesic equation and report the discrepancy.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub x_points: usize,
    pub xdot_lo: Vec<f64>,
    pub xdot_hi: Vec<f64>,
    pub xdot_points: usize,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub vdot0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSpec {
    /// `φ(s)`, positive and nondecreasing on `[a, ∞)`.
    pub phi: String,
    pub a: f64,
    pub v0: f64,
    pub t_max: f64,
    #[serde(default = "default_lemma_samples")]
    pub samples: usize,
    /// Closed form of the dominating solution in `t`, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

fn default_lemma_samples() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_report")]
    pub report: String,
}

fn default_csv() -> String {
    "trajectory.csv".into()
}

fn default_report() -> String {
    "report".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            csv: default_csv(),
            report: default_report(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<ForceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave: Option<WaveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims: Option<Vec<ClaimName>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

// ---------------------------------------------------------------- loading

/// Parses scenario text into a JSON tree.
pub fn parse_text(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Applies one `dotted.key=value` override. The value is read as JSON when it
/// parses as JSON and as a plain string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                map.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::validation(key, format!("'{part}' is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::validation(key, format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::validation(key, format!("'{part}' descends into a scalar"))),
        };
    }
    Ok(())
}

impl Scenario {
    pub fn from_value(value: Value) -> Result<Scenario> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            let mut key = if path == "." { String::new() } else { path };
            if let Some(field) = backticked(&message, "missing field `") {
                if !key.is_empty() {
                    key.push('.');
                }
                key.push_str(field);
            }
            CliError::validation(if key.is_empty() { "<root>".into() } else { key }, message)
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut value = parse_text(path, &text)?;
        if !value.is_object() {
            return Err(CliError::validation("<root>", "a scenario must be a JSON object"));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Scenario::from_value(value)
    }

    /// Canonical text form; loading it yields an equal scenario.
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

fn backticked<'a>(message: &'a str, prefix: &str) -> Option<&'a str> {
    let start = message.find(prefix)? + prefix.len();
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

// ---------------------------------------------------------------- validation

/// A scenario with every expression compiled and every library object built.
pub struct Model {
    pub scenario: Scenario,
    pub name: String,
    pub task: Task,
    pub manifold: ChartManifold,
    pub forces: Option<ForceSystem>,
    /// `V` independent of `t` and no tensor: mechanical energy is conserved.
    pub conservative: bool,
    pub wave: Option<GpwSpacetime>,
    pub bounds: Option<BoundData>,
    pub bounds_horizon: f64,
    pub anchor: Vec<f64>,
    pub claims: Vec<Claim>,
    pub cfg: IntegratorConfig,
    pub phi: Option<PhiFunction>,
    pub reference: Option<Expr>,
}

#[derive(Clone, Copy)]
struct Scope {
    dim: usize,
    t: bool,
    u: bool,
    s: bool,
}

impl Scope {
    #[allow(non_snake_case)]
    fn X(dim: usize) -> Scope {
        Scope { dim, t: false, u: false, s: false }
    }
}

fn compile(key: &str, src: &str, scope: Scope) -> Result<Expr> {
    let e = Expr::parse(src).map_err(|err| CliError::validation(key, format!("{err} in '{src}'")))?;
    for v in e.vars() {
        let ok = match v {
            Var::X(k) => k < scope.dim,
            Var::R2 => scope.dim > 0,
            Var::T => scope.t,
            Var::U => scope.u,
            Var::S => scope.s,
        };
        if !ok {
            let name = match v {
                Var::X(k) => format!("x{}", k + 1),
                Var::R2 => "r2".into(),
                Var::T => "t".into(),
                Var::U => "u".into(),
                Var::S => "s".into(),
            };
            return Err(CliError::validation(key, format!("variable '{name}' is not available here")));
        }
    }
    Ok(e)
}

/// `V(x, τ)` with symbolic gradient and `∂V/∂τ`, where `τ` is `t` or `u`.
fn scalar_system(e: Expr, n: usize, time: Var) -> ForceSystem {
    fn bind(time: Var, x: &[f64], tau: f64) -> Env<'_> {
        match time {
            Var::U => Env { x, u: tau, ..Default::default() },
            _ => Env { x, t: tau, ..Default::default() },
        }
    }
    let grad: Arc<Vec<Expr>> = Arc::new((0..n).map(|k| e.diff(Var::X(k))).collect());
    let dtau = Arc::new(e.diff(time));
    let e = Arc::new(e);
    ForceSystem::new(move |x, tau| e.eval(&bind(time, x, tau)))
        .with_gradient(move |x, tau| grad.iter().map(|g| g.eval(&bind(time, x, tau))).collect())
        .with_time_derivative(move |x, tau| dtau.eval(&bind(time, x, tau)))
}

fn matrix(key: &str, rows: &[Vec<String>], n: usize, scope: Scope) -> Result<Vec<Vec<Expr>>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::validation(key, format!("expected a {n}x{n} matrix")));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, src)| compile(&format!("{key}.{i}.{j}"), src, scope))
                .collect()
        })
        .collect()
}

fn check_len(key: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(CliError::validation(key, format!("expected {n} components, got {}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(CliError::validation(key, "components must be finite"));
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::validation(key, format!("must be positive and finite, got {v}")))
    }
}

fn build_manifold(spec: &ManifoldSpec) -> Result<(ChartManifold, bool)> {
    match spec {
        ManifoldSpec::Catalog(name) => {
            let m = catalog::manifold(name).map_err(|e| CliError::validation("manifold", e))?;
            let flat2 = name.replace(' ', "") == "euclidean(2)";
            Ok((m, flat2))
        }
        ManifoldSpec::Metric(ms) => {
            let n = ms.metric.len();
            if n == 0 {
                return Err(CliError::validation("manifold.metric", "metric must have at least one row"));
            }
            let g = Arc::new(matrix("manifold.metric", &ms.metric, n, Scope::X(n))?);
            let mut m = ChartManifold::new(format!("metric({n})"), n, move |x| {
                DMatrix::from_fn(n, n, |i, j| g[i][j].eval(&Env::x(x)))
            })
            .assume_complete(ms.complete);
            if let Some(src) = &ms.guard {
                let guard = compile("manifold.guard", src, Scope::X(n))?;
                m = m.with_guard(move |x| guard.eval(&Env::x(x)) > 0.0);
            }
            Ok((m, false))
        }
    }
}

fn unused(key: &str, task: Task) -> CliError {
    CliError::validation(key, format!("section is not used by task '{}'", task.name()))
}

fn require<'a, T>(section: &'a Option<T>, key: &str, task: Task) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| CliError::validation(key, format!("required by task '{}'", task.name())))
}

impl Scenario {
    pub fn validate(self) -> Result<Model> {
        let name = self
            .name
            .clone()
            .ok_or_else(|| CliError::validation("name", "missing required key"))?;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || name.starts_with('.') {
            return Err(CliError::validation("name", "use letters, digits, '-', '_' and '.' only"));
        }
        let task = self.task.ok_or_else(|| CliError::validation("task", "missing required key"))?;
        for (key, file) in [("output.csv", &self.output.csv), ("output.report", &self.output.report)] {
            if file.is_empty() || file.contains('/') || file.contains('\\') || file.starts_with('.') {
                return Err(CliError::validation(key, "must be a plain file name"));
            }
        }

        let cfg = self.integrator.resolve();
        cfg.validate().map_err(|e| CliError::validation("integrator", e.to_string()))?;

        let uses = |t: &[Task]| t.contains(&task);
        let checks: [(&str, bool, bool); 8] = [
            ("forces", self.forces.is_some(), uses(&[Task::Integrate, Task::Certify, Task::Envelope])),
            ("wave", self.wave.is_some(), uses(&[Task::Certify, Task::GpwGeodesic, Task::GpwMap])),
            ("bounds", self.bounds.is_some(), uses(&[Task::Certify, Task::Envelope, Task::GpwMap])),
            ("initial", self.initial.is_some(), uses(&[Task::Integrate, Task::Certify])),
            ("envelope", self.envelope.is_some(), uses(&[Task::Envelope])),
            ("geodesic", self.geodesic.is_some(), uses(&[Task::GpwGeodesic])),
            ("map", self.map.is_some(), uses(&[Task::GpwMap])),
            ("lemma", self.lemma.is_some(), uses(&[Task::CompareLemma])),
        ];
        for (key, present, allowed) in checks {
            if present && !allowed {
                return Err(unused(key, task));
            }
        }
        if self.claims.is_some() && !uses(&[Task::Certify, Task::GpwMap]) {
            return Err(unused("claims", task));
        }
        if self.manifold.is_some() && task == Task::CompareLemma {
            return Err(unused("manifold", task));
        }
        if task == Task::Certify && self.forces.is_some() == self.wave.is_some() {
            return Err(CliError::validation("forces", "certify needs exactly one of 'forces' and 'wave'"));
        }

        let default_manifold = ManifoldSpec::Catalog("euclidean(1)".into());
        let (manifold, flat2) = build_manifold(self.manifold.as_ref().unwrap_or(&default_manifold))?;
        let n = manifold.dim();
        let xt = Scope { dim: n, t: true, u: false, s: false };

        let mut forces = None;
        let mut conservative = false;
        if uses(&[Task::Integrate, Task::Envelope]) || (task == Task::Certify && self.wave.is_none()) {
            let fs = require(&self.forces, "forces", task)?;
            let src = catalog::potential(&fs.potential, n).unwrap_or_else(|| fs.potential.clone());
            let v = compile("forces.potential", &src, xt)?;
            conservative = !v.depends_on(Var::T) && fs.tensor.is_none();
            let mut system = scalar_system(v, n, Var::T);
            if let Some(ts) = &fs.tensor {
                let rows = match ts {
                    TensorSpec::Catalog(name) => match catalog::tensor(name, n) {
                        Some(r) => r.map_err(|e| CliError::validation("forces.tensor", e))?,
                        None => return Err(CliError::validation("forces.tensor", format!("unknown tensor '{name}'"))),
                    },
                    TensorSpec::Matrix(rows) => rows.clone(),
                };
                let f = Arc::new(matrix("forces.tensor", &rows, n, xt)?);
                system = system.with_tensor(move |x, t| {
                    let env = Env { x, t, ..Default::default() };
                    DMatrix::from_fn(n, n, |i, j| f[i][j].eval(&env))
                });
            }
            forces = Some(system);
        }

        let mut wave = None;
        if uses(&[Task::GpwGeodesic, Task::GpwMap]) || (task == Task::Certify && self.wave.is_some()) {
            let ws = require(&self.wave, "wave", task)?;
            let xu = Scope { dim: n, t: false, u: true, s: false };
            let h = match (&ws.profile, &ws.plane_wave) {
                (Some(p), None) => {
                    let src = catalog::wave_profile(p).unwrap_or_else(|| p.clone());
                    compile("wave.profile", &src, xu)?
                }
                (None, Some(pw)) => {
                    if !flat2 {
                        return Err(CliError::validation("wave.plane_wave", "plane waves live on euclidean(2)"));
                    }
                    let u_only = Scope { dim: 0, t: false, u: true, s: false };
                    compile("wave.plane_wave.f1", &pw.f1, u_only)?;
                    compile("wave.plane_wave.f2", &pw.f2, u_only)?;
                    compile("wave.plane_wave.f", &pw.f, u_only)?;
                    compile("wave.plane_wave", &catalog::plane_wave_profile(&pw.f1, &pw.f2, &pw.f), xu)?
                }
                _ => return Err(CliError::validation("wave", "give exactly one of 'profile' and 'plane_wave'")),
            };
            let mut probes: Vec<Vec<f64>> = (0..n)
                .map(|k| (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                .collect();
            probes.push(vec![1.0; n]);
            probes.push(vec![0.5; n]);
            let st = GpwSpacetime::with_witness_search(manifold.clone(), scalar_system(h, n, Var::U), &probes)
                .map_err(|e| CliError::validation("wave", e.to_string()))?;
            wave = Some(st);
        }

        let mut bounds = None;
        let mut bounds_horizon = cfg.horizon;
        let mut anchor = vec![0.0; n];
        if uses(&[Task::Certify, Task::Envelope]) || (task == Task::GpwMap && self.bounds.is_some()) {
            let bs = require(&self.bounds, "bounds", task)?;
            // α₀, β₀ are functions of u in wave scenarios
            let on_wave = wave.is_some();
            let time_scope = Scope { dim: 0, t: !on_wave, u: on_wave, s: false };
            let alpha = Arc::new(compile("bounds.alpha0", &bs.alpha0, time_scope)?);
            let beta = Arc::new(compile("bounds.beta0", &bs.beta0, time_scope)?);
            check_len("bounds.lo", &bs.lo, n)?;
            check_len("bounds.hi", &bs.hi, n)?;
            if bs.lo.iter().zip(&bs.hi).any(|(a, b)| a > b) {
                return Err(CliError::validation("bounds.hi", "each upper corner must be at least the lower one"));
            }
            if bs.points == 0 {
                return Err(CliError::validation("bounds.points", "must be at least 1"));
            }
            if bs.times < 2 {
                return Err(CliError::validation("bounds.times", "must be at least 2"));
            }
            bounds_horizon = bs.horizon.unwrap_or(cfg.horizon);
            check_positive("bounds.horizon", bounds_horizon)?;
            let grid = BoundData::box_grid(&bs.lo, &bs.hi, bs.points);
            let bd = BoundData::new(
                move |t| alpha.eval(&Env { t, u: t, ..Default::default() }),
                move |t| beta.eval(&Env { t, u: t, ..Default::default() }),
                grid,
                BoundData::symmetric_times(bounds_horizon, bs.times),
            )
            .map_err(|e| CliError::validation("bounds", e.to_string()))?;
            bd.validate_in(&manifold)
                .map_err(|e| CliError::validation("bounds.lo", e.to_string()))?;
            if let Some(a) = &bs.anchor {
                check_len("bounds.anchor", a, n)?;
                anchor = a.clone();
            }
            bounds = Some(bd);
        }

        let claims = match &self.claims {
            Some(list) => {
                if list.is_empty() {
                    return Err(CliError::validation("claims", "list at least one claim"));
                }
                let want_wave = wave.is_some();
                if let Some(c) = list.iter().find(|c| c.is_wave() != want_wave) {
                    return Err(CliError::validation(
                        "claims",
                        format!("claim {c:?} does not apply to this kind of scenario"),
                    ));
                }
                if task == Task::GpwMap && bounds.is_none() {
                    return Err(CliError::validation("bounds", "claims on a map need bounds"));
                }
                list.iter().map(|c| c.claim()).collect()
            }
            None if task == Task::Certify && wave.is_some() => vec![Claim::Corollary2, Claim::Corollary3],
            None if task == Task::Certify => vec![Claim::TheoremG01, Claim::ForwardProp, Claim::BackwardProp],
            None if task == Task::GpwMap && bounds.is_some() => vec![Claim::Corollary2, Claim::Corollary3],
            None => Vec::new(),
        };

        if task == Task::Integrate || (task == Task::Certify && self.initial.is_some()) {
            let init = require(&self.initial, "initial", task)?;
            if task == Task::Certify && wave.is_some() {
                return Err(unused("initial", task));
            }
            check_len("initial.x", &init.x, n)?;
            check_len("initial.xdot", &init.xdot, n)?;
            if !manifold.contains(&init.x) {
                return Err(CliError::validation("initial.x", "point lies outside the chart"));
            }
        }

        if task == Task::Envelope {
            let es = require(&self.envelope, "envelope", task)?;
            if es.samples == 0 {
                return Err(CliError::validation("envelope.samples", "must be at least 1"));
            }
            check_positive("envelope.radius", es.radius)?;
            check_positive("envelope.speed_radius", es.speed_radius)?;
            check_positive("envelope.fd_tol", es.fd_tol)?;
            if let Some(c) = &es.center {
                check_len("envelope.center", c, n)?;
                if !manifold.contains(c) {
                    return Err(CliError::validation("envelope.center", "point lies outside the chart"));
                }
            } else if !manifold.contains(&vec![0.0; n]) {
                return Err(CliError::validation("envelope.center", "the origin is outside the chart; give a center"));
            }
            if bounds_horizon < cfg.horizon {
                return Err(CliError::validation("bounds.horizon", "must cover the integration horizon"));
            }
        }

        if task == Task::GpwGeodesic {
            let g = require(&self.geodesic, "geodesic", task)?;
            check_len("geodesic.x0", &g.x0, n)?;
            check_len("geodesic.xdot0", &g.xdot0, n)?;
            if !manifold.contains(&g.x0) {
                return Err(CliError::validation("geodesic.x0", "point lies outside the chart"));
            }
            for (key, v) in [("geodesic.u0", g.u0), ("geodesic.udot0", g.udot0), ("geodesic.v0", g.v0), ("geodesic.vdot0", g.vdot0)] {
                if !v.is_finite() {
                    return Err(CliError::validation(key, "must be finite"));
                }
            }
        }

        if task == Task::GpwMap {
            let ms = require(&self.map, "map", task)?;
            for (key, v) in [("map.x_lo", &ms.x_lo), ("map.x_hi", &ms.x_hi), ("map.xdot_lo", &ms.xdot_lo), ("map.xdot_hi", &ms.xdot_hi)] {
                check_len(key, v, n)?;
            }
            if ms.x_points == 0 || ms.xdot_points == 0 {
                return Err(CliError::validation("map.x_points", "point counts must be at least 1"));
            }
            if ms.deltas.is_empty() || ms.deltas.iter().any(|d| !d.is_finite()) {
                return Err(CliError::validation("map.deltas", "give at least one finite value"));
            }
            if let Some(p) = BoundData::box_grid(&ms.x_lo, &ms.x_hi, ms.x_points).iter().find(|p| !manifold.contains(p)) {
                return Err(CliError::validation("map.x_lo", format!("grid point {p:?} lies outside the chart")));
            }
        }

        let mut phi = None;
        let mut reference = None;
        if task == Task::CompareLemma {
            let ls = require(&self.lemma, "lemma", task)?;
            let e = Arc::new(compile("lemma.phi", &ls.phi, Scope { dim: 0, t: false, u: false, s: true })?);
            if !ls.a.is_finite() || !ls.v0.is_finite() {
                return Err(CliError::validation("lemma.a", "a and v0 must be finite"));
            }
            check_positive("lemma.t_max", ls.t_max)?;
            if ls.samples < 2 {
                return Err(CliError::validation("lemma.samples", "must be at least 2"));
            }
            phi = Some(
                PhiFunction::new(ls.a, move |s| e.eval(&Env { s, ..Default::default() }))
                    .map_err(|err| CliError::validation("lemma.phi", err.to_string()))?,
            );
            if let Some(r) = &ls.reference {
                reference = Some(compile("lemma.reference", r, Scope { dim: 0, t: true, u: false, s: false })?);
            }
        }

        Ok(Model {
            scenario: self,
            name,
            task,
            manifold,
            forces,
            conservative,
            wave,
            bounds,
            bounds_horizon,
            anchor,
            claims,
            cfg,
            phi,
            reference,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn scenario(v: Value) -> Result<Model> {
        Scenario::from_value(v)?.validate()
    }

    fn harmonic() -> Value {
        json!({
            "name": "h",
            "task": "integrate",
            "manifold": "euclidean(2)",
            "forces": {"potential": "harmonic"},
            "initial": {"x": [1, 0], "xdot": [0, 0]}
        })
    }

    fn key_of(e: CliError) -> String {
        match e {
            CliError::Validation { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_scenario_validates() {
        let m = scenario(harmonic()).unwrap();
        assert_eq!(m.task, Task::Integrate);
        assert!(m.conservative);
        let fs = m.forces.unwrap();
        assert_eq!(fs.potential(&[1.0, 2.0], 0.0).unwrap(), 2.5);
        assert_eq!(fs.potential_dx(&[1.0, 2.0], 0.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn missing_task_names_the_key() {
        let mut v = harmonic();
        v.as_object_mut().unwrap().remove("task");
        assert_eq!(key_of(scenario(v).err().unwrap()), "task");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let mut v = harmonic();
        v["integrator"] = json!({"rel_tl": 1e-9});
        let err = scenario(v).err().unwrap();
        let CliError::Validation { key, message } = err else { panic!() };
        assert!(key.starts_with("integrator"), "{key}");
        assert!(message.contains("rel_tl"));

        let mut v = harmonic();
        v["initial"]["velocity"] = json!([0, 0]);
        assert!(key_of(scenario(v).err().unwrap()).starts_with("initial"));
    }

    #[test]
    fn type_errors_name_the_key() {
        let mut v = harmonic();
        v["integrator"] = json!({"horizon": "long"});
        assert_eq!(key_of(scenario(v).err().unwrap()), "integrator.horizon");
    }

    #[test]
    fn expression_errors_name_the_key() {
        let mut v = harmonic();
        v["forces"]["potential"] = json!("x1 + x3");
        assert_eq!(key_of(scenario(v).err().unwrap()), "forces.potential");
        let mut v = harmonic();
        v["forces"]["potential"] = json!("x1 +");
        assert_eq!(key_of(scenario(v).err().unwrap()), "forces.potential");
        let mut v = harmonic();
        v["forces"]["potential"] = json!("u * x1");
        assert_eq!(key_of(scenario(v).err().unwrap()), "forces.potential");
    }

    #[test]
    fn sections_foreign_to_the_task_are_rejected() {
        let mut v = harmonic();
        v["lemma"] = json!({"phi": "s", "a": 1, "v0": 1, "t_max": 1});
        assert_eq!(key_of(scenario(v).err().unwrap()), "lemma");
    }

    #[test]
    fn dimension_and_chart_checks() {
        let mut v = harmonic();
        v["initial"]["x"] = json!([1, 0, 0]);
        assert_eq!(key_of(scenario(v).err().unwrap()), "initial.x");
        let mut v = harmonic();
        v["manifold"] = json!("hyperbolic_half_plane");
        v["initial"]["x"] = json!([0, -1]);
        assert_eq!(key_of(scenario(v).err().unwrap()), "initial.x");
    }

    #[test]
    fn parse_errors_carry_line_and_column() {
        let err = parse_text(Path::new("x.scn"), "{\n  \"name\": \"a\",\n  \"task\" \"integrate\"\n}").unwrap_err();
        let CliError::Parse { line, column, .. } = err else { panic!() };
        assert_eq!((line, column), (3, 10));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut v = harmonic();
        apply_override(&mut v, "integrator.rel_tol=1e-11").unwrap();
        apply_override(&mut v, "initial.x.1=0.5").unwrap();
        apply_override(&mut v, "name=other").unwrap();
        let s = Scenario::from_value(v).unwrap();
        assert_eq!(s.integrator.rel_tol, Some(1e-11));
        assert_eq!(s.initial.as_ref().unwrap().x, vec![1.0, 0.5]);
        assert_eq!(s.name.as_deref(), Some("other"));
        let mut v = harmonic();
        assert!(apply_override(&mut v, "name").is_err());
        assert!(apply_override(&mut v, "initial.x.7=1").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let s = Scenario::from_value(harmonic()).unwrap();
        let again = Scenario::from_value(serde_json::from_str(&s.to_text()).unwrap()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.to_text(), again.to_text());
    }

    #[test]
    fn wave_scenarios_build_a_spacetime() {
        let v = json!({
            "name": "w",
            "task": "certify",
            "manifold": "euclidean(2)",
            "wave": {"plane_wave": {"f1": "1 + u^2", "f2": "1 + u^2", "f": "u"}},
            "bounds": {"lo": [-1, -1], "hi": [1, 1], "points": 3, "horizon": 1}
        });
        let m = scenario(v).unwrap();
        let st = m.wave.unwrap();
        // H = f1 x² − f2 y² + 2 f x y at (1, 1, u = 2)
        assert_eq!(st.h.potential(&[1.0, 1.0], 2.0).unwrap(), 4.0);
        assert_eq!(st.h.potential_dt(&[1.0, 1.0], 2.0).unwrap(), 2.0);
        assert_eq!(m.claims, vec![Claim::Corollary2, Claim::Corollary3]);

        let v = json!({
            "name": "w",
            "task": "gpw-geodesic",
            "manifold": "euclidean(2)",
            "wave": {"profile": "0 * x1"},
            "geodesic": {"x0": [0, 0], "xdot0": [0, 0], "udot0": 1, "vdot0": 0}
        });
        assert_eq!(key_of(scenario(v).err().unwrap()), "wave");
    }

    #[test]
    fn lemma_rejects_decreasing_phi() {
        let v = json!({
            "name": "l",
            "task": "compare-lemma",
            "lemma": {"phi": "1 / s", "a": 1, "v0": 1, "t_max": 1}
        });
        assert_eq!(key_of(scenario(v).err().unwrap()), "lemma.phi");
    }
}
