//! Experiment configuration: JSON parsing with aggregated, line-tagged errors.

use std::fmt;

use fractal_fkpp::asymptotics::{CorrectionForm, SpatialGrid};
use fractal_fkpp::calculus::{OdeMethod, DEFAULT_TIME_SPACING};
use fractal_fkpp::flees::{ClosureMode, FleesOptions, ModelParams, Particle};
use fractal_fkpp::fractal_set::{example_alphas, CantorPrefractal, DEFAULT_GENERATION, MAX_GENERATION};
use fractal_fkpp::reference::{Laplacian, TimeScheme};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Default snapshot times.
pub const DEFAULT_SNAPSHOTS: [f64; 4] = [0.0, 0.3, 0.6, 1.0];
/// Default RK4 step count over `[0, S(1)]`.
pub const DEFAULT_RK_STEPS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub a: f64,
    pub b0: f64,
    pub xi: f64,
    pub particles: Vec<ParticleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub spacing: f64,
    pub rk_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { spacing: DEFAULT_TIME_SPACING, rk_steps: DEFAULT_RK_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        let g = SpatialGrid::default_domain();
        Self { x_min: g.x_min(), x_max: g.x_max(), points: g.points() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    #[default]
    Strict,
    Paper,
}

impl From<Closure> for ClosureMode {
    fn from(c: Closure) -> Self {
        match c {
            Closure::Strict => ClosureMode::StrictSecondOrder,
            Closure::Paper => ClosureMode::PaperExample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    Derived,
    Printed,
}

impl From<Correction> for CorrectionForm {
    fn from(c: Correction) -> Self {
        match c {
            Correction::Derived => CorrectionForm::Derived,
            Correction::Printed => CorrectionForm::Printed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianOrder {
    Second,
    #[default]
    Fourth,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub laplacian: LaplacianOrder,
    /// Time steps over `[0, S(1)]`; the smallest stable count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_steps: Option<usize>,
}

impl ReferenceConfig {
    pub fn scheme(&self) -> TimeScheme {
        match self.scheme {
            Scheme::Euler => TimeScheme::Euler,
            Scheme::Heun => TimeScheme::Heun,
        }
    }

    pub fn laplacian(&self) -> Laplacian {
        match self.laplacian {
            LaplacianOrder::Second => Laplacian::SecondOrder,
            LaplacianOrder::Fourth => Laplacian::FourthOrder,
        }
    }
}

fn default_alphas() -> Vec<f64> {
    example_alphas().to_vec()
}

fn default_generation() -> u32 {
    DEFAULT_GENERATION
}

fn default_snapshots() -> Vec<f64> {
    DEFAULT_SNAPSHOTS.to_vec()
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsConfig,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_generation")]
    pub generation: u32,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default = "default_snapshots")]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub closure: Closure,
    #[serde(default)]
    pub correction: Correction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default = "default_output")]
    pub output: String,
}

impl ExperimentConfig {
    /// The two-particle reference configuration over the six example exponents.
    pub fn two_particle_example() -> Self {
        let p = ModelParams::two_particle_example();
        Self {
            params: ParamsConfig {
                epsilon: p.epsilon,
                kappa: p.kappa,
                a: p.a_const,
                b0: p.b0,
                xi: p.xi,
                particles: p
                    .particles
                    .iter()
                    .map(|q| ParticleConfig { amplitude: q.amplitude, sigma: q.sigma, center: q.center })
                    .collect(),
            },
            alphas: default_alphas(),
            generation: DEFAULT_GENERATION,
            time: TimeConfig::default(),
            space: SpaceConfig::default(),
            snapshots: default_snapshots(),
            closure: Closure::default(),
            correction: Correction::default(),
            reference: None,
            output: default_output(),
        }
    }

    pub fn model_params(&self) -> ModelParams {
        let p = &self.params;
        ModelParams {
            epsilon: p.epsilon,
            kappa: p.kappa,
            a_const: p.a,
            b0: p.b0,
            xi: p.xi,
            particles: p
                .particles
                .iter()
                .map(|q| Particle { amplitude: q.amplitude, sigma: q.sigma, center: q.center })
                .collect(),
        }
    }

    pub fn prefractal(&self, alpha: f64) -> fractal_fkpp::Result<CantorPrefractal> {
        CantorPrefractal::new(alpha, self.generation)
    }

    pub fn spatial_grid(&self) -> fractal_fkpp::Result<SpatialGrid> {
        SpatialGrid::new(self.space.x_min, self.space.x_max, self.space.points)
    }

    pub fn flees_options(&self) -> FleesOptions {
        FleesOptions {
            time_spacing: self.time.spacing,
            method: OdeMethod::RungeKuttaInTau { steps: self.time.rk_steps },
            extra_times: self.snapshots.clone(),
        }
    }

    /// Canonical JSON text of the configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

/// One validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

/// Every problem found in a configuration text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} configuration error(s):\n{}", .0.len(), render(.0))]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

fn render(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Copy)]
enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

// Finds the line holding the key at the end of `path`, walking the keys in order.
fn locate(raw: &str, path: &[Seg<'_>]) -> Option<usize> {
    let mut at = 0;
    let mut found = false;
    for seg in path {
        if let Seg::Key(k) = seg {
            let needle = format!("\"{k}\"");
            at += raw[at..].find(&needle)?;
            found = true;
        }
    }
    found.then(|| raw[..at].matches('\n').count() + 1)
}

fn path_text(path: &[Seg<'_>]) -> String {
    let mut out = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(k);
            }
            Seg::Index(i) => out.push_str(&format!("[{i}]")),
        }
    }
    if out.is_empty() {
        out.push_str("<root>");
    }
    out
}

struct Checker<'r> {
    raw: &'r str,
    issues: Vec<ConfigIssue>,
}

impl Checker<'_> {
    fn report(&mut self, path: &[Seg<'_>], message: impl Into<String>) {
        self.issues.push(ConfigIssue { line: locate(self.raw, path), path: path_text(path), message: message.into() });
    }

    fn object<'v>(&mut self, v: &'v Value, path: &[Seg<'_>], allowed: &[&str], required: &[&str]) -> Option<&'v Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.report(path, "expected an object");
            return None;
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                let mut p = path.to_vec();
                p.push(Seg::Key(key));
                self.report(&p, format!("unknown key (allowed: {})", allowed.join(", ")));
            }
        }
        for key in required {
            if !map.contains_key(*key) {
                let mut p = path.to_vec();
                p.push(Seg::Key(key));
                self.issues.push(ConfigIssue {
                    line: locate(self.raw, path),
                    path: path_text(&p),
                    message: "missing required field".into(),
                });
            }
        }
        Some(map)
    }

    fn number(&mut self, map: &Map<String, Value>, path: &[Seg<'_>], key: &str, check: impl Fn(f64) -> Option<&'static str>) {
        let mut p = path.to_vec();
        p.push(Seg::Key(key));
        if let Some(v) = map.get(key) {
            self.number_value(v, &p, check);
        }
    }

    fn number_value(&mut self, v: &Value, path: &[Seg<'_>], check: impl Fn(f64) -> Option<&'static str>) {
        match v.as_f64() {
            Some(x) => {
                if let Some(msg) = check(x) {
                    self.report(path, format!("{msg} (got {x})"));
                }
            }
            None => self.report(path, "expected a number"),
        }
    }

    fn integer(&mut self, map: &Map<String, Value>, path: &[Seg<'_>], key: &str, min: u64, max: u64) {
        let mut p = path.to_vec();
        p.push(Seg::Key(key));
        if let Some(v) = map.get(key) {
            match v.as_u64() {
                Some(n) if (min..=max).contains(&n) => {}
                Some(n) => self.report(&p, format!("must lie in [{min}, {max}] (got {n})")),
                None => self.report(&p, "expected a non-negative integer"),
            }
        }
    }

    fn choice(&mut self, map: &Map<String, Value>, path: &[Seg<'_>], key: &str, options: &[&str]) {
        let mut p = path.to_vec();
        p.push(Seg::Key(key));
        if let Some(v) = map.get(key) {
            match v.as_str() {
                Some(s) if options.contains(&s) => {}
                _ => self.report(&p, format!("expected one of {}", options.join(", "))),
            }
        }
    }
}

fn positive(x: f64) -> Option<&'static str> {
    (!(x > 0.0 && x.is_finite())).then_some("must be positive and finite")
}

fn non_negative(x: f64) -> Option<&'static str> {
    (!(x >= 0.0 && x.is_finite())).then_some("must be non-negative and finite")
}

fn finite(x: f64) -> Option<&'static str> {
    (!x.is_finite()).then_some("must be finite")
}

fn unit_time(x: f64) -> Option<&'static str> {
    (!(0.0..=1.0).contains(&x)).then_some("must lie in [0, 1]")
}

fn fractality(x: f64) -> Option<&'static str> {
    (!(x > 0.0 && x <= 1.0)).then_some("must lie in (0, 1]")
}

/// Directory name used for the outputs of one exponent.
pub fn alpha_label(alpha: f64) -> String {
    format!("alpha_{alpha:.6}")
}

/// Parses and validates a configuration text, reporting every problem found.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let value: Value = serde_json::from_str(raw).map_err(|e| {
        ConfigErrors(vec![ConfigIssue { line: Some(e.line()), path: "<root>".into(), message: format!("malformed JSON: {e}") }])
    })?;
    let mut c = Checker { raw, issues: Vec::new() };
    let top = [
        "params",
        "alphas",
        "generation",
        "time",
        "space",
        "snapshots",
        "closure",
        "correction",
        "reference",
        "output",
    ];
    if let Some(root) = c.object(&value, &[], &top, &["params"]) {
        check_params(&mut c, root);
        if let Some(v) = root.get("alphas") {
            let path = [Seg::Key("alphas")];
            match v.as_array() {
                Some(list) if list.is_empty() => c.report(&path, "must list at least one exponent"),
                Some(list) => {
                    let mut labels = Vec::new();
                    for (i, item) in list.iter().enumerate() {
                        c.number_value(item, &[Seg::Key("alphas"), Seg::Index(i)], fractality);
                        if let Some(a) = item.as_f64() {
                            let label = alpha_label(a);
                            if labels.contains(&label) {
                                c.report(&[Seg::Key("alphas"), Seg::Index(i)], "duplicates an earlier exponent");
                            }
                            labels.push(label);
                        }
                    }
                }
                None => c.report(&path, "expected an array of numbers"),
            }
        }
        c.integer(root, &[], "generation", 0, MAX_GENERATION as u64);
        if let Some(v) = root.get("time") {
            let path = [Seg::Key("time")];
            if let Some(m) = c.object(v, &path, &["spacing", "rk_steps"], &["spacing", "rk_steps"]) {
                c.number(m, &path, "spacing", |x| (!(x > 0.0 && x <= 0.5)).then_some("must lie in (0, 0.5]"));
                c.integer(m, &path, "rk_steps", 1, 100_000_000);
            }
        }
        if let Some(v) = root.get("space") {
            let path = [Seg::Key("space")];
            let keys = ["x_min", "x_max", "points"];
            if let Some(m) = c.object(v, &path, &keys, &keys) {
                c.number(m, &path, "x_min", finite);
                c.number(m, &path, "x_max", finite);
                c.integer(m, &path, "points", 16, 1_000_000);
                if let (Some(a), Some(b)) = (m.get("x_min").and_then(Value::as_f64), m.get("x_max").and_then(Value::as_f64)) {
                    if a >= b {
                        c.report(&[Seg::Key("space"), Seg::Key("x_max")], "must exceed x_min");
                    }
                }
            }
        }
        if let Some(v) = root.get("snapshots") {
            match v.as_array() {
                Some(list) => {
                    for (i, item) in list.iter().enumerate() {
                        c.number_value(item, &[Seg::Key("snapshots"), Seg::Index(i)], unit_time);
                    }
                }
                None => c.report(&[Seg::Key("snapshots")], "expected an array of times"),
            }
        }
        c.choice(root, &[], "closure", &["strict", "paper"]);
        c.choice(root, &[], "correction", &["derived", "printed"]);
        if let Some(v) = root.get("reference") {
            let path = [Seg::Key("reference")];
            if let Some(m) = c.object(v, &path, &["scheme", "laplacian", "tau_steps"], &[]) {
                c.choice(m, &path, "scheme", &["euler", "heun"]);
                c.choice(m, &path, "laplacian", &["second", "fourth"]);
                c.integer(m, &path, "tau_steps", 1, 100_000_000);
            }
        }
        if let Some(v) = root.get("output") {
            if v.as_str().is_none_or(str::is_empty) {
                c.report(&[Seg::Key("output")], "expected a non-empty path");
            }
        }
        if root.get("closure").and_then(Value::as_str) == Some("paper") {
            let count = root
                .get("params")
                .and_then(|p| p.get("particles"))
                .and_then(Value::as_array)
                .map(Vec::len);
            if count.is_some_and(|n| n != 2) {
                c.report(&[Seg::Key("closure")], "the paper closure needs exactly two particles");
            }
        }
    }
    if !c.issues.is_empty() {
        return Err(ConfigErrors(c.issues));
    }
    serde_json::from_value(value).map_err(|e| {
        ConfigErrors(vec![ConfigIssue { line: None, path: "<root>".into(), message: e.to_string() }])
    })
}

fn check_params(c: &mut Checker<'_>, root: &Map<String, Value>) {
    let Some(v) = root.get("params") else { return };
    let path = [Seg::Key("params")];
    let keys = ["epsilon", "kappa", "a", "b0", "xi", "particles"];
    let Some(m) = c.object(v, &path, &keys, &keys) else { return };
    c.number(m, &path, "epsilon", positive);
    c.number(m, &path, "kappa", non_negative);
    c.number(m, &path, "a", finite);
    c.number(m, &path, "b0", non_negative);
    c.number(m, &path, "xi", positive);
    let Some(list) = m.get("particles") else { return };
    let ppath = [Seg::Key("params"), Seg::Key("particles")];
    let Some(list) = list.as_array() else {
        c.report(&ppath, "expected an array of particles");
        return;
    };
    if list.is_empty() {
        c.report(&ppath, "must contain at least one particle");
    }
    for (i, item) in list.iter().enumerate() {
        let p = [Seg::Key("params"), Seg::Key("particles"), Seg::Index(i)];
        let keys = ["amplitude", "sigma", "center"];
        if let Some(pm) = c.object(item, &p, &keys, &keys) {
            c.number(pm, &p, "amplitude", non_negative);
            c.number(pm, &p, "sigma", positive);
            c.number(pm, &p, "center", finite);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_text() -> String {
        ExperimentConfig::two_particle_example().to_json()
    }

    #[test]
    fn example_config_validates() {
        let cfg = validate_config(&example_text()).unwrap();
        assert_eq!(cfg, ExperimentConfig::two_particle_example());
        assert_eq!(cfg.model_params(), ModelParams::two_particle_example());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::two_particle_example();
        cfg.reference = Some(ReferenceConfig { tau_steps: Some(123), ..ReferenceConfig::default() });
        cfg.closure = Closure::Paper;
        let again = validate_config(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), cfg.to_json());
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let raw = r#"{"params": {"epsilon": 0.02, "kappa": 1, "a": 0.5, "b0": 1, "xi": 2,
            "particles": [{"amplitude": 1, "sigma": 1, "center": -1}, {"amplitude": 2, "sigma": 1.5, "center": 1}]}}"#;
        assert_eq!(validate_config(raw).unwrap(), ExperimentConfig::two_particle_example());
    }

    #[test]
    fn missing_epsilon_is_named() {
        let raw = example_text().replace("\"epsilon\": 0.02,", "");
        let err = validate_config(&raw).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].path, "params.epsilon");
        assert!(err.0[0].message.contains("missing"));
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let mut cfg = ExperimentConfig::two_particle_example();
        cfg.alphas = vec![0.5, 1.2];
        let err = validate_config(&cfg.to_json()).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].path, "alphas[1]");
        assert!(err.0[0].message.contains("(0, 1]"));
    }

    #[test]
    fn errors_are_aggregated_with_lines() {
        let raw = "{\n  \"params\": {\n    \"epsilon\": -1,\n    \"kappa\": 1, \"a\": 0.5, \"b0\": 1, \"xi\": 2,\n    \"particles\": []\n  },\n  \"snapshots\": [0.5, 2.0],\n  \"colour\": \"red\",\n  \"closure\": \"loose\"\n}";
        let err = validate_config(raw).unwrap_err();
        let text: Vec<String> = err.0.iter().map(ToString::to_string).collect();
        assert_eq!(err.0.len(), 5, "{text:#?}");
        assert!(text.iter().any(|t| t.starts_with("line 3: params.epsilon")));
        assert!(text.iter().any(|t| t.starts_with("line 5: params.particles")));
        assert!(text.iter().any(|t| t.starts_with("line 7: snapshots[1]")));
        assert!(text.iter().any(|t| t.starts_with("line 8: colour") && t.contains("unknown key")));
        assert!(text.iter().any(|t| t.starts_with("line 9: closure")));
    }

    #[test]
    fn malformed_json_reports_its_line() {
        let err = validate_config("{\n\"params\": \n}").unwrap_err();
        assert_eq!(err.0[0].line, Some(3));
    }

    #[test]
    fn nested_unknown_keys_are_rejected() {
        let raw = example_text().replace("\"center\": -1.0", "\"center\": -1.0, \"mass\": 3");
        let err = validate_config(&raw).unwrap_err();
        assert_eq!(err.0[0].path, "params.particles[0].mass");
    }

    #[test]
    fn example_closure_needs_two_particles() {
        let mut cfg = ExperimentConfig::two_particle_example();
        cfg.closure = Closure::Paper;
        cfg.params.particles.pop();
        let err = validate_config(&cfg.to_json()).unwrap_err();
        assert_eq!(err.0[0].path, "closure");
    }

    #[test]
    fn duplicate_exponents_are_rejected() {
        let mut cfg = ExperimentConfig::two_particle_example();
        cfg.alphas = vec![0.5, 0.5];
        assert!(validate_config(&cfg.to_json()).is_err());
    }
}
