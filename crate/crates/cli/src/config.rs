//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted (`model.gamma`, `beta.atoms`). Values are numbers, bare
//! words, or bracketed lists that may nest one level. Numbers may be written
//! with `pi` as `pi`, `pi/4`, `3*pi/8`. `#` starts a comment.

use std::fmt;
use std::path::Path;

use lbsoft::cross_section::{AngularCrossSection, RawCrossSection};
use lbsoft::diagnostics::TestFunction;
use lbsoft::geometry::{ModelParams, ParamsError};
use lbsoft::quadrature::QuadratureSettings;
use lbsoft::radial_measure::{GridSpec, MeasureError, RadialGrid};
use lbsoft::solver_det::GeneratorSettings;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {field}: {detail}")]
pub struct ConfigError {
    /// `line N` of the file, `--set`, or `validation`.
    pub location: String,
    pub field: String,
    pub detail: String,
}

impl ConfigError {
    fn at(location: impl Into<String>, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            field: field.into(),
            detail: detail.into(),
        }
    }

    fn invalid(field: impl Into<String>, detail: impl fmt::Display) -> Self {
        Self::at("validation", field, detail.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Word(String),
    List(Vec<Value>),
}

fn parse_value(text: &str) -> Result<Value, String> {
    let text = text.trim();
    let Some(inner) = text.strip_prefix('[') else {
        if text.is_empty() {
            return Err("empty value".into());
        }
        if text.contains(']') || text.contains(',') {
            return Err(format!("unexpected list syntax in '{text}'"));
        }
        return Ok(Value::Word(text.to_string()));
    };
    let inner = inner
        .strip_suffix(']')
        .ok_or_else(|| format!("unterminated list '{text}'"))?;
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.checked_sub(1).ok_or("unbalanced ']'")?,
            ',' if depth == 0 => {
                items.push(parse_value(&inner[start..i])?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced '['".into());
    }
    if !inner[start..].trim().is_empty() {
        items.push(parse_value(&inner[start..])?);
    } else if !items.is_empty() {
        return Err("trailing comma".into());
    }
    Ok(Value::List(items))
}

/// A float, or `[-][a*]pi[/b]`.
fn parse_number(word: &str) -> Result<f64, String> {
    let w = word.trim();
    if let Ok(x) = w.parse::<f64>() {
        return Ok(x);
    }
    if let Some(rest) = w.strip_prefix('-') {
        return parse_number(rest).map(|x| -x);
    }
    let bad = || format!("'{w}' is not a number");
    let (num, den) = match w.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().map_err(|_| bad())?),
        None => (w, 1.0),
    };
    let coef = match num.split_once('*') {
        Some((c, "pi")) => c.trim().parse::<f64>().map_err(|_| bad())?,
        None if num == "pi" => 1.0,
        _ => return Err(bad()),
    };
    Ok(coef * std::f64::consts::PI / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Det,
    Mc,
    Diagnose,
    Scan,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "det" => Some(Self::Det),
            "mc" => Some(Self::Mc),
            "diagnose" => Some(Self::Diagnose),
            "scan" => Some(Self::Scan),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Det => "det",
            Self::Mc => "mc",
            Self::Diagnose => "diagnose",
            Self::Scan => "scan",
        }
    }
}

/// Every setting of a run. Defaults reproduce the reference experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub gamma: f64,
    pub trunc_n: f64,
    pub horizon: f64,
    pub positivity_factor: f64,
    pub beta_atoms: Vec<(f64, f64)>,
    pub beta_density: Vec<(f64, f64, f64)>,
    pub grid: GridSpec<f64>,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub density_nodes: usize,
    /// `None` picks the largest step allowed by positivity.
    pub dt: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub particles: usize,
    /// Window widths reported as trajectory columns.
    pub window_eps: Vec<f64>,
    /// `eps` grid of the atom balance table.
    pub eps_grid: Vec<f64>,
    pub exit_eps: Vec<f64>,
    pub entry_eps: Vec<f64>,
    pub entry_radius: f64,
    pub far_radius: f64,
    pub n_list: Vec<f64>,
    pub phi: TestFunction,
    /// Dyadic levels `1 ± 2^-k` in the truncation scan radii.
    pub scan_levels: u32,
    pub scan_uniform: usize,
    /// `None` uses `3/sqrt(N) + 2h` for Monte Carlo runs and `2h` otherwise.
    pub w1_tol: Option<f64>,
}

fn log_grid(hi_exp: f64, lo_exp: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((hi_exp - lo_exp) * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|k| 10f64.powf(hi_exp - k as f64 / per_decade as f64))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Det,
            seed: 1,
            gamma: -1.5,
            trunc_n: 100.0,
            horizon: 0.5,
            positivity_factor: 0.2,
            beta_atoms: vec![(std::f64::consts::FRAC_PI_4, 1.0)],
            beta_density: Vec::new(),
            grid: GridSpec::default(),
            rel_tol: 1e-9,
            max_subdivisions: 2000,
            density_nodes: 32,
            dt: None,
            snapshot_times: vec![0.0, 0.05, 0.1, 0.25, 0.5],
            particles: 100_000,
            window_eps: vec![1e-3, 1e-2, 1e-1],
            eps_grid: vec![1e-3, 2e-3, 4e-3, 8e-3],
            exit_eps: log_grid(-2.0, -4.0, 4),
            entry_eps: log_grid(-3.0, -5.0, 4),
            entry_radius: 1.2,
            far_radius: 3.0,
            n_list: vec![1e2, 1e3, 1e4],
            phi: TestFunction::Radius,
            scan_levels: 24,
            scan_uniform: 40,
            w1_tol: None,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "mode",
    "seed",
    "model.gamma",
    "model.n",
    "model.horizon",
    "model.positivity_factor",
    "beta.atoms",
    "beta.density",
    "grid.levels",
    "grid.eps_max",
    "grid.background",
    "grid.r_max",
    "quadrature.rel_tol",
    "quadrature.max_subdivisions",
    "quadrature.density_nodes",
    "solver.dt",
    "snapshots.times",
    "mc.particles",
    "trajectory.window_eps",
    "diagnostics.eps_grid",
    "diagnostics.exit_eps",
    "diagnostics.entry_eps",
    "diagnostics.entry_radius",
    "diagnostics.far_radius",
    "diagnostics.n_list",
    "diagnostics.phi",
    "diagnostics.scan_levels",
    "diagnostics.scan_uniform",
    "compare.w1_tol",
];

fn word<'a>(v: &'a Value, key: &str) -> Result<&'a str, String> {
    match v {
        Value::Word(w) => Ok(w),
        Value::List(_) => Err(format!("{key} expects a single value")),
    }
}

fn number(v: &Value, key: &str) -> Result<f64, String> {
    parse_number(word(v, key)?)
}

fn integer<T: std::str::FromStr>(v: &Value, key: &str) -> Result<T, String> {
    let w = word(v, key)?;
    w.parse::<T>().map_err(|_| format!("'{w}' is not a non-negative integer"))
}

fn numbers(v: &Value, key: &str) -> Result<Vec<f64>, String> {
    match v {
        Value::List(items) => items.iter().map(|x| number(x, key)).collect(),
        Value::Word(_) => Err(format!("{key} expects a list like [1, 2]")),
    }
}

fn tuples<const K: usize>(v: &Value, key: &str) -> Result<Vec<[f64; K]>, String> {
    let Value::List(items) = v else {
        return Err(format!("{key} expects a list of {K}-element lists"));
    };
    items
        .iter()
        .map(|item| {
            let xs = numbers(item, key)?;
            xs.try_into()
                .map_err(|xs: Vec<f64>| format!("{key} entries need {K} numbers, got {}", xs.len()))
        })
        .collect()
}

fn auto_or<T>(v: &Value, key: &str, f: impl Fn(&Value, &str) -> Result<T, String>) -> Result<Option<T>, String> {
    match v {
        Value::Word(w) if w == "auto" => Ok(None),
        _ => f(v, key).map(Some),
    }
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment.
    fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let v = parse_value(raw)?;
        match key {
            "mode" => {
                let w = word(&v, key)?;
                self.mode = Mode::parse(w).ok_or_else(|| format!("unknown mode '{w}' (det, mc, diagnose, scan)"))?;
            }
            "seed" => self.seed = integer(&v, key)?,
            "model.gamma" => self.gamma = number(&v, key)?,
            "model.n" => self.trunc_n = number(&v, key)?,
            "model.horizon" => self.horizon = number(&v, key)?,
            "model.positivity_factor" => self.positivity_factor = number(&v, key)?,
            "beta.atoms" => self.beta_atoms = tuples::<2>(&v, key)?.into_iter().map(|[a, b]| (a, b)).collect(),
            "beta.density" => {
                self.beta_density = tuples::<3>(&v, key)?.into_iter().map(|[a, b, c]| (a, b, c)).collect()
            }
            "grid.levels" => self.grid.levels = integer(&v, key)?,
            "grid.eps_max" => self.grid.eps_max = number(&v, key)?,
            "grid.background" => self.grid.background = integer(&v, key)?,
            "grid.r_max" => self.grid.r_max = number(&v, key)?,
            "quadrature.rel_tol" => self.rel_tol = number(&v, key)?,
            "quadrature.max_subdivisions" => self.max_subdivisions = integer(&v, key)?,
            "quadrature.density_nodes" => self.density_nodes = integer(&v, key)?,
            "solver.dt" => self.dt = auto_or(&v, key, number)?,
            "snapshots.times" => self.snapshot_times = numbers(&v, key)?,
            "mc.particles" => self.particles = integer(&v, key)?,
            "trajectory.window_eps" => self.window_eps = numbers(&v, key)?,
            "diagnostics.eps_grid" => self.eps_grid = numbers(&v, key)?,
            "diagnostics.exit_eps" => self.exit_eps = numbers(&v, key)?,
            "diagnostics.entry_eps" => self.entry_eps = numbers(&v, key)?,
            "diagnostics.entry_radius" => self.entry_radius = number(&v, key)?,
            "diagnostics.far_radius" => self.far_radius = number(&v, key)?,
            "diagnostics.n_list" => self.n_list = numbers(&v, key)?,
            "diagnostics.phi" => {
                let w = word(&v, key)?;
                self.phi = TestFunction::parse(w).ok_or_else(|| format!("unknown test function '{w}' (norm, vx, bump)"))?;
            }
            "diagnostics.scan_levels" => self.scan_levels = integer(&v, key)?,
            "diagnostics.scan_uniform" => self.scan_uniform = integer(&v, key)?,
            "compare.w1_tol" => self.w1_tol = auto_or(&v, key, number)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parse a configuration file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let loc = format!("line {}", i + 1);
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(&loc, line, "expected 'key = value'"))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::at(&loc, key, "duplicate key"));
            }
            cfg.set(key, value).map_err(|e| ConfigError::at(&loc, key, e))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(path.display().to_string(), "config", e.to_string()))?;
        Self::parse(&text)
    }

    /// Apply a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::at("--set", assignment, "expected key=value"))?;
        self.set(key.trim(), value).map_err(|e| ConfigError::at("--set", key.trim(), e))
    }

    pub fn params(&self) -> Result<ModelParams<f64>, ConfigError> {
        let p = ModelParams {
            gamma: self.gamma,
            trunc_n: self.trunc_n,
            r0: 1.0,
            horizon: self.horizon,
            positivity_factor: self.positivity_factor,
        };
        p.validate().map_err(|e| {
            let field = match e {
                ParamsError::Gamma(_) => "model.gamma",
                ParamsError::Truncation(_) => "model.n",
                ParamsError::InitialRadius(_) => "model",
                ParamsError::Horizon(_) => "model.horizon",
                ParamsError::PositivityFactor(_) => "model.positivity_factor",
            };
            ConfigError::invalid(field, e)
        })?;
        Ok(p)
    }

    pub fn beta(&self) -> Result<AngularCrossSection<f64>, ConfigError> {
        let raw = RawCrossSection {
            atoms: self.beta_atoms.clone(),
            density: self.beta_density.clone(),
        };
        AngularCrossSection::validate(&raw).map_err(|e| ConfigError::invalid(e.field(), e))
    }

    pub fn radial_grid(&self) -> Result<RadialGrid<f64>, ConfigError> {
        RadialGrid::build(&self.grid).map_err(|e| match e {
            MeasureError::BadGridSpec { field, .. } => ConfigError::invalid(format!("grid.{field}"), e),
            _ => ConfigError::invalid("grid", e),
        })
    }

    pub fn quadrature(&self) -> Result<QuadratureSettings<f64>, ConfigError> {
        let q = QuadratureSettings {
            rel_tol: self.rel_tol,
            max_subdivisions: self.max_subdivisions,
            ..QuadratureSettings::default()
        };
        q.validate().map_err(|e| {
            let field = if self.max_subdivisions < 16 {
                "quadrature.max_subdivisions"
            } else {
                "quadrature.rel_tol"
            };
            ConfigError::invalid(field, e)
        })?;
        Ok(q)
    }

    pub fn generator_settings(&self) -> Result<GeneratorSettings<f64>, ConfigError> {
        Ok(GeneratorSettings {
            density_nodes: self.density_nodes,
            quadrature: self.quadrature()?,
        })
    }

    /// Check every field; the first failure names its key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.params()?;
        self.beta()?;
        self.radial_grid()?;
        self.quadrature()?;
        if self.density_nodes == 0 {
            return Err(ConfigError::invalid("quadrature.density_nodes", "must be >= 1"));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(ConfigError::invalid("solver.dt", format!("{dt} must be > 0 or 'auto'")));
            }
        }
        lbsoft::solver_det::validate_times(&self.snapshot_times, params.horizon)
            .map_err(|e| ConfigError::invalid("snapshots.times", e))?;
        if self.particles == 0 {
            return Err(ConfigError::invalid("mc.particles", "must be >= 1"));
        }
        let positive = |key: &str, xs: &[f64]| {
            if xs.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("{xs:?} must be finite and > 0")))
            }
        };
        positive("trajectory.window_eps", &self.window_eps)?;
        positive("diagnostics.eps_grid", &self.eps_grid)?;
        positive("diagnostics.exit_eps", &self.exit_eps)?;
        positive("diagnostics.entry_eps", &self.entry_eps)?;
        positive("diagnostics.n_list", &self.n_list)?;
        positive("diagnostics.entry_radius", &[self.entry_radius])?;
        positive("diagnostics.far_radius", &[self.far_radius])?;
        if let Some(t) = self.w1_tol {
            positive("compare.w1_tol", &[t])?;
        }
        if self.mode == Mode::Scan && self.n_list.len() < 2 {
            return Err(ConfigError::invalid("diagnostics.n_list", "scan mode needs at least two values"));
        }
        Ok(())
    }

    /// Resolved configuration with every key, in a form `parse` reads back
    /// to the same value.
    pub fn echo(&self) -> String {
        let num = |x: f64| format!("{x:?}");
        let list = |xs: &[f64]| format!("[{}]", xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "));
        let auto = |x: Option<f64>| x.map_or("auto".to_string(), num);
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "mode" => self.mode.as_str().to_string(),
                "seed" => self.seed.to_string(),
                "model.gamma" => num(self.gamma),
                "model.n" => num(self.trunc_n),
                "model.horizon" => num(self.horizon),
                "model.positivity_factor" => num(self.positivity_factor),
                "beta.atoms" => format!(
                    "[{}]",
                    self.beta_atoms
                        .iter()
                        .map(|&(a, b)| list(&[a, b]))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                "beta.density" => format!(
                    "[{}]",
                    self.beta_density
                        .iter()
                        .map(|&(a, b, c)| list(&[a, b, c]))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                "grid.levels" => self.grid.levels.to_string(),
                "grid.eps_max" => num(self.grid.eps_max),
                "grid.background" => self.grid.background.to_string(),
                "grid.r_max" => num(self.grid.r_max),
                "quadrature.rel_tol" => num(self.rel_tol),
                "quadrature.max_subdivisions" => self.max_subdivisions.to_string(),
                "quadrature.density_nodes" => self.density_nodes.to_string(),
                "solver.dt" => auto(self.dt),
                "snapshots.times" => list(&self.snapshot_times),
                "mc.particles" => self.particles.to_string(),
                "trajectory.window_eps" => list(&self.window_eps),
                "diagnostics.eps_grid" => list(&self.eps_grid),
                "diagnostics.exit_eps" => list(&self.exit_eps),
                "diagnostics.entry_eps" => list(&self.entry_eps),
                "diagnostics.entry_radius" => num(self.entry_radius),
                "diagnostics.far_radius" => num(self.far_radius),
                "diagnostics.n_list" => list(&self.n_list),
                "diagnostics.phi" => self.phi.name().to_string(),
                "diagnostics.scan_levels" => self.scan_levels.to_string(),
                "diagnostics.scan_uniform" => self.scan_uniform.to_string(),
                "compare.w1_tol" => auto(self.w1_tol),
                _ => unreachable!("key list and echo disagree"),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}
