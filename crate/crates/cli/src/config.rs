//! Scenario configuration: a TOML file with one table per concern.
//!
//! ```toml
//! name = "alternating"
//!
//! [grid]
//! resolution = 256
//!
//! [time]
//! end = 3.0
//! dt = 0.005
//! snapshot_every = 0.25
//!
//! [velocity]
//! kind = "alternating_shear"
//! amplitude = 1.0
//! half_period = 0.5
//!
//! [initial]
//! kind = "modes"
//! modes = [{ k = [1, 0], amplitude = 2.0 }]
//!
//! [bounds]
//! kinds = ["lipschitz_exponential", "kinetic_linear"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use mixlab_core::bounds::BoundKind;
use mixlab_core::bressan::Timeline;
use mixlab_core::velocity::RegularityBudget;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub velocity: VelocityConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub mixing: MixingConfig,
    #[serde(default)]
    pub estimates: EstimatesConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub start: f64,
    pub end: f64,
    pub dt: f64,
    /// Ignored by Bressan runs, which snapshot at step boundaries.
    pub snapshot_every: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityConfig {
    #[serde(flatten)]
    pub model: VelocitySpec,
    /// Declared budgets; each must cover the model's own value.
    #[serde(default, skip_serializing_if = "DeclaredBudget::is_empty")]
    pub budget: DeclaredBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    Translation { velocity: [f64; 2] },
    SteadyShear { amplitude: f64 },
    AlternatingShear { amplitude: f64, half_period: f64 },
    Bressan { timeline: Timeline },
    /// Velocity from a stream function stored as a field binary.
    GridSampled { stream_function: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBudget {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enstrophy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1p_norm: Option<f64>,
}

impl DeclaredBudget {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn slots(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("lip", self.lip),
            ("kinetic", self.kinetic),
            ("enstrophy", self.enstrophy),
            ("bv", self.bv),
            ("sup_norm", self.sup_norm),
            ("w1p_norm", self.w1p_norm),
        ]
    }

    /// Overrides the model budget, refusing declarations below it.
    pub fn apply(&self, model: &RegularityBudget) -> Result<RegularityBudget, ConfigError> {
        let mut out = *model;
        for ((name, declared), (_, own)) in self.slots().into_iter().zip(model.entries()) {
            let Some(v) = declared else { continue };
            if !(v >= 0.0) {
                return Err(ConfigError::at(format!("velocity.budget.{name}"), format!("{v} is not a budget")));
            }
            if v < own * (1.0 - 1e-9) || (own.is_infinite() && v.is_finite()) {
                return Err(ConfigError::at(
                    format!("velocity.budget.{name}"),
                    format!("declared {v} is below the model's {own}"),
                ));
            }
            match name {
                "lip" => out.lip = v,
                "kinetic" => out.kinetic = v,
                "enstrophy" => out.enstrophy = v,
                "bv" => out.bv = v,
                "sup_norm" => out.sup_norm = v,
                _ => out.w1p_norm = v,
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Checkerboard { level: u32 },
    HalfHalf,
    /// Sum of `amplitude cos(2 pi k.x + phase)`.
    Modes { modes: Vec<ModeSpec> },
    Random { seed: u64, kmax: i64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: [i64; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    pub kappa_prime: f64,
    /// Scan only the first radii; all grid steps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii_count: Option<usize>,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self { kappa_prime: 1.0 / 3.0, radii_count: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Maximal,
    GFunctional,
    Lusin,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesConfig {
    #[serde(default)]
    pub enabled: Vec<EstimateKind>,
    pub p: f64,
    /// Excluded measure for the Lusin report.
    pub eta: f64,
    pub flow_resolution: usize,
    pub pairs: usize,
}

impl Default for EstimatesConfig {
    fn default() -> Self {
        Self { enabled: Vec::new(), p: 2.0, eta: 0.1, flow_resolution: 64, pairs: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub kinds: Vec<BoundKind>,
    pub tolerance: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { kinds: Vec::new(), tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
    Fields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub log_scale: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Csv, Format::Json, Format::Svg], log_scale: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key the message refers to, when there is one.
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: Some(key.into()), line: None, message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { key: None, line: None, message: message.into() }
    }

    fn locate(mut self, text: &str) -> Self {
        if self.line.is_none() {
            self.line = self.key.as_deref().and_then(|k| locate_key(text, k));
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of a dotted key, following `[table]` headers and inline
/// `a.b = ...` keys. Falls back to the table header.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        let full = if current.is_empty() { lhs.to_string() } else { format!("{current}.{lhs}") };
        if full == dotted || (current == table && lhs == key) {
            return Some(i + 1);
        }
    }
    header
}

impl ScenarioConfig {
    /// Parses and validates; messages carry the offending line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            ConfigError { key: None, line, message: e.message().to_string() }
        })?;
        cfg.validate().map_err(|e| e.locate(text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|mut e| {
            e.message = format!("{}: {}", path.display(), e.message);
            e
        })
    }

    /// Canonical TOML form; parsing it gives back an equal config.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolves relative input paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let VelocitySpec::GridSampled { stream_function } = &mut self.velocity.model {
            fix(stream_function);
        }
        if let InitialConfig::File { path } = &mut self.initial {
            fix(path);
        }
    }

    pub fn is_bressan(&self) -> bool {
        matches!(self.velocity.model, VelocitySpec::Bressan { .. })
    }

    /// Snapshot times of an advected run: `start + j * snapshot_every`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let t = &self.time;
        let count = ((t.end - t.start) / t.snapshot_every).round() as usize;
        let mut out: Vec<f64> = (0..=count).map(|j| t.start + j as f64 * t.snapshot_every).collect();
        if let Some(last) = out.last_mut() {
            *last = t.end;
        }
        out
    }

    /// Step range `(first, last)` of a Bressan run.
    pub fn bressan_steps(&self) -> Option<(u32, u32)> {
        let VelocitySpec::Bressan { timeline } = self.velocity.model else { return None };
        let find = |t: f64| (0..40u32).find(|&k| (timeline.step_start(k) - t).abs() <= 1e-12);
        Some((find(self.time.start)?, find(self.time.end)?))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.grid.resolution;
        if n < 8 || !n.is_power_of_two() {
            return Err(ConfigError::at("grid.resolution", format!("{n} is not a power of two >= 8")));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(ConfigError::at("time.dt", "must be positive"));
        }
        if !(t.start >= 0.0 && t.end > t.start && t.end.is_finite()) {
            return Err(ConfigError::at("time.end", "need 0 <= start < end"));
        }
        match &self.velocity.model {
            VelocitySpec::Translation { velocity } => {
                if !velocity.iter().all(|v| v.is_finite()) {
                    return Err(ConfigError::at("velocity.velocity", "must be finite"));
                }
            }
            VelocitySpec::SteadyShear { amplitude } => positive("velocity.amplitude", *amplitude)?,
            VelocitySpec::AlternatingShear { amplitude, half_period } => {
                positive("velocity.amplitude", *amplitude)?;
                positive("velocity.half_period", *half_period)?;
            }
            VelocitySpec::Bressan { .. } => {
                let InitialConfig::Checkerboard { level } = self.initial else {
                    return Err(ConfigError::at("initial.kind", "bressan runs start from a checkerboard"));
                };
                let Some((first, last)) = self.bressan_steps() else {
                    return Err(ConfigError::at("time.end", "start and end must be step boundaries of the timeline"));
                };
                if first != level {
                    return Err(ConfigError::at(
                        "time.start",
                        format!("checkerboard level {level} starts at step {level}, not {first}"),
                    ));
                }
                if n % (1usize << (last + 2)) != 0 {
                    return Err(ConfigError::at(
                        "grid.resolution",
                        format!("{n} cannot represent checkerboard level {last}"),
                    ));
                }
            }
            VelocitySpec::GridSampled { stream_function } => exists("velocity.stream_function", stream_function)?,
        }
        if !self.is_bressan() {
            positive("time.snapshot_every", t.snapshot_every)?;
            let count = (t.end - t.start) / t.snapshot_every;
            if (count - count.round()).abs() > 1e-9 * count.max(1.0) {
                return Err(ConfigError::at("time.snapshot_every", "must divide end - start"));
            }
            if t.start != 0.0 {
                return Err(ConfigError::at("time.start", "advected runs start at 0"));
            }
        }
        match &self.initial {
            InitialConfig::Checkerboard { level } => {
                if n % (1usize << (level + 2)) != 0 {
                    return Err(ConfigError::at("initial.level", format!("{n} cannot represent level {level}")));
                }
            }
            InitialConfig::HalfHalf => {}
            InitialConfig::Modes { modes } => {
                if modes.is_empty() {
                    return Err(ConfigError::at("initial.modes", "empty mode list"));
                }
                for m in modes {
                    if m.k.iter().any(|k| k.unsigned_abs() as usize >= n / 2) {
                        return Err(ConfigError::at("initial.modes", format!("mode {:?} not resolved at {n}", m.k)));
                    }
                }
            }
            InitialConfig::Random { kmax, .. } => {
                if *kmax < 1 || *kmax as usize >= n / 4 {
                    return Err(ConfigError::at("initial.kmax", format!("kmax must lie in [1, {})", n / 4)));
                }
            }
            InitialConfig::File { path } => exists("initial.path", path)?,
        }
        let kp = self.mixing.kappa_prime;
        if !(kp > 0.0 && kp < 1.0) {
            return Err(ConfigError::at("mixing.kappa_prime", "must lie in (0, 1)"));
        }
        if self.mixing.radii_count == Some(0) {
            return Err(ConfigError::at("mixing.radii_count", "must be positive"));
        }
        let e = &self.estimates;
        if !(e.p > 1.0) {
            return Err(ConfigError::at("estimates.p", "must exceed 1"));
        }
        if !(e.eta > 0.0 && e.eta < 1.0) {
            return Err(ConfigError::at("estimates.eta", "must lie in (0, 1)"));
        }
        if e.flow_resolution < 8 || !e.flow_resolution.is_power_of_two() {
            return Err(ConfigError::at("estimates.flow_resolution", "must be a power of two >= 8"));
        }
        let geometric = e.enabled.contains(&EstimateKind::Geometric) || self.bounds.kinds.contains(&BoundKind::GeometricExponential);
        if geometric && self.initial != InitialConfig::HalfHalf {
            return Err(ConfigError::at("initial.kind", "the geometric bound is stated for the half_half datum"));
        }
        if !(self.bounds.tolerance >= 0.0) {
            return Err(ConfigError::at("bounds.tolerance", "must be >= 0"));
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(key, format!("{v} must be positive")))
    }
}

fn exists(key: &str, p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::at(key, format!("{} does not exist", p.display())))
    }
}
