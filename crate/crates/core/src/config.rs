//! Run configuration: a TOML document with `[grid]`, `[time]`, `[model]`,
//! `[kinetics]`, `[resupply]`, `[initial]`, `[monitors]` and `[output]`
//! sections. Errors carry the line they refer to.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TaxisFlux};
use crate::kinetics::{Envelope, GrowthLaw, InitialData, KineticSpec, ResupplySpec, SpatialProfile, TemporalFactor};
use crate::monitors::{MonitorSettings, DEFAULT_SLOPE_TOL};
use crate::solver::{ModelParams, StepControl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub time: TimeSection,
    pub model: ModelSection,
    pub kinetics: KineticsSection,
    pub resupply: ResupplySection,
    pub initial: InitialSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    #[serde(default = "TimeSection::default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "TimeSection::default_safety")]
    pub safety: f64,
    #[serde(default = "TimeSection::default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "TimeSection::default_max_iterations")]
    pub max_iterations: usize,
}

impl TimeSection {
    fn default_dt_max() -> f64 {
        StepControl::default().dt_max
    }
    fn default_safety() -> f64 {
        StepControl::default().safety
    }
    fn default_tolerance() -> f64 {
        StepControl::default().tolerance
    }
    fn default_max_iterations() -> usize {
        StepControl::default().max_iterations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mu: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub taxis: TaxisFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawName {
    Power,
    Allee,
    Logistic,
}

/// Flat keys: `f_law`, `g_law`, the exponents, the law coefficients
/// (`f_k`, `f_l` for power laws; `f_a`, `f_b` for logistic ones) and
/// optional envelope overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSection {
    pub f_law: LawName,
    pub g_law: LawName,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_b: Option<f64>,
    /// `[k_lower, l_lower, K_upper, L_upper]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_envelope: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_envelope: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Constant,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResupplySection {
    pub profile: ProfileName,
    /// The constant level, or the bump's peak.
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Absent for a time-independent resupply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "lowercase", deny_unknown_fields)]
pub enum Recipe {
    Constant { value: f64 },
    /// floor + amplitude · exp(−|x − center|² / (2 width²)).
    Gaussian { center: [f64; 2], width: f64, amplitude: f64, floor: f64 },
    /// Independent uniform draws on [mean − amplitude, mean + amplitude].
    Random { seed: u64, mean: f64, amplitude: f64 },
}

impl Recipe {
    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        match *self {
            Recipe::Constant { value } => Ok(grid.constant(value)),
            Recipe::Gaussian { center, width, amplitude, floor } => {
                if !(width > 0.0) {
                    return Err(Error::Config(format!("gaussian width must be > 0, got {width}")));
                }
                Ok(grid.sample(|x, y| {
                    let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                    floor + amplitude * (-d2 / (2.0 * width * width)).exp()
                }))
            }
            Recipe::Random { seed, mean, amplitude } => {
                if !(amplitude >= 0.0) {
                    return Err(Error::Config(format!("random amplitude must be >= 0, got {amplitude}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..grid.cell_count())
                    .map(|_| mean + amplitude * (2.0 * rng.gen::<f64>() - 1.0))
                    .collect::<Vec<_>>();
                Ok(Field::from_vec(values))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u: Recipe,
    pub v: Recipe,
    pub w: Recipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default = "MonitorSection::default_cadence")]
    pub cadence: usize,
    #[serde(default = "MonitorSection::default_delta")]
    pub delta: f64,
    #[serde(default = "MonitorSection::default_q")]
    pub q: f64,
    #[serde(default = "MonitorSection::default_tol_slope")]
    pub tol_slope: f64,
}

impl MonitorSection {
    fn default_cadence() -> usize {
        MonitorSettings::default().cadence
    }
    fn default_delta() -> f64 {
        MonitorSettings::default().delta
    }
    fn default_q() -> f64 {
        MonitorSettings::default().q
    }
    fn default_tol_slope() -> f64 {
        DEFAULT_SLOPE_TOL
    }
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            cadence: Self::default_cadence(),
            delta: Self::default_delta(),
            q: Self::default_q(),
            tol_slope: Self::default_tol_slope(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Largest stride (in steps) between FLD1 snapshots; the first 1000
    /// steps are written more densely. 0 keeps only the first and last
    /// states.
    #[serde(default)]
    pub snapshot_every: usize,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Grid,
    pub params: ModelParams,
    pub control: StepControl,
    pub initial: InitialData,
    pub t_end: f64,
    pub monitors: MonitorSettings,
    pub snapshot_every: usize,
    pub output_dir: Option<PathBuf>,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = …` inside `[section]` (or a dotted subsection of it).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some((k, _)) = trimmed.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn at(text: Option<&str>, section: &str, key: &str, msg: String) -> Error {
    match text.and_then(|t| locate(t, section, key)) {
        Some(line) => Error::Config(format!("line {line}: [{section}] {key}: {msg}")),
        None => Error::Config(format!("[{section}] {key}: {msg}")),
    }
}

impl Config {
    /// Parses and validates. Syntax and type errors report the offending
    /// line; so do semantic errors when the key can be located.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => Error::Config(format!("line {}: {msg}", line_of(text, span.start))),
                None => Error::Config(msg),
            }
        })?;
        cfg.resolve_with(Some(text))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with(None)
    }

    fn resolve_with(&self, text: Option<&str>) -> Result<Resolved> {
        let g = &self.grid;
        let grid = Grid::new(g.nx, g.ny, g.lx, g.ly).map_err(|e| at(text, "grid", "nx", e.to_string()))?;

        let t = &self.time;
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return Err(at(text, "time", "t_end", format!("must be a finite number >= 0, got {}", t.t_end)));
        }
        let control = StepControl {
            dt_max: t.dt_max,
            safety: t.safety,
            tolerance: t.tolerance,
            max_iterations: t.max_iterations,
        };
        control.validate().map_err(|e| at(text, "time", "dt_max", e.to_string()))?;

        let kinetics = self.kinetics.to_spec().map_err(|e| at(text, "kinetics", "f_law", e.to_string()))?;
        let resupply = self.resupply.to_spec().map_err(|e| at(text, "resupply", "profile", e.to_string()))?;
        let params = ModelParams {
            mu: self.model.mu,
            epsilon: self.model.epsilon,
            resupply,
            kinetics,
            taxis: self.model.taxis,
        };
        params.validate().map_err(|e| {
            let key = if !(self.model.mu >= 0.0) { "mu" } else { "epsilon" };
            at(text, "model", key, e.to_string())
        })?;

        let i = &self.initial;
        let initial = InitialData {
            u0: i.u.sample(&grid).map_err(|e| at(text, "initial.u", "recipe", e.to_string()))?,
            v0: i.v.sample(&grid).map_err(|e| at(text, "initial.v", "recipe", e.to_string()))?,
            w0: i.w.sample(&grid).map_err(|e| at(text, "initial.w", "recipe", e.to_string()))?,
        };
        initial.validate(&grid).map_err(|e| at(text, "initial", "recipe", e.to_string()))?;

        let m = &self.monitors;
        if m.cadence == 0 {
            return Err(at(text, "monitors", "cadence", "must be at least 1".into()));
        }
        if !(m.delta > 0.0) {
            return Err(at(text, "monitors", "delta", format!("must be > 0, got {}", m.delta)));
        }
        if !(m.q > 1.0) {
            return Err(at(text, "monitors", "q", format!("must be > 1, got {}", m.q)));
        }
        Ok(Resolved {
            grid,
            params,
            control,
            initial,
            t_end: t.t_end,
            monitors: MonitorSettings {
                cadence: m.cadence,
                delta: m.delta,
                q: m.q,
                tol_slope: m.tol_slope,
                solve_tolerance: control.tolerance,
            },
            snapshot_every: self.output.snapshot_every,
            output_dir: self.output.dir.clone(),
        })
    }
}

impl KineticsSection {
    fn law(name: LawName, exponent: f64, k: Option<f64>, l: Option<f64>, a: Option<f64>, b: Option<f64>) -> GrowthLaw {
        match name {
            LawName::Power => GrowthLaw::Power { k: k.unwrap_or(1.0), l: l.unwrap_or(1.0), exponent },
            LawName::Allee => GrowthLaw::Allee,
            LawName::Logistic => GrowthLaw::Logistic { a: a.unwrap_or(1.0), b: b.unwrap_or(1.0), exponent },
        }
    }

    pub fn to_spec(&self) -> Result<KineticSpec> {
        let law_f = Self::law(self.f_law, self.alpha, self.f_k, self.f_l, self.f_a, self.f_b);
        let law_g = Self::law(self.g_law, self.beta, self.g_k, self.g_l, self.g_a, self.g_b);
        let env = |e: Option<[f64; 4]>, law: &GrowthLaw| match e {
            Some([k_lower, l_lower, k_upper, l_upper]) => Envelope { k_lower, l_lower, k_upper, l_upper },
            None => law.default_envelope(),
        };
        let spec = KineticSpec {
            law_f,
            law_g,
            alpha: self.alpha,
            beta: self.beta,
            env_f: env(self.f_envelope, &law_f),
            env_g: env(self.g_envelope, &law_g),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ResupplySection {
    pub fn to_spec(&self) -> Result<ResupplySpec> {
        let profile = match self.profile {
            ProfileName::Constant => SpatialProfile::Constant { value: self.amplitude },
            ProfileName::Gaussian => SpatialProfile::Gaussian {
                center: self.center.ok_or_else(|| Error::Config("gaussian resupply needs `center`".into()))?,
                width: self.width.ok_or_else(|| Error::Config("gaussian resupply needs `width`".into()))?,
                amplitude: self.amplitude,
            },
        };
        let factor = match self.decay_lambda {
            Some(lambda) => TemporalFactor::Exponential { lambda },
            None => TemporalFactor::Constant,
        };
        let spec = ResupplySpec { profile, factor };
        spec.validate()?;
        Ok(spec)
    }
}
