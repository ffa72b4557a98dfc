//! Growth laws, nutrient resupply, initial data and the parameter gates.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, Field, Grid};

/// Margins below this are reported as knife-edge even when the gate passes.
pub const KNIFE_EDGE: f64 = 1e-9;

/// 1 + √2, the degradation exponent threshold.
pub const ALPHA_THRESHOLD: f64 = 1.0 + SQRT_2;

/// A kinetic source term s ↦ f(s) on s ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum GrowthLaw {
    /// L − K·s^exponent.
    Power { k: f64, l: f64, exponent: f64 },
    /// s(1 − s)(s − 2).
    Allee,
    /// a·s − b·s^exponent.
    Logistic { a: f64, b: f64, exponent: f64 },
}

/// Envelope constants: −k s^p − l ≤ f(s) ≤ −K s^p + L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub k_lower: f64,
    pub l_lower: f64,
    pub k_upper: f64,
    pub l_upper: f64,
}

impl GrowthLaw {
    pub fn eval(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::Domain(format!("growth law evaluated at s = {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    /// Evaluation without the sign check, for hot loops over clamped fields.
    #[inline]
    pub fn eval_unchecked(&self, s: f64) -> f64 {
        match *self {
            GrowthLaw::Power { k, l, exponent } => l - k * s.powf(exponent),
            GrowthLaw::Allee => s * (1.0 - s) * (s - 2.0),
            GrowthLaw::Logistic { a, b, exponent } => a * s - b * s.powf(exponent),
        }
    }

    /// Finite-difference estimate of |f'(s)|.
    pub fn slope(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        let eta = 1e-6 * s.max(1.0);
        let lo = (s - eta).max(0.0);
        let hi = s + eta;
        ((self.eval_unchecked(hi) - self.eval_unchecked(lo)) / (hi - lo)).abs()
    }

    /// The exponent governing the large-s behaviour.
    pub fn exponent(&self) -> f64 {
        match *self {
            GrowthLaw::Power { exponent, .. } | GrowthLaw::Logistic { exponent, .. } => exponent,
            GrowthLaw::Allee => 3.0,
        }
    }

    /// Envelope constants shipped with each law.
    pub fn default_envelope(&self) -> Envelope {
        match *self {
            GrowthLaw::Power { k, l, .. } => Envelope {
                k_lower: k,
                l_lower: 0.0,
                k_upper: k,
                l_upper: l,
            },
            // -2s³ - 3 ≤ -s³ + 3s² - 2s ≤ -s³/2 + 9; the upper constant has to
            // cover max(s³/2 - 3s² + 2s) ≈ -8.35 near s ≈ 3.63.
            GrowthLaw::Allee => Envelope {
                k_lower: 2.0,
                l_lower: 3.0,
                k_upper: 0.5,
                l_upper: 9.0,
            },
            GrowthLaw::Logistic { a, b, exponent } => {
                // a s - b s^p ≤ -(b/2) s^p + max_s (a s - (b/2) s^p)
                let l_upper = if a > 0.0 && b > 0.0 && exponent > 1.0 {
                    let s_star = (2.0 * a / (b * exponent)).powf(1.0 / (exponent - 1.0));
                    a * s_star - 0.5 * b * s_star.powf(exponent)
                } else {
                    0.0
                };
                Envelope {
                    k_lower: b,
                    l_lower: 0.0,
                    k_upper: 0.5 * b,
                    l_upper: l_upper.max(0.0),
                }
            }
        }
    }

    fn check_structure(&self, which: &str) -> Result<()> {
        let ok = match *self {
            GrowthLaw::Power { k, l, exponent } => {
                k.is_finite() && l.is_finite() && exponent.is_finite() && exponent > 0.0
            }
            GrowthLaw::Allee => true,
            GrowthLaw::Logistic { a, b, exponent } => {
                a.is_finite() && b.is_finite() && exponent.is_finite() && exponent > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("growth law {which} has non-finite or invalid coefficients: {self:?}")))
        }
    }
}

/// Growth laws for both populations with their declared envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticSpec {
    pub law_f: GrowthLaw,
    pub law_g: GrowthLaw,
    pub alpha: f64,
    pub beta: f64,
    pub env_f: Envelope,
    pub env_g: Envelope,
}

impl KineticSpec {
    /// Uses each law's own exponent and shipped envelope.
    pub fn from_laws(law_f: GrowthLaw, law_g: GrowthLaw) -> Result<Self> {
        let spec = Self {
            law_f,
            law_g,
            alpha: law_f.exponent(),
            beta: law_g.exponent(),
            env_f: law_f.default_envelope(),
            env_g: law_g.default_envelope(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Pure powers 1 − s^α and 1 − s^β.
    pub fn power(alpha: f64, beta: f64) -> Result<Self> {
        Self::from_laws(
            GrowthLaw::Power { k: 1.0, l: 1.0, exponent: alpha },
            GrowthLaw::Power { k: 1.0, l: 1.0, exponent: beta },
        )
    }

    /// ρ = min{α, β}.
    pub fn rho(&self) -> f64 {
        self.alpha.min(self.beta)
    }

    pub fn eval_f(&self, s: f64) -> Result<f64> {
        self.law_f.eval(s)
    }

    pub fn eval_g(&self, s: f64) -> Result<f64> {
        self.law_g.eval(s)
    }

    /// Structural validity: exponents above one, positive rates, nonnegative
    /// offsets and f(0), g(0) ≥ 0.
    pub fn validate(&self) -> Result<()> {
        self.law_f.check_structure("f")?;
        self.law_g.check_structure("g")?;
        for (name, e) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(e > 1.0 && e.is_finite()) {
                return Err(Error::Domain(format!("{name} must be a finite number > 1, got {e}")));
            }
        }
        for (which, env) in [("f", &self.env_f), ("g", &self.env_g)] {
            if !(env.k_lower > 0.0 && env.k_upper > 0.0) {
                return Err(Error::Domain(format!(
                    "envelope rates for {which} must be positive: {env:?}"
                )));
            }
            if !(env.l_lower >= 0.0 && env.l_upper >= 0.0) {
                return Err(Error::Domain(format!(
                    "envelope offsets for {which} must be nonnegative: {env:?}"
                )));
            }
            if ![env.k_lower, env.k_upper, env.l_lower, env.l_upper]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::Domain(format!("envelope for {which} is not finite")));
            }
        }
        let f0 = self.law_f.eval_unchecked(0.0);
        let g0 = self.law_g.eval_unchecked(0.0);
        if f0 < 0.0 {
            return Err(Error::Domain(format!("f(0) = {f0} < 0")));
        }
        if g0 < 0.0 {
            return Err(Error::Domain(format!("g(0) = {g0} < 0")));
        }
        Ok(())
    }
}

/// Sample points for envelope validation: 0 and 59 geometric points on [1e-3, 1e6].
pub fn envelope_samples() -> Vec<f64> {
    let mut s = Vec::with_capacity(60);
    s.push(0.0);
    for i in 0..59 {
        s.push(10f64.powf(-3.0 + 9.0 * i as f64 / 58.0));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawEnvelopeReport {
    pub holds: bool,
    /// Smallest slack of the lower inequality, scaled by 1 + s^p.
    pub lower_margin: f64,
    /// Smallest slack of the upper inequality, scaled by 1 + s^p.
    pub upper_margin: f64,
    /// f(s)/s^p at the largest sample; must sit inside [−k, −K] up to offsets.
    pub asymptotic_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub holds: bool,
    pub worst_margin: f64,
    pub f: LawEnvelopeReport,
    pub g: LawEnvelopeReport,
}

fn check_law(law: &GrowthLaw, p: f64, env: &Envelope) -> LawEnvelopeReport {
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    for s in envelope_samples() {
        let sp = s.powf(p);
        let f = law.eval_unchecked(s);
        let scale = 1.0 + sp;
        lower_margin = lower_margin.min((f - (-env.k_lower * sp - env.l_lower)) / scale);
        upper_margin = upper_margin.min(((-env.k_upper * sp + env.l_upper) - f) / scale);
    }
    let s_big: f64 = 1e6;
    let sp = s_big.powf(p);
    let ratio = law.eval_unchecked(s_big) / sp;
    let ratio_ok = ratio >= -env.k_lower - env.l_lower / sp && ratio <= -env.k_upper + env.l_upper / sp;
    let holds = lower_margin >= 0.0 && upper_margin >= 0.0 && ratio_ok && lower_margin.is_finite();
    LawEnvelopeReport {
        holds,
        lower_margin,
        upper_margin,
        asymptotic_ratio: ratio,
    }
}

/// Sampled check of both envelope inequalities for f and g.
pub fn validate_envelope(spec: &KineticSpec) -> EnvelopeReport {
    let f = check_law(&spec.law_f, spec.alpha, &spec.env_f);
    let g = check_law(&spec.law_g, spec.beta, &spec.env_g);
    let worst_margin = f
        .lower_margin
        .min(f.upper_margin)
        .min(g.lower_margin)
        .min(g.upper_margin);
    EnvelopeReport {
        holds: f.holds && g.holds,
        worst_margin,
        f,
        g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Gate {
    pub pass: bool,
    pub alpha_ok: bool,
    pub min_cond_ok: bool,
    /// α − (1 + √2).
    pub alpha_margin: f64,
    /// min{α, β} − (α + 1)/(α − 1).
    pub min_cond_margin: f64,
    pub knife_edge: bool,
}

/// Global generalized solvability gate: α > 1 + √2 and min{α,β} > (α+1)/(α−1).
pub fn check_theorem1(spec: &KineticSpec) -> Theorem1Gate {
    let (alpha, beta) = (spec.alpha, spec.beta);
    let alpha_margin = alpha - ALPHA_THRESHOLD;
    let min_cond_margin = alpha.min(beta) - (alpha + 1.0) / (alpha - 1.0);
    let alpha_ok = alpha_margin > 0.0;
    let min_cond_ok = min_cond_margin > 0.0;
    Theorem1Gate {
        pass: alpha_ok && min_cond_ok,
        alpha_ok,
        min_cond_ok,
        alpha_margin,
        min_cond_margin,
        knife_edge: alpha_margin.abs() < KNIFE_EDGE || min_cond_margin.abs() < KNIFE_EDGE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Gate {
    pub pass: bool,
    pub theorem1: Theorem1Gate,
    pub beta_ok: bool,
    /// β − (1 + √2).
    pub beta_margin: f64,
    pub mu_ok: bool,
    pub r_integrable: bool,
    pub knife_edge: bool,
}

/// Eventual regularity gate: Theorem-1 gate, β > 1 + √2, μ > 0 and
/// ∫₀^∞ ‖r(·,t)‖∞ dt < ∞.
pub fn check_theorem2(spec: &KineticSpec, mu: f64, resupply: &ResupplySpec) -> Theorem2Gate {
    let theorem1 = check_theorem1(spec);
    let beta_margin = spec.beta - ALPHA_THRESHOLD;
    let beta_ok = beta_margin > 0.0;
    let mu_ok = mu > 0.0;
    let r_integrable = resupply.r_double_star().is_finite();
    Theorem2Gate {
        pass: theorem1.pass && beta_ok && mu_ok && r_integrable,
        theorem1,
        beta_ok,
        beta_margin,
        mu_ok,
        r_integrable,
        knife_edge: theorem1.knife_edge || beta_margin.abs() < KNIFE_EDGE || (mu_ok && mu < KNIFE_EDGE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase")]
pub enum SpatialProfile {
    Constant { value: f64 },
    /// amplitude · exp(−|x − center|² / (2 width²)).
    Gaussian { center: [f64; 2], width: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decay", rename_all = "lowercase")]
pub enum TemporalFactor {
    Constant,
    /// exp(−λ t).
    Exponential { lambda: f64 },
}

/// Nutrient resupply r(x, t) = profile(x) · factor(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResupplySpec {
    pub profile: SpatialProfile,
    pub factor: TemporalFactor,
}

impl ResupplySpec {
    pub fn constant(value: f64) -> Self {
        Self {
            profile: SpatialProfile::Constant { value },
            factor: TemporalFactor::Constant,
        }
    }

    pub fn none() -> Self {
        Self::constant(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self.profile {
            SpatialProfile::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::Domain(format!("resupply level must be >= 0, got {value}")));
                }
            }
            SpatialProfile::Gaussian { center, width, amplitude } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::Domain(format!("resupply amplitude must be >= 0, got {amplitude}")));
                }
                if !(width > 0.0 && width.is_finite()) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::Domain("resupply bump needs a finite centre and positive width".into()));
                }
            }
        }
        if let TemporalFactor::Exponential { lambda } = self.factor {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Domain(format!("decay rate must be > 0, got {lambda}")));
            }
        }
        Ok(())
    }

    pub fn profile_at(&self, x: f64, y: f64) -> f64 {
        match self.profile {
            SpatialProfile::Constant { value } => value,
            SpatialProfile::Gaussian { center, width, amplitude } => {
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn factor_at(&self, t: f64) -> f64 {
        match self.factor {
            TemporalFactor::Constant => 1.0,
            TemporalFactor::Exponential { lambda } => (-lambda * t).exp(),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("resupply evaluated at t = {t}")));
        }
        Ok(self.profile_at(x, y) * self.factor_at(t))
    }

    /// r(·, t) sampled on the grid.
    pub fn field(&self, grid: &Grid, t: f64) -> Field {
        let factor = self.factor_at(t);
        grid.sample(|x, y| self.profile_at(x, y) * factor)
    }

    /// Spatial peak of the profile; the Gaussian peak assumes its centre lies in Ω.
    pub fn spatial_peak(&self) -> f64 {
        match self.profile {
            SpatialProfile::Constant { value } => value,
            SpatialProfile::Gaussian { amplitude, .. } => amplitude,
        }
    }

    /// max_x r(x, t).
    pub fn sup_at(&self, t: f64) -> f64 {
        self.spatial_peak() * self.factor_at(t)
    }

    /// r_* = sup_t max_x r.
    pub fn r_star(&self) -> f64 {
        self.spatial_peak()
    }

    /// r_** = ∫₀^∞ max_x r dt; +∞ when the factor does not decay.
    pub fn r_double_star(&self) -> f64 {
        let peak = self.spatial_peak();
        match self.factor {
            TemporalFactor::Exponential { lambda } => peak / lambda,
            TemporalFactor::Constant if peak == 0.0 => 0.0,
            TemporalFactor::Constant => f64::INFINITY,
        }
    }
}

/// Initial densities (u₀, v₀, w₀).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Field,
    pub v0: Field,
    pub w0: Field,
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, f, needs_mass) in [("u0", &self.u0, true), ("v0", &self.v0, true), ("w0", &self.w0, false)] {
            grid.check(f, name)?;
            if !f.all_finite() {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
            if f.min() < 0.0 {
                return Err(Error::Domain(format!("{name} has negative entries (min {})", f.min())));
            }
            if needs_mass && integrate(f, grid)? <= 0.0 {
                return Err(Error::Domain(format!("{name} must have positive mass")));
            }
        }
        Ok(())
    }
}
