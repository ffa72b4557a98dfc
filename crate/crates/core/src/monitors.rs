//! Runtime checks of the a priori bounds, identities and decay statements,
//! evaluated on solver states and on sliding unit time windows.
//!
//! Checks with explicit constants produce pass/fail entries. Quantities
//! whose constants are not explicit (log-gradient energy, maximal-regularity
//! norms, the eventual-regularity ladder) are logged as report-only series.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{integrate_slice, max_face_gradient, norm_linf, seminorm_w2p, Field, Grid};
use crate::kinetics::{check_theorem2, KineticSpec, ResupplySpec};
use crate::solver::{consumption, ModelParams, State, StepReport, CLAMP_LIMIT};

/// Relative part of the default per-check tolerance.
pub const REL_TOL: f64 = 1e-6;
/// Multiplier of dt in the default per-check tolerance.
pub const DT_SLACK: f64 = 10.0;
/// Default ceiling on tail growth slopes for the regularity verdict.
pub const DEFAULT_SLOPE_TOL: f64 = 1e-3;

/// `(1e-6 + 10 dt) · scale`.
pub fn default_tolerance(dt: f64, scale: f64) -> f64 {
    (REL_TOL + DT_SLACK * dt) * scale
}

// ---------------------------------------------------------------------------
// constants

/// y* = max{y₀, |Ω| (L/K)^{1/α}}, the ceiling of y' + (K/|Ω|^{α−1}) y^α ≤ L|Ω|.
pub fn mass_ode_star(alpha: f64, k: f64, l: f64, omega_vol: f64, y0: f64) -> Result<f64> {
    if !(alpha > 1.0) || !(k > 0.0) || !(l >= 0.0) || !(omega_vol > 0.0) || !(y0 >= 0.0) {
        return Err(Error::Domain(format!(
            "mass_ode_star needs alpha > 1, K > 0, L >= 0, |Omega| > 0, y0 >= 0; got ({alpha}, {k}, {l}, {omega_vol}, {y0})"
        )));
    }
    Ok(y0.max(omega_vol * (l / k).powf(1.0 / alpha)))
}

/// y₀ + C/(1 − e^{−a}), the ceiling for y' + a y ≤ h with ∫_{(t−1)₊}^t h ≤ C.
pub fn comparison_ode_bound(y0: f64, a: f64, c: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("comparison bound needs a > 0, got {a}")));
    }
    if !(c >= 0.0) || !(y0 >= 0.0) {
        return Err(Error::Domain(format!("comparison bound needs C, y0 >= 0, got C = {c}, y0 = {y0}")));
    }
    Ok(y0 + c / -(-a).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub u_star: f64,
    pub v_star: f64,
    /// `+∞` when μ = 0.
    pub w_star: f64,
    pub window_alpha_bound: f64,
    pub window_beta_bound: f64,
}

impl BoundConstants {
    pub fn new(kinetics: &KineticSpec, mu: f64, resupply: &ResupplySpec, initial: &State, grid: &Grid) -> Result<Self> {
        let area = grid.area();
        let (ef, eg) = (kinetics.env_f, kinetics.env_g);
        let u_star = mass_ode_star(kinetics.alpha, ef.k_upper, ef.l_upper, area, integrate_slice(grid, initial.u.as_slice()))?;
        let v_star = mass_ode_star(kinetics.beta, eg.k_upper, eg.l_upper, area, integrate_slice(grid, initial.v.as_slice()))?;
        let w_star = if mu > 0.0 { norm_linf(&initial.w) + resupply.r_star() / mu } else { f64::INFINITY };
        Ok(Self {
            u_star,
            v_star,
            w_star,
            window_alpha_bound: ef.l_upper * area / ef.k_upper + u_star / ef.k_upper,
            window_beta_bound: eg.l_upper * area / eg.k_upper + v_star / eg.k_upper,
        })
    }
}

// ---------------------------------------------------------------------------
// report entries

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Logged for inspection; never fails a run.
    Report,
    /// Preconditions unmet (short window, pre-decay, hypotheses unmet).
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "true",
            Verdict::Fail => "false",
            Verdict::Report => "report",
            Verdict::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorEntry {
    pub t: f64,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// bound − value.
    pub margin: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// The time window the entry refers to, if any.
    pub window: Option<(f64, f64)>,
    pub note: Option<String>,
}

impl MonitorEntry {
    pub fn checked(t: f64, name: &str, value: f64, bound: f64, tolerance: f64) -> Self {
        let margin = bound - value;
        let verdict = if margin >= -tolerance { Verdict::Pass } else { Verdict::Fail };
        Self { t, name: name.into(), value, bound, margin, tolerance, verdict, window: None, note: None }
    }

    pub fn report(t: f64, name: &str, value: f64) -> Self {
        Self {
            t,
            name: name.into(),
            value,
            bound: f64::NAN,
            margin: f64::NAN,
            tolerance: 0.0,
            verdict: Verdict::Report,
            window: None,
            note: None,
        }
    }

    pub fn skipped(t: f64, name: &str, note: &str) -> Self {
        Self {
            verdict: Verdict::Skipped,
            note: Some(note.into()),
            value: f64::NAN,
            ..Self::report(t, name, f64::NAN)
        }
    }

    fn over(mut self, window: (f64, f64)) -> Self {
        self.window = Some(window);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorReport {
    pub entries: Vec<MonitorEntry>,
}

impl MonitorReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(MonitorEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MonitorEntry> {
        self.entries.iter().filter(|e| !e.passed())
    }

    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a MonitorEntry> + 'a {
        self.entries.iter().filter(move |e| e.name == name)
    }
}

// ---------------------------------------------------------------------------
// pointwise-in-time checks

/// ∫u ≤ u* and ∫v ≤ v*, with the default tolerance scaled by the bound.
pub fn check_mass(state: &State, grid: &Grid, consts: &BoundConstants, dt: f64) -> [MonitorEntry; 2] {
    let mu = integrate_slice(grid, state.u.as_slice());
    let mv = integrate_slice(grid, state.v.as_slice());
    [
        MonitorEntry::checked(state.t, "mass_u", mu, consts.u_star, default_tolerance(dt, consts.u_star)),
        MonitorEntry::checked(state.t, "mass_v", mv, consts.v_star, default_tolerance(dt, consts.v_star)),
    ]
}

/// The spatially constant supersolution
/// w̄(t) = ‖w₀‖∞ e^{−μt} + ∫₀ᵗ e^{−μ(t−s)} ‖r(·,s)‖∞ ds,
/// advanced by the exact exponential recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supersolution {
    pub mu: f64,
    pub t: f64,
    pub value: f64,
}

impl Supersolution {
    pub fn new(w0_sup: f64, mu: f64) -> Self {
        Self { mu, t: 0.0, value: w0_sup }
    }

    /// Advances to `t_new`; the step integral uses Simpson's rule on the
    /// closed-form ‖r(·,s)‖∞.
    pub fn advance(&mut self, t_new: f64, r_sup: impl Fn(f64) -> f64) {
        let dt = t_new - self.t;
        if dt <= 0.0 {
            return;
        }
        let decay = (-self.mu * dt).exp();
        let half = (-0.5 * self.mu * dt).exp();
        let forcing = dt / 6.0 * (decay * r_sup(self.t) + 4.0 * half * r_sup(self.t + 0.5 * dt) + r_sup(t_new));
        self.value = self.value * decay + forcing;
        self.t = t_new;
    }
}

/// ‖w‖∞ ≤ w̄(t), plus ‖w‖∞ ≤ w* when μ > 0.
pub fn check_w_supersolution(state: &State, wbar: &Supersolution, consts: &BoundConstants, dt: f64) -> Vec<MonitorEntry> {
    let sup = norm_linf(&state.w);
    let tol = default_tolerance(dt, 1.0);
    let mut out = vec![MonitorEntry::checked(state.t, "w_supersolution", sup, wbar.value, tol)];
    if wbar.mu > 0.0 {
        out.push(MonitorEntry::checked(state.t, "w_ceiling", sup, consts.w_star, tol));
    }
    out
}

// ---------------------------------------------------------------------------
// time-integrated quantities

/// Trapezoidal running integral of a scalar series over (possibly variable)
/// time steps, queryable at arbitrary times by linear interpolation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cumulative {
    times: Vec<f64>,
    values: Vec<f64>,
    integral: Vec<f64>,
}

impl Cumulative {
    pub fn push(&mut self, t: f64, value: f64) {
        let next = match (self.times.last(), self.values.last(), self.integral.last()) {
            (Some(&t0), Some(&v0), Some(&c0)) => {
                debug_assert!(t > t0, "cumulative series needs increasing times");
                c0 + 0.5 * (t - t0) * (v0 + value)
            }
            _ => 0.0,
        };
        self.times.push(t);
        self.values.push(value);
        self.integral.push(next);
    }

    pub fn t_start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn t_last(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn total(&self) -> f64 {
        self.integral.last().copied().unwrap_or(0.0)
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// ∫ from the first time to `t`, piecewise linear in the samples.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 || t <= self.times[0] {
            return 0.0;
        }
        if t >= self.times[n - 1] {
            return self.integral[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let s = t - t0;
        let vt = v0 + (v1 - v0) * s / (t1 - t0);
        self.integral[k] + 0.5 * s * (v0 + vt)
    }

    pub fn between(&self, a: f64, b: f64) -> f64 {
        self.at(b) - self.at(a)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

/// Running ∫u^α and ∫v^β series for the unit-window bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowBuffer {
    pub u_alpha: Cumulative,
    pub v_beta: Cumulative,
}

impl WindowBuffer {
    pub fn push(&mut self, state: &State, grid: &Grid, alpha: f64, beta: f64) {
        let ua = state.u.iter().map(|&s| s.max(0.0).powf(alpha)).sum::<f64>() * grid.cell_volume();
        let vb = state.v.iter().map(|&s| s.max(0.0).powf(beta)).sum::<f64>() * grid.cell_volume();
        self.u_alpha.push(state.t, ua);
        self.v_beta.push(state.t, vb);
    }
}

/// ∫_{t−1}^{t}∫u^α ≤ L_f|Ω|/K_f + u*/K_f and the β analogue, for the window
/// ending at the latest recorded time.
pub fn check_window_integrals(buffer: &WindowBuffer, consts: &BoundConstants, dt: f64) -> [MonitorEntry; 2] {
    let (Some(start), Some(end)) = (buffer.u_alpha.t_start(), buffer.u_alpha.t_last()) else {
        return [
            MonitorEntry::skipped(0.0, "window_u_alpha", "insufficient window"),
            MonitorEntry::skipped(0.0, "window_v_beta", "insufficient window"),
        ];
    };
    if end - start < 1.0 - 1e-12 {
        return [
            MonitorEntry::skipped(end, "window_u_alpha", "insufficient window"),
            MonitorEntry::skipped(end, "window_v_beta", "insufficient window"),
        ];
    }
    let window = (end - 1.0, end);
    let iu = buffer.u_alpha.between(window.0, window.1);
    let iv = buffer.v_beta.between(window.0, window.1);
    [
        MonitorEntry::checked(end, "window_u_alpha", iu, consts.window_alpha_bound, default_tolerance(dt, consts.window_alpha_bound))
            .over(window),
        MonitorEntry::checked(end, "window_v_beta", iv, consts.window_beta_bound, default_tolerance(dt, consts.window_beta_bound))
            .over(window),
    ]
}

/// Tracks ∫v(t) − ∫v₀ − ∫₀ᵗ∫g(v).
#[derive(Debug, Clone, PartialEq)]
pub struct VMassIdentity {
    pub v0_mass: f64,
    pub growth: Cumulative,
    pub max_abs_growth: f64,
    pub max_dt: f64,
}

impl VMassIdentity {
    pub fn new(v0_mass: f64) -> Self {
        Self { v0_mass, growth: Cumulative::default(), max_abs_growth: 0.0, max_dt: 0.0 }
    }

    pub fn push(&mut self, t: f64, int_g: f64, dt: f64) {
        self.growth.push(t, int_g);
        self.max_abs_growth = self.max_abs_growth.max(int_g.abs());
        self.max_dt = self.max_dt.max(dt);
    }

    pub fn residual(&self, v_mass: f64) -> f64 {
        v_mass - self.v0_mass - self.growth.total()
    }

    /// |residual| relative to max{∫v₀, ∫v(t)}.
    pub fn relative_residual(&self, v_mass: f64) -> f64 {
        self.residual(v_mass).abs() / self.v0_mass.max(v_mass).max(f64::MIN_POSITIVE)
    }
}

/// |residual| ≤ C·dt·max{t, 1} with C the largest |∫g(v)| seen so far.
pub fn check_v_mass_identity(state: &State, grid: &Grid, id: &VMassIdentity) -> MonitorEntry {
    let v_mass = integrate_slice(grid, state.v.as_slice());
    let res = id.residual(v_mass).abs();
    let bound = id.max_abs_growth * id.max_dt * state.t.max(1.0);
    let mut e = MonitorEntry::checked(state.t, "v_mass_identity", res, bound, default_tolerance(id.max_dt, 1.0));
    e.note = Some(format!("relative residual {:.3e}", id.relative_residual(v_mass)));
    e
}

/// ∫|∇_h v|²/(v+1)² over the interior faces.
pub fn log_gradient_density(v: &Field, grid: &Grid) -> f64 {
    let vs = v.as_slice();
    grid.faces()
        .map(|f| {
            let g = f.gradient(vs);
            let vf = 0.5 * (vs[f.lo] + vs[f.hi]);
            g * g / ((vf + 1.0) * (vf + 1.0))
        })
        .sum::<f64>()
        * grid.cell_volume()
}

/// Report-only: cumulative log-gradient energy at time t.
pub fn check_log_gradient_energy(t: f64, cumulative: &Cumulative) -> MonitorEntry {
    MonitorEntry::report(t, "log_gradient_energy", cumulative.total())
}

/// ∫|∇_h w|^{2ρ} over interior faces.
pub fn gradient_power_integral(w: &Field, grid: &Grid, rho: f64) -> f64 {
    let ws = w.as_slice();
    grid.faces().map(|f| f.gradient(ws).abs().powf(2.0 * rho)).sum::<f64>() * grid.cell_volume()
}

// ---------------------------------------------------------------------------
// decay and eventual regularity

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutrientSample {
    pub t: f64,
    pub w_sup: f64,
    pub int_w: f64,
    pub int_consumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub hypotheses_met: bool,
    pub delta: f64,
    pub t_detect: Option<f64>,
    /// ∫_T^{end}∫w.
    pub tail_w: f64,
    /// ∫_T^{end}∫(u+v)w.
    pub tail_consumption: f64,
}

impl DecayReport {
    pub fn decay_detected(&self) -> bool {
        self.hypotheses_met && self.t_detect.is_some()
    }
}

/// Smallest recorded time after which ‖w‖∞ stays below `delta`, with the
/// tail integrals of ∫w and of the consumption from that time on.
pub fn detect_w_decay(series: &[NutrientSample], delta: f64, hypotheses_met: bool) -> DecayReport {
    let mut t_detect = None;
    for s in series.iter().rev() {
        if s.w_sup < delta {
            t_detect = Some(s.t);
        } else {
            break;
        }
    }
    let (mut tail_w, mut tail_c) = (0.0, 0.0);
    if let Some(t0) = t_detect {
        for p in series.windows(2).filter(|p| p[0].t >= t0) {
            let h = p[1].t - p[0].t;
            tail_w += 0.5 * h * (p[0].int_w + p[1].int_w);
            tail_c += 0.5 * h * (p[0].int_consumption + p[1].int_consumption);
        }
    }
    DecayReport { hypotheses_met, delta, t_detect, tail_w, tail_consumption: tail_c }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalParams {
    pub q: f64,
    pub theta: f64,
    pub delta: f64,
}

/// Slack in each of the three admissibility conditions (all positive when
/// admissible).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalMargins {
    /// 2(q−1) − 4(q + 2q(q−1) + q(q−1)²)θ.
    pub theta: f64,
    /// min{1, θ, 1/(4q)} − δ.
    pub delta: f64,
    /// (2qθ + 2q(q−1)δ)² / (4(θ(θ+1) − 2qθδ)).
    pub quotient: f64,
    /// q(q−1) − quotient.
    pub quotient_margin: f64,
}

impl FunctionalParams {
    pub fn margins(&self) -> FunctionalMargins {
        let (q, th, de) = (self.q, self.theta, self.delta);
        let s = q + 2.0 * q * (q - 1.0) + q * (q - 1.0).powi(2);
        let num = 2.0 * q * th + 2.0 * q * (q - 1.0) * de;
        let den = 4.0 * (th * (th + 1.0) - 2.0 * q * th * de);
        let quotient = num * num / den;
        FunctionalMargins {
            theta: 2.0 * (q - 1.0) - 4.0 * s * th,
            delta: 1f64.min(th).min(1.0 / (4.0 * q)) - de,
            quotient,
            quotient_margin: if den > 0.0 { q * (q - 1.0) - quotient } else { f64::NEG_INFINITY },
        }
    }

    pub fn is_admissible(&self) -> bool {
        let m = self.margins();
        self.q > 1.0 && self.theta > 0.0 && self.delta > 0.0 && m.theta > 0.0 && m.delta > 0.0 && m.quotient_margin > 0.0
    }
}

/// θ at half its ceiling and δ = ½ min{1, θ, 1/(4q)}.
pub fn pick_theta_delta(q: f64) -> Result<FunctionalParams> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("pick_theta_delta needs q > 1, got {q}")));
    }
    let s = q + 2.0 * q * (q - 1.0) + q * (q - 1.0).powi(2);
    let theta = 2.0 * (q - 1.0) / (8.0 * s);
    let delta = 0.5 * 1f64.min(theta).min(1.0 / (4.0 * q));
    let fp = FunctionalParams { q, theta, delta };
    if !fp.is_admissible() {
        return Err(Error::Domain(format!("parameters for q = {q} miss the admissibility conditions: {:?}", fp.margins())));
    }
    Ok(fp)
}

/// ∫u^q/(2δ − w)^θ; `None` unless ‖w‖∞ < δ.
pub fn weighted_functional(u: &Field, w: &Field, grid: &Grid, fp: &FunctionalParams) -> Option<f64> {
    if !(norm_linf(w) < fp.delta) || u.len() != w.len() {
        return None;
    }
    let two_delta = 2.0 * fp.delta;
    let sum: f64 = u
        .iter()
        .zip(w.iter())
        .map(|(&uk, &wk)| uk.max(0.0).powf(fp.q) / (two_delta - wk).powf(fp.theta))
        .sum();
    Some(sum * grid.cell_volume())
}

/// Scalars tracked for the eventual-regularity proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularitySample {
    pub t: f64,
    pub u_sup: f64,
    pub v_sup: f64,
    pub grad_u_sup: f64,
    pub grad_v_sup: f64,
    pub grad_w_sup: f64,
    pub w2p_u: f64,
    pub functional: Option<f64>,
}

impl RegularitySample {
    pub fn measure(state: &State, grid: &Grid, fp: Option<&FunctionalParams>) -> Result<Self> {
        Ok(Self {
            t: state.t,
            u_sup: norm_linf(&state.u),
            v_sup: norm_linf(&state.v),
            grad_u_sup: max_face_gradient(&state.u, grid)?,
            grad_v_sup: max_face_gradient(&state.v, grid)?,
            grad_w_sup: max_face_gradient(&state.w, grid)?,
            w2p_u: seminorm_w2p(&state.u, grid, 4.0)?,
            functional: fp.and_then(|fp| weighted_functional(&state.u, &state.w, grid, fp)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub name: &'static str,
    pub sup: f64,
    pub slope: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub tail_start: f64,
    pub tol_slope: f64,
    pub series: Vec<SeriesSummary>,
    pub regularized: bool,
}

/// Least-squares slope of y against t; 0 for fewer than two points.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Least-squares (a, b) for y ≈ a + b t.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let b = least_squares_slope(points);
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    (ym - b * tm, b)
}

/// Tail sups and growth slopes over t > T_detect + 1. The verdict is
/// "regularized" when every series has at least two tail samples and no
/// slope exceeds `tol_slope`.
pub fn eventual_regularity_report(samples: &[RegularitySample], t_detect: f64, tol_slope: f64) -> RegularityReport {
    let tail_start = t_detect + 1.0;
    let tail: Vec<&RegularitySample> = samples.iter().filter(|s| s.t > tail_start).collect();
    type Getter = fn(&RegularitySample) -> Option<f64>;
    let getters: [(&'static str, Getter); 7] = [
        ("u_sup", |s| Some(s.u_sup)),
        ("v_sup", |s| Some(s.v_sup)),
        ("grad_u_sup", |s| Some(s.grad_u_sup)),
        ("grad_v_sup", |s| Some(s.grad_v_sup)),
        ("grad_w_sup", |s| Some(s.grad_w_sup)),
        ("w2p_u_4", |s| Some(s.w2p_u)),
        ("weighted_functional", |s| s.functional),
    ];
    let series: Vec<SeriesSummary> = getters
        .iter()
        .map(|(name, get)| {
            let pts: Vec<(f64, f64)> = tail.iter().filter_map(|s| get(s).map(|y| (s.t, y))).collect();
            SeriesSummary {
                name,
                sup: pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
                slope: least_squares_slope(&pts),
                samples: pts.len(),
            }
        })
        .collect();
    let regularized = series.iter().all(|s| s.samples >= 2 && s.slope <= tol_slope);
    RegularityReport { tail_start, tol_slope, series, regularized }
}

// ---------------------------------------------------------------------------
// streaming suite

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSettings {
    /// Log rows every this many observed states (failures are always logged).
    pub cadence: usize,
    /// Decay threshold for the nutrient.
    pub delta: f64,
    /// Exponent of the weighted functional.
    pub q: f64,
    pub tol_slope: f64,
    /// Relative tolerance of the linear solves; bounds the discrete mass law.
    pub solve_tolerance: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self { cadence: 100, delta: 1e-2, q: 2.0, tol_slope: DEFAULT_SLOPE_TOL, solve_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSummary {
    pub report: MonitorReport,
    pub decay: DecayReport,
    pub regularity: Option<RegularityReport>,
    /// (a, b) of cumulative log-gradient energy ≈ a + b t.
    pub log_gradient_fit: (f64, f64),
    pub max_v_mass_relative_residual: f64,
    pub final_v_mass_relative_residual: f64,
    pub functional_params: Option<FunctionalParams>,
}

/// Evaluates every check on each observed state and keeps the rows that
/// are due at the configured cadence, plus every failure.
#[derive(Debug, Clone)]
pub struct MonitorSuite {
    grid: Grid,
    params: ModelParams,
    settings: MonitorSettings,
    pub consts: BoundConstants,
    decay_armed: bool,
    fp: Option<FunctionalParams>,
    wbar: Supersolution,
    windows: WindowBuffer,
    v_identity: VMassIdentity,
    log_grad: Cumulative,
    log_grad_samples: Vec<(f64, f64)>,
    nutrient: Vec<NutrientSample>,
    regularity: Vec<RegularitySample>,
    report: MonitorReport,
    observed: usize,
    max_v_rel: f64,
    last_v_rel: f64,
}

impl MonitorSuite {
    pub fn new(grid: &Grid, params: &ModelParams, initial: &State, settings: MonitorSettings) -> Result<Self> {
        if settings.cadence == 0 {
            return Err(Error::Config("monitor cadence must be at least 1".into()));
        }
        let consts = BoundConstants::new(&params.kinetics, params.mu, &params.resupply, initial, grid)?;
        let decay_armed = check_theorem2(&params.kinetics, params.mu, &params.resupply).pass;
        let fp = if decay_armed { Some(pick_theta_delta(settings.q)?) } else { None };
        Ok(Self {
            grid: *grid,
            params: *params,
            settings,
            consts,
            decay_armed,
            fp,
            wbar: Supersolution::new(norm_linf(&initial.w), params.mu),
            windows: WindowBuffer::default(),
            v_identity: VMassIdentity::new(integrate_slice(grid, initial.v.as_slice())),
            log_grad: Cumulative::default(),
            log_grad_samples: Vec::new(),
            nutrient: Vec::new(),
            regularity: Vec::new(),
            report: MonitorReport::default(),
            observed: 0,
            max_v_rel: 0.0,
            last_v_rel: 0.0,
        })
    }

    pub fn decay_armed(&self) -> bool {
        self.decay_armed
    }

    /// Feeds the next state (the initial one first, with `step = None`) and
    /// returns the rows logged for it.
    pub fn observe(&mut self, state: &State, step: Option<&StepReport>) -> Result<Vec<MonitorEntry>> {
        let g = &self.grid;
        let dt = step.map_or(0.0, |s| s.dt);
        let t = state.t;
        let due = self.observed.is_multiple_of(self.settings.cadence);
        self.observed += 1;

        let v_mass = integrate_slice(g, state.v.as_slice());
        let kin = &self.params.kinetics;
        let int_g = state.v.iter().map(|&s| kin.law_g.eval_unchecked(s)).sum::<f64>() * g.cell_volume();
        self.v_identity.push(t, int_g, dt);
        self.wbar.advance(t, |s| self.params.resupply.sup_at(s));
        self.windows.push(state, g, kin.alpha, kin.beta);
        self.log_grad.push(t, log_gradient_density(&state.v, g));
        let int_c = (0..g.cell_count())
            .map(|k| consumption(state.u[k], state.v[k], state.w[k], 0.0))
            .sum::<f64>()
            * g.cell_volume();
        self.nutrient.push(NutrientSample {
            t,
            w_sup: norm_linf(&state.w),
            int_w: integrate_slice(g, state.w.as_slice()),
            int_consumption: int_c,
        });
        let rel = self.v_identity.relative_residual(v_mass);
        self.max_v_rel = self.max_v_rel.max(rel);
        self.last_v_rel = rel;

        let mut rows: Vec<MonitorEntry> = Vec::new();
        rows.extend(check_mass(state, g, &self.consts, dt));
        rows.extend(check_w_supersolution(state, &self.wbar, &self.consts, dt));
        rows.push(check_v_mass_identity(state, g, &self.v_identity));
        if let Some(s) = step {
            let law_bound = self.settings.solve_tolerance * g.area();
            rows.push(MonitorEntry::checked(t, "mass_law_u", s.mass_defect_u.abs(), law_bound, 0.0));
            rows.push(MonitorEntry::checked(t, "mass_law_v", s.mass_defect_v.abs(), law_bound, 0.0));
            let mut clamp = MonitorEntry::checked(t, "positivity", s.max_clamp, CLAMP_LIMIT, 0.0);
            clamp.note = Some(format!("{} clamps", s.clamps));
            rows.push(clamp);
        }
        if due {
            rows.extend(check_window_integrals(&self.windows, &self.consts, dt));
            rows.push(check_log_gradient_energy(t, &self.log_grad));
            self.log_grad_samples.push((t, self.log_grad.total()));
            rows.push(MonitorEntry::report(t, "w2p_w_2", seminorm_w2p(&state.w, g, 2.0)?));
            rows.push(MonitorEntry::report(t, "grad_w_power_4", gradient_power_integral(&state.w, g, 2.0)));
            let sample = RegularitySample::measure(state, g, self.fp.as_ref())?;
            if self.decay_armed {
                match sample.functional {
                    Some(v) => rows.push(MonitorEntry::report(t, "weighted_functional", v)),
                    None => rows.push(MonitorEntry::skipped(t, "weighted_functional", "pre-decay")),
                }
            }
            self.regularity.push(sample);
        }
        let logged: Vec<MonitorEntry> = rows.into_iter().filter(|e| due || e.verdict == Verdict::Fail).collect();
        self.report.entries.extend(logged.iter().cloned());
        Ok(logged)
    }

    /// Closes the run: decay detection, the regularity proxy and the
    /// log-gradient fit, appended to the report as report-only rows.
    pub fn finish(mut self, final_state: &State) -> Result<MonitorSummary> {
        if self.regularity.last().is_none_or(|s| s.t < final_state.t) {
            self.regularity.push(RegularitySample::measure(final_state, &self.grid, self.fp.as_ref())?);
            self.log_grad_samples.push((final_state.t, self.log_grad.total()));
        }
        let t = final_state.t;
        let decay = detect_w_decay(&self.nutrient, self.settings.delta, self.decay_armed);
        let mut regularity = None;
        if !self.decay_armed {
            self.report.entries.push(MonitorEntry::skipped(t, "w_decay", "hypotheses unmet"));
        } else if let Some(td) = decay.t_detect {
            let mut e = MonitorEntry::report(t, "w_decay", td);
            e.note = Some(format!("tail w {:.3e}, tail consumption {:.3e}", decay.tail_w, decay.tail_consumption));
            self.report.entries.push(e);
            let rep = eventual_regularity_report(&self.regularity, td, self.settings.tol_slope);
            for s in &rep.series {
                let mut e = MonitorEntry::report(t, &format!("tail_slope_{}", s.name), s.slope);
                e.note = Some(format!("sup {:.6e} over {} samples", s.sup, s.samples));
                self.report.entries.push(e);
            }
            let mut verdict = MonitorEntry::report(t, "eventual_regularity", if rep.regularized { 1.0 } else { 0.0 });
            verdict.note = Some(if rep.regularized { "regularized".into() } else { "not regularized".into() });
            self.report.entries.push(verdict);
            regularity = Some(rep);
        } else {
            let mut e = MonitorEntry::report(t, "w_decay", f64::NAN);
            e.note = Some("no decay detected".into());
            self.report.entries.push(e);
        }
        let fit = linear_fit(&self.log_grad_samples);
        let mut e = MonitorEntry::report(t, "log_gradient_rate", fit.1);
        e.note = Some(format!("offset {:.6e}", fit.0));
        self.report.entries.push(e);
        Ok(MonitorSummary {
            report: self.report,
            decay,
            regularity,
            log_gradient_fit: fit,
            max_v_mass_relative_residual: self.max_v_rel,
            final_v_mass_relative_residual: self.last_v_rel,
            functional_params: self.fp,
        })
    }

    pub fn nutrient_series(&self) -> &[NutrientSample] {
        &self.nutrient
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mass_star_examples() {
        assert_eq!(mass_ode_star(3.0, 1.0, 1.0, 1.0, 2.0).unwrap(), 2.0);
        assert_eq!(mass_ode_star(3.0, 1.0, 0.0, 1.0, 0.7).unwrap(), 0.7);
        assert_abs_diff_eq!(mass_ode_star(2.0, 1.0, 2.0, 4.0, 0.1).unwrap(), 4.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert!(mass_ode_star(1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn comparison_bound_examples() {
        assert_abs_diff_eq!(comparison_ode_bound(0.0, 1.0, 1.0).unwrap(), 1.0 / (1.0 - (-1f64).exp()), epsilon = 1e-14);
        assert_abs_diff_eq!(comparison_ode_bound(0.0, 1.0, 1.0).unwrap(), 1.58198, epsilon = 1e-5);
        assert_abs_diff_eq!(comparison_ode_bound(1.0, 2.0, 1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert!(comparison_ode_bound(1.0, 0.0, 1.0).is_err());
        assert!(comparison_ode_bound(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn theta_delta_for_q_two() {
        let fp = pick_theta_delta(2.0).unwrap();
        assert_eq!(fp.theta, 1.0 / 32.0);
        assert_eq!(fp.delta, 1.0 / 64.0);
        let m = fp.margins();
        assert_abs_diff_eq!(m.quotient, 0.1875f64.powi(2) / (4.0 * (33.0 / 1024.0 - 4.0 / 2048.0)), epsilon = 1e-15);
        assert_abs_diff_eq!(m.quotient, 0.2903, epsilon = 1e-4);
        assert!(pick_theta_delta(1.0).is_err());
    }

    #[test]
    fn supersolution_examples() {
        let mut s = Supersolution::new(0.5, 1.0);
        s.advance(2f64.ln(), |_| 0.0);
        assert_abs_diff_eq!(s.value, 0.25, epsilon = 1e-15);

        let mut s = Supersolution::new(0.0, 1.0);
        let dt = 1e-3;
        let t_end = 2f64.ln();
        let steps = (t_end / dt).round() as usize;
        for k in 1..=steps {
            s.advance(t_end * k as f64 / steps as f64, |t| (-2.0 * t).exp());
        }
        assert_abs_diff_eq!(s.value, 0.25, epsilon = 1e-8);
    }

    #[test]
    fn cumulative_interpolates_inside_steps() {
        let mut c = Cumulative::default();
        for k in 0..=10 {
            let t = k as f64 * 0.1;
            c.push(t, 2.0 * t);
        }
        assert_abs_diff_eq!(c.total(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.at(0.55), 0.55 * 0.55, epsilon = 1e-14);
        assert_abs_diff_eq!(c.between(0.25, 0.75), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn decay_detection_picks_last_crossing() {
        let mk = |t: f64, w: f64| NutrientSample { t, w_sup: w, int_w: w, int_consumption: 0.0 };
        let series = [mk(0.0, 1.0), mk(1.0, 0.005), mk(2.0, 0.02), mk(3.0, 0.004), mk(4.0, 0.002)];
        let rep = detect_w_decay(&series, 0.01, true);
        assert_eq!(rep.t_detect, Some(3.0));
        assert_abs_diff_eq!(rep.tail_w, 0.003, epsilon = 1e-15);
        assert_eq!(detect_w_decay(&series, 0.001, true).t_detect, None);
        assert_eq!(detect_w_decay(&series, 2.0, true).t_detect, Some(0.0));
    }

    #[test]
    fn slopes_and_fits() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0 + 0.5 * k as f64)).collect();
        assert_abs_diff_eq!(least_squares_slope(&pts), 0.5, epsilon = 1e-14);
        let (a, b) = linear_fit(&pts);
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(b, 0.5, epsilon = 1e-14);
        assert_eq!(least_squares_slope(&pts[..1]), 0.0);
    }

    #[test]
    fn entries_apply_tolerance() {
        let e = MonitorEntry::checked(0.0, "x", 1.0 + 1e-7, 1.0, 1e-6);
        assert!(e.passed());
        assert_abs_diff_eq!(e.margin, -1e-7, epsilon = 1e-15);
        assert!(!MonitorEntry::checked(0.0, "x", 1.1, 1.0, 1e-6).passed());
        assert!(MonitorEntry::report(0.0, "r", 5.0).passed());
        assert_eq!(Verdict::Fail.to_string(), "false");
    }
}
