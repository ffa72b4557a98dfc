//! First-order IMEX time stepping of the regularized cascade.
//!
//! One step advances u, then v (drifting up the *new* u), then w:
//!
//! ```text
//! (I − dt Δ_h) u⁺ = u + dt (−∇·(u ∇w) + f(u))
//! (I − dt Δ_h) v⁺ = v + dt (−∇·(v ∇u⁺) + g(v))
//! (I − dt Δ_h + dt μ + dt C) w⁺ = w + dt r(t + dt),   C = (u⁺+v⁺) / (1 + ε (u⁺+v⁺) w)
//! ```
//!
//! Diffusion is implicit, taxis and growth explicit, consumption linearised
//! in w. The w system is an M-matrix with nonnegative right-hand side, so
//! w⁺ ≥ 0 whenever w ≥ 0 and r ≥ 0. Nonnegativity of u⁺ and v⁺ relies on the
//! explicit part staying nonnegative, which `suggest_dt` arranges.

use serde::{Deserialize, Serialize};

use crate::error::{Component, Error, Result};
use crate::grid::{
    integrate_slice, max_face_gradient, norm_linf, taxis_divergence_into, Field, Grid, TaxisFlux,
};
use crate::kinetics::{InitialData, KineticSpec, ResupplySpec};
use crate::linsolve::{conjugate_gradient, ShiftedLaplacian};

/// Entries in `[-CLAMP_LIMIT, 0)` are reset to zero; anything lower is an error.
pub const CLAMP_LIMIT: f64 = 1e-12;

/// The watchdog aborts once any sup norm exceeds this.
pub const BLOW_UP_LIMIT: f64 = 1e8;

const GRADIENT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub epsilon: f64,
    pub resupply: ResupplySpec,
    pub kinetics: KineticSpec,
    #[serde(default)]
    pub taxis: TaxisFlux,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Domain(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Domain(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        self.resupply.validate()?;
        self.kinetics.validate()
    }
}

/// (u + v) w / (1 + ε (u + v) w).
#[inline]
pub fn consumption(u: f64, v: f64, w: f64, epsilon: f64) -> f64 {
    let s = (u + v) * w;
    s / (1.0 + epsilon * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub t: f64,
    pub step_index: u64,
}

impl State {
    pub fn initial(data: &InitialData) -> Self {
        Self {
            u: data.u0.clone(),
            v: data.v0.clone(),
            w: data.w0.clone(),
            t: 0.0,
            step_index: 0,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (c, f) in self.components() {
            grid.check(f, &format!("state component {c}"))?;
            if let Some((k, &v)) = f.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::BlowUp { t: self.t, reason: format!("{c}[{k}] = {v}") });
            }
            if let Some((k, &v)) = f.iter().enumerate().find(|(_, &v)| v < -CLAMP_LIMIT) {
                return Err(Error::Positivity { component: c, index: k, value: v });
            }
        }
        if !(self.t >= 0.0) {
            return Err(Error::Domain(format!("state time must be >= 0, got {}", self.t)));
        }
        Ok(())
    }

    pub fn components(&self) -> [(Component, &Field); 3] {
        [(Component::U, &self.u), (Component::V, &self.v), (Component::W, &self.w)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub dt_max: f64,
    pub safety: f64,
    /// Relative residual target of the linear solves.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_max: 5e-3,
            safety: 0.2,
            tolerance: 1e-10,
            max_iterations: 2000,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Domain(format!("dt_max must be > 0, got {}", self.dt_max)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Domain(format!("safety must lie in (0, 1], got {}", self.safety)));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Domain("linear solve tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Extra volumetric sources added to the three equations, evaluated at the
/// new time level. Used for manufactured solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub su: Field,
    pub sv: Field,
    pub sw: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub dt: f64,
    /// Entries reset from `[-CLAMP_LIMIT, 0)` to zero.
    pub clamps: usize,
    pub max_clamp: f64,
    pub iterations: [usize; 3],
    /// ∫u⁺ − ∫u − dt ∫(f(u) + S_u).
    pub mass_defect_u: f64,
    /// ∫v⁺ − ∫v − dt ∫(g(v) + S_v).
    pub mass_defect_v: f64,
    /// ∫f(u) and ∫g(v) at the old level.
    pub int_f: f64,
    pub int_g: f64,
}

fn enforce_positivity(field: &mut Field, component: Component, report: &mut StepReport) -> Result<()> {
    for (k, v) in field.as_mut_slice().iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -CLAMP_LIMIT {
                return Err(Error::Positivity { component, index: k, value: *v });
            }
            report.clamps += 1;
            report.max_clamp = report.max_clamp.max(-*v);
            log::debug!("clamped {component}[{k}] = {:e} to zero", *v);
            *v = 0.0;
        }
    }
    Ok(())
}

fn watchdog(field: &Field, component: Component, t: f64) -> Result<()> {
    if let Some((k, v)) = field.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::BlowUp { t, reason: format!("{component}[{k}] = {v}") });
    }
    let sup = norm_linf(field);
    if sup > BLOW_UP_LIMIT {
        return Err(Error::BlowUp {
            t,
            reason: format!("|{component}|_inf = {sup:e} exceeds {BLOW_UP_LIMIT:e}"),
        });
    }
    Ok(())
}

/// One step without extra sources.
pub fn step(
    state: &State,
    params: &ModelParams,
    dt: f64,
    grid: &Grid,
    control: &StepControl,
) -> Result<(State, StepReport)> {
    step_forced(state, params, dt, grid, control, None)
}

pub fn step_forced(
    state: &State,
    params: &ModelParams,
    dt: f64,
    grid: &Grid,
    control: &StepControl,
    forcing: Option<&Forcing>,
) -> Result<(State, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
    }
    let n = grid.cell_count();
    for (c, f) in state.components() {
        grid.check(f, &format!("state component {c}"))?;
    }
    if let Some(fc) = forcing {
        for f in [&fc.su, &fc.sv, &fc.sw] {
            grid.check(f, "forcing")?;
        }
    }
    let t_new = state.t + dt;
    let kin = &params.kinetics;
    let mut report = StepReport { dt, ..Default::default() };
    let mut div = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let vol = grid.cell_volume();
    let plain = ShiftedLaplacian { grid, dt, diag: None };

    // u: taxis up ∇w
    let (u, v, w) = (state.u.as_slice(), state.v.as_slice(), state.w.as_slice());
    taxis_divergence_into(params.taxis, grid, u, w, &mut div);
    let mut int_f = 0.0;
    for k in 0..n {
        let fk = kin.law_f.eval_unchecked(u[k]);
        let s = forcing.map_or(0.0, |fc| fc.su[k]);
        int_f += fk + s;
        rhs[k] = u[k] + dt * (-div[k] + fk + s);
    }
    let mut u_new = u.to_vec();
    let stats = conjugate_gradient(&plain, &rhs, &mut u_new, control.tolerance, control.max_iterations, Component::U)?;
    report.iterations[0] = stats.iterations;
    report.int_f = kin_integral(grid, u, |s| kin.law_f.eval_unchecked(s));
    report.mass_defect_u = integrate_slice(grid, &u_new) - integrate_slice(grid, u) - dt * int_f * vol;
    let mut u_new = Field::from_vec(u_new);
    watchdog(&u_new, Component::U, t_new)?;
    enforce_positivity(&mut u_new, Component::U, &mut report)?;

    // v: taxis up ∇u⁺
    taxis_divergence_into(params.taxis, grid, v, u_new.as_slice(), &mut div);
    let mut int_g = 0.0;
    for k in 0..n {
        let gk = kin.law_g.eval_unchecked(v[k]);
        let s = forcing.map_or(0.0, |fc| fc.sv[k]);
        int_g += gk + s;
        rhs[k] = v[k] + dt * (-div[k] + gk + s);
    }
    let mut v_new = v.to_vec();
    let stats = conjugate_gradient(&plain, &rhs, &mut v_new, control.tolerance, control.max_iterations, Component::V)?;
    report.iterations[1] = stats.iterations;
    report.int_g = kin_integral(grid, v, |s| kin.law_g.eval_unchecked(s));
    report.mass_defect_v = integrate_slice(grid, &v_new) - integrate_slice(grid, v) - dt * int_g * vol;
    let mut v_new = Field::from_vec(v_new);
    watchdog(&v_new, Component::V, t_new)?;
    enforce_positivity(&mut v_new, Component::V, &mut report)?;

    // w: decay, linearised consumption, resupply at the new time
    let factor = params.resupply.factor_at(t_new);
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let carriers = u_new[k] + v_new[k];
        diag[k] = params.mu + carriers / (1.0 + params.epsilon * carriers * w[k]);
        let (x, y) = grid.center(k);
        let r = params.resupply.profile_at(x, y) * factor;
        let s = forcing.map_or(0.0, |fc| fc.sw[k]);
        rhs[k] = w[k] + dt * (r + s);
    }
    let op = ShiftedLaplacian { grid, dt, diag: Some(&diag) };
    let mut w_new = w.to_vec();
    let stats = conjugate_gradient(&op, &rhs, &mut w_new, control.tolerance, control.max_iterations, Component::W)?;
    report.iterations[2] = stats.iterations;
    let mut w_new = Field::from_vec(w_new);
    watchdog(&w_new, Component::W, t_new)?;
    enforce_positivity(&mut w_new, Component::W, &mut report)?;

    Ok((
        State {
            u: u_new,
            v: v_new,
            w: w_new,
            t: t_new,
            step_index: state.step_index + 1,
        },
        report,
    ))
}

fn kin_integral(grid: &Grid, values: &[f64], law: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&s| law(s)).sum::<f64>() * grid.cell_volume()
}

/// Step size from the advective and reaction restrictions:
///
/// `safety · min(dt_max, h / (max|∇w| + max|∇u|), 1 / (1 + |f'| + |g'|))`
///
/// with the slopes estimated at the current maxima of u and v (and at zero,
/// which matters for laws whose steepest point is at the origin).
pub fn suggest_dt(state: &State, params: &ModelParams, grid: &Grid, control: &StepControl) -> f64 {
    let grad_w = max_face_gradient(&state.w, grid).unwrap_or(f64::INFINITY);
    let grad_u = max_face_gradient(&state.u, grid).unwrap_or(f64::INFINITY);
    let advective = grid.h_min() / (grad_w + grad_u + GRADIENT_FLOOR);
    let kin = &params.kinetics;
    let u_max = state.u.max().max(0.0);
    let v_max = state.v.max().max(0.0);
    let slope_f = kin.law_f.slope(u_max).max(kin.law_f.slope(0.0));
    let slope_g = kin.law_g.slope(v_max).max(kin.law_g.slope(0.0));
    let reaction = 1.0 / (1.0 + slope_f + slope_g);
    control.safety * control.dt_max.min(advective).min(reaction)
}
