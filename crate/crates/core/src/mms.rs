//! Manufactured solutions built from Neumann-compatible cosine modes.
//!
//! Each component is `mean + amp · cos(kx π x / Lx) cos(ky π y / Ly) e^{−λ t}`
//! with integer wavenumbers, so its normal derivative vanishes on the
//! rectangle's boundary. The residual sources that make such a triple an
//! exact solution are evaluated in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, norm_linf, Field, Grid, TaxisFlux};
use crate::kinetics::{KineticSpec, ResupplySpec};
use crate::solver::{consumption, step_forced, Forcing, ModelParams, State, StepControl};
use crate::weakform::{Snapshot, Trajectory};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub mean: f64,
    pub amp: f64,
    pub kx: f64,
    pub ky: f64,
    pub decay: f64,
}

/// Value and the derivatives the sources need, at one point.
#[derive(Debug, Clone, Copy)]
pub struct ModeJet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    pub lap: f64,
}

impl CosineMode {
    pub fn constant(value: f64) -> Self {
        Self { mean: value, amp: 0.0, kx: 0.0, ky: 0.0, decay: 0.0 }
    }

    pub fn jet(&self, x: f64, y: f64, t: f64, lx: f64, ly: f64) -> ModeJet {
        let ax = self.kx * PI / lx;
        let ay = self.ky * PI / ly;
        let e = self.amp * (-self.decay * t).exp();
        let (sx, cx) = (ax * x).sin_cos();
        let (sy, cy) = (ay * y).sin_cos();
        ModeJet {
            value: self.mean + e * cx * cy,
            dt: -self.decay * e * cx * cy,
            dx: -e * ax * sx * cy,
            dy: -e * ay * cx * sy,
            lap: -e * (ax * ax + ay * ay) * cx * cy,
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let integral = |k: f64| k >= 0.0 && k.fract() == 0.0 && k.is_finite();
        if !integral(self.kx) || !integral(self.ky) {
            return Err(Error::Structural(format!(
                "manufactured {name} needs nonnegative integer wavenumbers for zero normal flux, got ({}, {})",
                self.kx, self.ky
            )));
        }
        if !(self.decay >= 0.0) || !self.mean.is_finite() || !self.amp.is_finite() {
            return Err(Error::Structural(format!("manufactured {name} has invalid coefficients")));
        }
        if self.mean < self.amp.abs() {
            return Err(Error::Structural(format!("manufactured {name} would turn negative")));
        }
        Ok(())
    }
}

/// A prescribed (u*, v*, w*).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedTriple {
    pub u: CosineMode,
    pub v: CosineMode,
    pub w: CosineMode,
}

impl ManufacturedTriple {
    /// The shipped triple; every component varies in space and time, and
    /// the three modes differ so both taxis terms are active.
    pub fn cosine() -> Self {
        Self {
            u: CosineMode { mean: 1.0, amp: 0.5, kx: 1.0, ky: 1.0, decay: 1.0 },
            v: CosineMode { mean: 1.0, amp: 0.5, kx: 2.0, ky: 1.0, decay: 1.0 },
            w: CosineMode { mean: 1.0, amp: 0.5, kx: 1.0, ky: 2.0, decay: 1.0 },
        }
    }

    pub fn constant(u: f64, v: f64, w: f64) -> Self {
        Self { u: CosineMode::constant(u), v: CosineMode::constant(v), w: CosineMode::constant(w) }
    }

    pub fn validate(&self) -> Result<()> {
        self.u.check("u")?;
        self.v.check("v")?;
        self.w.check("w")
    }

    /// Exact state on the grid at time `t`.
    pub fn exact(&self, grid: &Grid, t: f64) -> State {
        let (lx, ly) = (grid.lx(), grid.ly());
        State {
            u: grid.sample(|x, y| self.u.jet(x, y, t, lx, ly).value),
            v: grid.sample(|x, y| self.v.jet(x, y, t, lx, ly).value),
            w: grid.sample(|x, y| self.w.jet(x, y, t, lx, ly).value),
            t,
            step_index: 0,
        }
    }

    /// (S_u, S_v, S_w) at one point.
    pub fn source_at(&self, params: &ModelParams, x: f64, y: f64, t: f64, lx: f64, ly: f64) -> [f64; 3] {
        let u = self.u.jet(x, y, t, lx, ly);
        let v = self.v.jet(x, y, t, lx, ly);
        let w = self.w.jet(x, y, t, lx, ly);
        let kin = &params.kinetics;
        let su = u.dt - u.lap + (u.dx * w.dx + u.dy * w.dy + u.value * w.lap)
            - kin.law_f.eval_unchecked(u.value);
        let sv = v.dt - v.lap + (v.dx * u.dx + v.dy * u.dy + v.value * u.lap)
            - kin.law_g.eval_unchecked(v.value);
        let r = params.resupply.profile_at(x, y) * params.resupply.factor_at(t);
        let sw = w.dt - w.lap + consumption(u.value, v.value, w.value, params.epsilon) + params.mu * w.value - r;
        [su, sv, sw]
    }
}

/// Residual sources making `triple` an exact solution of the forced system.
pub fn mms_source(triple: &ManufacturedTriple, params: &ModelParams, grid: &Grid, t: f64) -> Result<Forcing> {
    triple.validate()?;
    let (lx, ly) = (grid.lx(), grid.ly());
    let n = grid.cell_count();
    let (mut su, mut sv, mut sw) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (x, y) = grid.center(k);
        let [a, b, c] = triple.source_at(params, x, y, t, lx, ly);
        su.push(a);
        sv.push(b);
        sw.push(c);
    }
    Ok(Forcing { su: su.into(), sv: sv.into(), sw: sw.into() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentErrors {
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct MmsLevel {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    /// u, v, w.
    pub errors: [ComponentErrors; 3],
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct MmsSettings {
    pub triple: ManufacturedTriple,
    pub params: ModelParams,
    pub t_end: f64,
    /// dt = dt_coeff · h².
    pub dt_coeff: f64,
    pub control: StepControl,
    /// Keep a snapshot every this many steps (and at the ends); `None` keeps none.
    pub snapshot_every: Option<usize>,
}

impl Default for MmsSettings {
    /// Cosine triple, cubic power laws, μ = 0.5, constant resupply 0.1,
    /// ε = 0 (so the weak identities hold exactly for the exact triple),
    /// t_end = 0.25, dt = h².
    fn default() -> Self {
        Self {
            triple: ManufacturedTriple::cosine(),
            params: ModelParams {
                mu: 0.5,
                epsilon: 0.0,
                resupply: ResupplySpec::constant(0.1),
                kinetics: KineticSpec::power(3.0, 3.0).expect("admissible exponents"),
                taxis: TaxisFlux::Minmod,
            },
            t_end: 0.25,
            dt_coeff: 1.0,
            control: StepControl::default(),
            snapshot_every: None,
        }
    }
}

/// Runs the forced problem on an n×n grid over the unit square.
pub fn run_level(settings: &MmsSettings, n: usize) -> Result<(MmsLevel, Option<Trajectory>)> {
    run_level_with_dt(settings, n, settings.dt_coeff / (n * n) as f64)
}

/// Same as [`run_level`] with an explicit target time step.
pub fn run_level_with_dt(settings: &MmsSettings, n: usize, dt_target: f64) -> Result<(MmsLevel, Option<Trajectory>)> {
    settings.triple.validate()?;
    let started = std::time::Instant::now();
    let grid = Grid::unit_square(n)?;
    let steps = ((settings.t_end / dt_target).ceil() as usize).max(1);
    let dt = settings.t_end / steps as f64;
    let mut state = settings.triple.exact(&grid, 0.0);
    let mut traj = settings.snapshot_every.map(|_| Trajectory::new(grid));
    let record = |traj: &mut Option<Trajectory>, s: &State| {
        if let Some(tr) = traj.as_mut() {
            tr.push(Snapshot::from_state(s)).expect("monotone snapshot times");
        }
    };
    record(&mut traj, &state);
    for k in 0..steps {
        let t_next = (k + 1) as f64 * dt;
        let forcing = mms_source(&settings.triple, &settings.params, &grid, t_next)?;
        let (mut next, _) = step_forced(&state, &settings.params, dt, &grid, &settings.control, Some(&forcing))?;
        next.t = t_next;
        state = next;
        if let Some(every) = settings.snapshot_every {
            if (k + 1) % every == 0 || k + 1 == steps {
                record(&mut traj, &state);
            }
        }
    }
    let exact = settings.triple.exact(&grid, settings.t_end);
    let err = |a: &Field, b: &Field| -> Result<ComponentErrors> {
        let d = a.zip_map(b, |x, y| x - y);
        Ok(ComponentErrors {
            l2: integrate(&d.map(|x| x * x), &grid)?.sqrt(),
            linf: norm_linf(&d),
        })
    };
    let errors = [err(&state.u, &exact.u)?, err(&state.v, &exact.v)?, err(&state.w, &exact.w)?];
    Ok((
        MmsLevel { n, h: grid.hx(), dt, steps, errors, seconds: started.elapsed().as_secs_f64() },
        traj,
    ))
}

/// Errors below this are treated as exact and get no observed order.
pub const EXACT_ERROR: f64 = 1e-12;

/// log2-style observed order between two levels; `None` when both are exact.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse < EXACT_ERROR && e_fine < EXACT_ERROR {
        return None;
    }
    Some((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}

#[derive(Debug, Clone)]
pub struct MmsStudy {
    pub levels: Vec<MmsLevel>,
    /// Per consecutive pair, per component: (L² order, L∞ order).
    pub orders: Vec<[(Option<f64>, Option<f64>); 3]>,
}

pub fn convergence_study(settings: &MmsSettings, levels: &[usize]) -> Result<MmsStudy> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("MMS levels must be strictly ascending, got {levels:?}")));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &n in levels {
        out.push(run_level(settings, n)?.0);
    }
    let orders = out
        .windows(2)
        .map(|p| {
            let (a, b) = (&p[0], &p[1]);
            std::array::from_fn(|c| {
                (
                    observed_order(a.errors[c].l2, b.errors[c].l2, a.h, b.h),
                    observed_order(a.errors[c].linf, b.errors[c].linf, a.h, b.h),
                )
            })
        })
        .collect();
    Ok(MmsStudy { levels: out, orders })
}
