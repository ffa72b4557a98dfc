//! Generalized-solution identities evaluated on recorded trajectories.
//!
//! Space integrals use the midpoint rule for cell data and face sums for
//! gradient products (each interior face stands for a dual cell of volume
//! hx·hy); time integrals use the trapezoidal rule on snapshot times. Test
//! functions are smooth and known in closed form, so their derivatives are
//! exact.
//!
//! A finite basis of test functions can falsify the integral relations but
//! never certify them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::kinetics::GrowthLaw;
use crate::solver::{ModelParams, State};

/// Value and first derivatives of a space-time test function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TestJet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
}

pub trait SpaceTimeTest: Sync {
    fn jet(&self, x: f64, y: f64, t: f64) -> TestJet;
    /// Closed time interval outside of which the function vanishes.
    fn time_support(&self) -> (f64, f64);
    fn is_nonnegative(&self) -> bool;
    fn label(&self) -> String;
}

/// exp(1 − 1/(1 − s²)) on |s| < 1, returning (value, d/ds).
fn bump(s: f64) -> (f64, f64) {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    let v = (1.0 - 1.0 / q).exp();
    (v, v * (-2.0 * s / (q * q)))
}

fn smooth_step(z: f64) -> (f64, f64) {
    // S(z) = e(z) / (e(z) + e(1 − z)), e(z) = exp(−1/z)
    let e = |z: f64| if z > 0.0 { (-1.0 / z).exp() } else { 0.0 };
    let de = |z: f64| if z > 0.0 { (-1.0 / z).exp() / (z * z) } else { 0.0 };
    if z >= 1.0 {
        return (1.0, 0.0);
    }
    if z <= 0.0 {
        return (0.0, 0.0);
    }
    let (a, b) = (e(z), e(1.0 - z));
    let s = a + b;
    (a / s, (de(z) * b + a * de(1.0 - z)) / (s * s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialFactor {
    Constant,
    Bump { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeFactor {
    /// Smooth bump supported on `[start, end]`.
    Bump { start: f64, end: f64 },
    /// Equal to one on `[0, hold]`, decaying smoothly to zero at `end`.
    InitialTrace { hold: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub spatial: SpatialFactor,
    pub temporal: TimeFactor,
    pub scale: f64,
}

impl SpatialFactor {
    fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match *self {
            SpatialFactor::Constant => (1.0, 0.0, 0.0),
            SpatialFactor::Bump { center, radius } => {
                let (ddx, ddy) = (x - center[0], y - center[1]);
                let rho2 = (ddx * ddx + ddy * ddy) / (radius * radius);
                let q = 1.0 - rho2;
                if q <= 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let v = (1.0 - 1.0 / q).exp();
                let k = -v / (q * q) * 2.0 / (radius * radius);
                (v, k * ddx, k * ddy)
            }
        }
    }
}

impl TimeFactor {
    fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            TimeFactor::Bump { start, end } => {
                let half = 0.5 * (end - start);
                let (v, d) = bump((t - 0.5 * (start + end)) / half);
                (v, d / half)
            }
            TimeFactor::InitialTrace { hold, end } => {
                if t < 0.0 {
                    return (0.0, 0.0);
                }
                let span = end - hold;
                let (v, d) = smooth_step((end - t) / span);
                (v, -d / span)
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            TimeFactor::Bump { start, end } => (start, end),
            TimeFactor::InitialTrace { end, .. } => (0.0, end),
        }
    }
}

impl SpaceTimeTest for TestFunction {
    fn jet(&self, x: f64, y: f64, t: f64) -> TestJet {
        let (s, sx, sy) = self.spatial.eval(x, y);
        let (tau, dtau) = self.temporal.eval(t);
        TestJet {
            value: self.scale * s * tau,
            dx: self.scale * sx * tau,
            dy: self.scale * sy * tau,
            dt: self.scale * s * dtau,
        }
    }

    fn time_support(&self) -> (f64, f64) {
        self.temporal.support()
    }

    fn is_nonnegative(&self) -> bool {
        self.scale >= 0.0
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Linear combination of test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination(pub Vec<(f64, TestFunction)>);

impl SpaceTimeTest for Combination {
    fn jet(&self, x: f64, y: f64, t: f64) -> TestJet {
        self.0.iter().fold(TestJet::default(), |acc, (c, f)| {
            let j = f.jet(x, y, t);
            TestJet {
                value: acc.value + c * j.value,
                dx: acc.dx + c * j.dx,
                dy: acc.dy + c * j.dy,
                dt: acc.dt + c * j.dt,
            }
        })
    }

    fn time_support(&self) -> (f64, f64) {
        self.0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, f)| {
            let (s, e) = f.time_support();
            (a.min(s), b.max(e))
        })
    }

    fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|(c, f)| *c >= 0.0 && f.is_nonnegative())
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|(c, f)| format!("{c}*{}", f.name)).collect();
        parts.join("+")
    }
}

/// The five shipped test functions on `[0, t_end]` over an `lx × ly` box:
/// a spatially constant initial-trace function and four off-centre bumps,
/// alternating between initial-trace and interior time placements.
pub fn test_basis(lx: f64, ly: f64, t_end: f64) -> Vec<TestFunction> {
    let trace = TimeFactor::InitialTrace { hold: 0.25 * t_end, end: 0.6 * t_end };
    let interior = TimeFactor::Bump { start: 0.2 * t_end, end: 0.9 * t_end };
    let radius = 0.3 * lx.min(ly);
    let mut basis = vec![TestFunction {
        name: "const_trace".into(),
        spatial: SpatialFactor::Constant,
        temporal: trace,
        scale: 1.0,
    }];
    let centers = [(0.3, 0.3), (0.7, 0.3), (0.3, 0.7), (0.7, 0.7)];
    for (k, (cx, cy)) in centers.into_iter().enumerate() {
        let (temporal, tag) = if k % 2 == 0 { (trace, "trace") } else { (interior, "interior") };
        basis.push(TestFunction {
            name: format!("bump{}_{tag}", k + 1),
            spatial: SpatialFactor::Bump { center: [cx * lx, cy * ly], radius },
            temporal,
            scale: 1.0,
        });
    }
    basis
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

impl Snapshot {
    pub fn from_state(s: &State) -> Self {
        Self { t: s.t, u: s.u.clone(), v: s.v.clone(), w: s.w.clone() }
    }
}

/// ∫v and ∫g(v) at one (fine-grained) time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    pub t: f64,
    pub int_v: f64,
    pub int_g: f64,
}

/// Ordered snapshots on one grid, optionally with a per-step mass series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub snapshots: Vec<Snapshot>,
    pub mass_series: Vec<MassPoint>,
}

impl Trajectory {
    pub fn new(grid: Grid) -> Self {
        Self { grid, snapshots: Vec::new(), mass_series: Vec::new() }
    }

    pub fn push(&mut self, snap: Snapshot) -> Result<()> {
        for f in [&snap.u, &snap.v, &snap.w] {
            self.grid.check(f, "snapshot")?;
        }
        if let Some(last) = self.snapshots.last() {
            if !(snap.t > last.t) {
                return Err(Error::Structural(format!(
                    "snapshot times must increase strictly: {} after {}",
                    snap.t, last.t
                )));
            }
        }
        self.snapshots.push(snap);
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        self.snapshots.first().map_or(0.0, |s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }
}

/// Signed contributions of one weak-form relation. `value` is the signed
/// residual (or defect); `magnitude` sums the absolute sizes of the
/// individual terms and sets the scale for discretization budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValue {
    pub value: f64,
    pub magnitude: f64,
    /// |value − value on every other snapshot|: a Richardson-type estimate
    /// (with safety factor 3) of the time-quadrature error.
    pub quadrature: f64,
}

impl WeakValue {
    const ZERO: WeakValue = WeakValue { value: 0.0, magnitude: 0.0, quadrature: 0.0 };

    fn from_terms(full: &[f64], coarse: &[f64]) -> Self {
        let value: f64 = full.iter().sum();
        Self { value, magnitude: sum_abs(full), quadrature: (value - coarse.iter().sum::<f64>()).abs() }
    }
}

/// Optional extra sources (S_u, S_v, S_w) of a forced problem, in closed form.
pub type SourceFn<'a> = &'a (dyn Fn(f64, f64, f64) -> [f64; 3] + Sync);

enum Coverage {
    Disjoint,
    Inside,
}

fn coverage(traj: &Trajectory, phi: &dyn SpaceTimeTest) -> Result<Coverage> {
    if traj.snapshots.len() < 2 {
        return Err(Error::Structural("trajectory needs at least two snapshots".into()));
    }
    let (a, b) = phi.time_support();
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let slack = 1e-12 * t1.abs().max(1.0);
    if b < t0 - slack || a > t1 + slack {
        return Ok(Coverage::Disjoint);
    }
    if a < t0 - slack || b > t1 + slack {
        return Err(Error::Structural(format!(
            "test function {} is supported on [{a}, {b}], beyond the trajectory's [{t0}, {t1}]",
            phi.label()
        )));
    }
    if t0.abs() > slack && a <= t0 + slack {
        return Err(Error::Structural("initial-trace terms need a snapshot at t = 0".into()));
    }
    Ok(Coverage::Inside)
}

/// Trapezoidal time integrals of per-snapshot terms, on all snapshots and on
/// every other one (first and last always kept).
struct TimeIntegrals<const N: usize> {
    full: [f64; N],
    coarse: [f64; N],
}

fn trapezoid_weights(times: &[f64], nodes: &[usize]) -> Vec<(usize, f64)> {
    (0..nodes.len())
        .map(|i| {
            let left = if i > 0 { times[nodes[i]] - times[nodes[i - 1]] } else { 0.0 };
            let right = if i + 1 < nodes.len() { times[nodes[i + 1]] - times[nodes[i]] } else { 0.0 };
            (nodes[i], 0.5 * (left + right))
        })
        .collect()
}

fn time_quadrature<const N: usize>(
    traj: &Trajectory,
    mut terms: impl FnMut(&Snapshot) -> [f64; N],
) -> TimeIntegrals<N> {
    let snaps = &traj.snapshots;
    let n = snaps.len();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let all: Vec<usize> = (0..n).collect();
    let mut every_other: Vec<usize> = (0..n).step_by(2).collect();
    if n > 0 && every_other.last() != Some(&(n - 1)) {
        every_other.push(n - 1);
    }
    let values: Vec<[f64; N]> = snaps.iter().map(&mut terms).collect();
    let integrate = |nodes: &[usize]| {
        let mut acc = [0.0; N];
        for (k, w) in trapezoid_weights(&times, nodes) {
            for (a, v) in acc.iter_mut().zip(values[k]) {
                *a += w * v;
            }
        }
        acc
    };
    TimeIntegrals { full: integrate(&all), coarse: integrate(&every_other) }
}

struct Cached {
    cells: Vec<TestJet>,
    faces: Vec<TestJet>,
}

fn sample_test(grid: &Grid, phi: &dyn SpaceTimeTest, t: f64) -> Cached {
    let cells = (0..grid.cell_count())
        .map(|k| {
            let (x, y) = grid.center(k);
            phi.jet(x, y, t)
        })
        .collect();
    let faces = grid.faces().map(|f| phi.jet(f.x, f.y, t)).collect();
    Cached { cells, faces }
}

/// Normal component of ∇φ across a face.
fn normal(face: &crate::grid::Face, j: &TestJet) -> f64 {
    match face.axis {
        crate::grid::Axis::X => j.dx,
        crate::grid::Axis::Y => j.dy,
    }
}

fn sum_abs(terms: &[f64]) -> f64 {
    terms.iter().map(|t| t.abs()).sum()
}

/// Residual of the u identity:
/// −∫∫u φ_t − ∫u₀ φ(·,0) + ∫∫∇u·∇φ − ∫∫u∇w·∇φ − ∫∫f(u) φ.
pub fn residual_u(
    traj: &Trajectory,
    params: &ModelParams,
    phi: &dyn SpaceTimeTest,
    sources: Option<SourceFn<'_>>,
) -> Result<WeakValue> {
    if let Coverage::Disjoint = coverage(traj, phi)? {
        return Ok(WeakValue::ZERO);
    }
    let g = &traj.grid;
    let vol = g.cell_volume();
    let law = params.kinetics.law_f;
    let terms = time_quadrature::<4>(traj, |s| {
        let tf = sample_test(g, phi, s.t);
        let (u, w) = (s.u.as_slice(), s.w.as_slice());
        let mut a = [0.0; 4];
        for (k, j) in tf.cells.iter().enumerate() {
            if j.value == 0.0 && j.dt == 0.0 {
                continue;
            }
            let mut reaction = law.eval_unchecked(u[k].max(0.0));
            if let Some(src) = sources {
                let (x, y) = g.center(k);
                reaction += src(x, y, s.t)[0];
            }
            a[0] -= u[k] * j.dt;
            a[3] -= reaction * j.value;
        }
        for (f, j) in g.faces().zip(&tf.faces) {
            let dphi = normal(&f, j);
            if dphi == 0.0 {
                continue;
            }
            a[1] += f.gradient(u) * dphi;
            a[2] -= 0.5 * (u[f.lo] + u[f.hi]) * f.gradient(w) * dphi;
        }
        a.map(|x| x * vol)
    });
    let init = initial_term(traj, phi, |s| s.u.as_slice().to_vec());
    let all = |t: [f64; 4]| [t[0], t[1], t[2], t[3], -init];
    Ok(WeakValue::from_terms(&all(terms.full), &all(terms.coarse)))
}

/// Residual of the w identity with the unregularized consumption (u+v)w:
/// −∫∫wφ_t − ∫w₀φ(·,0) + ∫∫∇w·∇φ + ∫∫(u+v)wφ + μ∫∫wφ − ∫∫rφ.
pub fn residual_w(
    traj: &Trajectory,
    params: &ModelParams,
    phi: &dyn SpaceTimeTest,
    sources: Option<SourceFn<'_>>,
) -> Result<WeakValue> {
    if let Coverage::Disjoint = coverage(traj, phi)? {
        return Ok(WeakValue::ZERO);
    }
    let g = &traj.grid;
    let vol = g.cell_volume();
    let terms = time_quadrature::<6>(traj, |s| {
        let tf = sample_test(g, phi, s.t);
        let (u, v, w) = (s.u.as_slice(), s.v.as_slice(), s.w.as_slice());
        let factor = params.resupply.factor_at(s.t);
        let mut a = [0.0; 6];
        for (k, j) in tf.cells.iter().enumerate() {
            if j.value == 0.0 && j.dt == 0.0 {
                continue;
            }
            let (x, y) = g.center(k);
            let mut supply = params.resupply.profile_at(x, y) * factor;
            if let Some(src) = sources {
                supply += src(x, y, s.t)[2];
            }
            a[0] -= w[k] * j.dt;
            a[2] += (u[k] + v[k]) * w[k] * j.value;
            a[3] += params.mu * w[k] * j.value;
            a[4] -= supply * j.value;
        }
        for (f, j) in g.faces().zip(&tf.faces) {
            a[1] += f.gradient(w) * normal(&f, j);
        }
        a.map(|x| x * vol)
    });
    let init = initial_term(traj, phi, |s| s.w.as_slice().to_vec());
    let all = |t: [f64; 6]| [t[0], t[1], t[2], t[3], t[4], -init];
    Ok(WeakValue::from_terms(&all(terms.full), &all(terms.coarse)))
}

/// LHS − RHS of the ln(v+1) inequality; generalized solutions have defect ≥ 0
/// and classical ones have defect = 0.
pub fn defect_v(
    traj: &Trajectory,
    params: &ModelParams,
    psi: &dyn SpaceTimeTest,
    sources: Option<SourceFn<'_>>,
) -> Result<WeakValue> {
    if !psi.is_nonnegative() {
        return Err(Error::Domain(format!("test function {} must be nonnegative", psi.label())));
    }
    if let Coverage::Disjoint = coverage(traj, psi)? {
        return Ok(WeakValue::ZERO);
    }
    let g = &traj.grid;
    let vol = g.cell_volume();
    let law: GrowthLaw = params.kinetics.law_g;
    let terms = time_quadrature::<6>(traj, |s| {
        let tf = sample_test(g, psi, s.t);
        let (u, v) = (s.u.as_slice(), s.v.as_slice());
        let log_v: Vec<f64> = v.iter().map(|&x| x.max(0.0).ln_1p()).collect();
        let mut a = [0.0; 6];
        for (k, j) in tf.cells.iter().enumerate() {
            if j.value == 0.0 && j.dt == 0.0 {
                continue;
            }
            let vk = v[k].max(0.0);
            let mut growth = law.eval_unchecked(vk);
            if let Some(src) = sources {
                let (x, y) = g.center(k);
                growth += src(x, y, s.t)[1];
            }
            // LHS: −∫∫ ln(v+1) ψ_t
            a[0] -= log_v[k] * j.dt;
            // RHS: ∫∫ g(v)/(v+1) ψ
            a[5] += growth / (vk + 1.0) * j.value;
        }
        for (f, j) in g.faces().zip(&tf.faces) {
            let dl = f.gradient(&log_v);
            let du = f.gradient(u);
            let vf = 0.5 * (v[f.lo] + v[f.hi]).max(0.0);
            let ratio = vf / (vf + 1.0);
            let dpsi = normal(&f, j);
            a[1] += dl * dl * j.value;
            a[2] -= dl * dpsi;
            a[3] -= ratio * dl * du * j.value;
            a[4] += ratio * du * dpsi;
        }
        a.map(|x| x * vol)
    });
    let init = initial_term(traj, psi, |s| s.v.iter().map(|&x| x.max(0.0).ln_1p()).collect());
    // LHS − RHS, LHS = −∫∫ln(v+1)ψ_t − ∫ln(v₀+1)ψ(·,0)
    let all = |t: [f64; 6]| [t[0], -init, -t[1], -t[2], -t[3], -t[4], -t[5]];
    Ok(WeakValue::from_terms(&all(terms.full), &all(terms.coarse)))
}

/// ∫ q₀ φ(·, 0) from the first snapshot.
fn initial_term(traj: &Trajectory, phi: &dyn SpaceTimeTest, q: impl Fn(&Snapshot) -> Vec<f64>) -> f64 {
    let first = &traj.snapshots[0];
    if first.t.abs() > 1e-12 {
        return 0.0;
    }
    let g = &traj.grid;
    let q0 = q(first);
    (0..g.cell_count())
        .map(|k| {
            let (x, y) = g.center(k);
            q0[k] * phi.jet(x, y, 0.0).value
        })
        .sum::<f64>()
        * g.cell_volume()
}

/// Multiple of the time step in [`discretization_budget`].
pub const BUDGET_DT_FACTOR: f64 = 10.0;
/// Absolute part of [`discretization_budget`], per unit area.
pub const BUDGET_FLOOR: f64 = 1e-6;

/// Largest time step of the recorded run: from the per-step mass series
/// when present, otherwise the smallest snapshot spacing.
pub fn trajectory_dt(traj: &Trajectory) -> f64 {
    let max_step = traj.mass_series.windows(2).map(|p| p[1].t - p[0].t).fold(0.0, f64::max);
    if max_step > 0.0 {
        return max_step;
    }
    traj.snapshots.windows(2).map(|p| p[1].t - p[0].t).fold(f64::INFINITY, f64::min)
}

/// Tolerance for a weak-form residual of a first-order-in-time,
/// second-order-in-space run sampled at snapshots:
/// magnitude · (10·dt + h²) + quadrature estimate + 10⁻⁶·|Ω|, h the larger
/// cell width. The absolute floor covers near-stationary windows where the
/// individual terms cancel down to rounding.
pub fn discretization_budget(traj: &Trajectory, w: &WeakValue) -> f64 {
    let h = traj.grid.hx().max(traj.grid.hy());
    w.magnitude * (BUDGET_DT_FACTOR * trajectory_dt(traj) + h * h) + w.quadrature + BUDGET_FLOOR * traj.grid.area()
}

/// Accepted mass-inequality slack.
pub const MASS_SLACK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakRow {
    pub test_fn: String,
    pub identity: &'static str,
    pub value: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Evaluates the three relations for every member of the shipped basis on
/// the trajectory's time range (test functions in parallel), then one row
/// for the worst mass-inequality slack. Identities pass when |value| ≤
/// budget, the ln(v+1) inequality when value ≥ −budget, the mass
/// inequality when slack ≥ −10⁻³.
pub fn verify_weak(traj: &Trajectory, params: &ModelParams, sources: Option<SourceFn<'_>>) -> Result<Vec<WeakRow>> {
    let g = &traj.grid;
    let basis = test_basis(g.lx(), g.ly(), traj.t_end());
    let per_fn: Vec<Result<Vec<WeakRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = basis
            .iter()
            .map(|phi| {
                scope.spawn(move || -> Result<Vec<WeakRow>> {
                    let ru = residual_u(traj, params, phi, sources)?;
                    let rw = residual_w(traj, params, phi, sources)?;
                    let dv = defect_v(traj, params, phi, sources)?;
                    let row = |identity, w: WeakValue, pass: fn(f64, f64) -> bool| {
                        let budget = discretization_budget(traj, &w);
                        WeakRow { test_fn: phi.name.clone(), identity, value: w.value, budget, pass: pass(w.value, budget) }
                    };
                    Ok(vec![
                        row("residual_u", ru, |v, b| v.abs() <= b),
                        row("residual_w", rw, |v, b| v.abs() <= b),
                        row("defect_v", dv, |v, b| v >= -b),
                    ])
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("weak-form worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in per_fn {
        rows.extend(r?);
    }
    let slack = check_mass_inequality(traj, params).into_iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    rows.push(WeakRow {
        test_fn: "-".into(),
        identity: "mass_inequality",
        value: slack,
        budget: MASS_SLACK_TOL,
        pass: slack >= -MASS_SLACK_TOL,
    });
    Ok(rows)
}

/// Per-time signed slack of ∫v(t) ≤ ∫v₀ + ∫₀ᵗ∫g(v).
///
/// Uses the per-step mass series when present, otherwise the snapshots.
/// Time integration is trapezoidal.
pub fn check_mass_inequality(traj: &Trajectory, params: &ModelParams) -> Vec<(f64, f64)> {
    let series: Vec<MassPoint> = if traj.mass_series.len() >= 2 {
        traj.mass_series.clone()
    } else {
        let g = &traj.grid;
        let law = params.kinetics.law_g;
        traj.snapshots
            .iter()
            .map(|s| MassPoint {
                t: s.t,
                int_v: s.v.iter().sum::<f64>() * g.cell_volume(),
                int_g: s.v.iter().map(|&x| law.eval_unchecked(x.max(0.0))).sum::<f64>() * g.cell_volume(),
            })
            .collect()
    };
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(series.len());
    let mut cumulative = 0.0;
    out.push((first.t, 0.0));
    for p in series.windows(2) {
        cumulative += 0.5 * (p[1].t - p[0].t) * (p[0].int_g + p[1].int_g);
        out.push((p[1].t, first.int_v + cumulative - p[1].int_v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bump_derivative_matches_finite_difference() {
        for s in [-0.9, -0.3, 0.0, 0.4, 0.95] {
            let h = 1e-6;
            let fd = (bump(s + h).0 - bump(s - h).0) / (2.0 * h);
            assert_abs_diff_eq!(bump(s).1, fd, epsilon = 1e-6);
        }
        assert_eq!(bump(1.0), (0.0, 0.0));
        assert_eq!(bump(0.0).0, 1.0);
    }

    #[test]
    fn test_function_jets_match_finite_differences() {
        for phi in test_basis(1.0, 2.0, 4.0) {
            for &(x, y, t) in &[(0.3, 0.6, 0.5), (0.25, 1.3, 1.5), (0.7, 0.5, 2.2), (0.5, 1.0, 3.0)] {
                let j = phi.jet(x, y, t);
                let h = 1e-6;
                let fx = (phi.jet(x + h, y, t).value - phi.jet(x - h, y, t).value) / (2.0 * h);
                let fy = (phi.jet(x, y + h, t).value - phi.jet(x, y - h, t).value) / (2.0 * h);
                let ft = (phi.jet(x, y, t + h).value - phi.jet(x, y, t - h).value) / (2.0 * h);
                assert_abs_diff_eq!(j.dx, fx, epsilon = 1e-6);
                assert_abs_diff_eq!(j.dy, fy, epsilon = 1e-6);
                assert_abs_diff_eq!(j.dt, ft, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn basis_has_five_nonnegative_members_in_range() {
        let basis = test_basis(1.0, 1.0, 10.0);
        assert_eq!(basis.len(), 5);
        for phi in &basis {
            assert!(phi.is_nonnegative());
            let (a, b) = phi.time_support();
            assert!(a >= 0.0 && b <= 10.0);
        }
        // initial-trace members are one at t = 0
        assert_eq!(basis[0].jet(0.1, 0.9, 0.0).value, 1.0);
    }

    #[test]
    fn smooth_step_is_monotone_and_saturates() {
        let mut last = 0.0;
        for i in 0..=100 {
            let (v, d) = smooth_step(i as f64 / 100.0);
            assert!(v >= last && d >= 0.0);
            last = v;
        }
        assert_eq!(smooth_step(1.0).0, 1.0);
        assert_eq!(smooth_step(0.0).0, 0.0);
    }
}
