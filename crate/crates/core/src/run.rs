//! Run driver: gate check, time loop with monitors, and on-disk outputs
//! (`config.toml`, `manifest.txt`, `timeseries.csv`, `monitors.csv`, FLD1
//! snapshots). Also the ε-sweep and trajectory loading.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::config::{Config, Resolved};
use crate::error::{Error, Result};
use crate::fld;
use crate::grid::{integrate_slice, norm_linf, Field, Grid};
use crate::kinetics::{check_theorem1, check_theorem2, Theorem1Gate, Theorem2Gate};
use crate::monitors::{MonitorEntry, MonitorSuite, MonitorSummary};
use crate::solver::{step, suggest_dt, State, StepReport};
use crate::weakform::{MassPoint, Snapshot, Trajectory};

/// Git-style blob hash: SHA-1 of `"blob {len}\0"` followed by the content.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    pub dt: f64,
    pub int_u: f64,
    pub int_v: f64,
    pub int_w: f64,
    pub u_inf: f64,
    pub v_inf: f64,
    pub w_inf: f64,
    pub clamps: usize,
    /// ∫f(u) at this time level.
    pub int_f_u: f64,
    /// ∫g(v) at this time level.
    pub int_g_v: f64,
}

impl TimeseriesRow {
    fn measure(state: &State, grid: &Grid, resolved: &Resolved, dt: f64, clamps: usize) -> Self {
        let kin = &resolved.params.kinetics;
        let vol = grid.cell_volume();
        Self {
            t: state.t,
            dt,
            int_u: integrate_slice(grid, state.u.as_slice()),
            int_v: integrate_slice(grid, state.v.as_slice()),
            int_w: integrate_slice(grid, state.w.as_slice()),
            u_inf: norm_linf(&state.u),
            v_inf: norm_linf(&state.v),
            w_inf: norm_linf(&state.w),
            clamps,
            int_f_u: state.u.iter().map(|&s| kin.law_f.eval_unchecked(s)).sum::<f64>() * vol,
            int_g_v: state.v.iter().map(|&s| kin.law_g.eval_unchecked(s)).sum::<f64>() * vol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSummary {
    pub theorem1: Theorem1Gate,
    pub theorem2: Theorem2Gate,
}

impl GateSummary {
    pub fn evaluate(resolved: &Resolved) -> Self {
        let p = &resolved.params;
        Self {
            theorem1: check_theorem1(&p.kinetics),
            theorem2: check_theorem2(&p.kinetics, p.mu, &p.resupply),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The global-solvability gate failed and the run was not forced.
    GateRejected,
    /// Watchdog, positivity or solver failure; partial results were kept.
    Aborted(String),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Integrate even when the gate fails ("hypotheses unmet").
    pub force: bool,
    /// Overrides `[output] dir`.
    pub output_dir: Option<PathBuf>,
    /// Skip writing files even if the config names a directory.
    pub no_output: bool,
    /// Keep snapshots (every `snapshot_every` steps) in memory.
    pub keep_trajectory: bool,
    /// Record interpolated states at multiples of this interval.
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub gate: GateSummary,
    pub forced: bool,
    pub summary: Option<MonitorSummary>,
    pub timeseries: Vec<TimeseriesRow>,
    pub final_state: Option<State>,
    pub trajectory: Option<Trajectory>,
    pub samples: Vec<State>,
    pub steps: u64,
    pub seconds: f64,
    pub output_dir: Option<PathBuf>,
    pub grid: Grid,
}

impl RunOutcome {
    /// 0 when the run completed and every pass/fail monitor passed, 1 on a
    /// gate rejection or monitor failure, 2 on a runtime abort.
    pub fn exit_code(&self) -> i32 {
        match &self.status {
            RunStatus::GateRejected => 1,
            RunStatus::Aborted(_) => 2,
            RunStatus::Completed => {
                if self.summary.as_ref().is_some_and(|s| s.report.all_passed()) {
                    0
                } else {
                    1
                }
            }
        }
    }

    pub fn monitors_passed(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.report.all_passed())
    }
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn snapshot(&self, state: &State, grid: &Grid) -> Result<()> {
        for (name, f) in [("u", &state.u), ("v", &state.v), ("w", &state.w)] {
            let path = self.dir.join(format!("{name}_{:08}.fld", state.step_index));
            fld::write(&path, f, grid, state.t)?;
        }
        Ok(())
    }

    fn text(&self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(path, e))
    }
}

pub fn write_timeseries(path: &Path, rows: &[TimeseriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct MonitorRow<'a> {
    t: f64,
    check_name: &'a str,
    value: f64,
    bound: f64,
    margin: f64,
    pass: String,
}

pub fn write_monitors(path: &Path, entries: &[MonitorEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(MonitorRow {
            t: e.t,
            check_name: &e.name,
            value: e.value,
            bound: e.bound,
            margin: e.margin,
            pass: e.verdict.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn manifest(config_text: &str, outcome_status: &RunStatus, gate: &GateSummary, forced: bool, steps: u64, t: f64) -> String {
    let status = match outcome_status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::GateRejected => "gate rejected".to_string(),
        RunStatus::Aborted(m) => format!("aborted: {m}"),
    };
    let hypotheses = if gate.theorem1.pass { "met" } else { "unmet" };
    format!(
        "taxis-cascade {}\nconfig_hash = {}\nstatus = {status}\nhypotheses = {hypotheses}\nforced = {forced}\ntheorem1_gate = {}\ntheorem2_gate = {}\nsteps = {steps}\nt_final = {t}\n\n[config]\n{config_text}",
        env!("CARGO_PKG_VERSION"),
        git_blob_hash(config_text.as_bytes()),
        gate.theorem1.pass,
        gate.theorem2.pass,
    )
}

/// Snapshot schedule: every step for the first 100 steps, every 10th up to
/// step 1000, then every `every`-th (strides never exceed `every`; 0 keeps
/// only the end points). Early transients are where trajectories change
/// fastest, so the time quadrature of the weak forms needs them densely.
pub fn snapshot_due(step: u64, every: usize) -> bool {
    if every == 0 {
        return false;
    }
    let stride = match step {
        0..=99 => 1,
        100..=999 => 10,
        _ => every as u64,
    }
    .min(every as u64);
    step.is_multiple_of(stride)
}

fn lerp_state(a: &State, b: &State, t: f64) -> State {
    let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
    let mix = |x: &Field, y: &Field| x.zip_map(y, |p, q| p + s * (q - p));
    State { u: mix(&a.u, &b.u), v: mix(&a.v, &b.v), w: mix(&a.w, &b.w), t, step_index: b.step_index }
}

/// Integrates the configured problem to `t_end`.
pub fn run(config: &Config, opts: &RunOptions) -> Result<RunOutcome> {
    let resolved = config.resolve()?;
    run_resolved(config, &resolved, opts)
}

pub fn run_resolved(config: &Config, resolved: &Resolved, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let grid = resolved.grid;
    let gate = GateSummary::evaluate(resolved);
    let out_dir = if opts.no_output { None } else { opts.output_dir.clone().or_else(|| resolved.output_dir.clone()) };
    let config_text = config.to_toml_string();
    let writer = out_dir.as_deref().map(Writer::create).transpose()?;
    let mut outcome = RunOutcome {
        status: RunStatus::Completed,
        gate,
        forced: opts.force && !gate.theorem1.pass,
        summary: None,
        timeseries: Vec::new(),
        final_state: None,
        trajectory: None,
        samples: Vec::new(),
        steps: 0,
        seconds: 0.0,
        output_dir: out_dir.clone(),
        grid,
    };

    if !gate.theorem1.pass && !opts.force {
        outcome.status = RunStatus::GateRejected;
        if let Some(w) = &writer {
            w.text("config.toml", &config_text)?;
            w.text("manifest.txt", &manifest(&config_text, &outcome.status, &gate, false, 0, 0.0))?;
        }
        log::warn!("global solvability gate failed; not integrating (use --force to override)");
        return Ok(outcome);
    }
    if outcome.forced {
        log::warn!("hypotheses unmet; integrating anyway");
    }

    let mut state = State::initial(&resolved.initial);
    state.validate(&grid)?;
    let mut suite = MonitorSuite::new(&grid, &resolved.params, &state, resolved.monitors)?;
    suite.observe(&state, None)?;
    outcome.timeseries.push(TimeseriesRow::measure(&state, &grid, resolved, 0.0, 0));
    if let Some(w) = &writer {
        w.text("config.toml", &config_text)?;
        w.snapshot(&state, &grid)?;
    }
    let mut traj = opts.keep_trajectory.then(|| Trajectory::new(grid));
    if let Some(tr) = traj.as_mut() {
        tr.push(Snapshot::from_state(&state))?;
    }
    let mut next_sample = 0.0;
    if let Some(iv) = opts.sample_interval {
        if !(iv > 0.0) {
            return Err(Error::Config(format!("sample interval must be > 0, got {iv}")));
        }
        outcome.samples.push(state.clone());
        next_sample = iv;
    }

    let t_end = resolved.t_end;
    let every = resolved.snapshot_every;
    let mut last_written = 0u64;
    while state.t < t_end * (1.0 - 1e-14) {
        let mut dt = suggest_dt(&state, &resolved.params, &grid, &resolved.control);
        let remaining = t_end - state.t;
        if dt >= remaining * (1.0 - 1e-9) || remaining - dt < 1e-3 * dt {
            dt = remaining;
        }
        let (mut next, report): (State, StepReport) = match step(&state, &resolved.params, dt, &grid, &resolved.control) {
            Ok(r) => r,
            Err(e) => {
                log::error!("aborting at t = {}: {e}", state.t);
                outcome.status = RunStatus::Aborted(e.to_string());
                break;
            }
        };
        if dt == remaining {
            next.t = t_end;
        }
        let logged = suite.observe(&next, Some(&report))?;
        for e in logged.iter().filter(|e| !e.passed()) {
            log::warn!("monitor {} failed at t = {}: value {} bound {}", e.name, e.t, e.value, e.bound);
        }
        outcome.timeseries.push(TimeseriesRow::measure(&next, &grid, resolved, dt, report.clamps));
        if let Some(iv) = opts.sample_interval {
            while next_sample <= next.t + 1e-9 * iv && next_sample <= t_end + 1e-9 * iv {
                let s = if (next.t - next_sample).abs() <= 1e-9 * iv {
                    let mut s = next.clone();
                    s.t = next_sample;
                    s
                } else {
                    lerp_state(&state, &next, next_sample)
                };
                outcome.samples.push(s);
                next_sample += iv;
            }
        }
        let at_end = next.t >= t_end * (1.0 - 1e-14);
        let due = snapshot_due(next.step_index, every);
        if due || at_end {
            if let Some(w) = &writer {
                w.snapshot(&next, &grid)?;
                last_written = next.step_index;
            }
            if let Some(tr) = traj.as_mut() {
                tr.push(Snapshot::from_state(&next))?;
            }
        }
        state = next;
    }
    if let (Some(w), RunStatus::Aborted(_)) = (&writer, &outcome.status) {
        if last_written != state.step_index {
            w.snapshot(&state, &grid)?;
        }
    }

    let summary = suite.finish(&state)?;
    if let Some(tr) = traj.as_mut() {
        tr.mass_series = outcome
            .timeseries
            .iter()
            .map(|r| MassPoint { t: r.t, int_v: r.int_v, int_g: r.int_g_v })
            .collect();
    }
    outcome.steps = state.step_index;
    outcome.seconds = started.elapsed().as_secs_f64();
    if let Some(w) = &writer {
        write_timeseries(&w.dir.join("timeseries.csv"), &outcome.timeseries)?;
        write_monitors(&w.dir.join("monitors.csv"), &summary.report.entries)?;
        w.text(
            "manifest.txt",
            &manifest(&config_text, &outcome.status, &gate, outcome.forced, state.step_index, state.t),
        )?;
        if let RunStatus::Aborted(msg) = &outcome.status {
            w.text("failure.txt", &format!("t = {}\nstep = {}\n{msg}\n", state.t, state.step_index))?;
        }
    }
    outcome.summary = Some(summary);
    outcome.trajectory = traj;
    outcome.final_state = Some(state);
    Ok(outcome)
}

/// Reads the FLD1 snapshot triples of a run directory (plus its
/// `timeseries.csv`, if present, as the fine mass series).
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut steps: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("u_").and_then(|s| s.strip_suffix(".fld")) {
            steps.push(step.to_string());
        }
    }
    steps.sort();
    if steps.is_empty() {
        return Err(Error::Structural(format!("no u_*.fld snapshots in {}", dir.display())));
    }
    let mut traj: Option<Trajectory> = None;
    for step in steps {
        let read = |c: &str| fld::read(&dir.join(format!("{c}_{step}.fld")));
        let (u, grid, t) = read("u")?;
        let (v, gv, tv) = read("v")?;
        let (w, gw, tw) = read("w")?;
        if gv != grid || gw != grid || tv != t || tw != t {
            return Err(Error::Structural(format!("snapshot triple {step} has mismatched grids or times")));
        }
        let tr = traj.get_or_insert_with(|| Trajectory::new(grid));
        if tr.grid != grid {
            return Err(Error::Structural(format!("snapshot {step} is on a different grid")));
        }
        tr.push(Snapshot { t, u, v, w })?;
    }
    let mut traj = traj.expect("at least one snapshot");
    let ts = dir.join("timeseries.csv");
    if ts.exists() {
        traj.mass_series = read_timeseries(&ts)?
            .into_iter()
            .map(|r| MassPoint { t: r.t, int_v: r.int_v, int_g: r.int_g_v })
            .collect();
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps_a: f64,
    pub eps_b: f64,
    /// ‖u_a − u_b‖ in L²(Ω×(0,T)).
    pub diff_u_l2: f64,
    /// ‖v_a − v_b‖ in L¹(Ω×(0,T)).
    pub diff_v_l1: f64,
    /// ‖w_a − w_b‖ in L²(Ω×(0,T)).
    pub diff_w_l2: f64,
}

/// Space-time norms of differences between two runs sampled at common times.
pub fn spacetime_differences(a: &[State], b: &[State], grid: &Grid) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x.t - y.t).abs() > 1e-9 * x.t.abs().max(1.0)) {
        return Err(Error::Structural("runs were sampled at different times".into()));
    }
    let per_time: Vec<(f64, [f64; 3])> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let sq = |p: &Field, q: &Field| integrate_slice(grid, p.zip_map(q, |s, r| (s - r) * (s - r)).as_slice());
            let ab = |p: &Field, q: &Field| integrate_slice(grid, p.zip_map(q, |s, r| (s - r).abs()).as_slice());
            (x.t, [sq(&x.u, &y.u), ab(&x.v, &y.v), sq(&x.w, &y.w)])
        })
        .collect();
    let mut acc = [0.0; 3];
    for p in per_time.windows(2) {
        let h = p[1].0 - p[0].0;
        for c in 0..3 {
            acc[c] += 0.5 * h * (p[0].1[c] + p[1].1[c]);
        }
    }
    Ok((acc[0].sqrt(), acc[1], acc[2].sqrt()))
}

/// Runs the configuration once per ε (in parallel) and tabulates the
/// differences between consecutive members.
pub fn sweep_epsilon(config: &Config, eps: &[f64], sample_interval: f64, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    if eps.is_empty() {
        return Err(Error::Config("epsilon list is empty".into()));
    }
    if eps.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Config(format!("epsilon list must be descending, got {eps:?}")));
    }
    let results: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let mut cfg = config.clone();
                cfg.model.epsilon = e;
                let opts = RunOptions {
                    output_dir: out_dir.map(|d| d.join(format!("eps_{k:02}"))),
                    no_output: out_dir.is_none(),
                    sample_interval: Some(sample_interval),
                    ..Default::default()
                };
                scope.spawn(move || run(&cfg, &opts))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        let o = r?;
        if let RunStatus::Aborted(m) = &o.status {
            return Err(Error::BlowUp { t: o.final_state.map_or(0.0, |s| s.t), reason: m.clone() });
        }
        if o.status == RunStatus::GateRejected {
            return Err(Error::Config("sweep member rejected by the gate".into()));
        }
        outcomes.push(o);
    }
    let grid = outcomes[0].grid;
    let mut rows = Vec::new();
    for (k, pair) in outcomes.windows(2).enumerate() {
        let (du, dv, dw) = spacetime_differences(&pair[0].samples, &pair[1].samples, &grid)?;
        rows.push(SweepRow { eps_a: eps[k], eps_b: eps[k + 1], diff_u_l2: du, diff_v_l1: dv, diff_w_l2: dw });
    }
    Ok(rows)
}
