//! `taxis-cascade`: run, check and verify simulations of the nutrient,
//! forager, exploiter cascade.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taxis_core::config::Config;
use taxis_core::mms::{convergence_study, ManufacturedTriple, MmsSettings};
use taxis_core::run::{load_trajectory, sweep_epsilon, GateSummary};
use taxis_core::weakform::verify_weak;
use taxis_core::{preset, run, Error, RunOptions, RunStatus};

#[derive(Parser)]
#[command(name = "taxis-cascade", version, about = "Chemotaxis cascade simulator and verification harness")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Use a shipped preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Override `[time] t_end`.
    #[arg(long)]
    t_end: Option<f64>,
}

impl Source {
    fn load(&self) -> Result<Config, Error> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => Config::from_path(path)?,
            (None, Some(name)) => preset(name)?.config,
            (None, None) => unreachable!("clap requires one source"),
        };
        if let Some(t) = self.t_end {
            config.time.t_end = t;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration, writing outputs to a run directory.
    Run {
        #[command(flatten)]
        source: Source,
        /// Integrate even if the solvability gate fails.
        #[arg(long)]
        force: bool,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the parameter gates without integrating.
    Gate {
        #[command(flatten)]
        source: Source,
    },
    /// Manufactured-solution convergence table.
    Mms {
        /// Ascending grid sizes.
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        levels: Vec<usize>,
        /// Use a constant manufactured solution (errors at rounding level).
        #[arg(long)]
        constant: bool,
        #[arg(long, default_value_t = 0.25)]
        t_end: f64,
        /// dt = coeff · h².
        #[arg(long, default_value_t = 1.0)]
        dt_coeff: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration per ε and tabulate consecutive differences.
    SweepEpsilon {
        #[command(flatten)]
        source: Source,
        /// Descending regularization parameters.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Sampling interval of the space-time norms.
        #[arg(long, default_value_t = 0.1)]
        interval: f64,
        /// Keep each member's run directory under this path.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the weak-form relations on a recorded run directory.
    VerifyWeak {
        #[arg(long)]
        traj: PathBuf,
        /// Defaults to `<traj>/weakform.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List or print the shipped presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as a TOML configuration.
    Show { name: String },
}

/// Exit status: validation problems are 1, runtime failures 2.
fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Structural(_) => 1,
        _ => 2,
    }
}

fn csv_sink(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, Error> {
    let w: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(w))
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or_else(|| "exact".to_string(), |x| format!("{x:.4}"))
}

fn cmd_run(source: &Source, force: bool, out: Option<PathBuf>) -> Result<u8, Error> {
    let config = source.load()?;
    let opts = RunOptions { force, output_dir: out, ..Default::default() };
    let o = run(&config, &opts)?;
    let status = match &o.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::GateRejected => "gate-rejected".to_string(),
        RunStatus::Aborted(m) => format!("aborted: {m}"),
    };
    println!("status: {status}");
    if o.forced {
        println!("hypotheses unmet (forced)");
    }
    if let Some(s) = &o.summary {
        let t = o.final_state.as_ref().map_or(0.0, |s| s.t);
        println!("steps: {}  t: {t}  wall: {:.2}s", o.steps, o.seconds);
        let failures: Vec<_> = s.report.failures().collect();
        println!("monitors: {} rows, {} failures", s.report.entries.len(), failures.len());
        for f in failures.iter().take(10) {
            println!("  {} at t={}: value {:e} bound {:e}", f.name, f.t, f.value, f.bound);
        }
        if s.decay.hypotheses_met {
            match s.decay.t_detect {
                Some(t) => println!("nutrient decay detected at t={t}"),
                None => println!("nutrient decay not detected"),
            }
        }
    }
    if let Some(d) = &o.output_dir {
        println!("output: {}", d.display());
    }
    Ok(o.exit_code() as u8)
}

fn cmd_gate(source: &Source) -> Result<u8, Error> {
    let resolved = source.load()?.resolve()?;
    let g = GateSummary::evaluate(&resolved);
    let mut w = csv_sink(None)?;
    w.write_record(["gate", "condition", "margin", "pass"])?;
    let t1 = &g.theorem1;
    let t2 = &g.theorem2;
    let rows: [(&str, &str, String, bool); 7] = [
        ("theorem1", "alpha > 1+sqrt2", t1.alpha_margin.to_string(), t1.alpha_ok),
        ("theorem1", "min(alpha,beta) > (alpha+1)/(alpha-1)", t1.min_cond_margin.to_string(), t1.min_cond_ok),
        ("theorem1", "all", String::new(), t1.pass),
        ("theorem2", "beta > 1+sqrt2", t2.beta_margin.to_string(), t2.beta_ok),
        ("theorem2", "mu > 0", resolved.params.mu.to_string(), t2.mu_ok),
        ("theorem2", "r time-integrable", resolved.params.resupply.r_double_star().to_string(), t2.r_integrable),
        ("theorem2", "all", String::new(), t2.pass),
    ];
    for (gate, cond, margin, pass) in rows {
        w.write_record([gate, cond, margin.as_str(), if pass { "true" } else { "false" }])?;
    }
    w.flush().map_err(|e| Error::io("stdout", e))?;
    if t1.knife_edge || t2.knife_edge {
        log::warn!("a gate margin is within rounding of zero");
    }
    Ok(if t1.pass { 0 } else { 1 })
}

fn cmd_mms(levels: &[usize], constant: bool, t_end: f64, dt_coeff: f64, out: Option<&Path>) -> Result<u8, Error> {
    let mut settings = MmsSettings { t_end, dt_coeff, ..MmsSettings::default() };
    if constant {
        settings.triple = ManufacturedTriple::constant(1.0, 1.0, 0.5);
    }
    let study = convergence_study(&settings, levels)?;
    let mut w = csv_sink(out)?;
    w.write_record(["n", "h", "dt", "component", "err_l2", "err_linf", "order_l2", "order_linf", "seconds"])?;
    for (k, lvl) in study.levels.iter().enumerate() {
        for (c, name) in ["u", "v", "w"].into_iter().enumerate() {
            let (o2, oi) = match k {
                0 => (String::new(), String::new()),
                _ => (fmt_order(study.orders[k - 1][c].0), fmt_order(study.orders[k - 1][c].1)),
            };
            let e = lvl.errors[c];
            w.write_record([
                lvl.n.to_string(),
                lvl.h.to_string(),
                lvl.dt.to_string(),
                name.to_string(),
                format!("{:e}", e.l2),
                format!("{:e}", e.linf),
                o2,
                oi,
                format!("{:.3}", lvl.seconds),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("mms output", e))?;
    Ok(0)
}

fn cmd_sweep(source: &Source, eps: &[f64], interval: f64, runs: Option<&Path>, out: Option<&Path>) -> Result<u8, Error> {
    let config = source.load()?;
    let rows = sweep_epsilon(&config, eps, interval, runs)?;
    let mut w = csv_sink(out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["eps_a", "eps_b", "diff_u_l2", "diff_v_l1", "diff_w_l2"])?;
    }
    w.flush().map_err(|e| Error::io("sweep output", e))?;
    Ok(0)
}

fn cmd_verify_weak(traj_dir: &Path, out: Option<PathBuf>) -> Result<u8, Error> {
    let params = Config::from_path(&traj_dir.join("config.toml"))?.resolve()?.params;
    let traj = load_trajectory(traj_dir)?;
    let rows = verify_weak(&traj, &params, None)?;
    let out = out.unwrap_or_else(|| traj_dir.join("weakform.csv"));
    let mut w = csv_sink(Some(&out))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} rows, {failed} failed; written to {}", rows.len(), out.display());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_preset(action: &PresetAction) -> Result<u8, Error> {
    match action {
        PresetAction::List => {
            let mut w = csv_sink(None)?;
            w.write_record(["name", "theorem1", "theorem2", "summary"])?;
            for p in taxis_core::presets::all() {
                w.write_record([p.name, &p.expect_theorem1.to_string(), &p.expect_theorem2.to_string(), p.summary])?;
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
        }
        PresetAction::Show { name } => print!("{}", preset(name)?.config.to_toml_string()),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run { source, force, out } => cmd_run(source, *force, out.clone()),
        Command::Gate { source } => cmd_gate(source),
        Command::Mms { levels, constant, t_end, dt_coeff, out } => {
            cmd_mms(levels, *constant, *t_end, *dt_coeff, out.as_deref())
        }
        Command::SweepEpsilon { source, eps, interval, runs, out } => {
            cmd_sweep(source, eps, *interval, runs.as_deref(), out.as_deref())
        }
        Command::VerifyWeak { traj, out } => cmd_verify_weak(traj, out.clone()),
        Command::Preset { action } => cmd_preset(action),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
