//! Numerical core for a two-species chemotaxis cascade with a consumed,
//! externally resupplied nutrient on a rectangle with no-flux walls.
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod config;
pub mod error;
pub mod fld;
pub mod grid;
pub mod kinetics;
mod linsolve;
pub mod mms;
pub mod monitors;
pub mod presets;
pub mod run;
pub mod solver;
pub mod weakform;

pub use config::{Config, Resolved};
pub use error::{Component, Error, Result};
pub use grid::{Field, Grid, TaxisFlux};
pub use kinetics::{GrowthLaw, InitialData, KineticSpec, ResupplySpec};
pub use linsolve::SolveStats;
pub use monitors::{MonitorEntry, MonitorReport, MonitorSettings, MonitorSuite};
pub use presets::{preset, Preset};
pub use run::{run, RunOptions, RunOutcome, RunStatus};
pub use solver::{ModelParams, State, StepControl, StepReport};
pub use weakform::{Snapshot, Trajectory};
