//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use taxis_core::{Grid, KineticSpec, ModelParams, ResupplySpec, State, TaxisFlux};

pub fn smooth_state(grid: &Grid) -> State {
    State {
        u: grid.sample(|x, y| 1.0 + 0.4 * (PI * x).cos() * (PI * y).cos()),
        v: grid.sample(|x, _| 0.8 + 0.3 * (2.0 * PI * x).cos()),
        w: grid.sample(|_, y| 0.6 + 0.2 * (PI * y).cos()),
        t: 0.0,
        step_index: 0,
    }
}

pub fn params() -> ModelParams {
    ModelParams {
        mu: 0.5,
        epsilon: 1e-3,
        resupply: ResupplySpec::constant(0.1),
        kinetics: KineticSpec::power(3.0, 3.0).expect("valid exponents"),
        taxis: TaxisFlux::Minmod,
    }
}
