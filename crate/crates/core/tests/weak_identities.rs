use proptest::prelude::*;
use taxis_core::grid::integrate;
use taxis_core::kinetics::{SpatialProfile, TemporalFactor};
use taxis_core::solver::step;
use taxis_core::weakform::{
    check_mass_inequality, defect_v, residual_u, residual_w, test_basis, verify_weak, Combination, MassPoint,
    SpatialFactor, TestFunction, TimeFactor,
};
use taxis_core::{
    Error, Grid, GrowthLaw, KineticSpec, ModelParams, ResupplySpec, Snapshot, State, StepControl, TaxisFlux, Trajectory,
};

fn params(mu: f64, epsilon: f64, resupply: ResupplySpec) -> ModelParams {
    ModelParams { mu, epsilon, resupply, kinetics: KineticSpec::power(3.0, 3.0).unwrap(), taxis: TaxisFlux::Minmod }
}

fn smooth_initial(g: &Grid) -> State {
    State {
        u: g.sample(|x, y| 1.0 + 0.4 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()),
        v: g.sample(|x, _| 0.8 + 0.3 * (2.0 * std::f64::consts::PI * x).cos()),
        w: g.sample(|_, y| 0.6 + 0.2 * (std::f64::consts::PI * y).cos()),
        t: 0.0,
        step_index: 0,
    }
}

/// Solver run recording every step as a snapshot and in the mass series.
fn simulate(g: &Grid, p: &ModelParams, s0: State, dt: f64, t_end: f64) -> Trajectory {
    let mut traj = Trajectory::new(*g);
    let law = p.kinetics.law_g;
    let mass_point = |s: &State| MassPoint {
        t: s.t,
        int_v: integrate(&s.v, g).unwrap(),
        int_g: integrate(&s.v.map(|x| law.eval_unchecked(x)), g).unwrap(),
    };
    traj.mass_series.push(mass_point(&s0));
    traj.push(Snapshot::from_state(&s0)).unwrap();
    let mut s = s0;
    let steps = (t_end / dt).round() as usize;
    for k in 1..=steps {
        s = step(&s, p, dt, g, &StepControl::default()).unwrap().0;
        s.t = k as f64 * dt;
        traj.mass_series.push(mass_point(&s));
        traj.push(Snapshot::from_state(&s)).unwrap();
    }
    traj
}

/// A trajectory assembled from a closed-form uniform history.
fn uniform_history(g: &Grid, t_end: f64, n: usize, f: impl Fn(f64) -> [f64; 3]) -> Trajectory {
    let mut traj = Trajectory::new(*g);
    for k in 0..=n {
        let t = t_end * k as f64 / n as f64;
        let [u, v, w] = f(t);
        traj.push(Snapshot { t, u: g.constant(u), v: g.constant(v), w: g.constant(w) }).unwrap();
    }
    traj
}

fn bump(center: [f64; 2], start: f64, end: f64, scale: f64) -> TestFunction {
    TestFunction {
        name: "probe".into(),
        spatial: SpatialFactor::Bump { center, radius: 0.35 },
        temporal: TimeFactor::Bump { start, end },
        scale,
    }
}

#[test]
fn steady_equilibrium_satisfies_all_relations() {
    let g = Grid::unit_square(6).unwrap();
    let traj = uniform_history(&g, 1.0, 1000, |_| [1.0, 1.0, 0.0]);
    let p = params(0.5, 0.0, ResupplySpec::none());
    for phi in test_basis(1.0, 1.0, 1.0) {
        assert!(residual_u(&traj, &p, &phi, None).unwrap().value.abs() < 1e-6);
        assert!(residual_w(&traj, &p, &phi, None).unwrap().value.abs() < 1e-6);
        assert!(defect_v(&traj, &p, &phi, None).unwrap().value.abs() < 1e-6);
    }
}

#[test]
fn exponential_decay_of_w_is_a_weak_solution() {
    let g = Grid::unit_square(4).unwrap();
    let traj = uniform_history(&g, 2.0, 8000, |t| [0.0, 0.0, (-t).exp()]);
    let p = params(1.0, 0.0, ResupplySpec::none());
    for phi in test_basis(1.0, 1.0, 2.0) {
        let r = residual_w(&traj, &p, &phi, None).unwrap();
        assert!(r.value.abs() < 1e-8, "{}: {:e}", phi.name, r.value);
        assert!(r.quadrature < 1e-7);
    }
}

#[test]
fn support_outside_the_run_is_handled() {
    let g = Grid::unit_square(6).unwrap();
    let traj = uniform_history(&g, 1.0, 10, |_| [1.0, 1.0, 0.5]);
    let p = params(0.5, 0.0, ResupplySpec::none());
    let later = bump([0.5, 0.5], 3.0, 4.0, 1.0);
    let r = residual_u(&traj, &p, &later, None).unwrap();
    assert_eq!((r.value, r.magnitude), (0.0, 0.0));
    let straddling = bump([0.5, 0.5], 0.5, 1.5, 1.0);
    assert!(matches!(residual_u(&traj, &p, &straddling, None), Err(Error::Structural(_))));
    let lonely = uniform_history(&g, 1.0, 0, |_| [1.0, 1.0, 0.5]);
    assert!(matches!(residual_w(&lonely, &p, &later, None), Err(Error::Structural(_))));
}

#[test]
fn log_inequality_needs_a_nonnegative_test_function() {
    let g = Grid::unit_square(6).unwrap();
    let traj = uniform_history(&g, 1.0, 10, |_| [1.0, 1.0, 0.5]);
    let p = params(0.5, 0.0, ResupplySpec::none());
    let negative = bump([0.5, 0.5], 0.2, 0.8, -1.0);
    assert!(matches!(defect_v(&traj, &p, &negative, None), Err(Error::Domain(_))));
}

#[test]
fn solver_trajectory_passes_verification() {
    let g = Grid::unit_square(16).unwrap();
    let p = params(0.5, 1e-3, ResupplySpec::constant(0.1));
    let traj = simulate(&g, &p, smooth_initial(&g), 1e-3, 0.5);
    let rows = verify_weak(&traj, &p, None).unwrap();
    assert_eq!(rows.len(), 16);
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn regularization_gap_shrinks_with_epsilon() {
    let g = Grid::unit_square(12).unwrap();
    let phi = bump([0.4, 0.6], 0.1, 0.45, 1.0);
    let gap = |eps: f64| {
        let p = params(0.5, eps, ResupplySpec::constant(0.1));
        let traj = simulate(&g, &p, smooth_initial(&g), 1e-3, 0.5);
        residual_w(&traj, &p, &phi, None).unwrap().value.abs()
    };
    let (a, b, c) = (gap(0.4), gap(0.2), gap(0.1));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn mass_inequality_examples() {
    let g = Grid::unit_square(8).unwrap();
    let p = params(0.5, 0.0, ResupplySpec::constant(0.1));
    let slack = |dt: f64| {
        let traj = simulate(&g, &p, smooth_initial(&g), dt, 1.0);
        check_mass_inequality(&traj, &p)
    };
    let coarse = slack(2e-3);
    assert_eq!(coarse[0], (0.0, 0.0));
    let worst = |s: &[(f64, f64)]| s.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    assert!(worst(&coarse) < 1e-3);
    let ratio = worst(&coarse) / worst(&slack(1e-3));
    assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn mass_inequality_falls_back_to_snapshots() {
    let g = Grid::unit_square(4).unwrap();
    let mut p = params(0.5, 0.0, ResupplySpec::none());
    let flat = GrowthLaw::Power { k: 0.0, l: 0.0, exponent: 3.0 };
    p.kinetics.law_g = flat;
    let traj = uniform_history(&g, 1.0, 4, |_| [1.0, 0.7, 0.0]);
    let s = check_mass_inequality(&traj, &p);
    assert_eq!(s.len(), 5);
    assert!(s.iter().all(|p| p.1.abs() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residuals_are_linear_in_the_test_function(
        a in -2.0f64..2.0, b in -2.0f64..2.0, cx in 0.2f64..0.8, cy in 0.2f64..0.8,
    ) {
        let g = Grid::new(10, 8, 1.0, 0.8).unwrap();
        let r = ResupplySpec {
            profile: SpatialProfile::Gaussian { center: [0.5, 0.4], width: 0.3, amplitude: 0.5 },
            factor: TemporalFactor::Exponential { lambda: 1.0 },
        };
        let p = params(0.3, 0.0, r);
        let traj = simulate(&g, &p, smooth_initial(&g), 5e-3, 0.3);
        let f1 = test_basis(1.0, 0.8, 0.3).remove(0);
        let f2 = bump([cx, cy], 0.05, 0.25, 1.0);
        let combo = Combination(vec![(a, f1.clone()), (b, f2.clone())]);
        for res in [residual_u, residual_w] {
            let lhs = res(&traj, &p, &combo, None).unwrap();
            let r1 = res(&traj, &p, &f1, None).unwrap();
            let r2 = res(&traj, &p, &f2, None).unwrap();
            let rhs = a * r1.value + b * r2.value;
            let scale = a.abs() * r1.magnitude + b.abs() * r2.magnitude;
            prop_assert!((lhs.value - rhs).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
