use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxis_core::monitors::{
    check_v_mass_identity, check_window_integrals, comparison_ode_bound, detect_w_decay, eventual_regularity_report,
    log_gradient_density, mass_ode_star, pick_theta_delta, weighted_functional, BoundConstants, Cumulative,
    FunctionalParams, MonitorEntry, NutrientSample, RegularitySample, Supersolution, VMassIdentity, Verdict,
    WindowBuffer,
};
use taxis_core::{Error, Field, Grid, KineticSpec, ResupplySpec, State};

fn uniform(grid: &Grid, u: f64, v: f64, w: f64, t: f64) -> State {
    State { u: grid.constant(u), v: grid.constant(v), w: grid.constant(w), t, step_index: 0 }
}

#[test]
fn mass_ceiling_examples() {
    assert_abs_diff_eq!(mass_ode_star(3.0, 1.0, 8.0, 1.0, 0.0).unwrap(), 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(mass_ode_star(2.0, 1.0, 8.0, 2.0, 1.0).unwrap(), 4.0 * 2f64.sqrt(), epsilon = 1e-13);
    assert_eq!(mass_ode_star(3.0, 1.0, 8.0, 1.0, 7.5).unwrap(), 7.5);
    assert!(matches!(mass_ode_star(1.0, 1.0, 1.0, 1.0, 0.0), Err(Error::Domain(_))));
    assert!(matches!(mass_ode_star(3.0, 0.0, 1.0, 1.0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn comparison_bound_examples() {
    assert_abs_diff_eq!(comparison_ode_bound(0.0, 1.0, 1.0).unwrap(), 1.0 / (1.0 - (-1f64).exp()), epsilon = 1e-14);
    assert_abs_diff_eq!(comparison_ode_bound(0.0, 1.0, 1.0).unwrap(), 1.58198, epsilon = 1e-5);
    assert_eq!(comparison_ode_bound(2.0, 3.0, 0.0).unwrap(), 2.0);
    assert!(comparison_ode_bound(0.0, 0.0, 1.0).is_err());
    assert!(comparison_ode_bound(0.0, 1.0, -1.0).is_err());
}

/// RK4 for y' = L|Ω| − K|Ω|^{1−α} y^α, returning the running maximum.
fn mass_ode_max(alpha: f64, k: f64, l: f64, omega: f64, y0: f64, t_end: f64) -> f64 {
    let rhs = |y: f64| l * omega - k * omega.powf(1.0 - alpha) * y.max(0.0).powf(alpha);
    let n = 20_000;
    let h = t_end / n as f64;
    let (mut y, mut top) = (y0, y0);
    for _ in 0..n {
        let k1 = rhs(y);
        let k2 = rhs(y + 0.5 * h * k1);
        let k3 = rhs(y + 0.5 * h * k2);
        let k4 = rhs(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        top = top.max(y);
    }
    top
}

#[test]
fn mass_ceiling_bounds_random_odes() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let (alpha, k, l) = (rng.gen_range(1.5..5.0), rng.gen_range(0.2..3.0), rng.gen_range(0.0..4.0));
        let (omega, y0) = (rng.gen_range(0.5..3.0), rng.gen_range(0.0..5.0));
        let star = mass_ode_star(alpha, k, l, omega, y0).unwrap();
        let top = mass_ode_max(alpha, k, l, omega, y0, 10.0);
        assert!(top <= star * (1.0 + 1e-9), "{alpha} {k} {l} {omega} {y0}: {top} > {star}");
    }
}

/// y' + a y = h with h made of unit-periodic pulses of mass C and width τ,
/// integrated exactly piece by piece; returns the maximum over [0, 30].
fn pulsed_max(y0: f64, a: f64, c: f64, tau: f64, offset: f64) -> f64 {
    let (mut y, mut top) = (y0, y0);
    let relax = |y: f64, h: f64, dt: f64| {
        let e = (-a * dt).exp();
        y * e + h / a * (1.0 - e)
    };
    for _ in 0..30 {
        y = relax(y, 0.0, offset);
        y = relax(y, c / tau, tau);
        top = top.max(y);
        y = relax(y, 0.0, 1.0 - offset - tau);
    }
    top
}

#[test]
fn comparison_bound_holds_for_random_forcings() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let (y0, a, c) = (rng.gen_range(0.0..3.0), rng.gen_range(0.05..5.0), rng.gen_range(0.0..4.0));
        let tau = rng.gen_range(1e-3..1.0);
        let offset = rng.gen_range(0.0..(1.0 - tau));
        let bound = comparison_ode_bound(y0, a, c).unwrap();
        let top = pulsed_max(y0, a, c, tau, offset);
        assert!(top <= bound * (1.0 + 1e-12), "y0 {y0} a {a} C {c}: {top} > {bound}");
    }
}

#[test]
fn bound_constants_example() {
    let g = Grid::unit_square(8).unwrap();
    let kin = KineticSpec::power(3.0, 3.0).unwrap();
    let s0 = uniform(&g, 2.0, 0.5, 0.5, 0.0);
    let c = BoundConstants::new(&kin, 0.5, &ResupplySpec::constant(1.0), &s0, &g).unwrap();
    assert_abs_diff_eq!(c.u_star, 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(c.v_star, 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(c.w_star, 2.5, epsilon = 1e-14);
    assert_abs_diff_eq!(c.window_alpha_bound, 3.0, epsilon = 1e-14);
    let c0 = BoundConstants::new(&kin, 0.0, &ResupplySpec::constant(1.0), &s0, &g).unwrap();
    assert!(c0.w_star.is_infinite());
}

#[test]
fn supersolution_examples() {
    let mut s = Supersolution::new(1.0, 2.0);
    s.advance(2f64.ln(), |_| 0.0);
    assert_abs_diff_eq!(s.value, 0.25, epsilon = 1e-15);

    let mut s = Supersolution::new(0.0, 2.0);
    let dt = 0.01;
    for k in 1..=300 {
        s.advance(k as f64 * dt, |t| (-t).exp());
        let t = s.t;
        assert_abs_diff_eq!(s.value, (-t).exp() - (-2.0 * t).exp(), epsilon = 1e-8);
    }

    // no resupply, no decay: the supersolution is frozen
    let mut s = Supersolution::new(0.7, 0.0);
    s.advance(5.0, |_| 0.0);
    assert_eq!(s.value, 0.7);
    // going backwards is a no-op
    s.advance(1.0, |_| 1.0);
    assert_eq!((s.t, s.value), (5.0, 0.7));
}

#[test]
fn monitor_entry_tolerances() {
    assert_eq!(MonitorEntry::checked(0.0, "x", 1.0, 1.0, 0.0).verdict, Verdict::Pass);
    assert_eq!(MonitorEntry::checked(0.0, "x", 1.0 + 5e-7, 1.0, 1e-6).verdict, Verdict::Pass);
    assert_eq!(MonitorEntry::checked(0.0, "x", 1.0 + 2e-6, 1.0, 1e-6).verdict, Verdict::Fail);
    assert!(MonitorEntry::skipped(0.0, "x", "n/a").passed());
    assert!(MonitorEntry::report(0.0, "x", 9.0).passed());
    assert_eq!(Verdict::Skipped.to_string(), "skipped");
}

#[test]
fn cumulative_trapezoid_is_exact_on_linear_data() {
    let mut c = Cumulative::default();
    for k in 0..=10 {
        let t = 0.1 * k as f64;
        c.push(t, 3.0 + 2.0 * t);
    }
    assert_abs_diff_eq!(c.total(), 4.0, epsilon = 1e-14);
    assert_abs_diff_eq!(c.at(0.55), 3.0 * 0.55 + 0.55 * 0.55, epsilon = 1e-14);
    assert_abs_diff_eq!(c.between(0.25, 0.75), 1.5 + 0.5, epsilon = 1e-14);
    assert_eq!(c.at(-1.0), 0.0);
    assert_eq!(c.at(9.0), c.total());
}

#[test]
fn window_integrals_follow_a_known_history() {
    let g = Grid::unit_square(4).unwrap();
    let kin = KineticSpec::power(3.0, 3.0).unwrap();
    let s0 = uniform(&g, 1.0, 1.0, 0.0, 0.0);
    let consts = BoundConstants::new(&kin, 0.0, &ResupplySpec::none(), &s0, &g).unwrap();
    let mut buf = WindowBuffer::default();
    let dt = 1e-3;
    for k in 0..=1500 {
        let t = k as f64 * dt;
        buf.push(&uniform(&g, 1.0 + 0.2 * t, 1.0, 0.0, t), &g, 2.0, 3.0);
        if k == 500 {
            assert!(check_window_integrals(&buf, &consts, dt).iter().all(|e| e.verdict == Verdict::Skipped));
        }
    }
    let [eu, ev] = check_window_integrals(&buf, &consts, dt);
    // ∫_{0.5}^{1.5} (1 + 0.2 s)² ds
    let exact = ((1.0f64 + 0.3).powi(3) - (1.0f64 + 0.1).powi(3)) / (3.0 * 0.2);
    assert_abs_diff_eq!(eu.value, exact, epsilon = 1e-7);
    assert_abs_diff_eq!(ev.value, 1.0, epsilon = 1e-12);
    assert_eq!(eu.window, Some((0.5, 1.5)));
}

#[test]
fn v_identity_with_frozen_growth_tracks_mass_changes() {
    let g = Grid::unit_square(4).unwrap();
    let mut id = VMassIdentity::new(1.0);
    for k in 0..=10 {
        id.push(0.1 * k as f64, 0.0, 0.1);
    }
    assert_eq!(id.residual(1.0), 0.0);
    assert_abs_diff_eq!(id.residual(1.2), 0.2, epsilon = 1e-15);
    assert_abs_diff_eq!(id.relative_residual(1.25), 0.2, epsilon = 1e-15);
    let e = check_v_mass_identity(&uniform(&g, 1.0, 1.0, 0.0, 1.0), &g, &id);
    assert_eq!(e.verdict, Verdict::Pass);
}

/// Explicit Euler for v' = 1 − v³ tracked against the trapezoid identity.
fn euler_identity_residual(dt: f64) -> f64 {
    let g = |v: f64| 1.0 - v * v * v;
    let mut v = 0.2;
    let mut id = VMassIdentity::new(v);
    let steps = (2.0 / dt).round() as usize;
    id.push(0.0, g(v), dt);
    for k in 1..=steps {
        v += dt * g(v);
        id.push(k as f64 * dt, g(v), dt);
    }
    id.residual(v).abs()
}

#[test]
fn v_identity_residual_is_first_order() {
    let (a, b) = (euler_identity_residual(1e-2), euler_identity_residual(5e-3));
    assert!(a < 1e-2);
    assert!((1.8..2.2).contains(&(a / b)), "{a} {b}");
}

#[test]
fn log_gradient_density_example() {
    for n in [50, 100, 200] {
        let g = Grid::unit_square(n).unwrap();
        let d = log_gradient_density(&g.sample(|x, _| 0.5 * x), &g);
        assert!((d - 1.0 / 6.0).abs() <= 1.0 / n as f64, "n {n}: {d}");
    }
    let g = Grid::unit_square(10).unwrap();
    assert_eq!(log_gradient_density(&g.constant(4.0), &g), 0.0);
}

fn exp_series(t_end: f64, dt: f64) -> Vec<NutrientSample> {
    let n = (t_end / dt).round() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            NutrientSample { t, w_sup: (-t).exp(), int_w: (-t).exp(), int_consumption: 2.0 * (-t).exp() }
        })
        .collect()
}

#[test]
fn decay_detection_example() {
    let r = detect_w_decay(&exp_series(10.0, 0.01), 0.01, true);
    let t = r.t_detect.unwrap();
    assert!(t > 100f64.ln() && t <= 100f64.ln() + 0.01, "{t}");
    assert_abs_diff_eq!(r.tail_w, (-t).exp() - (-10f64).exp(), epsilon = 1e-6);
    assert_abs_diff_eq!(r.tail_consumption, 2.0 * r.tail_w, epsilon = 1e-12);
    assert!(r.decay_detected());
    assert!(!detect_w_decay(&exp_series(10.0, 0.01), 0.01, false).decay_detected());
    assert!(detect_w_decay(&exp_series(3.0, 0.01), 0.01, true).t_detect.is_none());
}

#[test]
fn decay_requires_staying_below() {
    let mut s = exp_series(10.0, 0.1);
    s[80].w_sup = 0.5;
    let r = detect_w_decay(&s, 0.01, true);
    assert!(r.t_detect.unwrap() > s[80].t);
}

#[test]
fn functional_parameter_choices() {
    for q in [1.01, 1.1, 2.0, 5.0, 10.0, 100.0] {
        let fp = pick_theta_delta(q).unwrap();
        let m = fp.margins();
        assert!(fp.is_admissible(), "q {q}: {m:?}");
        assert!(m.theta > 0.0 && m.delta > 0.0 && m.quotient_margin > 0.0);
    }
    let fp = pick_theta_delta(2.0).unwrap();
    assert_abs_diff_eq!(fp.theta, 1.0 / 32.0, epsilon = 1e-16);
    assert_abs_diff_eq!(fp.delta, 1.0 / 64.0, epsilon = 1e-16);
    assert_abs_diff_eq!(fp.margins().quotient, 0.2903, epsilon = 1e-4);
    for q in [1.0, 0.5, f64::INFINITY] {
        assert!(matches!(pick_theta_delta(q), Err(Error::Domain(_))));
    }
    assert!(!FunctionalParams { q: 2.0, theta: 1.0, delta: 0.01 }.is_admissible());
}

#[test]
fn weighted_functional_example_and_monotonicity() {
    let g = Grid::unit_square(8).unwrap();
    let fp = pick_theta_delta(2.0).unwrap();
    let base = weighted_functional(&g.constant(1.0), &g.zeros(), &g, &fp).unwrap();
    assert_abs_diff_eq!(base, 32f64.powf(1.0 / 32.0), epsilon = 1e-14);
    assert_abs_diff_eq!(base, 1.1144, epsilon = 1e-4);
    let more_u = weighted_functional(&g.constant(1.1), &g.zeros(), &g, &fp).unwrap();
    let more_w = weighted_functional(&g.constant(1.0), &g.constant(0.01), &g, &fp).unwrap();
    assert!(more_u > base && more_w > base);
    // undefined once ‖w‖∞ reaches δ
    assert!(weighted_functional(&g.constant(1.0), &g.constant(fp.delta), &g, &fp).is_none());
}

fn reg_sample(t: f64, grow: f64, functional: Option<f64>) -> RegularitySample {
    RegularitySample {
        t,
        u_sup: 1.0 + grow * t,
        v_sup: 1.0,
        grad_u_sup: 0.5,
        grad_v_sup: 0.5,
        grad_w_sup: 0.01,
        w2p_u: 2.0,
        functional,
    }
}

#[test]
fn regularity_report_cases() {
    let flat: Vec<_> = (0..100).map(|k| reg_sample(0.1 * k as f64, 0.0, Some(1.0))).collect();
    let r = eventual_regularity_report(&flat, 3.0, 1e-3);
    assert!(r.regularized);
    assert_eq!(r.tail_start, 4.0);
    assert!(r.series.iter().all(|s| s.samples == 59));

    let growing: Vec<_> = (0..100).map(|k| reg_sample(0.1 * k as f64, 0.01, Some(1.0))).collect();
    let r = eventual_regularity_report(&growing, 3.0, 1e-3);
    assert!(!r.regularized);
    assert_abs_diff_eq!(r.series[0].slope, 0.01, epsilon = 1e-12);

    // too short a tail, or no functional samples, gives no verdict
    assert!(!eventual_regularity_report(&flat, 8.85, 1e-3).regularized);
    let unmeasured: Vec<_> = (0..100).map(|k| reg_sample(0.1 * k as f64, 0.0, None)).collect();
    assert!(!eventual_regularity_report(&unmeasured, 3.0, 1e-3).regularized);
}

proptest! {
    #[test]
    fn decay_time_is_monotone_in_delta(d1 in 1e-3f64..0.5, d2 in 1e-3f64..0.5) {
        let s = exp_series(12.0, 0.05);
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let t_lo = detect_w_decay(&s, lo, true).t_detect.unwrap();
        let t_hi = detect_w_decay(&s, hi, true).t_detect.unwrap();
        prop_assert!(t_hi <= t_lo);
    }

    #[test]
    fn functional_is_monotone_in_both_arguments(u in 0.0f64..3.0, du in 0.0f64..1.0, w in 0.0f64..0.0156, seed in any::<u64>()) {
        let g = Grid::unit_square(4).unwrap();
        let fp = pick_theta_delta(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uf = Field::from_vec((0..16).map(|_| u * rng.gen_range(0.5..1.0)).collect());
        let wf = Field::from_vec((0..16).map(|_| w * rng.gen_range(0.0..1.0)).collect());
        let a = weighted_functional(&uf, &wf, &g, &fp).unwrap();
        let b = weighted_functional(&uf.map(|x| x + du), &wf, &g, &fp).unwrap();
        let c = weighted_functional(&uf, &wf.map(|x| (x * 1.2).min(0.0156)), &g, &fp).unwrap();
        prop_assert!(b >= a && c >= a);
    }
}
