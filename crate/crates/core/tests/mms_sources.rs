use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxis_core::mms::{
    convergence_study, mms_source, observed_order, run_level, CosineMode, ManufacturedTriple, MmsSettings,
};
use taxis_core::solver::consumption;
use taxis_core::{Error, Grid, KineticSpec, ModelParams, ResupplySpec, TaxisFlux};

/// Hyper-dual number a + b ε₁ + c ε₂ + d ε₁ε₂ with ε₁² = ε₂² = 0.
#[derive(Clone, Copy, Debug)]
struct Hd {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Hd {
    fn cst(a: f64) -> Self {
        Hd { a, b: 0.0, c: 0.0, d: 0.0 }
    }
    fn var(a: f64, first: bool, second: bool) -> Self {
        Hd { a, b: if first { 1.0 } else { 0.0 }, c: if second { 1.0 } else { 0.0 }, d: 0.0 }
    }
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Hd { a: f, b: df * self.b, c: df * self.c, d: df * self.d + ddf * self.b * self.c }
    }
    fn cos(self) -> Self {
        self.chain(self.a.cos(), -self.a.sin(), -self.a.cos())
    }
    fn exp(self) -> Self {
        let e = self.a.exp();
        self.chain(e, e, e)
    }
}

impl Add for Hd {
    type Output = Hd;
    fn add(self, o: Hd) -> Hd {
        Hd { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

impl Sub for Hd {
    type Output = Hd;
    fn sub(self, o: Hd) -> Hd {
        self + (-o)
    }
}

impl Neg for Hd {
    type Output = Hd;
    fn neg(self) -> Hd {
        Hd { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }
}

impl Mul for Hd {
    type Output = Hd;
    fn mul(self, o: Hd) -> Hd {
        Hd {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a,
            c: self.a * o.c + self.c * o.a,
            d: self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        }
    }
}

/// Evaluates mean + amp cos(kx π x) cos(ky π y) e^{−λt} on the unit square.
fn mode(m: &CosineMode, x: Hd, y: Hd, t: Hd) -> Hd {
    let pi = std::f64::consts::PI;
    Hd::cst(m.mean)
        + Hd::cst(m.amp) * (Hd::cst(m.kx * pi) * x).cos() * (Hd::cst(m.ky * pi) * y).cos() * (Hd::cst(-m.decay) * t).exp()
}

/// Value, first derivatives (x, y, t) and second derivatives (xx, yy).
struct Derivs {
    val: f64,
    dx: f64,
    dy: f64,
    dt: f64,
    lap: f64,
}

fn derivs(m: &CosineMode, x: f64, y: f64, t: f64) -> Derivs {
    let xx = mode(m, Hd::var(x, true, true), Hd::cst(y), Hd::cst(t));
    let yy = mode(m, Hd::cst(x), Hd::var(y, true, true), Hd::cst(t));
    let tt = mode(m, Hd::cst(x), Hd::cst(y), Hd::var(t, true, false));
    Derivs { val: xx.a, dx: xx.b, dy: yy.b, dt: tt.b, lap: xx.d + yy.d }
}

fn params(mu: f64, epsilon: f64, resupply: ResupplySpec) -> ModelParams {
    ModelParams { mu, epsilon, resupply, kinetics: KineticSpec::power(3.0, 3.0).unwrap(), taxis: TaxisFlux::Minmod }
}

#[test]
fn sources_match_automatic_differentiation() {
    let triple = ManufacturedTriple {
        u: CosineMode { mean: 2.0, amp: 1.0, kx: 1.0, ky: 1.0, decay: 1.0 },
        ..ManufacturedTriple::cosine()
    };
    let p = params(0.7, 0.2, ResupplySpec::constant(0.3));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let (x, y, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0));
        let u = derivs(&triple.u, x, y, t);
        let v = derivs(&triple.v, x, y, t);
        let w = derivs(&triple.w, x, y, t);
        let su = u.dt - u.lap + (u.dx * w.dx + u.dy * w.dy + u.val * w.lap) - (1.0 - u.val.powi(3));
        let sv = v.dt - v.lap + (v.dx * u.dx + v.dy * u.dy + v.val * u.lap) - (1.0 - v.val.powi(3));
        let sw = w.dt - w.lap + consumption(u.val, v.val, w.val, 0.2) + 0.7 * w.val - 0.3;
        let got = triple.source_at(&p, x, y, t, 1.0, 1.0);
        for (g, e) in got.iter().zip([su, sv, sw]) {
            assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0), "({x},{y},{t}): {g} vs {e}");
        }
    }
}

#[test]
fn equilibrium_triple_needs_no_source() {
    let g = Grid::unit_square(8).unwrap();
    let triple = ManufacturedTriple::constant(1.0, 1.0, 0.0);
    let f = mms_source(&triple, &params(0.9, 0.3, ResupplySpec::none()), &g, 0.4).unwrap();
    for k in 0..g.cell_count() {
        assert_eq!((f.su[k], f.sv[k], f.sw[k]), (0.0, 0.0, 0.0));
    }
}

#[test]
fn frozen_modes_have_no_time_derivative() {
    let m = CosineMode { mean: 1.0, amp: 0.3, kx: 2.0, ky: 0.0, decay: 0.0 };
    let j = m.jet(0.3, 0.8, 5.0, 1.0, 1.0);
    assert_eq!(j.dt, 0.0);
    assert_eq!(j.dy, 0.0);
    let early = m.jet(0.3, 0.8, 0.0, 1.0, 1.0);
    assert_eq!(j.value, early.value);
}

#[test]
fn modes_satisfy_neumann_conditions() {
    let m = CosineMode { mean: 1.0, amp: 0.5, kx: 3.0, ky: 2.0, decay: 1.0 };
    for s in [0.0, 0.37, 0.81] {
        assert!(m.jet(0.0, s, 0.2, 2.0, 1.5).dx.abs() < 1e-14);
        assert!(m.jet(2.0, s, 0.2, 2.0, 1.5).dx.abs() < 1e-14);
        assert!(m.jet(s, 0.0, 0.2, 2.0, 1.5).dy.abs() < 1e-14);
        assert!(m.jet(s, 1.5, 0.2, 2.0, 1.5).dy.abs() < 1e-14);
    }
}

#[test]
fn unsupported_triples_are_structural_errors() {
    let g = Grid::unit_square(4).unwrap();
    let p = params(0.5, 0.0, ResupplySpec::none());
    let fractional = ManufacturedTriple {
        u: CosineMode { mean: 1.0, amp: 0.5, kx: 1.5, ky: 1.0, decay: 0.0 },
        ..ManufacturedTriple::cosine()
    };
    assert!(matches!(mms_source(&fractional, &p, &g, 0.0), Err(Error::Structural(_))));
    let negative = ManufacturedTriple {
        w: CosineMode { mean: 0.2, amp: 0.5, kx: 1.0, ky: 1.0, decay: 0.0 },
        ..ManufacturedTriple::cosine()
    };
    assert!(matches!(mms_source(&negative, &p, &g, 0.0), Err(Error::Structural(_))));
}

#[test]
fn constant_triple_is_reproduced_to_rounding() {
    let settings = MmsSettings {
        triple: ManufacturedTriple::constant(1.0, 1.0, 0.5),
        t_end: 0.05,
        ..MmsSettings::default()
    };
    let (lvl, _) = run_level(&settings, 16).unwrap();
    for e in lvl.errors {
        assert!(e.linf < 1e-12, "{e:?}");
    }
}

#[test]
fn observed_order_examples() {
    assert_eq!(observed_order(4e-3, 1e-3, 0.1, 0.05), Some(2.0));
    assert!((observed_order(1e-2, 5e-3, 0.2, 0.1).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(observed_order(1e-15, 1e-16, 0.1, 0.05), None);
}

#[test]
fn levels_must_ascend() {
    let s = MmsSettings::default();
    assert!(matches!(convergence_study(&s, &[32, 16]), Err(Error::Config(_))));
    assert!(matches!(convergence_study(&s, &[16, 16]), Err(Error::Config(_))));
}

#[test]
fn coarse_levels_converge_at_second_order() {
    let settings = MmsSettings { t_end: 0.05, ..MmsSettings::default() };
    let study = convergence_study(&settings, &[8, 16, 32]).unwrap();
    let last = study.orders.last().unwrap();
    for (c, (o2, _)) in last.iter().enumerate() {
        let o = o2.unwrap();
        assert!(o > 1.6, "component {c}: order {o}");
    }
}
