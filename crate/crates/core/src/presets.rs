//! Canonical experiment configurations.

use crate::config::{
    Config, GridSection, InitialSection, KineticsSection, LawName, ModelSection, MonitorSection, OutputSection,
    ProfileName, Recipe, ResupplySection, TimeSection,
};
use crate::error::{Error, Result};
use crate::grid::TaxisFlux;
use crate::kinetics::{check_theorem1, check_theorem2};

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: Config,
    /// Expected verdict of the global-solvability gate.
    pub expect_theorem1: bool,
    /// Expected verdict of the eventual-regularity gate.
    pub expect_theorem2: bool,
    /// Whether the nutrient-decay and regularity monitors should fire.
    pub expect_decay: bool,
}

pub const NAMES: [&str; 5] = ["thm1-core", "thm1-subquadratic-g", "allee", "thm2-decay", "gate-fail-alpha"];

fn bump(center: [f64; 2], width: f64, amplitude: f64, floor: f64) -> Recipe {
    Recipe::Gaussian { center, width, amplitude, floor }
}

fn power_kinetics(alpha: f64, beta: f64) -> KineticsSection {
    KineticsSection {
        f_law: LawName::Power,
        g_law: LawName::Power,
        alpha,
        beta,
        f_k: Some(1.0),
        f_l: Some(1.0),
        f_a: None,
        f_b: None,
        g_k: Some(1.0),
        g_l: Some(1.0),
        g_a: None,
        g_b: None,
        f_envelope: None,
        g_envelope: None,
    }
}

fn base(kinetics: KineticsSection) -> Config {
    Config {
        grid: GridSection { nx: 32, ny: 32, lx: 1.0, ly: 1.0 },
        time: TimeSection { t_end: 20.0, dt_max: 5e-3, safety: 0.2, tolerance: 1e-10, max_iterations: 2000 },
        model: ModelSection { mu: 0.0, epsilon: 1e-3, taxis: TaxisFlux::Minmod },
        kinetics,
        resupply: ResupplySection {
            profile: ProfileName::Constant,
            amplitude: 0.1,
            center: None,
            width: None,
            decay_lambda: None,
        },
        initial: InitialSection {
            u: bump([0.35, 0.4], 0.25, 1.0, 0.2),
            v: bump([0.65, 0.6], 0.25, 1.0, 0.2),
            w: bump([0.5, 0.5], 0.3, 0.8, 0.2),
        },
        monitors: MonitorSection::default(),
        output: OutputSection { dir: None, snapshot_every: 100 },
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    let p = match name {
        "thm1-core" => Preset {
            name: "thm1-core",
            summary: "cubic degradation in both species, constant resupply, no decay",
            config: base(power_kinetics(3.0, 3.0)),
            expect_theorem1: true,
            expect_theorem2: false,
            expect_decay: false,
        },
        "thm1-subquadratic-g" => Preset {
            name: "thm1-subquadratic-g",
            summary: "strong forager degradation (alpha = 6) with subquadratic exploiter degradation (beta = 1.8)",
            config: base(power_kinetics(6.0, 1.8)),
            expect_theorem1: true,
            expect_theorem2: false,
            expect_decay: false,
        },
        "allee" => {
            let mut k = power_kinetics(3.0, 3.0);
            k.f_law = LawName::Allee;
            k.f_k = None;
            k.f_l = None;
            Preset {
                name: "allee",
                summary: "bistable forager growth s(1 - s)(s - 2), cubic exploiter degradation",
                config: base(k),
                expect_theorem1: true,
                expect_theorem2: false,
                expect_decay: false,
            }
        }
        "thm2-decay" => {
            let mut c = base(power_kinetics(3.0, 3.0));
            c.time.t_end = 40.0;
            c.model.mu = 0.5;
            c.model.epsilon = 0.0;
            c.resupply = ResupplySection {
                profile: ProfileName::Gaussian,
                amplitude: 1.0,
                center: Some([0.5, 0.5]),
                width: Some(0.2),
                decay_lambda: Some(1.0),
            };
            c.monitors.delta = 1e-2;
            c.monitors.q = 2.0;
            Preset {
                name: "thm2-decay",
                summary: "decaying localized resupply with linear nutrient decay; nutrient vanishes, then the populations settle",
                config: c,
                expect_theorem1: true,
                expect_theorem2: true,
                expect_decay: true,
            }
        }
        "gate-fail-alpha" => Preset {
            name: "gate-fail-alpha",
            summary: "alpha = 2.2 is below the admissible threshold; the gate must reject it",
            config: base(power_kinetics(2.2, 3.0)),
            expect_theorem1: false,
            expect_theorem2: false,
            expect_decay: false,
        },
        other => {
            return Err(Error::Structural(format!(
                "unknown preset `{other}`; known presets: {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}

pub fn all() -> Vec<Preset> {
    NAMES.iter().map(|n| preset(n).expect("shipped preset")).collect()
}

impl Preset {
    /// Checks the declared gate expectations against the gates.
    pub fn gates_match(&self) -> Result<bool> {
        let r = self.config.resolve()?;
        let g1 = check_theorem1(&r.params.kinetics).pass;
        let g2 = check_theorem2(&r.params.kinetics, r.params.mu, &r.params.resupply).pass;
        Ok(g1 == self.expect_theorem1 && g2 == self.expect_theorem2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::validate_envelope;

    #[test]
    fn every_preset_validates_and_matches_its_gates() {
        for p in all() {
            assert!(p.gates_match().unwrap(), "{}", p.name);
            let r = p.config.resolve().unwrap();
            assert!(validate_envelope(&r.params.kinetics).holds, "{}", p.name);
        }
    }

    #[test]
    fn gate_examples() {
        let r = preset("gate-fail-alpha").unwrap().config.resolve().unwrap();
        let g = check_theorem1(&r.params.kinetics);
        assert!(!g.pass && !g.alpha_ok);
        let r = preset("thm1-subquadratic-g").unwrap().config.resolve().unwrap();
        let g = check_theorem1(&r.params.kinetics);
        assert!(g.pass);
        assert!((g.min_cond_margin - (1.8 - 1.4)).abs() < 1e-12);
        let r = preset("thm2-decay").unwrap().config.resolve().unwrap();
        assert_eq!(r.params.resupply.r_double_star(), 1.0);
    }

    #[test]
    fn unknown_name_is_structural() {
        assert!(matches!(preset("nope"), Err(Error::Structural(_))));
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for p in all() {
            let text = p.config.to_toml_string();
            assert_eq!(Config::from_toml_str(&text).unwrap(), p.config, "{}", p.name);
        }
    }
}
