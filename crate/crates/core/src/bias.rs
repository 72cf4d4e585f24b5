//! Constant-gm bias loop.
//!
//! M24 and M25 carry the same current `I`; M25 is the wider device and has
//! resistor `R` in its source, so `VGS24 = VGS25 + I·R`. With the square law
//! the nonzero fixed point gives
//!
//! ```text
//! gm24 = 2·(1 − sqrt(wl24/wl25)) / R
//! ```
//!
//! independent of `k'`, `VTH` and the supply. The loop current is mirrored
//! by `N` into each tail source of the amplifier, so any device biased from
//! it with a fixed share of the tail inherits the same invariance:
//!
//! ```text
//! gm_M1 = 2·sqrt(N·m)·sqrt(wl_M1/wl24)·(1 − sqrt(wl24/wl25)) / R
//! ```

use serde::{Deserialize, Serialize};

use crate::devmodel::{
    kprime_at, positive, resistance_at, vth_at, DeviceParams, Environment, ResistorSpec,
};
use crate::{ModelError, Result};

/// Lower end of the loop-current search; excludes the `I = 0` equilibrium.
pub const LOOP_CURRENT_FLOOR: f64 = 1e-12;
const LOOP_CURRENT_CEILING: f64 = 1e3;
const MAX_BISECTIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub wl_m24: f64,
    pub wl_m25: f64,
    pub resistor: ResistorSpec,
    pub mirror_ratio_n: f64,
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        positive("wl_m24", self.wl_m24)?;
        positive("wl_m25", self.wl_m25)?;
        if !(self.wl_m25 > self.wl_m24) {
            return Err(ModelError::invalid(
                "wl_m25",
                format!(
                    "must exceed wl_m24 ({}) for a nonzero gm, got {}",
                    self.wl_m24, self.wl_m25
                ),
            ));
        }
        self.resistor.validate().map_err(|e| e.within("resistor"))?;
        positive("mirror_ratio_n", self.mirror_ratio_n)
    }

    /// `1 − sqrt(wl24/wl25)`.
    fn geometry_factor(&self) -> f64 {
        1.0 - (self.wl_m24 / self.wl_m25).sqrt()
    }

    fn resistance(&self, env: &Environment) -> Result<f64> {
        let r = resistance_at(&self.resistor, env);
        if r > 0.0 {
            Ok(r)
        } else {
            Err(ModelError::invalid(
                "resistor.tempco",
                format!("resistance is {r} Ω at {} K", env.temperature),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSolution {
    /// Current through M24 and M25, A.
    pub loop_current: f64,
    pub gm_m24: f64,
    /// Mirrored tail current `N·I`, A.
    pub tail_current: f64,
}

/// Closed-form gm of M24.
pub fn gm_m24_formula(spec: &BiasSpec, env: &Environment) -> Result<f64> {
    spec.validate()?;
    Ok(2.0 * spec.geometry_factor() / spec.resistance(env)?)
}

/// Solves the loop equations for the nonzero operating point by bisection on
/// the gate-voltage residual `VGS24 − VGS25 − I·R`.
pub fn solve_bias_loop(
    spec: &BiasSpec,
    params: &DeviceParams,
    env: &Environment,
) -> Result<BiasSolution> {
    spec.validate()?;
    let kp = kprime_at(params, env);
    let vth = vth_at(params, env);
    let r = spec.resistance(env)?;
    let vgs = |wl: f64, i: f64| vth + (2.0 * i / (kp * wl)).sqrt();
    let residual = |i: f64| vgs(spec.wl_m24, i) - vgs(spec.wl_m25, i) - i * r;

    let mut lo = LOOP_CURRENT_FLOOR;
    if !(residual(lo) > 0.0) {
        return Err(ModelError::DegenerateRoot);
    }
    let mut hi = 1e-3;
    while residual(hi) > 0.0 {
        hi *= 10.0;
        if hi > LOOP_CURRENT_CEILING {
            return Err(ModelError::NoConvergence {
                what: "bias loop bracket".into(),
                iterations: 0,
            });
        }
    }

    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(ModelError::NoConvergence {
                what: "bias loop bisection".into(),
                iterations,
            });
        }
    }
    let i = 0.5 * (lo + hi);
    Ok(BiasSolution {
        loop_current: i,
        gm_m24: (2.0 * kp * spec.wl_m24 * i).sqrt(),
        tail_current: spec.mirror_ratio_n * i,
    })
}

/// Closed-form gm of an input device of size `wl_m1` carrying the fraction
/// `split_fraction_m` of the mirrored tail.
pub fn gm_m1_formula(
    bias: &BiasSpec,
    wl_m1: f64,
    split_fraction_m: f64,
    env: &Environment,
) -> Result<f64> {
    bias.validate()?;
    positive("wl_m1", wl_m1)?;
    if !(split_fraction_m > 0.0 && split_fraction_m < 1.0) {
        return Err(ModelError::Precondition(format!(
            "split fraction must lie in (0, 1), got {split_fraction_m}"
        )));
    }
    Ok(2.0
        * (bias.mirror_ratio_n * split_fraction_m).sqrt()
        * (wl_m1 / bias.wl_m24).sqrt()
        * bias.geometry_factor()
        / bias.resistance(env)?)
}

/// Device-physics route to the same quantity: `sqrt(2·k'·wl·m·N·I)` with `I`
/// from the solved loop.
pub fn gm_m1_device(
    solution: &BiasSolution,
    wl_m1: f64,
    split_fraction_m: f64,
    params: &DeviceParams,
    env: &Environment,
) -> f64 {
    (2.0 * kprime_at(params, env) * wl_m1 * split_fraction_m * solution.tail_current).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: f64) -> BiasSpec {
        BiasSpec {
            wl_m24: 10.0,
            wl_m25: 40.0,
            resistor: ResistorSpec::ideal(10e3),
            mirror_ratio_n: n,
        }
    }

    fn env(t: f64) -> Environment {
        Environment::new(t, 5.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn loop_gm_closed_form_arithmetic() {
        assert!(rel(gm_m24_formula(&spec(1.0), &env(300.0)).unwrap(), 100e-6) < 1e-15);
        for t in [233.15, 393.15] {
            assert!(rel(gm_m24_formula(&spec(1.0), &env(t)).unwrap(), 100e-6) < 1e-15);
        }
    }

    #[test]
    fn equal_widths_rejected() {
        let s = BiasSpec {
            wl_m25: 10.0,
            ..spec(1.0)
        };
        assert!(matches!(
            gm_m24_formula(&s, &env(300.0)),
            Err(ModelError::Invalid { ref field, .. }) if field == "wl_m25"
        ));
    }

    #[test]
    fn loop_current_matches_back_solve() {
        let p = DeviceParams::default();
        let sol = solve_bias_loop(&spec(16.0), &p, &env(300.0)).unwrap();
        // I = gm²/(2k'·wl24) = 1e-8 / 6e-3
        assert!(rel(sol.loop_current, 1e-8 / 6e-3) < 1e-12);
        assert!(rel(sol.gm_m24, 100e-6) < 1e-12);
        assert_eq!(sol.tail_current, 16.0 * sol.loop_current);
    }

    #[test]
    fn loop_residual_bisection_oracle() {
        // Independent bisection in the overdrive domain.
        let p = DeviceParams::default();
        let e = env(350.0);
        let s = spec(1.0);
        let kp = kprime_at(&p, &e);
        let f = |i: f64| (2.0 * i / (kp * 10.0)).sqrt() - (2.0 * i / (kp * 40.0)).sqrt() - i * 10e3;
        let (mut lo, mut hi) = (1e-12f64, 1.0f64);
        for _ in 0..300 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let sol = solve_bias_loop(&s, &p, &e).unwrap();
        assert!(rel(sol.loop_current, lo) < 1e-12);
    }

    #[test]
    fn constant_gm_across_temperature() {
        let p = DeviceParams::default();
        let cold = solve_bias_loop(&spec(1.0), &p, &env(233.15)).unwrap();
        let hot = solve_bias_loop(&spec(1.0), &p, &env(393.15)).unwrap();
        assert!(rel(cold.loop_current, hot.loop_current) > 0.1);
        assert!(rel(cold.gm_m24, hot.gm_m24) < 1e-12);
    }

    #[test]
    fn degenerate_loop_detected() {
        let p = DeviceParams::default();
        // Unvalidated spec with equal widths reaches the solver's own guard.
        let s = BiasSpec {
            wl_m25: 10.0,
            ..spec(1.0)
        };
        assert!(solve_bias_loop(&s, &p, &env(300.0)).is_err());
        // Enormous R pushes the root below the current floor.
        let s = BiasSpec {
            resistor: ResistorSpec::ideal(1e12),
            ..spec(1.0)
        };
        assert_eq!(
            solve_bias_loop(&s, &p, &env(300.0)),
            Err(ModelError::DegenerateRoot)
        );
    }

    #[test]
    fn input_gm_value_and_route_equivalence() {
        let p = DeviceParams::default();
        let e = env(300.0);
        let s = spec(2.0);
        let m = 5.4 / 6.4;
        let g = gm_m1_formula(&s, 54.0, m, &e).unwrap();
        assert!(rel(g, 3.018_691_769_624_716e-4) < 1e-14);
        let sol = solve_bias_loop(&s, &p, &e).unwrap();
        assert!(rel(gm_m1_device(&sol, 54.0, m, &p, &e), g) < 1e-9);

        let doubled = BiasSpec {
            resistor: ResistorSpec::ideal(20e3),
            ..s
        };
        assert!(rel(gm_m1_formula(&doubled, 54.0, m, &e).unwrap(), g / 2.0) < 1e-15);
        assert!(gm_m1_formula(&s, 54.0, 1.0, &e).is_err());
    }

    #[test]
    fn resistor_drift_keeps_gm_r_product() {
        let p = DeviceParams::default();
        let s = BiasSpec {
            resistor: ResistorSpec {
                tempco: 2e-3,
                ..ResistorSpec::ideal(10e3)
            },
            ..spec(4.0)
        };
        for t in [233.15, 273.15, 300.0, 350.0, 393.15] {
            let e = env(t);
            let sol = solve_bias_loop(&s, &p, &e).unwrap();
            let product = sol.gm_m24 * resistance_at(&s.resistor, &e);
            assert!(rel(product, 1.0) < 1e-9, "T={t}: {product}");
        }
    }
}
