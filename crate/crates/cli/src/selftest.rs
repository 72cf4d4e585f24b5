//! Runtime invariant checks run by `gmcsim selftest`.
//!
//! Each check reduces to one worst-case number that must not exceed its
//! limit. The numbers are pure functions of the config, so the report is
//! reproducible byte for byte.

use gmcsim_core::analysis::{corner_sweep, stats_of, thd_run, CornerSpec, ThdProtocol};
use gmcsim_core::bias::{gm_m1_device, gm_m1_formula, gm_m24_formula, solve_bias_loop};
use gmcsim_core::devmodel::{kprime_at, DeviceParams, Environment, ResistorSpec};
use gmcsim_core::diffpair::{
    delta_id_composite, gm_asymmetric, gm_composite, solve_current_split, CompositePairSpec,
    DiffPairSpec,
};
use gmcsim_core::dynamp::{
    amplify_once, small_signal_gm, tail_current_of, LinearStage, Stage, Topology,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst value observed.
    pub measured: f64,
    pub limit: f64,
}

fn check(name: &'static str, measured: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: measured <= limit,
        measured,
        limit,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Width ratios exercised by the pair checks, as `(m, n)`.
pub const TEST_RATIOS: [(f64, f64); 4] = [(1.0, 1.0), (2.0, 1.0), (5.4, 1.0), (1.0, 5.4)];

/// A pair of the proposed amplifier's unit size and tail current.
fn reference_pair(cfg: &RunConfig, m: f64, n: f64) -> CliResult<DiffPairSpec> {
    let env = cfg.nominal_environment();
    let iss = tail_current_of(&cfg.proposed, &cfg.device, &env)?;
    Ok(DiffPairSpec::new(
        cfg.proposed.pair_geometry().base_wl,
        m,
        n,
        iss,
    )?)
}

/// Interior points covering the central 90 % of the conduction window.
fn interior_points(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let last = (count - 1) as f64;
    (0..count).map(move |i| lo + (hi - lo) * (0.05 + 0.9 * i as f64 / last))
}

pub fn run_all(cfg: &RunConfig) -> CliResult<Vec<CheckResult>> {
    let p = cfg.device;
    let env = cfg.nominal_environment();
    let mut checks = vec![
        gm_finite_difference(cfg, &p, &env)?,
        symmetric_collapse(cfg, &p, &env)?,
        peak_shift_direction(cfg, &p, &env)?,
        branch_conservation(cfg, &p, &env)?,
        composite_symmetry(cfg, &p, &env)?,
        bias_closed_form(cfg, &p)?,
        bias_route_equivalence(cfg, &p, &env)?,
        gain_law(cfg, &p, &env)?,
        output_antisymmetry(cfg, &p, &env)?,
    ];
    checks.extend(spectrum_of_linear_stage(&env)?);
    checks.push(corner_stats_of_constant_grid()?);
    Ok(checks)
}

fn gm_finite_difference(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (m, n) in TEST_RATIOS {
        let spec = reference_pair(cfg, m, n)?;
        let (lo, hi) = spec.conduction_bounds(p, env);
        for x in interior_points(lo, hi, 101) {
            let up = solve_current_split(&spec, x + h, p, env);
            let dn = solve_current_split(&spec, x - h, p, env);
            let fd = (up.delta() - dn.delta()) / (2.0 * h);
            worst = worst.max(rel(fd, gm_asymmetric(&spec, x, p, env)?));
        }
    }
    Ok(check("gm_matches_finite_difference", worst, 1e-6))
}

fn symmetric_collapse(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let spec = reference_pair(cfg, 1.0, 1.0)?;
    let expected = (kprime_at(p, env) * spec.base_wl * spec.iss).sqrt();
    let got = gm_asymmetric(&spec, 0.0, p, env)?;
    Ok(check("symmetric_gm_collapse", rel(got, expected), 1e-12))
}

/// Counts ratios whose Gm peak is not on the side of `sign(n − m)`.
fn peak_shift_direction(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let mut wrong = 0.0;
    for (m, n) in TEST_RATIOS {
        let spec = reference_pair(cfg, m, n)?;
        let (lo, hi) = spec.conduction_bounds(p, env);
        let w = 0.9 * lo.abs().min(hi);
        let steps = 4000;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=steps {
            let x = w * (2.0 * i as f64 - steps as f64) / steps as f64;
            let g = gm_asymmetric(&spec, x, p, env)?;
            if g > best.0 {
                best = (g, x);
            }
        }
        let expected = if n == m { 0.0 } else { (n - m).signum() };
        let observed = if best.1 == 0.0 { 0.0 } else { best.1.signum() };
        if observed != expected {
            wrong += 1.0;
        }
    }
    Ok(check("gm_peak_shift_direction", wrong, 0.0))
}

fn branch_conservation(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let mut worst = 0.0f64;
    for (m, n) in TEST_RATIOS {
        let spec = reference_pair(cfg, m, n)?;
        for i in 0..=200 {
            let x = -0.5 + i as f64 * 0.005;
            let s = solve_current_split(&spec, x, p, env);
            worst = worst.max(rel(s.id1 + s.id2, spec.iss));
        }
    }
    Ok(check("branch_current_conservation", worst, 1e-12))
}

/// Mirrored composite: Gm even and ΔID odd, to the last bit for ΔID.
fn composite_symmetry(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let mut worst = 0.0f64;
    for (m, n) in TEST_RATIOS {
        let comp = CompositePairSpec::mirrored(reference_pair(cfg, m, n)?)?;
        let g0 = gm_composite(&comp, 0.0, p, env)?;
        for i in 1..=200 {
            let x = i as f64 * 0.0025;
            let even =
                (gm_composite(&comp, x, p, env)? - gm_composite(&comp, -x, p, env)?).abs() / g0;
            let odd = delta_id_composite(&comp, x, p, env) + delta_id_composite(&comp, -x, p, env);
            worst = worst.max(even).max(odd.abs());
        }
    }
    Ok(check("composite_pair_symmetry", worst, 1e-12))
}

/// Loop gm against the closed form over temperature and a ±20 % spread of
/// `k'`, with an ideal resistor.
fn bias_closed_form(cfg: &RunConfig, p: &DeviceParams) -> CliResult<CheckResult> {
    let Stage::Proposed { bias, .. } = cfg.proposed.stage else {
        unreachable!("validated config");
    };
    let ideal = gmcsim_core::bias::BiasSpec {
        resistor: ResistorSpec::ideal(bias.resistor.r_nominal),
        ..bias
    };
    let spec = cfg.corner_spec();
    let temps = CornerSpec { n_t: 9, ..spec }.temperatures();
    let mut worst = 0.0f64;
    for t in temps {
        for scale in [0.8, 0.9, 1.0, 1.1, 1.2] {
            let env = Environment::new(t, spec.vdd_nominal)?;
            let params = p.with_kprime_scale(scale);
            let sol = solve_bias_loop(&ideal, &params, &env)?;
            worst = worst.max(rel(sol.gm_m24, gm_m24_formula(&ideal, &env)?));
        }
    }
    Ok(check("bias_gm_closed_form", worst, 1e-9))
}

fn bias_route_equivalence(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let Stage::Proposed { bias, pair } = cfg.proposed.stage else {
        unreachable!("validated config");
    };
    let sol = solve_bias_loop(&bias, p, env)?;
    let wl = pair.base_wl * pair.m;
    let split = pair.split_fraction();
    let formula = gm_m1_formula(&bias, wl, split, env)?;
    let device = gm_m1_device(&sol, wl, split, p, env);
    Ok(check(
        "bias_input_gm_routes_agree",
        rel(device, formula),
        1e-9,
    ))
}

/// Small-signal gain of the cycle against `Gm(0)·T/C`.
fn gain_law(cfg: &RunConfig, p: &DeviceParams, env: &Environment) -> CliResult<CheckResult> {
    let probe = gmcsim_core::analysis::SMALL_SIGNAL_PROBE;
    let mut worst = 0.0f64;
    for t in [Topology::Proposed, Topology::Traditional] {
        let amp = cfg.amp(t);
        let gain = amplify_once(amp, probe, p, env)?.vout_diff / probe;
        let predicted = small_signal_gm(amp, p, env)? * amp.window_t / amp.cap_c;
        worst = worst.max(rel(gain, predicted));
    }
    Ok(check("gain_equals_gm_t_over_c", worst, 1e-4))
}

fn output_antisymmetry(
    cfg: &RunConfig,
    p: &DeviceParams,
    env: &Environment,
) -> CliResult<CheckResult> {
    let mut worst = 0.0f64;
    for t in [Topology::Proposed, Topology::Traditional] {
        for i in 1..=100 {
            let x = i as f64 * 1e-3;
            let a = amplify_once(cfg.amp(t), x, p, env)?.vout_diff;
            let b = amplify_once(cfg.amp(t), -x, p, env)?.vout_diff;
            worst = worst.max((a + b).abs());
        }
    }
    Ok(check("differential_output_antisymmetry", worst, 0.0))
}

/// Coherent tone through an ideal stage: Parseval error, and the largest
/// non-fundamental bin in dB.
fn spectrum_of_linear_stage(env: &Environment) -> CliResult<[CheckResult; 2]> {
    let s = thd_run(&LinearStage { gain: 16.0 }, &ThdProtocol::default(), env)?;
    let leak_db = s
        .magnitudes_db
        .iter()
        .enumerate()
        .filter(|(b, _)| *b != s.fundamental_bin)
        .map(|(_, d)| *d)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok([
        check("spectrum_parseval", s.parseval_rel_err, 1e-9),
        check("spectrum_coherence_db", leak_db, -250.0),
    ])
}

fn corner_stats_of_constant_grid() -> CliResult<CheckResult> {
    let grid = corner_sweep(&LinearStage { gain: 16.0 }, &CornerSpec::default())?;
    let pair = stats_of(&[15.0, 17.0])?;
    let err = grid.stats.std
        + (grid.stats.max - grid.stats.min)
        + (pair.std - 1.0).abs()
        + (pair.mean - 16.0).abs();
    Ok(check("corner_statistics", err, 0.0))
}
