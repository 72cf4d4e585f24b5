//! The experiment commands. Each one computes everything first and returns
//! the files to write plus the lines to print; nothing touches the disk
//! until the whole command has succeeded.

use std::collections::BTreeMap;

use gmcsim_core::analysis::{
    corner_sweep, thd_run, transfer_sweep, CornerGrid, HarmonicLine, Spectrum, SweepCurve,
    SMALL_SIGNAL_PROBE,
};
use gmcsim_core::devmodel::{Environment, ZERO_CELSIUS};
use gmcsim_core::diffpair::optimize_flatness;
use gmcsim_core::dynamp::{
    calibrate_gain, gain_at, small_signal_gm, tail_current_of, AmpConfig, Amplifier, LinearStage,
    SampledAmplifier, Topology, GAIN_PROBE,
};
use serde::Serialize;

use crate::config::{emit, RunConfig};
use crate::output::{csv, OutputSet};
use crate::selftest;
use crate::{CliError, CliResult, TOOL_VERSION};

/// Which amplifiers a command runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TopologyChoice {
    Traditional,
    Proposed,
    Both,
    /// Ideal distortion-free stage with the calibration target as its gain.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Amp(Topology),
    Linear,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Amp(t) => t.name(),
            Target::Linear => "linear",
        }
    }
}

impl TopologyChoice {
    pub fn targets(self) -> Vec<Target> {
        match self {
            TopologyChoice::Traditional => vec![Target::Amp(Topology::Traditional)],
            TopologyChoice::Proposed => vec![Target::Amp(Topology::Proposed)],
            TopologyChoice::Both => vec![
                Target::Amp(Topology::Traditional),
                Target::Amp(Topology::Proposed),
            ],
            TopologyChoice::Linear => vec![Target::Linear],
        }
    }
}

/// Inputs shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub topology: TopologyChoice,
    /// `--strict` or the config's `strict` flag.
    pub strict: bool,
}

impl Context {
    pub fn new(config: RunConfig, topology: TopologyChoice, strict_flag: bool) -> Self {
        let strict = strict_flag || config.strict;
        Context {
            config,
            topology,
            strict,
        }
    }

    fn env(&self) -> Environment {
        self.config.nominal_environment()
    }

    fn sampler(&self, target: Target) -> CliResult<Box<dyn SampledAmplifier>> {
        Ok(match target {
            Target::Amp(t) => Box::new(Amplifier::new(*self.config.amp(t), self.config.device)?),
            Target::Linear => Box::new(LinearStage {
                gain: self.config.experiments.calibration.target_gain,
            }),
        })
    }

    fn report(&self, experiment: &'static str) -> RunReport {
        RunReport {
            tool_version: TOOL_VERSION,
            config_fingerprint: self.config.fingerprint(),
            experiment,
            transfer: None,
            gain: None,
            thd: None,
            corners: None,
            calibration: None,
        }
    }
}

/// Result of a command that completed its computation.
#[derive(Debug)]
pub struct Outcome {
    pub files: OutputSet,
    pub messages: Vec<String>,
    /// Set when the command ran but its verdict is negative (e.g. a failing
    /// self-test); the files are still written.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(files: OutputSet, messages: Vec<String>) -> Self {
        Outcome {
            files,
            messages,
            failure: None,
        }
    }
}

/// Summary written next to each command's data files.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: &'static str,
    pub config_fingerprint: String,
    pub experiment: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer: Option<BTreeMap<&'static str, TransferSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<BTreeMap<&'static str, GainSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thd: Option<ThdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corners: Option<CornersReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<BTreeMap<&'static str, CalibrationSummary>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvironmentOut {
    pub temperature_k: f64,
    pub vdd_v: f64,
}

impl From<Environment> for EnvironmentOut {
    fn from(e: Environment) -> Self {
        EnvironmentOut {
            temperature_k: e.temperature,
            vdd_v: e.vdd,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferSummary {
    /// Gain column at `vin = 0` (small-signal probe).
    pub gain_nominal: f64,
    pub ripple_window_v: f64,
    /// `(max − min) / mean` of the gain column over the window.
    pub gain_ripple: Option<f64>,
    pub any_clipped: bool,
}

#[derive(Debug, Clone, Serialize)]
struct TransferData<'a> {
    tool_version: &'static str,
    config_fingerprint: String,
    topology: &'static str,
    amplifier_fingerprint: &'a str,
    environment: EnvironmentOut,
    small_signal_probe_v: f64,
    vin_v: &'a [f64],
    vout_v: &'a [f64],
    gain: &'a [f64],
    clipped: &'a [bool],
}

pub fn transfer(ctx: &Context) -> CliResult<Outcome> {
    let env = ctx.env();
    let block = ctx.config.experiments.transfer;
    let mut files = OutputSet::new();
    let mut messages = Vec::new();
    let mut summaries = BTreeMap::new();
    for target in ctx.topology.targets() {
        let amp = ctx.sampler(target)?;
        let curve: SweepCurve = transfer_sweep(
            amp.as_ref(),
            block.v_start,
            block.v_stop,
            block.n_points,
            &env,
        )?;
        let name = target.name();
        files.add(
            format!("transfer_{name}.csv"),
            csv(
                "vin_v,vout_v,gain",
                curve
                    .inputs
                    .iter()
                    .zip(&curve.outputs)
                    .zip(&curve.gains)
                    .map(|((v, o), g)| [*v, *o, *g]),
            ),
        );
        files.add_json(
            format!("transfer_{name}.json"),
            &TransferData {
                tool_version: TOOL_VERSION,
                config_fingerprint: ctx.config.fingerprint(),
                topology: name,
                amplifier_fingerprint: &curve.fingerprint,
                environment: env.into(),
                small_signal_probe_v: SMALL_SIGNAL_PROBE,
                vin_v: &curve.inputs,
                vout_v: &curve.outputs,
                gain: &curve.gains,
                clipped: &curve.clipped,
            },
        );
        let summary = TransferSummary {
            gain_nominal: curve.gain_near(0.0).expect("non-empty sweep"),
            ripple_window_v: block.ripple_window,
            gain_ripple: curve.gain_ripple(block.ripple_window),
            any_clipped: curve.clipped.iter().any(|c| *c),
        };
        messages.push(format!(
            "{name}: gain {:.4} at vin = 0, ripple {} over ±{} V{}",
            summary.gain_nominal,
            summary
                .gain_ripple
                .map_or("n/a".to_string(), |r| format!("{:.3} %", 100.0 * r)),
            block.ripple_window,
            if summary.any_clipped {
                " (clipped)"
            } else {
                ""
            }
        ));
        summaries.insert(name, summary);
    }
    let mut report = ctx.report("transfer");
    report.transfer = Some(summaries);
    files.add_json("transfer_summary.json", &report);
    Ok(Outcome::ok(files, messages))
}

#[derive(Debug, Clone, Serialize)]
pub struct GainSummary {
    /// `vout/vin` at the 1 mV gain probe.
    pub gain_at_probe: f64,
    pub probe_v: f64,
    /// `vout/vin` at the 1 µV small-signal probe.
    pub gain_small_signal: f64,
    /// Input-stage transconductance at zero input, S.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gm0_s: Option<f64>,
    /// `Gm(0)·T/C`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_predicted: Option<f64>,
    /// Tail current per input pair, A.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_current_a: Option<f64>,
    pub environment: EnvironmentOut,
}

pub fn gain(ctx: &Context) -> CliResult<Outcome> {
    let env = ctx.env();
    let mut summaries = BTreeMap::new();
    let mut messages = Vec::new();
    for target in ctx.topology.targets() {
        let amp = ctx.sampler(target)?;
        let g_probe = amp.sample(GAIN_PROBE, &env)?.vout_diff / GAIN_PROBE;
        let g_small = amp.sample(SMALL_SIGNAL_PROBE, &env)?.vout_diff / SMALL_SIGNAL_PROBE;
        let (gm0, predicted, tail) = match target {
            Target::Amp(t) => {
                let cfg = ctx.config.amp(t);
                let gm0 = small_signal_gm(cfg, &ctx.config.device, &env)?;
                (
                    Some(gm0),
                    Some(gm0 * cfg.window_t / cfg.cap_c),
                    Some(tail_current_of(cfg, &ctx.config.device, &env)?),
                )
            }
            Target::Linear => (None, None, None),
        };
        messages.push(format!(
            "{}: gain {:.6} at {} V",
            target.name(),
            g_probe,
            GAIN_PROBE
        ));
        summaries.insert(
            target.name(),
            GainSummary {
                gain_at_probe: g_probe,
                probe_v: GAIN_PROBE,
                gain_small_signal: g_small,
                gm0_s: gm0,
                gain_predicted: predicted,
                tail_current_a: tail,
                environment: env.into(),
            },
        );
    }
    let mut report = ctx.report("gain");
    report.gain = Some(summaries);
    let mut files = OutputSet::new();
    files.add_json("gain_summary.json", &report);
    Ok(Outcome::ok(files, messages))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThdSummary {
    /// Fundamental over harmonics, dB; larger is cleaner.
    pub thd_db: f64,
    /// The same figure in the harmonics-over-fundamental convention.
    pub thd_dbc: f64,
    pub thd_n_db: f64,
    pub below_floor: bool,
    pub clipped: bool,
    pub fundamental_bin: usize,
    pub tone_hz: f64,
    pub max_even_harmonic_db: f64,
    pub parseval_rel_err: f64,
    pub harmonics: Vec<HarmonicLine>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThdReport {
    pub amplitude_v: f64,
    pub n_samples: usize,
    pub harmonics_counted: usize,
    pub topologies: BTreeMap<&'static str, ThdSummary>,
    /// `thd_db(proposed) − thd_db(traditional)` when both ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thd_delta_db: Option<f64>,
}

pub fn thd(ctx: &Context) -> CliResult<Outcome> {
    let env = ctx.env();
    let protocol = gmcsim_core::analysis::ThdProtocol {
        strict: ctx.strict || ctx.config.experiments.thd.strict,
        ..ctx.config.experiments.thd
    };
    let mut files = OutputSet::new();
    let mut messages = Vec::new();
    let mut topologies = BTreeMap::new();
    for target in ctx.topology.targets() {
        let amp = ctx.sampler(target)?;
        let s: Spectrum = thd_run(amp.as_ref(), &protocol, &env)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", target.name())))?;
        let name = target.name();
        files.add(
            format!("spectrum_{name}.csv"),
            csv(
                "bin,freq_hz,mag_db",
                s.bin_freqs
                    .iter()
                    .zip(&s.magnitudes_db)
                    .enumerate()
                    .map(|(b, (f, m))| [b as f64, *f, *m]),
            ),
        );
        messages.push(format!(
            "{name}: THD {:.2} dB ({:.2} dBc){}{}",
            s.thd_db,
            -s.thd_db,
            if s.below_floor {
                " [below numerical floor]"
            } else {
                ""
            },
            if s.clipped { " [clipped]" } else { "" }
        ));
        topologies.insert(
            name,
            ThdSummary {
                thd_db: s.thd_db,
                thd_dbc: -s.thd_db,
                thd_n_db: s.thd_n_db,
                below_floor: s.below_floor,
                clipped: s.clipped,
                fundamental_bin: s.fundamental_bin,
                tone_hz: protocol.tone_hz(),
                max_even_harmonic_db: s.max_even_harmonic_db(),
                parseval_rel_err: s.parseval_rel_err,
                harmonics: s.harmonics.clone(),
            },
        );
    }
    let thd_delta_db = match (topologies.get("proposed"), topologies.get("traditional")) {
        (Some(p), Some(t)) => Some(p.thd_db - t.thd_db),
        _ => None,
    };
    if let Some(d) = thd_delta_db {
        messages.push(format!("proposed − traditional: {d:.2} dB"));
    }
    let mut report = ctx.report("thd");
    report.thd = Some(ThdReport {
        amplitude_v: protocol.amplitude,
        n_samples: protocol.n_samples,
        harmonics_counted: protocol.harmonics,
        topologies,
        thd_delta_db,
    });
    files.add_json("thd_summary.json", &report);
    Ok(Outcome::ok(files, messages))
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerSummary {
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub any_clipped: bool,
    pub temps_k: Vec<f64>,
    pub vdds_v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CornersReport {
    pub probe_vin_v: f64,
    pub topologies: BTreeMap<&'static str, CornerSummary>,
    /// `std(proposed) / std(traditional)` when both ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_ratio: Option<f64>,
    /// `(max − min)` of proposed over that of traditional when both ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread_ratio: Option<f64>,
}

pub fn corners(ctx: &Context) -> CliResult<Outcome> {
    let spec = ctx.config.corner_spec();
    let block = ctx.config.experiments.corners;
    let temps_c: Vec<f64> = if block.n_t == 1 {
        vec![block.t_start_c]
    } else {
        let last = (block.n_t - 1) as f64;
        (0..block.n_t)
            .map(|i| (block.t_start_c * (last - i as f64) + block.t_stop_c * i as f64) / last)
            .collect()
    };
    let mut files = OutputSet::new();
    let mut messages = Vec::new();
    let mut topologies = BTreeMap::new();
    for target in ctx.topology.targets() {
        let amp = ctx.sampler(target)?;
        let grid: CornerGrid = corner_sweep(amp.as_ref(), &spec)?;
        let name = target.name();
        if ctx.strict && grid.any_clipped() {
            return Err(CliError::Runtime(format!(
                "{name}: output clipped in the corner grid (strict mode)"
            )));
        }
        let mut rows = Vec::with_capacity(grid.temps.len() * grid.vdds.len());
        for (i, row) in grid.gains.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                rows.push([temps_c[i], grid.vdds[j], *g]);
            }
        }
        files.add(
            format!("corners_{name}.csv"),
            csv("temp_c,vdd_v,gain", rows),
        );
        let st = grid.stats;
        messages.push(format!(
            "{name}: gain mean {:.4}, std {:.4e}, range {:.4} .. {:.4} over {} corners ({:.0} .. {:.0} °C)",
            st.mean,
            st.std,
            st.min,
            st.max,
            grid.temps.len() * grid.vdds.len(),
            grid.temps[0] - ZERO_CELSIUS,
            grid.temps[grid.temps.len() - 1] - ZERO_CELSIUS,
        ));
        topologies.insert(
            name,
            CornerSummary {
                std: st.std,
                min: st.min,
                max: st.max,
                mean: st.mean,
                any_clipped: grid.any_clipped(),
                temps_k: grid.temps.clone(),
                vdds_v: grid.vdds.clone(),
            },
        );
    }
    let (std_ratio, spread_ratio) =
        match (topologies.get("proposed"), topologies.get("traditional")) {
            (Some(p), Some(t)) => (Some(p.std / t.std), Some((p.max - p.min) / (t.max - t.min))),
            _ => (None, None),
        };
    if let Some(r) = std_ratio {
        messages.push(format!("std ratio proposed/traditional: {r:.3e}"));
    }
    let mut report = ctx.report("corners");
    report.corners = Some(CornersReport {
        probe_vin_v: spec.probe_vin,
        topologies,
        std_ratio,
        spread_ratio,
    });
    files.add_json("corners_stats.json", &report);
    Ok(Outcome::ok(files, messages))
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationSummary {
    pub target_gain: f64,
    pub gain_before: f64,
    pub gain_after: f64,
    /// R1 for the proposed amplifier, the window for the traditional one.
    pub knob: &'static str,
    pub knob_before: f64,
    pub knob_after: f64,
    /// Pair asymmetry `m/n` chosen by the flatness search, if it ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flatness_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flatness_gm_ripple: Option<f64>,
}

fn knob_of(cfg: &AmpConfig) -> (&'static str, f64) {
    match &cfg.stage {
        gmcsim_core::dynamp::Stage::Proposed { bias, .. } => ("r1_ohm", bias.resistor.r_nominal),
        gmcsim_core::dynamp::Stage::Traditional { .. } => ("window_t_s", cfg.window_t),
    }
}

/// Re-tunes the selected amplifiers to `target` (the config's calibration
/// target when `None`) and emits the resulting config. With `flatten`, the
/// proposed pair's asymmetry is first re-optimized over the flatness grid.
pub fn calibrate(ctx: &Context, target: Option<f64>, flatten: bool) -> CliResult<Outcome> {
    let env = ctx.env();
    let params = ctx.config.device;
    let target = target.unwrap_or(ctx.config.experiments.calibration.target_gain);
    if !(target > 0.0) || !target.is_finite() {
        return Err(CliError::Config(format!(
            "`--target`: must be > 0, got {target}"
        )));
    }
    let mut updated = ctx.config.clone();
    let mut summaries = BTreeMap::new();
    let mut messages = Vec::new();
    for t in ctx.topology.targets() {
        let Target::Amp(topology) = t else {
            return Err(CliError::Config(
                "`--topology`: the linear stage has no calibration knob".into(),
            ));
        };
        let original = *ctx.config.amp(topology);
        let gain_before = gain_at(&original, GAIN_PROBE, &params, &env)?;
        let mut cfg = original;
        let mut flat = None;
        if flatten && topology == Topology::Proposed {
            let f = &ctx.config.experiments.flatness;
            let base = cfg
                .pair_geometry()
                .with_tail(tail_current_of(&cfg, &params, &env)?);
            let best = optimize_flatness(&base, f.window, &ctx.config.ratio_grid(), &params, &env)?;
            cfg = cfg.with_pair(best.spec.pair_a.geometry());
            flat = Some(best);
        }
        let calibrated = calibrate_gain(&cfg, target, &params, &env)
            .map_err(|e| CliError::Runtime(format!("{topology}: {e}")))?;
        let gain_after = gain_at(&calibrated, GAIN_PROBE, &params, &env)?;
        let (knob, knob_before) = knob_of(&original);
        let (_, knob_after) = knob_of(&calibrated);
        messages.push(format!(
            "{topology}: gain {gain_before:.6} -> {gain_after:.6} (target {target}), {knob} {knob_before} -> {knob_after}"
        ));
        *updated.amp_mut(topology) = calibrated;
        summaries.insert(
            topology.name(),
            CalibrationSummary {
                target_gain: target,
                gain_before,
                gain_after,
                knob,
                knob_before,
                knob_after,
                flatness_ratio: flat.map(|f| f.ratio),
                flatness_gm_ripple: flat.map(|f| f.ripple),
            },
        );
    }
    updated.experiments.calibration.target_gain = target;
    updated.validate()?;
    let mut files = OutputSet::new();
    files.add("calibrated_config.json", emit(&updated));
    let mut report = ctx.report("calibrate");
    report.config_fingerprint = updated.fingerprint();
    report.calibration = Some(summaries);
    files.add_json("calibration_summary.json", &report);
    Ok(Outcome::ok(files, messages))
}

pub fn selftest(ctx: &Context) -> CliResult<Outcome> {
    let checks = selftest::run_all(&ctx.config)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    let messages = checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {:.3e} (limit {:.1e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.limit
            )
        })
        .collect();
    #[derive(Serialize)]
    struct SelftestReport<'a> {
        tool_version: &'static str,
        config_fingerprint: String,
        passed: bool,
        checks: &'a [selftest::CheckResult],
    }
    let mut files = OutputSet::new();
    files.add_json(
        "selftest.json",
        &SelftestReport {
            tool_version: TOOL_VERSION,
            config_fingerprint: ctx.config.fingerprint(),
            passed: failed.is_empty(),
            checks: &checks,
        },
    );
    Ok(Outcome {
        files,
        messages,
        failure: (!failed.is_empty()).then(|| format!("self-test failed: {}", failed.join(", "))),
    })
}
