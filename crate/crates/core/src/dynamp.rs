//! The dynamic amplifier cycle.
//!
//! Each cycle resets both outputs to the common-mode level, lets the input
//! pair discharge the two load capacitors for the amplification window `T`,
//! and samples at the end of the window. The input is held for the whole
//! window, so branch currents are constant and the integration is exact:
//!
//! ```text
//! vout_p = vcm − I_n-branch·T/C,  vout_n = vcm − I_p-branch·T/C
//! vout_p − vout_n = ΔID·T/C
//! ```
//!
//! Outputs are clamped at the rails and flagged when they would leave them.
//!
//! Two topologies are modelled:
//!
//! - **Proposed**: a mirrored composite pair, each half biased with `N·I`
//!   from the constant-gm loop.
//! - **Traditional**: a symmetric pair whose tail device has its gate on a
//!   fixed fraction of the supply, so its current follows `k'`, `VTH` and
//!   `vdd`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bias::{solve_bias_loop, BiasSpec};
use crate::devmodel::{drain_current_sat, positive, DeviceParams, Environment, ResistorSpec};
use crate::diffpair::{
    delta_id, delta_id_composite, gm_composite, gm_symmetric, CompositePairSpec, PairGeometry,
};
use crate::{ModelError, Result};

/// Input used to define "the" gain of an amplifier: 1 mV.
pub const GAIN_PROBE: f64 = 1e-3;
/// Relative gain accuracy `calibrate_gain` guarantees.
pub const CALIBRATION_TOLERANCE: f64 = 1e-3;
const CALIBRATION_MAX_ITERATIONS: usize = 100;
/// Knob scalings beyond this factor in either direction are treated as
/// unreachable.
const CALIBRATION_MAX_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Traditional,
    Proposed,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Traditional => "traditional",
            Topology::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Supply-referenced tail bias of the traditional amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraditionalBias {
    /// Tail gate voltage as a fraction of `vdd`.
    pub gate_bias_fraction: f64,
    pub tail_wl: f64,
}

impl TraditionalBias {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_bias_fraction > 0.0 && self.gate_bias_fraction < 1.0) {
            return Err(ModelError::invalid(
                "gate_bias_fraction",
                format!("must lie in (0, 1), got {}", self.gate_bias_fraction),
            ));
        }
        positive("tail_wl", self.tail_wl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "snake_case")]
pub enum Stage {
    Proposed {
        pair: PairGeometry,
        bias: BiasSpec,
    },
    Traditional {
        pair: PairGeometry,
        bias: TraditionalBias,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpConfig {
    #[serde(flatten)]
    pub stage: Stage,
    /// Load capacitance per output, F.
    pub cap_c: f64,
    /// Amplification window, s.
    pub window_t: f64,
    /// Output reset level, V. `None` tracks `vdd/2`.
    #[serde(default)]
    pub vcm_out: Option<f64>,
}

impl AmpConfig {
    /// Composite pair with the 5.4 : 1 width split, constant-gm bias
    /// (wl 10 / 40, N = 8) and 12 pF loads, with R1 calibrated for a gain of
    /// 15.7 at 27 °C / 5 V.
    pub fn default_proposed() -> Self {
        AmpConfig {
            stage: Stage::Proposed {
                pair: PairGeometry {
                    base_wl: 10.0,
                    m: 5.4,
                    n: 1.0,
                },
                bias: BiasSpec {
                    wl_m24: 10.0,
                    wl_m25: 40.0,
                    resistor: ResistorSpec::ideal(DEFAULT_PROPOSED_R1),
                    mirror_ratio_n: 8.0,
                },
            },
            cap_c: 12e-12,
            window_t: 250e-9,
            vcm_out: None,
        }
    }

    /// Symmetric pair (wl 120) on a tail of wl 1 biased at 0.28·vdd, 25 pF
    /// loads, window calibrated for a gain of 16 at 27 °C / 5 V.
    pub fn default_traditional() -> Self {
        AmpConfig {
            stage: Stage::Traditional {
                pair: PairGeometry::symmetric(120.0),
                bias: TraditionalBias {
                    gate_bias_fraction: 0.28,
                    tail_wl: 1.0,
                },
            },
            cap_c: 25e-12,
            window_t: DEFAULT_TRADITIONAL_WINDOW,
            vcm_out: None,
        }
    }

    pub fn default_for(topology: Topology) -> Self {
        match topology {
            Topology::Proposed => Self::default_proposed(),
            Topology::Traditional => Self::default_traditional(),
        }
    }

    pub fn topology(&self) -> Topology {
        match self.stage {
            Stage::Proposed { .. } => Topology::Proposed,
            Stage::Traditional { .. } => Topology::Traditional,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.stage {
            Stage::Proposed { pair, bias } => {
                pair.validate().map_err(|e| e.within("pair"))?;
                bias.validate().map_err(|e| e.within("bias"))?;
            }
            Stage::Traditional { pair, bias } => {
                pair.validate().map_err(|e| e.within("pair"))?;
                if pair.m != pair.n {
                    return Err(ModelError::invalid(
                        "pair.n",
                        "the traditional amplifier uses a symmetric pair (m == n)",
                    ));
                }
                bias.validate().map_err(|e| e.within("bias"))?;
            }
        }
        positive("cap_c", self.cap_c)?;
        positive("window_t", self.window_t)?;
        if let Some(v) = self.vcm_out {
            positive("vcm_out", v)?;
        }
        Ok(())
    }

    pub fn pair_geometry(&self) -> PairGeometry {
        match self.stage {
            Stage::Proposed { pair, .. } | Stage::Traditional { pair, .. } => pair,
        }
    }

    /// Copy with a different pair geometry, keeping everything else.
    pub fn with_pair(&self, geometry: PairGeometry) -> Self {
        let mut out = *self;
        match &mut out.stage {
            Stage::Proposed { pair, .. } | Stage::Traditional { pair, .. } => *pair = geometry,
        }
        out
    }

    /// Hex SHA-256 of the canonical JSON form of `self` and `params`.
    pub fn fingerprint(&self, params: &DeviceParams) -> String {
        let text = serde_json::to_string(&(self, params)).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Calibrated R1 of [`AmpConfig::default_proposed`].
pub const DEFAULT_PROPOSED_R1: f64 = 5007.059289644013;
/// Calibrated window of [`AmpConfig::default_traditional`].
pub const DEFAULT_TRADITIONAL_WINDOW: f64 = 2.460504917950012e-7;

/// Output of one reset/amplify/sample cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpSample {
    pub vout_diff: f64,
    pub vout_p: f64,
    pub vout_n: f64,
    pub clipped: bool,
}

/// Tail current feeding the input stage: `N·I` per composite half for the
/// proposed amplifier, the supply-biased tail device for the traditional.
pub fn tail_current_of(cfg: &AmpConfig, params: &DeviceParams, env: &Environment) -> Result<f64> {
    match &cfg.stage {
        Stage::Proposed { bias, .. } => Ok(solve_bias_loop(bias, params, env)?.tail_current),
        Stage::Traditional { bias, .. } => Ok(drain_current_sat(
            params,
            bias.tail_wl,
            bias.gate_bias_fraction * env.vdd,
            env,
        )),
    }
}

/// Total tail current and differential output current at `vin_diff`.
fn branch_currents(
    cfg: &AmpConfig,
    vin_diff: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<(f64, f64)> {
    let tail = tail_current_of(cfg, params, env)?;
    if !(tail > 0.0) {
        return Err(ModelError::Domain(format!(
            "{} amplifier tail is cut off at {} K / {} V",
            cfg.topology(),
            env.temperature,
            env.vdd
        )));
    }
    match &cfg.stage {
        Stage::Proposed { pair, .. } => {
            let comp = CompositePairSpec::mirrored(pair.with_tail(tail))?;
            Ok((
                comp.total_tail(),
                delta_id_composite(&comp, vin_diff, params, env),
            ))
        }
        Stage::Traditional { pair, .. } => {
            Ok((tail, delta_id(&pair.with_tail(tail), vin_diff, params, env)))
        }
    }
}

/// Incremental transconductance of the input stage at zero input.
pub fn small_signal_gm(cfg: &AmpConfig, params: &DeviceParams, env: &Environment) -> Result<f64> {
    let tail = tail_current_of(cfg, params, env)?;
    match &cfg.stage {
        Stage::Proposed { pair, .. } => gm_composite(
            &CompositePairSpec::mirrored(pair.with_tail(tail))?,
            0.0,
            params,
            env,
        ),
        Stage::Traditional { pair, .. } => gm_symmetric(&pair.with_tail(tail), 0.0, params, env),
    }
}

/// One amplification cycle with input `vin_diff` held for the window.
pub fn amplify_once(
    cfg: &AmpConfig,
    vin_diff: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<AmpSample> {
    let (total, delta) = branch_currents(cfg, vin_diff, params, env)?;
    let vcm = cfg.vcm_out.unwrap_or(0.5 * env.vdd);
    let scale = cfg.window_t / cfg.cap_c;
    let raw_p = vcm - 0.5 * (total - delta) * scale;
    let raw_n = vcm - 0.5 * (total + delta) * scale;
    let in_rails = |v: f64| (0.0..=env.vdd).contains(&v);
    let clipped = !(in_rails(raw_p) && in_rails(raw_n));
    let vout_p = raw_p.clamp(0.0, env.vdd);
    let vout_n = raw_n.clamp(0.0, env.vdd);
    Ok(AmpSample {
        vout_diff: vout_p - vout_n,
        vout_p,
        vout_n,
        clipped,
    })
}

/// Large-signal gain `vout_diff / vin_diff`.
pub fn gain_at(
    cfg: &AmpConfig,
    vin_diff: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<f64> {
    if vin_diff == 0.0 || !vin_diff.is_finite() {
        return Err(ModelError::Precondition(format!(
            "gain is undefined at vin_diff = {vin_diff}"
        )));
    }
    Ok(amplify_once(cfg, vin_diff, params, env)?.vout_diff / vin_diff)
}

/// Knob adjusted by [`calibrate_gain`]: R1 for the proposed amplifier, the
/// window for the traditional one.
fn scaled_knob(cfg: &AmpConfig, scale: f64) -> AmpConfig {
    let mut out = *cfg;
    match &mut out.stage {
        Stage::Proposed { bias, .. } => bias.resistor.r_nominal *= scale,
        Stage::Traditional { .. } => out.window_t *= scale,
    }
    out
}

/// Secant search (in log-log coordinates) on the calibration knob until the
/// gain at [`GAIN_PROBE`] equals `target_gain`. The input config is returned
/// unchanged when it is already within [`CALIBRATION_TOLERANCE`].
pub fn calibrate_gain(
    cfg: &AmpConfig,
    target_gain: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<AmpConfig> {
    if !(target_gain > 0.0) || !target_gain.is_finite() {
        return Err(ModelError::Precondition(format!(
            "target gain must be > 0, got {target_gain}"
        )));
    }
    cfg.validate()?;
    let no_convergence = |iterations| ModelError::NoConvergence {
        what: format!("gain calibration to {target_gain}"),
        iterations,
    };
    let log_error = |u: f64| -> Result<f64> {
        let g = gain_at(&scaled_knob(cfg, u.exp()), GAIN_PROBE, params, env)?;
        if g > 0.0 && g.is_finite() {
            Ok((g / target_gain).ln())
        } else {
            Ok(f64::NAN)
        }
    };

    let mut u0 = 0.0;
    let mut h0 = log_error(u0)?;
    if h0.is_nan() {
        return Err(no_convergence(0));
    }
    if h0.abs() <= CALIBRATION_TOLERANCE.ln_1p() {
        return Ok(*cfg);
    }
    // gain ∝ 1/R for the constant-gm loop, ∝ T for the window
    let slope_guess = match cfg.topology() {
        Topology::Proposed => -1.0,
        Topology::Traditional => 1.0,
    };
    let mut u1 = -h0 / slope_guess;
    let max_u = CALIBRATION_MAX_SCALE.ln();
    for iteration in 1..=CALIBRATION_MAX_ITERATIONS {
        if u1.abs() > max_u {
            return Err(no_convergence(iteration));
        }
        let h1 = log_error(u1)?;
        if h1.is_nan() {
            return Err(no_convergence(iteration));
        }
        if h1.abs() < 1e-13 || u1 == u0 {
            if h1.abs() > CALIBRATION_TOLERANCE.ln_1p() {
                return Err(no_convergence(iteration));
            }
            return Ok(scaled_knob(cfg, u1.exp()));
        }
        let slope = (h1 - h0) / (u1 - u0);
        if !(slope.abs() > 0.0) || !slope.is_finite() {
            return Err(no_convergence(iteration));
        }
        (u0, h0) = (u1, h1);
        u1 -= h1 / slope;
    }
    Err(no_convergence(CALIBRATION_MAX_ITERATIONS))
}

/// Anything that turns a held differential input into a sampled output.
///
/// Analysis procedures are written against this trait so they can be driven
/// by [`Amplifier`] or by test doubles such as [`LinearStage`].
pub trait SampledAmplifier: Sync {
    fn sample(&self, vin_diff: f64, env: &Environment) -> Result<AmpSample>;

    /// Stable identifier of the configuration behind the samples.
    fn fingerprint(&self) -> String;
}

/// An [`AmpConfig`] bound to a device parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplifier {
    pub config: AmpConfig,
    pub params: DeviceParams,
}

impl Amplifier {
    pub fn new(config: AmpConfig, params: DeviceParams) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        Ok(Amplifier { config, params })
    }

    pub fn topology(&self) -> Topology {
        self.config.topology()
    }

    pub fn gain_at(&self, vin_diff: f64, env: &Environment) -> Result<f64> {
        gain_at(&self.config, vin_diff, &self.params, env)
    }
}

impl SampledAmplifier for Amplifier {
    fn sample(&self, vin_diff: f64, env: &Environment) -> Result<AmpSample> {
        amplify_once(&self.config, vin_diff, &self.params, env)
    }

    fn fingerprint(&self) -> String {
        self.config.fingerprint(&self.params)
    }
}

/// Ideal distortion-free, environment-independent gain stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStage {
    pub gain: f64,
}

impl SampledAmplifier for LinearStage {
    fn sample(&self, vin_diff: f64, env: &Environment) -> Result<AmpSample> {
        let half = 0.5 * self.gain * vin_diff;
        let vcm = 0.5 * env.vdd;
        Ok(AmpSample {
            vout_diff: self.gain * vin_diff,
            vout_p: vcm + half,
            vout_n: vcm - half,
            clipped: false,
        })
    }

    fn fingerprint(&self) -> String {
        format!("linear-stage:{}", self.gain)
    }
}

/// 27 °C, 5 V.
pub fn nominal_environment() -> Environment {
    Environment {
        temperature: 300.15,
        vdd: 5.0,
    }
}
