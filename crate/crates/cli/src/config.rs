//! Run configuration: one JSON document holding the device parameters, both
//! amplifier designs and every experiment grid.
//!
//! Temperatures are given in °C (keys ending in `_c`) and converted to
//! kelvin on load. All other quantities are SI.

use std::path::{Path, PathBuf};

use gmcsim_core::analysis::{CornerSpec, ThdProtocol};
use gmcsim_core::devmodel::{DeviceParams, Environment, ZERO_CELSIUS};
use gmcsim_core::diffpair::RatioGrid;
use gmcsim_core::dynamp::{AmpConfig, Topology};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub environment: EnvironmentBlock,
    #[serde(default = "AmpConfig::default_proposed")]
    pub proposed: AmpConfig,
    #[serde(default = "AmpConfig::default_traditional")]
    pub traditional: AmpConfig,
    #[serde(default)]
    pub experiments: Experiments,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            device: DeviceParams::default(),
            environment: EnvironmentBlock::default(),
            proposed: AmpConfig::default_proposed(),
            traditional: AmpConfig::default_traditional(),
            experiments: Experiments::default(),
            output_dir: None,
            strict: false,
        }
    }
}

/// Nominal operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentBlock {
    pub temperature_c: f64,
    pub vdd: f64,
}

impl Default for EnvironmentBlock {
    fn default() -> Self {
        EnvironmentBlock {
            temperature_c: 27.0,
            vdd: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Experiments {
    pub transfer: TransferBlock,
    pub thd: ThdProtocol,
    pub corners: CornersBlock,
    pub flatness: FlatnessBlock,
    pub calibration: CalibrationBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferBlock {
    pub v_start: f64,
    pub v_stop: f64,
    pub n_points: usize,
    /// Half-width of the input range over which gain ripple is reported, V.
    pub ripple_window: f64,
}

impl Default for TransferBlock {
    fn default() -> Self {
        TransferBlock {
            v_start: -0.1,
            v_stop: 0.1,
            n_points: 201,
            ripple_window: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornersBlock {
    pub t_start_c: f64,
    pub t_stop_c: f64,
    pub n_t: usize,
    pub vdd_frac: f64,
    pub n_v: usize,
    pub probe_vin: f64,
}

impl Default for CornersBlock {
    fn default() -> Self {
        CornersBlock {
            t_start_c: -40.0,
            t_stop_c: 120.0,
            n_t: 9,
            vdd_frac: 0.1,
            n_v: 5,
            probe_vin: 1e-3,
        }
    }
}

/// Search for the asymmetry ratio used by `calibrate --flatten`.
///
/// The ratio ceiling is kept well below what pure flatness would pick: large
/// ratios need more tail current for the same gain, which eats into output
/// common-mode headroom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlatnessBlock {
    pub window: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
}

impl Default for FlatnessBlock {
    fn default() -> Self {
        FlatnessBlock {
            window: 0.04,
            ratio_min: 1.0,
            ratio_max: 8.0,
            points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationBlock {
    pub target_gain: f64,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        CalibrationBlock { target_gain: 15.7 }
    }
}

/// A parsed and validated config plus the keys it contained that the schema
/// does not know.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub unknown_keys: Vec<String>,
}

impl RunConfig {
    pub fn nominal_environment(&self) -> Environment {
        Environment {
            temperature: self.environment.temperature_c + ZERO_CELSIUS,
            vdd: self.environment.vdd,
        }
    }

    pub fn amp(&self, topology: Topology) -> &AmpConfig {
        match topology {
            Topology::Proposed => &self.proposed,
            Topology::Traditional => &self.traditional,
        }
    }

    pub fn amp_mut(&mut self, topology: Topology) -> &mut AmpConfig {
        match topology {
            Topology::Proposed => &mut self.proposed,
            Topology::Traditional => &mut self.traditional,
        }
    }

    pub fn corner_spec(&self) -> CornerSpec {
        let c = &self.experiments.corners;
        CornerSpec {
            t_start: c.t_start_c + ZERO_CELSIUS,
            t_stop: c.t_stop_c + ZERO_CELSIUS,
            n_t: c.n_t,
            vdd_nominal: self.environment.vdd,
            vdd_frac: c.vdd_frac,
            n_v: c.n_v,
            probe_vin: c.probe_vin,
        }
    }

    pub fn ratio_grid(&self) -> RatioGrid {
        let f = &self.experiments.flatness;
        RatioGrid {
            min: f.ratio_min,
            max: f.ratio_max,
            points: f.points,
        }
    }

    /// Checks every block against its model-level invariants.
    pub fn validate(&self) -> CliResult<()> {
        let v = CliError::from_validation;
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "`schema_version`: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        self.device.validate().map_err(|e| v(e, "device"))?;
        self.nominal_environment()
            .validate()
            .map_err(|e| v(e, "environment"))?;
        for (key, topology) in [
            ("proposed", Topology::Proposed),
            ("traditional", Topology::Traditional),
        ] {
            let amp = self.amp(topology);
            if amp.topology() != topology {
                return Err(CliError::Config(format!(
                    "`{key}.topology`: expected \"{topology}\", got \"{}\"",
                    amp.topology()
                )));
            }
            amp.validate().map_err(|e| v(e, key))?;
        }
        let corners = self.corner_spec();
        corners
            .validate()
            .map_err(|e| v(e, "experiments.corners"))?;
        if let gmcsim_core::dynamp::Stage::Proposed { bias, .. } = &self.proposed.stage {
            let (lo, hi) = (
                corners.t_start.min(self.nominal_environment().temperature),
                corners.t_stop.max(self.nominal_environment().temperature),
            );
            bias.resistor
                .validate_over(lo, hi)
                .map_err(|e| v(e, "proposed.bias.resistor"))?;
        }
        self.experiments
            .thd
            .validate()
            .map_err(|e| v(e, "experiments.thd"))?;

        let t = &self.experiments.transfer;
        if !(t.v_start < t.v_stop) || !t.v_start.is_finite() || !t.v_stop.is_finite() {
            return Err(CliError::Config(format!(
                "`experiments.transfer.v_stop`: need v_start < v_stop, got [{}, {}]",
                t.v_start, t.v_stop
            )));
        }
        if t.n_points < 2 {
            return Err(CliError::Config(format!(
                "`experiments.transfer.n_points`: must be >= 2, got {}",
                t.n_points
            )));
        }
        if !(t.ripple_window > 0.0) {
            return Err(CliError::Config(format!(
                "`experiments.transfer.ripple_window`: must be > 0, got {}",
                t.ripple_window
            )));
        }
        let f = &self.experiments.flatness;
        if !(f.window > 0.0) || !f.window.is_finite() {
            return Err(CliError::Config(format!(
                "`experiments.flatness.window`: must be > 0, got {}",
                f.window
            )));
        }
        self.ratio_grid().validate().map_err(|e| match e {
            gmcsim_core::ModelError::Invalid { reason, .. } => {
                CliError::Config(format!("`experiments.flatness`: {reason}"))
            }
            other => CliError::Config(format!("`experiments.flatness`: {other}")),
        })?;
        let g = self.experiments.calibration.target_gain;
        if !(g > 0.0) || !g.is_finite() {
            return Err(CliError::Config(format!(
                "`experiments.calibration.target_gain`: must be > 0, got {g}"
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn fingerprint(&self) -> String {
        let canonical = RunConfig {
            output_dir: None,
            strict: false,
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses and validates a config document. Unknown keys are an error when
/// `strict` is set (or the document sets `"strict": true`), otherwise they
/// are returned for the caller to report.
pub fn parse(text: &str, strict: bool) -> CliResult<Loaded> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("not valid JSON: {e}")))?;
    let config: RunConfig = serde_path_to_error::deserialize(&raw).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("`{path}`: {}", e.into_inner()))
    })?;
    let known = serde_json::to_value(&config).expect("config serializes");
    let mut unknown_keys = Vec::new();
    collect_unknown(&raw, &known, "", &mut unknown_keys);
    if (strict || config.strict) && !unknown_keys.is_empty() {
        return Err(CliError::Config(format!(
            "`{}`: unknown key (strict mode)",
            unknown_keys[0]
        )));
    }
    config.validate()?;
    Ok(Loaded {
        config,
        unknown_keys,
    })
}

pub fn load(path: &Path, strict: bool) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, strict)
}

/// Pretty JSON with a trailing newline; floats use the shortest text that
/// reads back to the same value.
pub fn emit(config: &RunConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}

fn collect_unknown(raw: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(raw), Value::Object(known)) = (raw, known) {
        for (key, value) in raw {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            match known.get(key) {
                Some(k) => collect_unknown(value, k, &path, out),
                None => out.push(path),
            }
        }
    }
}
