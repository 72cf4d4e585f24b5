//! Square-law device models.
//!
//! `k'` (the mobility-oxide product) follows a power law in absolute
//! temperature, the threshold drifts linearly, and resistors carry a linear
//! temperature coefficient. Channel-length modulation is not modelled: the
//! amplifiers built on top rely on cascoded outputs, so drain currents are
//! taken as ideal saturation currents.

use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

/// 0 °C in kelvin.
pub const ZERO_CELSIUS: f64 = 273.15;

/// Square-law transistor parameters.
///
/// Mobility and oxide capacitance only ever appear as a product, so they are
/// stored jointly as `kprime_nominal` (A/V²) at `t_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub kprime_nominal: f64,
    pub vth_nominal: f64,
    /// Reference temperature, K.
    pub t_ref: f64,
    /// Exponent α of `k'(T) = k'(t_ref)·(T/t_ref)^(−α)`.
    pub mobility_exponent: f64,
    /// Threshold drift, V/K.
    pub vth_tempco: f64,
}

impl Default for DeviceParams {
    /// A 5 V-capable 180 nm-class NMOS: 300 µA/V², 0.7 V, α = 1.5, −1 mV/K.
    fn default() -> Self {
        DeviceParams {
            kprime_nominal: 300e-6,
            vth_nominal: 0.7,
            t_ref: 300.0,
            mobility_exponent: 1.5,
            vth_tempco: -1e-3,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        positive("kprime_nominal", self.kprime_nominal)?;
        positive("t_ref", self.t_ref)?;
        finite("vth_nominal", self.vth_nominal)?;
        finite("vth_tempco", self.vth_tempco)?;
        if !(self.mobility_exponent >= 0.0) || !self.mobility_exponent.is_finite() {
            return Err(ModelError::invalid(
                "mobility_exponent",
                format!("must be finite and >= 0, got {}", self.mobility_exponent),
            ));
        }
        Ok(())
    }

    /// Copy with `k'` scaled by `factor`; used for process-like perturbations.
    pub fn with_kprime_scale(&self, factor: f64) -> Self {
        DeviceParams {
            kprime_nominal: self.kprime_nominal * factor,
            ..*self
        }
    }
}

/// Temperature and supply point of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// K.
    pub temperature: f64,
    /// V.
    pub vdd: f64,
}

impl Environment {
    pub fn new(temperature: f64, vdd: f64) -> Result<Self> {
        let env = Environment { temperature, vdd };
        env.validate()?;
        Ok(env)
    }

    pub fn from_celsius(temp_c: f64, vdd: f64) -> Result<Self> {
        Self::new(temp_c + ZERO_CELSIUS, vdd)
    }

    pub fn temperature_c(&self) -> f64 {
        self.temperature - ZERO_CELSIUS
    }

    pub fn validate(&self) -> Result<()> {
        positive("temperature", self.temperature)?;
        positive("vdd", self.vdd)
    }
}

/// Resistor with a linear temperature coefficient around `t_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistorSpec {
    /// Ω at `t_ref`.
    pub r_nominal: f64,
    /// Fractional drift, 1/K.
    #[serde(default)]
    pub tempco: f64,
    #[serde(default = "default_t_ref")]
    pub t_ref: f64,
}

fn default_t_ref() -> f64 {
    DeviceParams::default().t_ref
}

impl ResistorSpec {
    pub fn ideal(r_nominal: f64) -> Self {
        ResistorSpec {
            r_nominal,
            tempco: 0.0,
            t_ref: default_t_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("r_nominal", self.r_nominal)?;
        positive("t_ref", self.t_ref)?;
        finite("tempco", self.tempco)
    }

    /// Rejects specs whose resistance is non-positive anywhere in
    /// `[t_min, t_max]`. The model is linear, so checking the ends suffices.
    pub fn validate_over(&self, t_min: f64, t_max: f64) -> Result<()> {
        self.validate()?;
        for t in [t_min, t_max] {
            let r = self.r_nominal * (1.0 + self.tempco * (t - self.t_ref));
            if !(r > 0.0) {
                return Err(ModelError::invalid(
                    "tempco",
                    format!("resistance becomes {r} Ω at {t} K"),
                ));
            }
        }
        Ok(())
    }
}

/// `k'(T) = k'_nom · (T / t_ref)^(−α)`.
pub fn kprime_at(params: &DeviceParams, env: &Environment) -> f64 {
    if params.mobility_exponent == 0.0 {
        return params.kprime_nominal;
    }
    params.kprime_nominal * (env.temperature / params.t_ref).powf(-params.mobility_exponent)
}

pub fn vth_at(params: &DeviceParams, env: &Environment) -> f64 {
    params.vth_nominal + params.vth_tempco * (env.temperature - params.t_ref)
}

/// Saturation drain current `(k'/2)·wl·(vgs − VTH)²`, zero at and below
/// threshold.
pub fn drain_current_sat(params: &DeviceParams, wl: f64, vgs: f64, env: &Environment) -> f64 {
    let vov = vgs - vth_at(params, env);
    if vov <= 0.0 {
        return 0.0;
    }
    0.5 * kprime_at(params, env) * wl * vov * vov
}

pub fn resistance_at(spec: &ResistorSpec, env: &Environment) -> f64 {
    spec.r_nominal * (1.0 + spec.tempco * (env.temperature - spec.t_ref))
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(
            field,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

pub(crate) fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(
            field,
            format!("must be finite, got {v}"),
        ))
    }
}
