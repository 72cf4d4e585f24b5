use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devmodel::Environment;
use crate::dynamp::SampledAmplifier;
use crate::{ModelError, Result};

/// Input used in place of `vin = 0` when reporting gain: 1 µV.
pub const SMALL_SIGNAL_PROBE: f64 = 1e-6;

/// DC transfer curve and the gain derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    /// Differential inputs, V, strictly increasing.
    pub inputs: Vec<f64>,
    /// Differential outputs, V.
    pub outputs: Vec<f64>,
    /// `output / input`; the `vin = 0` point holds the small-signal gain.
    pub gains: Vec<f64>,
    pub clipped: Vec<bool>,
    pub fingerprint: String,
    pub environment: Environment,
}

impl SweepCurve {
    /// `(max − min) / mean` of the gain column over `|vin| ≤ window`.
    /// `None` when no point lies in the window.
    pub fn gain_ripple(&self, window: f64) -> Option<f64> {
        let limit = window * (1.0 + 1e-9);
        let selected: Vec<f64> = self
            .inputs
            .iter()
            .zip(&self.gains)
            .filter(|(v, _)| v.abs() <= limit)
            .map(|(_, g)| *g)
            .collect();
        if selected.is_empty() {
            return None;
        }
        let min = selected.iter().copied().fold(f64::INFINITY, f64::min);
        let max = selected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = super::compensated_sum(selected.iter().copied()) / selected.len() as f64;
        Some((max - min) / mean)
    }

    /// Gain at the grid point closest to `vin`.
    pub fn gain_near(&self, vin: f64) -> Option<f64> {
        self.inputs
            .iter()
            .zip(&self.gains)
            .min_by(|a, b| (a.0 - vin).abs().total_cmp(&(b.0 - vin).abs()))
            .map(|(_, g)| *g)
    }
}

/// `n_points` equispaced DC inputs from `v_start` to `v_stop`, one amplifier
/// cycle each.
///
/// Grid points are `(v_start·(n−1−i) + v_stop·i)/(n−1)`, which is exactly
/// antisymmetric for symmetric endpoints and hits zero exactly at the centre
/// of an odd-length symmetric grid.
pub fn transfer_sweep<A: SampledAmplifier + ?Sized>(
    amp: &A,
    v_start: f64,
    v_stop: f64,
    n_points: usize,
    env: &Environment,
) -> Result<SweepCurve> {
    if !(v_start < v_stop) || !v_start.is_finite() || !v_stop.is_finite() {
        return Err(ModelError::Precondition(format!(
            "sweep needs v_start < v_stop, got [{v_start}, {v_stop}]"
        )));
    }
    if n_points < 2 {
        return Err(ModelError::Precondition(
            "sweep needs at least 2 points".into(),
        ));
    }
    env.validate()?;
    let last = (n_points - 1) as f64;
    let inputs: Vec<f64> = (0..n_points)
        .map(|i| (v_start * (last - i as f64) + v_stop * i as f64) / last)
        .collect();

    let points: Vec<(f64, f64, bool)> = inputs
        .par_iter()
        .map(|&v| {
            let s = amp
                .sample(v, env)
                .map_err(|e| e.at(format!("sweep point vin = {v}")))?;
            let gain = if v == 0.0 {
                amp.sample(SMALL_SIGNAL_PROBE, env)?.vout_diff / SMALL_SIGNAL_PROBE
            } else {
                s.vout_diff / v
            };
            Ok((s.vout_diff, gain, s.clipped))
        })
        .collect::<Result<_>>()?;

    Ok(SweepCurve {
        outputs: points.iter().map(|p| p.0).collect(),
        gains: points.iter().map(|p| p.1).collect(),
        clipped: points.iter().map(|p| p.2).collect(),
        inputs,
        fingerprint: amp.fingerprint(),
        environment: *env,
    })
}
