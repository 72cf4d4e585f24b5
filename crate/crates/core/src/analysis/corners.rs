use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compensated_sum;
use crate::devmodel::Environment;
use crate::dynamp::SampledAmplifier;
use crate::{ModelError, Result};

/// Temperature x supply grid for gain-stability runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSpec {
    /// K.
    pub t_start: f64,
    /// K.
    pub t_stop: f64,
    pub n_t: usize,
    pub vdd_nominal: f64,
    /// Supply spread as a fraction of nominal, applied both ways.
    pub vdd_frac: f64,
    pub n_v: usize,
    /// Differential input at which gain is measured, V.
    pub probe_vin: f64,
}

impl Default for CornerSpec {
    /// −40 °C to 120 °C in 20 K steps, 5 V ± 10 % in five steps, 1 mV probe.
    fn default() -> Self {
        CornerSpec {
            t_start: 233.15,
            t_stop: 393.15,
            n_t: 9,
            vdd_nominal: 5.0,
            vdd_frac: 0.1,
            n_v: 5,
            probe_vin: 1e-3,
        }
    }
}

impl CornerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(ModelError::invalid(field, reason));
        if !(self.t_start > 0.0) || !(self.t_stop >= self.t_start) || !self.t_stop.is_finite() {
            return bad(
                "t_stop",
                format!(
                    "need 0 < t_start <= t_stop, got [{}, {}]",
                    self.t_start, self.t_stop
                ),
            );
        }
        if self.n_t == 0 {
            return bad("n_t", "must be >= 1".into());
        }
        if self.n_v == 0 {
            return bad("n_v", "must be >= 1".into());
        }
        if !(self.vdd_frac >= 0.0 && self.vdd_frac < 1.0) {
            return bad(
                "vdd_frac",
                format!("must lie in [0, 1), got {}", self.vdd_frac),
            );
        }
        if !(self.vdd_nominal > 0.0) || !self.vdd_nominal.is_finite() {
            return bad(
                "vdd_nominal",
                format!("must be > 0, got {}", self.vdd_nominal),
            );
        }
        if !(self.probe_vin != 0.0) || !self.probe_vin.is_finite() {
            return bad(
                "probe_vin",
                format!("must be finite and nonzero, got {}", self.probe_vin),
            );
        }
        Ok(())
    }

    /// Temperature grid, K. A single point sits at `t_start`.
    pub fn temperatures(&self) -> Vec<f64> {
        linspace(self.t_start, self.t_stop, self.n_t)
    }

    /// Supply grid, V. A single point sits at the nominal supply.
    pub fn supplies(&self) -> Vec<f64> {
        if self.n_v == 1 {
            return vec![self.vdd_nominal];
        }
        let d = self.vdd_nominal * self.vdd_frac;
        linspace(self.vdd_nominal - d, self.vdd_nominal + d, self.n_v)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| (a * (last - i as f64) + b * i as f64) / last)
        .collect()
}

/// Population statistics of a set of gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainStats {
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Two-pass population statistics with compensated sums.
pub fn stats_of(values: &[f64]) -> Result<GainStats> {
    if values.is_empty() {
        return Err(ModelError::Precondition(
            "statistics of an empty grid".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|g| (g - mean) * (g - mean))) / n;
    Ok(GainStats {
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerGrid {
    /// K.
    pub temps: Vec<f64>,
    pub vdds: Vec<f64>,
    /// `gains[i][j]` at `temps[i]`, `vdds[j]`.
    pub gains: Vec<Vec<f64>>,
    pub clipped: Vec<Vec<bool>>,
    pub stats: GainStats,
    pub fingerprint: String,
}

impl CornerGrid {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().flatten().any(|c| *c)
    }
}

/// Statistics over every cell of a grid, row-major.
pub fn gain_stats(grid: &CornerGrid) -> Result<GainStats> {
    let flat: Vec<f64> = grid.gains.iter().flatten().copied().collect();
    stats_of(&flat)
}

/// Gain `vout/vin` at `probe_vin` over the full temperature x supply grid.
pub fn corner_sweep<A: SampledAmplifier + ?Sized>(
    amp: &A,
    spec: &CornerSpec,
) -> Result<CornerGrid> {
    spec.validate()?;
    let temps = spec.temperatures();
    let vdds = spec.supplies();
    let cells: Vec<(usize, usize)> = (0..temps.len())
        .flat_map(|i| (0..vdds.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<(f64, bool)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let ctx = || format!("corner T = {} K, VDD = {} V", temps[i], vdds[j]);
            let env = Environment::new(temps[i], vdds[j]).map_err(|e| e.at(ctx()))?;
            let s = amp.sample(spec.probe_vin, &env).map_err(|e| e.at(ctx()))?;
            Ok((s.vout_diff / spec.probe_vin, s.clipped))
        })
        .collect::<Result<_>>()?;

    let cols = vdds.len();
    let gains: Vec<Vec<f64>> = values
        .chunks(cols)
        .map(|r| r.iter().map(|c| c.0).collect())
        .collect();
    let clipped: Vec<Vec<bool>> = values
        .chunks(cols)
        .map(|r| r.iter().map(|c| c.1).collect())
        .collect();
    let stats = stats_of(&values.iter().map(|c| c.0).collect::<Vec<_>>())?;
    Ok(CornerGrid {
        temps,
        vdds,
        gains,
        clipped,
        stats,
        fingerprint: amp.fingerprint(),
    })
}
