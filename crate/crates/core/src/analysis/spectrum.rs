use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::compensated_sum;
use crate::devmodel::Environment;
use crate::dynamp::SampledAmplifier;
use crate::{ModelError, Result};

/// THD values above this (harmonics more than 250 dB below the fundamental)
/// are numerical noise; they are reported as this value with `below_floor`.
pub const THD_FLOOR_DB: f64 = 250.0;
/// Lowest level written for an empty bin, dB below the fundamental.
pub const MAG_FLOOR_DB: f64 = -400.0;

/// Coherent single-tone THD measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThdProtocol {
    /// Peak differential input, V.
    pub amplitude: f64,
    /// Whole input periods per record.
    pub cycles: usize,
    /// Record length, a power of two.
    pub n_samples: usize,
    /// Highest harmonic order included.
    pub harmonics: usize,
    /// Amplifier clock; one output sample per clock, Hz.
    pub clock_hz: f64,
    /// Fail when any cycle clips.
    pub strict: bool,
}

impl Default for ThdProtocol {
    /// 60 mV, 3 periods in 1024 samples at 2 MHz, harmonics 2–9.
    fn default() -> Self {
        ThdProtocol {
            amplitude: 60e-3,
            cycles: 3,
            n_samples: 1024,
            harmonics: 9,
            clock_hz: 2e6,
            strict: false,
        }
    }
}

impl ThdProtocol {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(ModelError::invalid(field, reason));
        if !self.n_samples.is_power_of_two() || self.n_samples < 4 {
            return bad(
                "n_samples",
                format!("must be a power of two >= 4, got {}", self.n_samples),
            );
        }
        if self.cycles == 0 || self.cycles >= self.n_samples / 2 {
            return bad(
                "cycles",
                format!("must lie in (0, n_samples/2), got {}", self.cycles),
            );
        }
        if gcd(self.cycles, self.n_samples) != 1 {
            return bad(
                "cycles",
                format!(
                    "must be coprime with n_samples ({}), got {}",
                    self.n_samples, self.cycles
                ),
            );
        }
        if self.harmonics < 2 {
            return bad("harmonics", format!("must be >= 2, got {}", self.harmonics));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return bad("amplitude", format!("must be > 0, got {}", self.amplitude));
        }
        if !(self.clock_hz > 0.0) || !self.clock_hz.is_finite() {
            return bad("clock_hz", format!("must be > 0, got {}", self.clock_hz));
        }
        Ok(())
    }

    /// Input tone frequency, Hz.
    pub fn tone_hz(&self) -> f64 {
        self.clock_hz * self.cycles as f64 / self.n_samples as f64
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicLine {
    pub order: usize,
    /// Bin after folding into `[0, N/2]`.
    pub bin: usize,
    /// Power relative to the fundamental, dB.
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Frequencies of the one-sided bins `0..=N/2`, Hz.
    pub bin_freqs: Vec<f64>,
    /// Bin power relative to the fundamental, dB, floored at
    /// [`MAG_FLOOR_DB`].
    pub magnitudes_db: Vec<f64>,
    pub fundamental_bin: usize,
    /// Fundamental over summed harmonic power, dB (larger is cleaner).
    pub thd_db: f64,
    /// Fundamental over everything except DC and the fundamental, dB.
    pub thd_n_db: f64,
    pub below_floor: bool,
    pub harmonics: Vec<HarmonicLine>,
    pub n_samples: usize,
    /// `|Σ|X|²/N − Σ|x|²| / Σ|x|²`.
    pub parseval_rel_err: f64,
    pub clipped: bool,
    pub fingerprint: String,
}

impl Spectrum {
    pub fn harmonic_db(&self, order: usize) -> Option<f64> {
        self.harmonics
            .iter()
            .find(|h| h.order == order)
            .map(|h| h.level_db)
    }

    /// Highest level among the even-order harmonics, dB.
    pub fn max_even_harmonic_db(&self) -> f64 {
        self.harmonics
            .iter()
            .filter(|h| h.order % 2 == 0)
            .map(|h| h.level_db)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `amplitude·sin(2π·cycles·k/n)` for `k = 0..n`.
///
/// The phase index is reduced modulo `n` before the sine is taken, and the
/// second half-period is generated by negating the first, so the record is
/// exactly antisymmetric under a half-record shift when `cycles` is odd.
pub fn coherent_sine(amplitude: f64, cycles: usize, n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|k| {
            let j = (cycles * k) % n;
            let angle = |j: usize| 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            if n.is_multiple_of(2) && j >= half {
                -amplitude * angle(j - half).sin()
            } else {
                amplitude * angle(j).sin()
            }
        })
        .collect()
}

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(MAG_FLOOR_DB)
    } else {
        MAG_FLOOR_DB
    }
}

/// Rectangular-window spectrum and THD of a coherent record.
pub fn spectrum_of(samples: &[f64], protocol: &ThdProtocol) -> Result<Spectrum> {
    protocol.validate()?;
    let n = protocol.n_samples;
    if samples.len() != n {
        return Err(ModelError::Precondition(format!(
            "record has {} samples, protocol expects {n}",
            samples.len()
        )));
    }
    let mut buffer: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let power: Vec<f64> = buffer.iter().map(|c| c.norm_sqr()).collect();

    let time_energy = compensated_sum(samples.iter().map(|x| x * x));
    let freq_energy = compensated_sum(power.iter().copied()) / n as f64;
    let parseval_rel_err = if time_energy > 0.0 {
        ((freq_energy - time_energy) / time_energy).abs()
    } else {
        freq_energy.abs()
    };

    let fund = protocol.cycles;
    let p_fund = power[fund];
    if !(p_fund > 0.0) {
        return Err(ModelError::Domain(
            "record has no energy at the fundamental".into(),
        ));
    }

    let fold = |b: usize| if b > n / 2 { n - b } else { b };
    let mut seen = vec![false; n / 2 + 1];
    let mut harmonics = Vec::new();
    for order in 2..=protocol.harmonics {
        let bin = fold((order * fund) % n);
        if bin == 0 || bin == fund {
            continue;
        }
        harmonics.push(HarmonicLine {
            order,
            bin,
            level_db: to_db(power[bin] / p_fund),
        });
        seen[bin] = true;
    }
    let p_harm = compensated_sum(
        seen.iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(b, _)| power[b]),
    );
    let ratio = p_harm / p_fund;
    let below_floor = !(ratio > 10f64.powf(-THD_FLOOR_DB / 10.0));
    let thd_db = if below_floor {
        THD_FLOOR_DB
    } else {
        -10.0 * ratio.log10()
    };

    let p_rest = compensated_sum((1..=n / 2).filter(|&b| b != fund).map(|b| power[b]));
    let rest_ratio = p_rest / p_fund;
    let thd_n_db = if rest_ratio > 10f64.powf(-THD_FLOOR_DB / 10.0) {
        -10.0 * rest_ratio.log10()
    } else {
        THD_FLOOR_DB
    };

    Ok(Spectrum {
        bin_freqs: (0..=n / 2)
            .map(|b| protocol.clock_hz * b as f64 / n as f64)
            .collect(),
        magnitudes_db: (0..=n / 2).map(|b| to_db(power[b] / p_fund)).collect(),
        fundamental_bin: fund,
        thd_db,
        thd_n_db,
        below_floor,
        harmonics,
        n_samples: n,
        parseval_rel_err,
        clipped: false,
        fingerprint: String::new(),
    })
}

/// Drives the amplifier with one cycle per sample of a coherent sine and
/// analyses the sampled outputs.
pub fn thd_run<A: SampledAmplifier + ?Sized>(
    amp: &A,
    protocol: &ThdProtocol,
    env: &Environment,
) -> Result<Spectrum> {
    protocol.validate()?;
    env.validate()?;
    let inputs = coherent_sine(protocol.amplitude, protocol.cycles, protocol.n_samples);
    let outputs: Vec<(f64, bool)> = inputs
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            amp.sample(v, env)
                .map(|s| (s.vout_diff, s.clipped))
                .map_err(|e| e.at(format!("THD sample {k}")))
        })
        .collect::<Result<_>>()?;
    let clipped = outputs.iter().any(|o| o.1);
    if clipped && protocol.strict {
        return Err(ModelError::Domain(
            "output clipped during the THD record (strict mode)".into(),
        ));
    }
    let record: Vec<f64> = outputs.iter().map(|o| o.0).collect();
    let mut spectrum = spectrum_of(&record, protocol)?;
    spectrum.clipped = clipped;
    spectrum.fingerprint = amp.fingerprint();
    Ok(spectrum)
}
