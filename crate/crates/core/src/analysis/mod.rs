//! Experiment procedures: DC transfer sweeps, coherent-sine THD and
//! temperature x supply corner statistics.
//!
//! All procedures evaluate independent points in parallel and collect them in
//! grid order; reductions run afterwards, sequentially and with compensated
//! summation, so results do not depend on the number of worker threads.

mod corners;
mod spectrum;
mod sweep;

pub use corners::{corner_sweep, gain_stats, stats_of, CornerGrid, CornerSpec, GainStats};
pub use spectrum::{
    coherent_sine, spectrum_of, thd_run, HarmonicLine, Spectrum, ThdProtocol, MAG_FLOOR_DB,
    THD_FLOOR_DB,
};
pub use sweep::{transfer_sweep, SweepCurve, SMALL_SIGNAL_PROBE};

/// Neumaier-compensated sum, evaluated left to right.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
