//! Differential-pair currents and transconductance.
//!
//! A pair has input devices of width `m·base_wl` (gate at vin+) and
//! `n·base_wl` (gate at vin−) sharing a tail current `iss`. With
//! `β1 = k·m`, `β2 = k·n` and `k = k'(T)·base_wl`, KCL plus the square law
//! give a closed-form split while both devices conduct:
//!
//! ```text
//! S   = sqrt(2·iss·(β1+β2) − β1·β2·Δ²)
//! Vov1 = (β2·Δ + S)/(β1+β2),   Vov2 = (S − β1·Δ)/(β1+β2)
//! ```
//!
//! Device 2 turns off for `Δ ≥ sqrt(2·iss/β1)` and device 1 for
//! `Δ ≤ −sqrt(2·iss/β2)`; outside that window the pair is fully steered,
//! `ΔID = ±iss` and `Gm = 0`. The both-on expression for `Gm` tends to zero
//! at either boundary, so `Gm` is continuous in `Δ`.
//!
//! In a composite pair both pairs see `Δ = vin+ − vin−` with their first
//! device on vin+, and the first-device drains share one output branch.
//! Pair B has `m` and `n` swapped, so its Gm curve is pair A's reflected
//! about `Δ = 0` and the summed curve is even.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devmodel::{kprime_at, positive, DeviceParams, Environment};
use crate::{ModelError, Result};

/// Number of equispaced points used to sample the Gm ripple.
pub const RIPPLE_SAMPLES: usize = 101;

/// Size of a pair without its bias: the unit W/L and the two multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub base_wl: f64,
    pub m: f64,
    pub n: f64,
}

impl PairGeometry {
    pub fn symmetric(base_wl: f64) -> Self {
        PairGeometry {
            base_wl,
            m: 1.0,
            n: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("base_wl", self.base_wl)?;
        positive("m", self.m)?;
        positive("n", self.n)
    }

    /// Fraction of the tail current carried by the first device at `Δ = 0`.
    pub fn split_fraction(&self) -> f64 {
        self.m / (self.m + self.n)
    }

    pub fn with_tail(&self, iss: f64) -> DiffPairSpec {
        DiffPairSpec {
            base_wl: self.base_wl,
            m: self.m,
            n: self.n,
            iss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffPairSpec {
    pub base_wl: f64,
    pub m: f64,
    pub n: f64,
    /// Tail current, A.
    pub iss: f64,
}

impl DiffPairSpec {
    pub fn new(base_wl: f64, m: f64, n: f64, iss: f64) -> Result<Self> {
        let spec = DiffPairSpec { base_wl, m, n, iss };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        positive("iss", self.iss)
    }

    pub fn geometry(&self) -> PairGeometry {
        PairGeometry {
            base_wl: self.base_wl,
            m: self.m,
            n: self.n,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.m == self.n
    }

    /// The same pair with the two input devices exchanged.
    pub fn mirrored(&self) -> Self {
        DiffPairSpec {
            m: self.n,
            n: self.m,
            ..*self
        }
    }

    fn betas(&self, params: &DeviceParams, env: &Environment) -> (f64, f64) {
        let k = kprime_at(params, env) * self.base_wl;
        (k * self.m, k * self.n)
    }

    /// `(lo, hi)`: the open interval of `Δ` where both devices conduct.
    pub fn conduction_bounds(&self, params: &DeviceParams, env: &Environment) -> (f64, f64) {
        let (b1, b2) = self.betas(params, env);
        (-(2.0 * self.iss / b2).sqrt(), (2.0 * self.iss / b1).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    BothOn,
    FirstCutoff,
    SecondCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSplit {
    pub id1: f64,
    pub id2: f64,
    pub region: Region,
}

impl CurrentSplit {
    pub fn delta(&self) -> f64 {
        self.id1 - self.id2
    }
}

/// Two differential pairs whose output currents sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositePairSpec {
    pub pair_a: DiffPairSpec,
    pub pair_b: DiffPairSpec,
    mirrored: bool,
}

impl CompositePairSpec {
    /// Standard construction: `pair_b` is `pair_a` with `m` and `n` swapped
    /// and the same tail current.
    pub fn mirrored(pair_a: DiffPairSpec) -> Result<Self> {
        pair_a.validate()?;
        Ok(CompositePairSpec {
            pair_a,
            pair_b: pair_a.mirrored(),
            mirrored: true,
        })
    }

    /// Arbitrary pair combination. Both pairs must share `base_wl`.
    pub fn new(pair_a: DiffPairSpec, pair_b: DiffPairSpec) -> Result<Self> {
        pair_a.validate().map_err(|e| e.within("pair_a"))?;
        pair_b.validate().map_err(|e| e.within("pair_b"))?;
        if pair_a.base_wl != pair_b.base_wl {
            return Err(ModelError::invalid(
                "pair_b.base_wl",
                "both pairs of a composite must share base_wl",
            ));
        }
        let mirrored = pair_b == pair_a.mirrored();
        Ok(CompositePairSpec {
            pair_a,
            pair_b,
            mirrored,
        })
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn total_tail(&self) -> f64 {
        self.pair_a.iss + self.pair_b.iss
    }
}

/// Closed-form KCL solution of the pair at differential input `dvin`.
pub fn solve_current_split(
    spec: &DiffPairSpec,
    dvin: f64,
    params: &DeviceParams,
    env: &Environment,
) -> CurrentSplit {
    let (lo, hi) = spec.conduction_bounds(params, env);
    if dvin >= hi {
        return CurrentSplit {
            id1: spec.iss,
            id2: 0.0,
            region: Region::SecondCutoff,
        };
    }
    if dvin <= lo {
        return CurrentSplit {
            id1: 0.0,
            id2: spec.iss,
            region: Region::FirstCutoff,
        };
    }
    let (b1, b2) = spec.betas(params, env);
    let sum = b1 + b2;
    let s = (2.0 * spec.iss * sum - b1 * b2 * dvin * dvin).sqrt();
    let vov1 = (b2 * dvin + s) / sum;
    let vov2 = (s - b1 * dvin) / sum;
    CurrentSplit {
        id1: 0.5 * b1 * vov1 * vov1,
        id2: 0.5 * b2 * vov2 * vov2,
        region: Region::BothOn,
    }
}

/// Differential output current `id1 − id2`, evaluated from the expanded
/// closed form
/// `[β1β2(β2−β1)Δ² + 2β1β2·Δ·S + iss(β1²−β2²)] / (β1+β2)²`.
///
/// Swapping `m` and `n` negates every term exactly, so a mirrored composite
/// built from this function is odd in `Δ` to the last bit.
pub fn delta_id(spec: &DiffPairSpec, dvin: f64, params: &DeviceParams, env: &Environment) -> f64 {
    let (lo, hi) = spec.conduction_bounds(params, env);
    if dvin >= hi {
        return spec.iss;
    }
    if dvin <= lo {
        return -spec.iss;
    }
    let (b1, b2) = spec.betas(params, env);
    let sum = b1 + b2;
    let bb = b1 * b2;
    let s = (2.0 * spec.iss * sum - bb * dvin * dvin).sqrt();
    let quad = bb * (b2 - b1) * dvin * dvin;
    let lin = 2.0 * bb * dvin * s;
    let offset = spec.iss * (b1 * b1 - b2 * b2);
    (quad + lin + offset) / (sum * sum)
}

/// Transconductance `∂ΔID/∂Δ` of a possibly asymmetric pair:
///
/// ```text
/// Gm = (P + 4mn·sqrt(k/2)·Q) / (n+m)²
/// P  = −2k·mn(m−n)·Δ
/// Q  = ((n+m)·iss − k·mn·Δ²) / sqrt((n+m)·iss − (k/2)·mn·Δ²)
/// ```
///
/// with `k = k'(T)·base_wl`. Zero outside the conduction window.
pub fn gm_asymmetric(
    spec: &DiffPairSpec,
    dvin: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<f64> {
    let (lo, hi) = spec.conduction_bounds(params, env);
    if dvin >= hi || dvin <= lo {
        return Ok(0.0);
    }
    let k = kprime_at(params, env) * spec.base_wl;
    let (m, n) = (spec.m, spec.n);
    let mn = m * n;
    let total = n + m;
    let d2 = dvin * dvin;
    let radicand = total * spec.iss - 0.5 * k * mn * d2;
    if !(radicand > 0.0) {
        return Err(ModelError::Domain(format!(
            "Gm radicand {radicand} is not positive at Δ = {dvin} inside the conduction window"
        )));
    }
    let p = -2.0 * k * mn * (m - n) * dvin;
    let q = (total * spec.iss - k * mn * d2) / radicand.sqrt();
    Ok((p + 4.0 * mn * (0.5 * k).sqrt() * q) / (total * total))
}

/// Gm of a symmetric pair. Rejects `m ≠ n`.
pub fn gm_symmetric(
    spec: &DiffPairSpec,
    dvin: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<f64> {
    if !spec.is_symmetric() {
        return Err(ModelError::Precondition(format!(
            "symmetric pair requires m == n, got m = {}, n = {}",
            spec.m, spec.n
        )));
    }
    gm_asymmetric(spec, dvin, params, env)
}

pub fn gm_composite(
    spec: &CompositePairSpec,
    dvin: f64,
    params: &DeviceParams,
    env: &Environment,
) -> Result<f64> {
    Ok(gm_asymmetric(&spec.pair_a, dvin, params, env)?
        + gm_asymmetric(&spec.pair_b, dvin, params, env)?)
}

pub fn delta_id_composite(
    spec: &CompositePairSpec,
    dvin: f64,
    params: &DeviceParams,
    env: &Environment,
) -> f64 {
    delta_id(&spec.pair_a, dvin, params, env) + delta_id(&spec.pair_b, dvin, params, env)
}

/// `(max Gm − min Gm) / mean Gm` over `samples` equispaced points on
/// `[−window, +window]`.
pub fn gm_ripple(
    spec: &CompositePairSpec,
    window: f64,
    samples: usize,
    params: &DeviceParams,
    env: &Environment,
) -> Result<f64> {
    if samples < 2 {
        return Err(ModelError::Precondition(
            "ripple needs at least 2 samples".into(),
        ));
    }
    let last = (samples - 1) as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for i in 0..samples {
        let x = window * (2.0 * i as f64 - last) / last;
        let g = gm_composite(spec, x, params, env)?;
        min = min.min(g);
        max = max.max(g);
        sum += g;
    }
    let mean = sum / samples as f64;
    if !(mean > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((max - min) / mean)
}

/// Log-spaced search range for the asymmetry ratio `m/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for RatioGrid {
    fn default() -> Self {
        RatioGrid {
            min: 1.0,
            max: 20.0,
            points: 200,
        }
    }
}

impl RatioGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min >= 1.0 && self.max <= 20.0 && self.min <= self.max) {
            return Err(ModelError::invalid(
                "ratio_grid",
                format!(
                    "bounds must satisfy 1 <= min <= max <= 20, got [{}, {}]",
                    self.min, self.max
                ),
            ));
        }
        if self.points == 0 {
            return Err(ModelError::invalid("ratio_grid.points", "must be >= 1"));
        }
        Ok(())
    }

    /// Grid ratios in ascending order, endpoints exact.
    pub fn ratios(&self) -> Vec<f64> {
        if self.points == 1 || self.min == self.max {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        let last = self.points - 1;
        (0..self.points)
            .map(|i| match i {
                0 => self.min,
                i if i == last => self.max,
                i => (a + (b - a) * i as f64 / last as f64).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessResult {
    pub spec: CompositePairSpec,
    pub ratio: f64,
    pub ripple: f64,
}

/// The mirrored composite pair of asymmetry `ratio = m/n`, keeping
/// `base_wl`, `iss` and the total width `m + n` of `base`.
pub fn composite_with_ratio(base: &DiffPairSpec, ratio: f64) -> Result<CompositePairSpec> {
    let total = base.m + base.n;
    let pair = DiffPairSpec {
        m: total * ratio / (1.0 + ratio),
        n: total / (1.0 + ratio),
        ..*base
    };
    CompositePairSpec::mirrored(pair)
}

/// Exhaustive search over `grid` for the mirrored composite pair with the
/// lowest Gm ripple on `[−window, +window]`.
///
/// Candidates keep the base pair's unit W/L, tail current and total width;
/// only the split of width between the two devices changes. Ties (within
/// 1e-12) go to the smaller ratio.
pub fn optimize_flatness(
    base: &DiffPairSpec,
    window: f64,
    grid: &RatioGrid,
    params: &DeviceParams,
    env: &Environment,
) -> Result<FlatnessResult> {
    base.validate()?;
    grid.validate()?;
    if !(window > 0.0) || !window.is_finite() {
        return Err(ModelError::Precondition(format!(
            "flatness window must be > 0, got {window}"
        )));
    }
    let scored: Vec<(f64, CompositePairSpec, f64)> = grid
        .ratios()
        .into_par_iter()
        .map(|r| {
            let spec = composite_with_ratio(base, r)?;
            let ripple = gm_ripple(&spec, window, RIPPLE_SAMPLES, params, env)?;
            Ok((r, spec, ripple))
        })
        .collect::<Result<_>>()?;

    let mut best = scored[0];
    for cand in &scored[1..] {
        if cand.2 < best.2 - 1e-12 {
            best = *cand;
        }
    }
    Ok(FlatnessResult {
        spec: best.1,
        ratio: best.0,
        ripple: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> (DeviceParams, Environment) {
        (
            DeviceParams::default(),
            Environment::new(300.0, 5.0).unwrap(),
        )
    }

    fn pair(m: f64, n: f64) -> DiffPairSpec {
        DiffPairSpec::new(10.0, m, n, 100e-6).unwrap()
    }

    /// Bisection on the KCL residual `id1(Vov1) + id2(Vov1 − Δ) − iss`,
    /// independent of the closed form.
    fn bisect_split(
        spec: &DiffPairSpec,
        dvin: f64,
        p: &DeviceParams,
        e: &Environment,
    ) -> (f64, f64) {
        let k = kprime_at(p, e) * spec.base_wl;
        let id = |beta: f64, vov: f64| {
            if vov > 0.0 {
                0.5 * beta * vov * vov
            } else {
                0.0
            }
        };
        let f = |v1: f64| id(k * spec.m, v1) + id(k * spec.n, v1 - dvin) - spec.iss;
        let (mut lo, mut hi) = (dvin.min(0.0) - 10.0, dvin.max(0.0) + 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v1 = 0.5 * (lo + hi);
        (id(k * spec.m, v1), id(k * spec.n, v1 - dvin))
    }

    #[test]
    fn symmetric_split_at_zero() {
        let (p, e) = nominal();
        let s = solve_current_split(&pair(1.0, 1.0), 0.0, &p, &e);
        assert_eq!(s.region, Region::BothOn);
        assert!((s.id1 - 50e-6).abs() < 1e-18);
        assert!((s.id2 - 50e-6).abs() < 1e-18);
    }

    #[test]
    fn asymmetric_split_follows_width_ratio() {
        let (p, e) = nominal();
        let spec = pair(5.4, 1.0);
        let s = solve_current_split(&spec, 0.0, &p, &e);
        assert!(((s.id1 / spec.iss) - 5.4 / 6.4).abs() < 1e-14);
        assert!(((s.id2 / spec.iss) - 1.0 / 6.4).abs() < 1e-14);
        assert_eq!(spec.geometry().split_fraction(), 5.4 / 6.4);
    }

    #[test]
    fn full_steering_limit() {
        let (p, e) = nominal();
        let s = solve_current_split(&pair(1.0, 1.0), 0.5, &p, &e);
        assert_eq!(
            (s.id1, s.id2, s.region),
            (100e-6, 0.0, Region::SecondCutoff)
        );
        let s = solve_current_split(&pair(1.0, 1.0), -0.5, &p, &e);
        assert_eq!((s.id1, s.id2, s.region), (0.0, 100e-6, Region::FirstCutoff));
    }

    #[test]
    fn split_matches_bisection_oracle() {
        let (p, e) = nominal();
        let spec = pair(2.0, 1.0);
        let s = solve_current_split(&spec, 20e-3, &p, &e);
        let (o1, o2) = bisect_split(&spec, 20e-3, &p, &e);
        assert!((s.id1 - o1).abs() < 1e-15, "{} vs {o1}", s.id1);
        assert!((s.id2 - o2).abs() < 1e-15, "{} vs {o2}", s.id2);
        for &(m, n) in &[(1.0, 1.0), (5.4, 1.0), (1.0, 5.4)] {
            let spec = pair(m, n);
            for d in [-0.15, -0.03, 0.0, 0.01, 0.07] {
                let s = solve_current_split(&spec, d, &p, &e);
                let (o1, o2) = bisect_split(&spec, d, &p, &e);
                assert!((s.id1 - o1).abs() < 1e-14 && (s.id2 - o2).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_form_delta_matches_split() {
        let (p, e) = nominal();
        for &(m, n) in &[(1.0, 1.0), (2.0, 1.0), (5.4, 1.0), (1.0, 5.4)] {
            let spec = pair(m, n);
            for i in -40..=40 {
                let d = i as f64 * 5e-3;
                let a = delta_id(&spec, d, &p, &e);
                let b = solve_current_split(&spec, d, &p, &e).delta();
                assert!(
                    (a - b).abs() < 1e-17 + 1e-13 * spec.iss,
                    "m={m} n={n} d={d}"
                );
            }
        }
    }

    #[test]
    fn symmetric_gm_collapses_to_textbook() {
        let (p, e) = nominal();
        let g = gm_asymmetric(&pair(1.0, 1.0), 0.0, &p, &e).unwrap();
        // sqrt(300e-6 · 10 · 100e-6) = sqrt(3e-7)
        assert!(((g - 5.477_225_575_051_661e-4) / g).abs() < 1e-12);
    }

    #[test]
    fn gm_zero_beyond_cutoff() {
        let (p, e) = nominal();
        for &(m, n) in &[(1.0, 1.0), (5.4, 1.0), (1.0, 5.4)] {
            let spec = pair(m, n);
            let (lo, hi) = spec.conduction_bounds(&p, &e);
            assert_eq!(gm_asymmetric(&spec, hi * 1.01, &p, &e).unwrap(), 0.0);
            assert_eq!(gm_asymmetric(&spec, lo * 1.01, &p, &e).unwrap(), 0.0);
            // both-on limit at the boundary is zero as well
            let near = gm_asymmetric(&spec, hi * (1.0 - 1e-9), &p, &e).unwrap();
            assert!(near < 1e-6 * gm_asymmetric(&spec, 0.0, &p, &e).unwrap());
        }
    }

    #[test]
    fn symmetric_gm_rejects_asymmetric_spec() {
        let (p, e) = nominal();
        assert!(matches!(
            gm_symmetric(&pair(2.0, 1.0), 0.0, &p, &e),
            Err(ModelError::Precondition(_))
        ));
    }

    #[test]
    fn symmetric_gm_is_even_with_peak_at_zero() {
        let (p, e) = nominal();
        let spec = pair(1.0, 1.0);
        let g0 = gm_symmetric(&spec, 0.0, &p, &e).unwrap();
        for i in 1..200 {
            let d = i as f64 * 1e-3;
            let a = gm_symmetric(&spec, d, &p, &e).unwrap();
            let b = gm_symmetric(&spec, -d, &p, &e).unwrap();
            assert!((a - b).abs() <= 1e-15 * g0);
            assert!(a < g0);
            assert_eq!(a, gm_asymmetric(&spec, d, &p, &e).unwrap());
        }
    }

    #[test]
    fn degenerate_composite_doubles_symmetric_gm() {
        let (p, e) = nominal();
        let spec = pair(1.0, 1.0);
        let c = CompositePairSpec::new(spec, spec).unwrap();
        assert!(c.is_mirrored());
        for d in [0.0, 0.02, -0.05] {
            let g = gm_composite(&c, d, &p, &e).unwrap();
            assert_eq!(g, 2.0 * gm_symmetric(&spec, d, &p, &e).unwrap());
        }
    }

    #[test]
    fn composite_rejects_mismatched_unit_width() {
        let a = pair(5.4, 1.0);
        let b = DiffPairSpec {
            base_wl: 12.0,
            ..a.mirrored()
        };
        assert!(CompositePairSpec::new(a, b).is_err());
        assert!(!CompositePairSpec::new(a, pair(2.0, 1.0))
            .unwrap()
            .is_mirrored());
    }

    #[test]
    fn composite_addends_peak_on_opposite_sides() {
        let (p, e) = nominal();
        let c = CompositePairSpec::mirrored(pair(5.4, 1.0)).unwrap();
        let argmax = |s: &DiffPairSpec| {
            (-3000..=3000)
                .map(|i| i as f64 * 1e-4)
                .map(|d| (d, gm_asymmetric(s, d, &p, &e).unwrap()))
                .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0
        };
        let (a, b) = (argmax(&c.pair_a), argmax(&c.pair_b));
        assert!(a < 0.0 && b > 0.0);
        assert!((a + b).abs() < 1e-9);
    }

    #[test]
    fn ratio_grid_endpoints_exact() {
        let g = RatioGrid {
            min: 1.0,
            max: 8.0,
            points: 200,
        };
        let r = g.ratios();
        assert_eq!((r[0], r[199], r.len()), (1.0, 8.0, 200));
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        assert!(RatioGrid {
            min: 0.5,
            max: 8.0,
            points: 10
        }
        .validate()
        .is_err());
        assert!(RatioGrid {
            min: 1.0,
            max: 25.0,
            points: 10
        }
        .validate()
        .is_err());
    }

    #[test]
    fn tiny_window_prefers_smallest_ratio() {
        let (p, e) = nominal();
        let res = optimize_flatness(&pair(5.4, 1.0), 1e-9, &RatioGrid::default(), &p, &e).unwrap();
        assert_eq!(res.ratio, 1.0);
        assert!(optimize_flatness(&pair(5.4, 1.0), 0.0, &RatioGrid::default(), &p, &e).is_err());
    }

    #[test]
    fn optimizer_beats_symmetric_baseline_and_keeps_total_width() {
        let (p, e) = nominal();
        let base = pair(5.4, 1.0);
        let res = optimize_flatness(&base, 40e-3, &RatioGrid::default(), &p, &e).unwrap();
        let sym = composite_with_ratio(&base, 1.0).unwrap();
        let sym_ripple = gm_ripple(&sym, 40e-3, RIPPLE_SAMPLES, &p, &e).unwrap();
        assert!(res.ripple < sym_ripple);
        assert!(res.spec.is_mirrored());
        let a = res.spec.pair_a;
        assert!((a.m + a.n - 6.4).abs() < 1e-12);
        assert!((a.m / a.n - res.ratio).abs() < 1e-9 * res.ratio);
    }

    #[test]
    fn default_ratio_sits_in_low_ripple_basin() {
        let (p, e) = nominal();
        let base = DiffPairSpec::new(10.0, 5.4, 1.0, 50e-6).unwrap();
        let ripple = |r: f64| {
            gm_ripple(
                &composite_with_ratio(&base, r).unwrap(),
                40e-3,
                RIPPLE_SAMPLES,
                &p,
                &e,
            )
            .unwrap()
        };
        assert!(ripple(5.4) < 0.6 * ripple(1.0));
    }
}
