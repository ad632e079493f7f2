//! Threshold estimation and wavelet-coefficient shrinkage.
//!
//! The adaptive denoiser thresholds every detail scale with a per-sample
//! threshold `λ_j(n)`: the moving median of the absolute coefficients over a
//! 200 ms window. Coefficients are then shrunk with a hybrid rule that zeroes
//! everything up to `λ`, soft-shrinks up to `g·λ` and keeps larger
//! (QRS-like) coefficients untouched. The baselines use one minimax
//! threshold per scale with hard, soft or hyperbolic shrinkage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{pad_symmetric, trim, Signal};
use crate::swt::{self, SwtDecomposition};

pub const DEFAULT_WINDOW_MS: f64 = 200.0;
pub const DEFAULT_GATE_FACTOR: f64 = 1.5;

/// Per-sample threshold for one detail scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTrack {
    pub scale: usize,
    pub values: Vec<f64>,
}

/// Odd window length in samples for a window of `window_ms` at `sample_rate_hz`.
pub fn median_window_len(window_ms: f64, sample_rate_hz: f64) -> usize {
    let len = (window_ms * sample_rate_hz / 1000.0).round().max(3.0) as usize;
    if len % 2 == 0 {
        len + 1
    } else {
        len
    }
}

/// Sorted multiset of the samples currently inside the window.
struct SortedWindow {
    sorted: Vec<f64>,
}

impl SortedWindow {
    fn with_capacity(cap: usize) -> Self {
        Self {
            sorted: Vec::with_capacity(cap),
        }
    }

    fn insert(&mut self, v: f64) {
        let at = self.sorted.partition_point(|&x| x.total_cmp(&v).is_lt());
        self.sorted.insert(at, v);
    }

    fn remove(&mut self, v: f64) {
        let at = self.sorted.partition_point(|&x| x.total_cmp(&v).is_lt());
        debug_assert!(self.sorted[at].total_cmp(&v).is_eq());
        self.sorted.remove(at);
    }

    fn median(&self) -> f64 {
        let n = self.sorted.len();
        if n % 2 == 1 {
            self.sorted[n / 2]
        } else {
            0.5 * (self.sorted[n / 2 - 1] + self.sorted[n / 2])
        }
    }
}

/// Centered moving median of `x` with an odd window of `window` samples.
///
/// Near the ends the window shrinks to the samples that exist; even-sized
/// boundary windows average their two middle values.
pub fn moving_median(x: &[f64], window: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if window > n {
        return Err(Error::WindowTooLong { window, len: n });
    }
    let half = window / 2;
    let mut win = SortedWindow::with_capacity(window + 1);
    for &v in &x[..half.min(n)] {
        win.insert(v);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i + half < n {
            win.insert(x[i + half]);
        }
        if i > half {
            win.remove(x[i - half - 1]);
        }
        out.push(win.median());
    }
    Ok(out)
}

/// `λ(n)` = moving median of `|detail|` over `window_ms`.
pub fn moving_median_threshold(
    detail: &[f64],
    window_ms: f64,
    sample_rate_hz: f64,
    scale: usize,
) -> Result<ThresholdTrack> {
    if !(window_ms > 0.0) {
        return Err(Error::config(format!("median window must be positive, got {window_ms} ms")));
    }
    let window = median_window_len(window_ms, sample_rate_hz);
    let magnitudes: Vec<f64> = detail.iter().map(|v| v.abs()).collect();
    Ok(ThresholdTrack {
        scale,
        values: moving_median(&magnitudes, window)?,
    })
}

fn check_threshold(lambda: f64) -> Result<()> {
    if lambda < 0.0 || lambda.is_nan() {
        Err(Error::NegativeThreshold(lambda))
    } else {
        Ok(())
    }
}

/// Hybrid hard/soft rule:
///
/// ```text
///  0            |w| <= λ
///  w - sign(w)λ  λ < |w| <= gλ
///  w            |w| > gλ
/// ```
pub fn hybrid_shrink(w: f64, lambda: f64, gate_factor: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(hybrid_unchecked(w, lambda, gate_factor))
}

#[inline]
fn hybrid_unchecked(w: f64, lambda: f64, gate_factor: f64) -> f64 {
    let a = w.abs();
    if a <= lambda {
        0.0
    } else if a <= gate_factor * lambda {
        w - lambda.copysign(w)
    } else {
        w
    }
}

pub fn hard_shrink(w: f64, lambda: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(hard_unchecked(w, lambda))
}

pub fn soft_shrink(w: f64, lambda: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(soft_unchecked(w, lambda))
}

pub fn hyperbolic_shrink(w: f64, lambda: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(hyperbolic_unchecked(w, lambda))
}

#[inline]
fn hard_unchecked(w: f64, lambda: f64) -> f64 {
    if w.abs() > lambda {
        w
    } else {
        0.0
    }
}

#[inline]
fn soft_unchecked(w: f64, lambda: f64) -> f64 {
    if w.abs() > lambda {
        w - lambda.copysign(w)
    } else {
        0.0
    }
}

#[inline]
fn hyperbolic_unchecked(w: f64, lambda: f64) -> f64 {
    if w.abs() > lambda {
        ((w - lambda) * (w + lambda)).sqrt().copysign(w)
    } else {
        0.0
    }
}

/// Robust noise level `median(|d|) / 0.6745`.
pub fn mad_sigma(detail: &[f64]) -> f64 {
    if detail.is_empty() {
        return 0.0;
    }
    let mut mags: Vec<f64> = detail.iter().map(|v| v.abs()).collect();
    let mid = mags.len() / 2;
    let (_, m, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    let mut median = *m;
    if mags.len() % 2 == 0 {
        let lower = mags[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        median = 0.5 * (median + lower);
    }
    median / 0.6745
}

/// Minimax threshold `σ̂ (0.3936 + 0.1829 log2 N)` for `N > 32`, else 0.
pub fn minimax_threshold(detail: &[f64]) -> f64 {
    let n = detail.len();
    if n <= 32 {
        return 0.0;
    }
    mad_sigma(detail) * (0.3936 + 0.1829 * (n as f64).log2())
}

/// `|detail(n)| > factor · λ(n)`.
pub fn qrs_gate(detail: &[f64], track: &ThresholdTrack, factor: f64) -> Result<Vec<bool>> {
    if detail.len() != track.values.len() {
        return Err(Error::LengthMismatch {
            left: detail.len(),
            right: track.values.len(),
        });
    }
    Ok(detail
        .iter()
        .zip(&track.values)
        .map(|(w, l)| w.abs() > factor * l)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShrinkageMethod {
    ProposedHybrid,
    HardMinimax,
    SoftMinimax,
    HyperbolicMinimax,
}

impl ShrinkageMethod {
    pub const ALL: [ShrinkageMethod; 4] = [
        ShrinkageMethod::ProposedHybrid,
        ShrinkageMethod::HardMinimax,
        ShrinkageMethod::SoftMinimax,
        ShrinkageMethod::HyperbolicMinimax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShrinkageMethod::ProposedHybrid => "proposed-hybrid",
            ShrinkageMethod::HardMinimax => "hard-minimax",
            ShrinkageMethod::SoftMinimax => "soft-minimax",
            ShrinkageMethod::HyperbolicMinimax => "hyperbolic-minimax",
        }
    }
}

impl fmt::Display for ShrinkageMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShrinkageMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Configuration of a wavelet denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub method: ShrinkageMethod,
    pub wavelet: String,
    /// `None` picks [`swt::default_levels`] for the signal's rate.
    pub levels: Option<usize>,
    pub window_ms: f64,
    pub qrs_gate_factor: f64,
    /// Multiplies the moving-median track of the proposed rule; 1 applies
    /// the median itself.
    pub threshold_gain: f64,
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self::new(ShrinkageMethod::ProposedHybrid)
    }
}

impl DenoiserSpec {
    pub fn new(method: ShrinkageMethod) -> Self {
        DenoiserSpec {
            method,
            wavelet: swt::DEFAULT_WAVELET.to_string(),
            levels: None,
            window_ms: DEFAULT_WINDOW_MS,
            qrs_gate_factor: DEFAULT_GATE_FACTOR,
            threshold_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_ms > 0.0) {
            return Err(Error::config(format!("window_ms must be > 0, got {}", self.window_ms)));
        }
        if !(self.qrs_gate_factor > 1.0) {
            return Err(Error::config(format!(
                "qrs_gate_factor must be > 1, got {}",
                self.qrs_gate_factor
            )));
        }
        if !(self.threshold_gain > 0.0 && self.threshold_gain.is_finite()) {
            return Err(Error::config(format!(
                "threshold_gain must be > 0, got {}",
                self.threshold_gain
            )));
        }
        if let Some(l) = self.levels {
            if l == 0 || l > swt::MAX_LEVELS {
                return Err(Error::LevelsOutOfRange(l));
            }
        }
        Ok(())
    }

    pub fn levels_for(&self, sample_rate_hz: f64) -> usize {
        self.levels.unwrap_or_else(|| swt::default_levels(sample_rate_hz))
    }

    /// Flat `key = value` lines, the inverse of [`DenoiserSpec::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("method".to_string(), self.method.name().to_string()),
            ("wavelet".to_string(), self.wavelet.clone()),
        ];
        if let Some(l) = self.levels {
            out.push(("levels".to_string(), l.to_string()));
        }
        out.push(("window_ms".to_string(), format!("{}", self.window_ms)));
        out.push(("qrs_gate_factor".to_string(), format!("{}", self.qrs_gate_factor)));
        out.push(("threshold_gain".to_string(), format!("{}", self.threshold_gain)));
        out
    }

    /// Reads the keys written by [`DenoiserSpec::to_pairs`]; missing keys keep
    /// their defaults, unknown keys are an error.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut spec = DenoiserSpec::default();
        let num = |k: &str, v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse("denoiser", format!("{k} = {v}: {e}")))
        };
        for (k, v) in pairs {
            match k.trim() {
                "method" => spec.method = v.parse()?,
                "wavelet" => spec.wavelet = v.trim().to_string(),
                "levels" => {
                    spec.levels = Some(
                        v.trim()
                            .parse()
                            .map_err(|e| Error::parse("denoiser", format!("levels = {v}: {e}")))?,
                    )
                }
                "window_ms" => spec.window_ms = num(k, v)?,
                "qrs_gate_factor" | "gate_factor" => spec.qrs_gate_factor = num(k, v)?,
                "threshold_gain" => spec.threshold_gain = num(k, v)?,
                other => return Err(Error::parse("denoiser", format!("unknown key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Thresholds actually applied to one scale.
#[derive(Debug, Clone, PartialEq)]
pub enum AppliedThreshold {
    Track(ThresholdTrack),
    Scalar { scale: usize, lambda: f64 },
}

/// Shrinks every detail scale in place; the approximation is left untouched.
pub fn shrink_decomposition(
    dec: &mut SwtDecomposition,
    spec: &DenoiserSpec,
) -> Result<Vec<AppliedThreshold>> {
    spec.validate()?;
    let fs = dec.sample_rate_hz;
    let mut applied = Vec::with_capacity(dec.levels);
    for (idx, detail) in dec.details.iter_mut().enumerate() {
        let scale = idx + 1;
        match spec.method {
            ShrinkageMethod::ProposedHybrid => {
                let mut track = moving_median_threshold(detail, spec.window_ms, fs, scale)?;
                if spec.threshold_gain != 1.0 {
                    track.values.iter_mut().for_each(|l| *l *= spec.threshold_gain);
                }
                for (w, &l) in detail.iter_mut().zip(&track.values) {
                    *w = hybrid_unchecked(*w, l, spec.qrs_gate_factor);
                }
                applied.push(AppliedThreshold::Track(track));
            }
            method => {
                let lambda = minimax_threshold(detail);
                let rule: fn(f64, f64) -> f64 = match method {
                    ShrinkageMethod::HardMinimax => hard_unchecked,
                    ShrinkageMethod::SoftMinimax => soft_unchecked,
                    _ => hyperbolic_unchecked,
                };
                detail.iter_mut().for_each(|w| *w = rule(*w, lambda));
                applied.push(AppliedThreshold::Scalar { scale, lambda });
            }
        }
    }
    Ok(applied)
}

/// Pads, decomposes, shrinks the details, reconstructs and trims.
/// Annotations of the input are carried over unchanged.
pub fn denoise(signal: &Signal, spec: &DenoiserSpec) -> Result<Signal> {
    denoise_with_thresholds(signal, spec).map(|(s, _)| s)
}

pub fn denoise_with_thresholds(
    signal: &Signal,
    spec: &DenoiserSpec,
) -> Result<(Signal, Vec<AppliedThreshold>)> {
    spec.validate()?;
    signal.require_non_empty()?;
    let filters = swt::load_wavelet(&spec.wavelet)?;
    let levels = spec.levels_for(signal.sample_rate_hz());
    let (padded, original_len) = pad_symmetric(signal, 1 << levels)?;
    let mut dec = swt::swt_decompose(&padded, &filters, levels)?;
    let applied = shrink_decomposition(&mut dec, spec)?;
    let rebuilt = swt::swt_reconstruct(&dec, &filters)?;
    let out = trim(&rebuilt, original_len)?;
    Ok((signal.with_samples(out.into_samples()), applied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn naive_moving_median(x: &[f64], window: usize) -> Vec<f64> {
        let half = window / 2;
        (0..x.len())
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(x.len());
                let mut w = x[lo..hi].to_vec();
                w.sort_by(f64::total_cmp);
                let m = w.len();
                if m % 2 == 1 {
                    w[m / 2]
                } else {
                    0.5 * (w[m / 2 - 1] + w[m / 2])
                }
            })
            .collect()
    }

    #[test]
    fn window_is_forced_odd() {
        assert_eq!(median_window_len(200.0, 1000.0), 201);
        assert_eq!(median_window_len(201.0, 1000.0), 201);
        assert_eq!(median_window_len(0.1, 1000.0), 3);
        assert_eq!(median_window_len(200.0, 360.0), 73);
    }

    #[test]
    fn median_of_constant_magnitudes() {
        let d: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let t = moving_median_threshold(&d, 200.0, 1000.0, 1).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn median_of_unit_sinusoid() {
        // 200 ms spans ~12 periods; an incommensurate frequency gives a dense
        // phase grid (50 Hz at 1 kHz would only visit 20 phases)
        let d: Vec<f64> = (0..5000).map(|n| (2.0 * PI * 61.3 * n as f64 / 1000.0).sin()).collect();
        let t = moving_median_threshold(&d, 200.0, 1000.0, 4).unwrap();
        let target = (PI / 4.0).sin();
        for &v in &t.values[200..4800] {
            assert!((v - target).abs() / target < 0.02, "{v}");
        }
    }

    #[test]
    fn median_ignores_isolated_spike() {
        let mut d = vec![0.0; 1000];
        d[500] = 100.0;
        let t = moving_median_threshold(&d, 200.0, 1000.0, 1).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_window_longer_than_sequence_errors() {
        assert!(matches!(
            moving_median_threshold(&[1.0; 100], 200.0, 1000.0, 1),
            Err(Error::WindowTooLong { window: 201, len: 100 })
        ));
    }

    #[test]
    fn hybrid_branches() {
        let l = 2.0;
        assert_eq!(hybrid_shrink(0.9 * l, l, 1.5).unwrap(), 0.0);
        assert!((hybrid_shrink(1.2 * l, l, 1.5).unwrap() - 0.2 * l).abs() < 1e-15);
        assert!((hybrid_shrink(-1.2 * l, l, 1.5).unwrap() + 0.2 * l).abs() < 1e-15);
        assert_eq!(hybrid_shrink(2.0 * l, l, 1.5).unwrap(), 2.0 * l);
        assert_eq!(hybrid_shrink(-2.0 * l, l, 1.5).unwrap(), -2.0 * l);
        // boundaries: |w| = λ → 0, |w| = gλ stays soft
        assert_eq!(hybrid_shrink(l, l, 1.5).unwrap(), 0.0);
        assert_eq!(hybrid_shrink(1.5 * l, l, 1.5).unwrap(), 0.5 * l);
        assert_eq!(hybrid_shrink(-1.5 * l, l, 1.5).unwrap(), -0.5 * l);
        assert!(matches!(hybrid_shrink(1.0, -0.1, 1.5), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn zero_threshold_passes_through() {
        for w in [-3.0, -1e-9, 0.0, 1e-9, 7.0] {
            assert_eq!(hybrid_shrink(w, 0.0, 1.5).unwrap(), w);
            assert_eq!(hard_shrink(w, 0.0).unwrap(), w);
            assert_eq!(soft_shrink(w, 0.0).unwrap(), w);
            assert_eq!(hyperbolic_shrink(w, 0.0).unwrap(), w);
        }
    }

    #[test]
    fn baseline_rules() {
        assert_eq!(hard_shrink(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(soft_shrink(2.0, 1.0).unwrap(), 1.0);
        assert!((hyperbolic_shrink(2.0, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!((hyperbolic_shrink(2.0, 1.0).unwrap() - 1.73205).abs() < 1e-5);
        for w in [1.3, -1.3] {
            assert_eq!(hard_shrink(w, 1.3).unwrap(), 0.0);
            assert_eq!(soft_shrink(w, 1.3).unwrap(), 0.0);
            assert_eq!(hyperbolic_shrink(w, 1.3).unwrap(), 0.0);
        }
        assert!(hard_shrink(1.0, -1.0).is_err());
        assert!(soft_shrink(1.0, -1.0).is_err());
        assert!(hyperbolic_shrink(1.0, -1.0).is_err());
    }

    #[test]
    fn minimax_examples() {
        assert_eq!(minimax_threshold(&[0.0; 100]), 0.0);
        assert_eq!(minimax_threshold(&[5.0; 32]), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sigma = mad_sigma(&x);
        assert!((sigma - 1.0).abs() < 0.05, "sigma {sigma}");
        let lambda = minimax_threshold(&x);
        let expected: f64 = 0.3936 + 0.1829 * 12.0;
        assert!((expected - 2.5884).abs() < 1e-12);
        assert!((lambda - expected).abs() / expected < 0.05, "lambda {lambda}");
    }

    #[test]
    fn gate_examples() {
        let track = ThresholdTrack {
            scale: 1,
            values: vec![1.0; 5],
        };
        assert!(qrs_gate(&[0.5, -0.9, 0.0, 1.0, -1.0], &track, 1.5)
            .unwrap()
            .iter()
            .all(|&g| !g));
        assert_eq!(
            qrs_gate(&[0.5, 0.1, 2.0, 0.2, 0.3], &track, 1.5).unwrap(),
            vec![false, false, true, false, false]
        );
        assert!(qrs_gate(&[0.5], &track, 1.5).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in ShrinkageMethod::ALL {
            assert_eq!(m.name().parse::<ShrinkageMethod>().unwrap(), m);
        }
        assert!(matches!("wiener".parse::<ShrinkageMethod>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn spec_pairs_round_trip() {
        let mut spec = DenoiserSpec::new(ShrinkageMethod::SoftMinimax);
        spec.levels = Some(5);
        spec.window_ms = 150.0;
        let pairs = spec.to_pairs();
        let back =
            DenoiserSpec::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, spec);
        assert!(DenoiserSpec::from_pairs([("qrs_gate_factor", "1.0")]).is_err());
        assert!(DenoiserSpec::from_pairs([("bogus", "1")]).is_err());
    }

    #[test]
    fn approximation_is_untouched() {
        let x: Vec<f64> = (0..2048).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let f = swt::load_wavelet("db6").unwrap();
        let s = Signal::new(x, 1000.0).unwrap();
        for method in ShrinkageMethod::ALL {
            let original = swt::swt_decompose(&s, &f, 4).unwrap();
            let mut shrunk = original.clone();
            shrink_decomposition(&mut shrunk, &DenoiserSpec::new(method)).unwrap();
            assert_eq!(
                original.approximation.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                shrunk.approximation.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn pure_tone_residual_matches_reference() {
        // Reference ratio 0.01716 from PyWavelets swt/iswt (db6, 4 levels), a
        // 201-sample median with the same shrinking edge windows and the same
        // hybrid rule. The remaining gap comes from filter alignment.
        let x = Signal::from_fn(10_000, 1000.0, |t| (2.0 * PI * 50.0 * t).sin()).unwrap();
        let ratio = |gain: f64| {
            let spec = DenoiserSpec { threshold_gain: gain, ..DenoiserSpec::default() };
            let y = denoise(&x, &spec).unwrap();
            crate::signal::power(&y).unwrap() / crate::signal::power(&x).unwrap()
        };
        let literal = ratio(1.0);
        assert!((literal / 0.01716 - 1.0).abs() < 0.03, "{literal}");
        // a median-based λ sits at 1/√2 of the tone amplitude; scaling it by
        // √2 puts the whole tone below threshold
        assert!(ratio(std::f64::consts::SQRT_2) < 1e-4);
    }

    #[test]
    fn threshold_gain_is_validated() {
        let spec = DenoiserSpec { threshold_gain: 0.0, ..DenoiserSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn denoise_keeps_length_and_annotations() {
        let s = Signal::from_fn(3001, 1000.0, |t| (2.0 * PI * 3.0 * t).sin())
            .unwrap()
            .with_annotations(vec![10, 2000])
            .unwrap();
        let out = denoise(&s, &DenoiserSpec::default()).unwrap();
        assert_eq!(out.len(), 3001);
        assert_eq!(out.annotations(), &[10, 2000]);
        let mut bad = DenoiserSpec::default();
        bad.wavelet = "nope".into();
        assert!(denoise(&s, &bad).is_err());
    }

    proptest! {
        #[test]
        fn sorted_window_matches_naive(
            x in prop::collection::vec(0.0f64..10.0, 1..300),
            half in 1usize..20,
        ) {
            let window = 2 * half + 1;
            prop_assume!(window <= x.len());
            prop_assert_eq!(moving_median(&x, window).unwrap(), naive_moving_median(&x, window));
        }

        #[test]
        fn hybrid_is_odd(w in -100.0f64..100.0, l in 0.0f64..50.0, g in 1.01f64..4.0) {
            prop_assert_eq!(hybrid_shrink(-w, l, g).unwrap(), -hybrid_shrink(w, l, g).unwrap());
        }

        #[test]
        fn hybrid_is_monotone(l in 0.0f64..5.0, g in 1.01f64..3.0) {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=4000 {
                let w = -20.0 + i as f64 * 0.01;
                let v = hybrid_shrink(w, l, g).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
        }

        #[test]
        fn hybrid_jointly_homogeneous(w in -100.0f64..100.0, l in 0.0f64..50.0, a in 0.01f64..100.0) {
            let lhs = hybrid_shrink(a * w, a * l, 1.5).unwrap();
            let rhs = a * hybrid_shrink(w, l, 1.5).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (a * w).abs().max(1.0));
        }

        #[test]
        fn soft_hyperbolic_hard_ordering(w in -100.0f64..100.0, l in 0.0f64..50.0) {
            let s = soft_shrink(w, l).unwrap().abs();
            let y = hyperbolic_shrink(w, l).unwrap().abs();
            let h = hard_shrink(w, l).unwrap().abs();
            prop_assert!(s <= y && y <= h);
        }
    }
}
