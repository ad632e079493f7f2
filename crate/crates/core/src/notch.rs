//! Notch-filter baselines: a fixed second-order Butterworth band-stop and a
//! quadrature-reference LMS adaptive notch. Also hosts the small biquad
//! design toolkit reused by the R-peak detector.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Normalised biquad `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Bilinear transform of `(n2 s^2 + n1 s + n0) / (s^2 + d1 s + d0)` with
    /// `s = (1 - z^-1) / (1 + z^-1)` (frequencies already pre-warped).
    fn bilinear(n2: f64, n1: f64, n0: f64, d1: f64, d0: f64) -> Biquad {
        let a0 = 1.0 + d1 + d0;
        Biquad {
            b0: (n2 + n1 + n0) / a0,
            b1: 2.0 * (n0 - n2) / a0,
            b2: (n2 - n1 + n0) / a0,
            a1: 2.0 * (d0 - 1.0) / a0,
            a2: (1.0 - d1 + d0) / a0,
        }
    }

    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / sample_rate_hz);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        // z^2 + a1 z + a2 = 0
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Causal transposed direct form II with zero initial state.
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (mut s1, mut s2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.b0 * v + s1;
                s1 = self.b1 * v - self.a1 * y + s2;
                s2 = self.b2 * v - self.a2 * y;
                y
            })
            .collect()
    }
}

fn prewarp(freq_hz: f64, sample_rate_hz: f64) -> f64 {
    (PI * freq_hz / sample_rate_hz).tan()
}

/// Second-order Butterworth lowpass section.
pub fn butterworth_lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Biquad> {
    check_frequency(cutoff_hz, sample_rate_hz)?;
    let w = prewarp(cutoff_hz, sample_rate_hz);
    Ok(Biquad::bilinear(0.0, 0.0, w * w, std::f64::consts::SQRT_2 * w, w * w))
}

/// Second-order Butterworth highpass section.
pub fn butterworth_highpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Biquad> {
    check_frequency(cutoff_hz, sample_rate_hz)?;
    let w = prewarp(cutoff_hz, sample_rate_hz);
    Ok(Biquad::bilinear(1.0, 0.0, 0.0, std::f64::consts::SQRT_2 * w, w * w))
}

fn check_frequency(freq_hz: f64, sample_rate_hz: f64) -> Result<()> {
    if !(freq_hz > 0.0 && freq_hz < sample_rate_hz / 2.0) {
        return Err(Error::InvalidBand(format!(
            "{freq_hz} Hz outside (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    Ok(())
}

/// A chain of biquads plus the design it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
}

impl BiquadCascade {
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        self.sections
            .iter()
            .map(|s| s.response(freq_hz, self.sample_rate_hz))
            .product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        self.sections
            .iter()
            .fold(x.to_vec(), |acc, section| section.process(&acc))
    }

    /// Coefficients as plain text, one section per line (`b0 b1 b2 1 a1 a2`).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# center_hz={} bandwidth_hz={} sample_rate_hz={}\n",
            self.center_hz, self.bandwidth_hz, self.sample_rate_hz
        );
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{:.17e} {:.17e} {:.17e} 1 {:.17e} {:.17e}",
                s.b0, s.b1, s.b2, s.a1, s.a2
            );
        }
        out
    }
}

/// Second-order Butterworth band-stop with its null at `center_hz` and
/// -3 dB edges at `center_hz ± half_bandwidth_hz`.
///
/// The analog prototype `(s² + Ω0²) / (s² + B s + Ω0²)` is built on
/// pre-warped frequencies: `Ω0` from the center and `B` from the two edges.
pub fn design_butterworth_notch(
    center_hz: f64,
    half_bandwidth_hz: f64,
    sample_rate_hz: f64,
) -> Result<BiquadCascade> {
    let (lo, hi) = (center_hz - half_bandwidth_hz, center_hz + half_bandwidth_hz);
    if !(half_bandwidth_hz > 0.0 && lo > 0.0 && hi < sample_rate_hz / 2.0) {
        return Err(Error::InvalidBand(format!(
            "stop band [{lo}, {hi}] Hz must lie inside (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    let w0 = prewarp(center_hz, sample_rate_hz);
    let bw = prewarp(hi, sample_rate_hz) - prewarp(lo, sample_rate_hz);
    let section = Biquad::bilinear(1.0, 0.0, w0 * w0, bw, w0 * w0);
    Ok(BiquadCascade {
        sections: vec![section],
        center_hz,
        bandwidth_hz: 2.0 * half_bandwidth_hz,
        sample_rate_hz,
    })
}

/// Applies `cascade` causally from rest.
pub fn filter_signal(cascade: &BiquadCascade, signal: &Signal) -> Result<Signal> {
    if cascade.sample_rate_hz != signal.sample_rate_hz() {
        return Err(Error::RateMismatch {
            left: cascade.sample_rate_hz,
            right: signal.sample_rate_hz(),
        });
    }
    Ok(signal.with_samples(cascade.process(signal.samples())))
}

/// Forward-backward application (zero phase, squared magnitude).
pub fn filtfilt(cascade: &BiquadCascade, x: &[f64]) -> Vec<f64> {
    let mut y = cascade.process(x);
    y.reverse();
    let mut y = cascade.process(&y);
    y.reverse();
    y
}

pub const DEFAULT_STEP_SIZE: f64 = 0.1;
pub const DEFAULT_HARMONICS: usize = 5;
pub const DEFAULT_REFERENCE_AMPLITUDE: f64 = 0.3;

/// Settings of the LMS adaptive notch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveNotchConfig {
    pub step_size: f64,
    pub fundamental_hz: f64,
    /// Number of notched components: the fundamental plus `harmonics - 1`
    /// multiples.
    pub harmonics: usize,
    /// Amplitude of each reference sinusoid; the per-component adaptation
    /// rate is `step_size × amplitude²`.
    pub reference_amplitude: f64,
}

impl Default for AdaptiveNotchConfig {
    fn default() -> Self {
        AdaptiveNotchConfig {
            step_size: DEFAULT_STEP_SIZE,
            fundamental_hz: 50.0,
            harmonics: DEFAULT_HARMONICS,
            reference_amplitude: DEFAULT_REFERENCE_AMPLITUDE,
        }
    }
}

impl AdaptiveNotchConfig {
    pub fn fundamental_only(mut self) -> Self {
        self.harmonics = 1;
        self
    }
}

/// Running state of the adaptive notch: one in-phase/quadrature weight pair
/// per notched component.
#[derive(Debug, Clone)]
pub struct AdaptiveNotchState {
    config: AdaptiveNotchConfig,
    omega: f64,
    amplitude: f64,
    sample: u64,
    weights: Vec<[f64; 2]>,
}

impl AdaptiveNotchState {
    pub fn new(config: AdaptiveNotchConfig, sample_rate_hz: f64) -> Result<Self> {
        if !(config.step_size > 0.0 && config.step_size < 1.0) {
            return Err(Error::config(format!(
                "step size must lie in (0, 1), got {}",
                config.step_size
            )));
        }
        if !(config.reference_amplitude > 0.0 && config.reference_amplitude.is_finite()) {
            return Err(Error::config(format!(
                "reference amplitude must be positive, got {}",
                config.reference_amplitude
            )));
        }
        if config.harmonics == 0 || config.fundamental_hz * config.harmonics as f64 >= sample_rate_hz / 2.0 {
            return Err(Error::config(format!(
                "{} harmonics of {} Hz do not fit below Nyquist",
                config.harmonics, config.fundamental_hz
            )));
        }
        Ok(AdaptiveNotchState {
            config,
            omega: 2.0 * PI * config.fundamental_hz / sample_rate_hz,
            amplitude: config.reference_amplitude,
            sample: 0,
            weights: vec![[0.0; 2]; config.harmonics],
        })
    }

    pub fn weights(&self) -> &[[f64; 2]] {
        &self.weights
    }

    /// Filters one sample and adapts. Returns the error `e(n)`.
    pub fn step(&mut self, x: f64) -> f64 {
        // phase from the sample counter so it does not drift over long records
        let phase = self.omega * self.sample as f64;
        self.sample += 1;
        let mut refs = [[0.0; 2]; 16];
        let mut estimate = 0.0;
        for (k, (w, r)) in self.weights.iter().zip(refs.iter_mut()).enumerate() {
            let (s, c) = ((k + 1) as f64 * phase).sin_cos();
            *r = [self.amplitude * c, self.amplitude * s];
            estimate += w[0] * r[0] + w[1] * r[1];
        }
        let e = x - estimate;
        let g = 2.0 * self.config.step_size * e;
        for (w, r) in self.weights.iter_mut().zip(&refs) {
            w[0] += g * r[0];
            w[1] += g * r[1];
        }
        e
    }
}

/// Runs the adaptive notch over a whole record from zero weights.
pub fn adaptive_notch(signal: &Signal, config: AdaptiveNotchConfig) -> Result<Signal> {
    if config.harmonics > 16 {
        return Err(Error::config("at most 16 notched components are supported"));
    }
    if let Some(i) = signal.samples().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut state = AdaptiveNotchState::new(config, signal.sample_rate_hz())?;
    let out = signal.samples().iter().map(|&x| state.step(x)).collect();
    Ok(signal.with_samples(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn notch() -> BiquadCascade {
        design_butterworth_notch(50.0, 1.0, 1000.0).unwrap()
    }

    /// Least-squares sine amplitude at a known frequency.
    fn amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let w = 2.0 * PI * freq * n as f64 / fs;
            c += v * w.cos();
            s += v * w.sin();
        }
        2.0 * (c * c + s * s).sqrt() / x.len() as f64
    }

    #[test]
    fn notch_response() {
        let n = notch();
        assert!(n.magnitude_db(50.0) <= -40.0, "{}", n.magnitude_db(50.0));
        assert!(n.magnitude_db(0.0).abs() <= 0.1);
        assert!(n.magnitude_db(100.0).abs() <= 0.1);
        assert!(n.is_stable());
    }

    #[test]
    fn notch_edges_at_three_db() {
        let n = notch();
        // locate the -3.0103 dB crossings by bisection on either side of 50 Hz
        let target = -10.0 * 2f64.log10();
        let cross = |mut a: f64, mut b: f64| {
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if (n.magnitude_db(a) - target) * (n.magnitude_db(m) - target) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        };
        let lo = cross(45.0, 50.0);
        let hi = cross(50.0, 55.0);
        assert!((lo - 49.0).abs() < 0.05, "{lo}");
        assert!((hi - 51.0).abs() < 0.05, "{hi}");
    }

    #[test]
    fn notch_rejects_bad_bands() {
        assert!(design_butterworth_notch(50.0, 60.0, 1000.0).is_err());
        assert!(design_butterworth_notch(499.5, 1.0, 1000.0).is_err());
        assert!(design_butterworth_notch(50.0, 0.0, 1000.0).is_err());
    }

    #[test]
    fn filtering_examples() {
        let n = notch();
        let zero = Signal::zeros(3000, 1000.0).unwrap();
        assert!(filter_signal(&n, &zero).unwrap().samples().iter().all(|&v| v == 0.0));

        for (freq, lo, hi) in [(50.0, 0.0, 0.01), (5.0, 0.99, 1.01)] {
            let s = Signal::from_fn(6000, 1000.0, |t| (2.0 * PI * freq * t).sin()).unwrap();
            let y = filter_signal(&n, &s).unwrap();
            assert_eq!(y.len(), s.len());
            let a = amplitude(&y.samples()[2000..], freq, 1000.0);
            assert!(a >= lo && a <= hi, "{freq} Hz -> {a}");
        }

        let wrong_rate = Signal::zeros(10, 500.0).unwrap();
        assert!(matches!(filter_signal(&n, &wrong_rate), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn coefficient_dump() {
        let text = notch().to_text();
        assert!(text.starts_with("# center_hz=50"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn butterworth_sections() {
        let lp = butterworth_lowpass(25.0, 1000.0).unwrap();
        let hp = butterworth_highpass(5.0, 1000.0).unwrap();
        let half_power = 1.0 / std::f64::consts::SQRT_2;
        assert!((lp.response(25.0, 1000.0).norm() - half_power).abs() < 1e-12);
        assert!((hp.response(5.0, 1000.0).norm() - half_power).abs() < 1e-12);
        assert!((lp.response(0.0, 1000.0).norm() - 1.0).abs() < 1e-12);
        assert!(hp.response(0.0, 1000.0).norm() < 1e-12);
        assert!(lp.is_stable() && hp.is_stable());
        assert!(butterworth_lowpass(600.0, 1000.0).is_err());
    }

    #[test]
    fn adaptive_zero_in_zero_out() {
        let zero = Signal::zeros(5000, 1000.0).unwrap();
        let mut state = AdaptiveNotchState::new(AdaptiveNotchConfig::default(), 1000.0).unwrap();
        for &x in zero.samples() {
            assert_eq!(state.step(x), 0.0);
        }
        assert!(state.weights().iter().flatten().all(|&w| w == 0.0));
    }

    #[test]
    fn adaptive_cancels_stationary_tone() {
        let fs = 1000.0;
        let s = Signal::from_fn(60_000, fs, |t| 0.8 * (2.0 * PI * 50.0 * t + 0.3).sin()).unwrap();
        let y = adaptive_notch(&s, AdaptiveNotchConfig::default()).unwrap();
        let tail = &y.samples()[50_000..];
        let residual = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
        let input = 0.8f64 * 0.8 / 2.0;
        assert!(residual <= input / 1000.0, "{residual}");
    }

    #[test]
    fn adaptive_rejects_bad_input() {
        let mut s = vec![0.0; 10];
        s[4] = f64::NAN;
        let s = Signal::new(s, 1000.0).unwrap();
        assert!(matches!(
            adaptive_notch(&s, AdaptiveNotchConfig::default()),
            Err(Error::NonFinite(4))
        ));
        let ok = Signal::zeros(10, 1000.0).unwrap();
        let mut cfg = AdaptiveNotchConfig::default();
        cfg.step_size = 1.0;
        assert!(adaptive_notch(&ok, cfg).is_err());
        cfg.step_size = 0.0;
        assert!(adaptive_notch(&ok, cfg).is_err());
    }

    #[test]
    fn adaptive_weights_stay_bounded_over_ten_minutes() {
        let fs = 1000.0;
        let s = Signal::from_fn(600_000, fs, |t| {
            (2.0 * PI * 50.3 * t).sin() + 0.5 * (2.0 * PI * 1.2 * t).sin() + 0.2 * (2.0 * PI * 150.0 * t).cos()
        })
        .unwrap();
        let mut state = AdaptiveNotchState::new(AdaptiveNotchConfig::default(), fs).unwrap();
        let mut peak = 0.0f64;
        for &x in s.samples() {
            state.step(x);
            for w in state.weights() {
                peak = peak.max(w[0].abs()).max(w[1].abs());
            }
        }
        assert!(peak.is_finite() && peak < 10.0, "{peak}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn butterworth_path_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 200),
            y in prop::collection::vec(-1.0f64..1.0, 200),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let n = notch();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let (fx, fy, fc) = (n.process(&x), n.process(&y), n.process(&combo));
            for i in 0..200 {
                prop_assert!((fc[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn adaptive_is_scaling_equivariant(
            x in prop::collection::vec(-1.0f64..1.0, 300),
            alpha in 0.01f64..100.0,
        ) {
            let s = Signal::new(x, 1000.0).unwrap();
            let base = adaptive_notch(&s, AdaptiveNotchConfig::default()).unwrap();
            let scaled = adaptive_notch(&s.scaled(alpha), AdaptiveNotchConfig::default()).unwrap();
            for (u, v) in base.samples().iter().zip(scaled.samples()) {
                prop_assert!((v - alpha * u).abs() <= 1e-9 * alpha.max(1.0));
            }
        }
    }
}
