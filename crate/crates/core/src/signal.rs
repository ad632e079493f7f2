//! Uniformly sampled signals, power measurement and SNR-calibrated mixing.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled, single-channel real signal.
///
/// Amplitudes are in millivolts for ECG and dimensionless for noise tracks.
/// Optional annotations are strictly increasing sample indices (typically
/// R-peak positions) that travel with the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    annotations: Vec<usize>,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidRate(sample_rate_hz));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            annotations: Vec::new(),
        })
    }

    pub fn with_annotations(mut self, annotations: Vec<usize>) -> Result<Self> {
        validate_annotations(&annotations, self.samples.len())?;
        self.annotations = annotations;
        Ok(self)
    }

    /// All-zero signal of `len` samples.
    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    /// Samples `f(t)` at `t = n / fs` for `n in 0..len`.
    pub fn from_fn(len: usize, sample_rate_hz: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..len).map(|n| f(n as f64 / sample_rate_hz)).collect();
        Self::new(samples, sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn annotations(&self) -> &[usize] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same rate and annotations, new samples. Annotations are dropped if the
    /// new length cannot hold them.
    pub fn with_samples(&self, samples: Vec<f64>) -> Signal {
        let annotations = if self.annotations.last().map_or(true, |&a| a < samples.len()) {
            self.annotations.clone()
        } else {
            Vec::new()
        };
        Signal {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            annotations,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        self.with_samples(self.samples.iter().map(|&x| f(x)).collect())
    }

    pub fn scaled(&self, gain: f64) -> Signal {
        self.map(|x| gain * x)
    }

    /// Sample-wise sum; annotations are taken from `self`.
    pub fn add(&self, other: &Signal) -> Result<Signal> {
        ensure_aligned(self, other)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// Sample-wise difference `self - other`.
    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        ensure_aligned(self, other)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptySignal)
        } else {
            Ok(())
        }
    }
}

fn validate_annotations(annotations: &[usize], len: usize) -> Result<()> {
    for w in annotations.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidAnnotation(format!(
                "indices not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = annotations.last() {
        if last >= len {
            return Err(Error::InvalidAnnotation(format!(
                "index {last} outside signal of length {len}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn ensure_aligned(a: &Signal, b: &Signal) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::RateMismatch {
            left: a.sample_rate_hz,
            right: b.sample_rate_hz,
        });
    }
    Ok(())
}

/// Signal-to-noise ratio in decibels. `+inf` means "no noise".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SnrDb(f64);

impl SnrDb {
    pub const MIN_DB: f64 = -60.0;
    pub const MAX_DB: f64 = 60.0;

    pub fn new(db: f64) -> Result<Self> {
        if db == f64::INFINITY || (db.is_finite() && (Self::MIN_DB..=Self::MAX_DB).contains(&db)) {
            Ok(SnrDb(db))
        } else {
            Err(Error::config(format!(
                "SNR {db} dB outside [{}, {}] and not infinite",
                Self::MIN_DB,
                Self::MAX_DB
            )))
        }
    }

    pub fn infinite() -> Self {
        SnrDb(f64::INFINITY)
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn power_ratio(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }
}

/// Mean of squared samples (biased mean-square over the whole record).
pub fn power(signal: &Signal) -> Result<f64> {
    signal.require_non_empty()?;
    Ok(mean_square(signal.samples()))
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Result of [`mix_at_snr`].
#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Signal,
    pub scaled_noise: Signal,
    pub gain: f64,
}

/// Scales `noise` so that `10 log10(P_clean / P_noise) = snr_in` and adds it
/// to `clean`.
pub fn mix_at_snr(clean: &Signal, noise: &Signal, snr_in: SnrDb) -> Result<Mixture> {
    mix_at_snr_over(clean, noise, snr_in, 0..clean.len())
}

/// Like [`mix_at_snr`], but both powers are measured over `range` only.
/// The gain is still applied to the whole noise track.
pub fn mix_at_snr_over(
    clean: &Signal,
    noise: &Signal,
    snr_in: SnrDb,
    range: Range<usize>,
) -> Result<Mixture> {
    ensure_aligned(clean, noise)?;
    clean.require_non_empty()?;
    if range.start >= range.end || range.end > clean.len() {
        return Err(Error::config(format!(
            "calibration range {range:?} invalid for {} samples",
            clean.len()
        )));
    }
    let gain = if snr_in.is_infinite() {
        0.0
    } else {
        let p_clean = mean_square(&clean.samples()[range.clone()]);
        if p_clean == 0.0 {
            return Err(Error::ZeroPower("clean signal"));
        }
        let p_noise = mean_square(&noise.samples()[range]);
        if p_noise == 0.0 {
            return Err(Error::ZeroPower("noise"));
        }
        (p_clean / (p_noise * snr_in.power_ratio())).sqrt()
    };
    let scaled_noise = Signal {
        samples: noise.samples.iter().map(|&v| gain * v).collect(),
        sample_rate_hz: noise.sample_rate_hz,
        annotations: Vec::new(),
    };
    let noisy = clean.add(&scaled_noise)?;
    Ok(Mixture {
        noisy,
        scaled_noise,
        gain,
    })
}

const RESAMPLE_TAPS: usize = 64;
const RESAMPLE_CUTOFF: f64 = 0.45;
const KAISER_BETA: f64 = 9.8;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// The cutoff sits at 0.45 of the lower of the two rates and the kernel spans
/// 64 periods of that lower rate. Weights are renormalised per output sample
/// so DC passes exactly. Input is mirrored at both ends. Annotation indices
/// are mapped proportionally and rounded.
pub fn resample(signal: &Signal, target_rate_hz: f64) -> Result<Signal> {
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::InvalidRate(target_rate_hz));
    }
    let source_rate = signal.sample_rate_hz;
    if target_rate_hz == source_rate {
        return Ok(signal.clone());
    }
    signal.require_non_empty()?;

    let x = signal.samples();
    let n_in = x.len();
    let n_out = ((n_in as f64) * target_rate_hz / source_rate).round().max(1.0) as usize;
    let low_rate = source_rate.min(target_rate_hz);
    // cutoff in cycles per input sample
    let fc = RESAMPLE_CUTOFF * low_rate / source_rate;
    let half_span = (RESAMPLE_TAPS as f64 / 2.0) * (source_rate / low_rate);
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let u = i as f64 * source_rate / target_rate_hz;
        let k_lo = (u - half_span).ceil() as i64;
        let k_hi = (u + half_span).floor() as i64;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in k_lo..=k_hi {
            let tau = u - k as f64;
            let r = tau / half_span;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            let w = 2.0 * fc * sinc(2.0 * fc * tau) * window;
            acc += w * x[reflect_index(k, n_in)];
            wsum += w;
        }
        out.push(acc / wsum);
    }

    let ratio = target_rate_hz / source_rate;
    let mut annotations: Vec<usize> = signal
        .annotations
        .iter()
        .map(|&a| (((a as f64) * ratio).round() as usize).min(n_out - 1))
        .collect();
    annotations.dedup();

    Ok(Signal {
        samples: out,
        sample_rate_hz: target_rate_hz,
        annotations,
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Half-sample symmetric extension: `.., x1, x0 | x0, x1, .. x_{n-1} | x_{n-1}, ..`.
pub(crate) fn reflect_index(k: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = k.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Extends `signal` by mirror reflection of its end so that the length
/// becomes the smallest multiple of `multiple` not below the input length.
/// Returns the padded signal and the original length for [`trim`].
pub fn pad_symmetric(signal: &Signal, multiple: usize) -> Result<(Signal, usize)> {
    if multiple == 0 {
        return Err(Error::config("padding multiple must be >= 1"));
    }
    let n = signal.len();
    let target = n.div_ceil(multiple) * multiple;
    let mut samples = signal.samples.clone();
    if n > 0 {
        samples.extend((n..target).map(|i| signal.samples[reflect_index(i as i64, n)]));
    }
    Ok((
        Signal {
            samples,
            sample_rate_hz: signal.sample_rate_hz,
            annotations: signal.annotations.clone(),
        },
        n,
    ))
}

/// Keeps the first `original_length` samples.
pub fn trim(signal: &Signal, original_length: usize) -> Result<Signal> {
    if original_length > signal.len() {
        return Err(Error::LengthMismatch {
            left: original_length,
            right: signal.len(),
        });
    }
    let annotations = signal
        .annotations
        .iter()
        .copied()
        .filter(|&a| a < original_length)
        .collect();
    Ok(Signal {
        samples: signal.samples[..original_length].to_vec(),
        sample_rate_hz: signal.sample_rate_hz,
        annotations,
    })
}
