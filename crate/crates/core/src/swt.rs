//! Undecimated (à trous) stationary wavelet transform with periodic
//! boundaries.
//!
//! At level `j` the base filters are dilated by `2^(j-1)` instead of
//! decimating the output, so every coefficient sequence keeps the input
//! length. Each filter is advanced by the rounded centroid of its squared
//! taps, which keeps coefficient `n` of every scale aligned with input
//! sample `n`. Reconstruction applies the adjoint filter bank with a factor
//! 1/2 per level; for orthogonal filters this inverts the decomposition
//! exactly for any length.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

pub const DEFAULT_WAVELET: &str = "db6";
pub const DEFAULT_LEVELS: usize = 4;
pub const MAX_LEVELS: usize = 8;

const WAVELET_TABLE: &str = include_str!("../data/wavelets.txt");

/// The four filters of an orthogonal two-channel filter bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletFilters {
    pub name: String,
    pub decomposition_lowpass: Vec<f64>,
    pub decomposition_highpass: Vec<f64>,
    pub reconstruction_lowpass: Vec<f64>,
    pub reconstruction_highpass: Vec<f64>,
}

impl WaveletFilters {
    /// Builds the filter bank from an orthonormal scaling filter.
    ///
    /// The highpass is the quadrature mirror `g[k] = (-1)^k h[L-1-k]`; the
    /// reconstruction filters are the time reverses of the analysis ones.
    pub fn from_scaling(name: impl Into<String>, scaling: &[f64]) -> Result<Self> {
        let name = name.into();
        if scaling.len() < 2 || scaling.len() % 2 != 0 {
            return Err(Error::config(format!(
                "wavelet '{name}' needs an even number of taps, got {}",
                scaling.len()
            )));
        }
        let l = scaling.len();
        let lo = scaling.to_vec();
        let hi: Vec<f64> = (0..l)
            .map(|k| if k % 2 == 0 { lo[l - 1 - k] } else { -lo[l - 1 - k] })
            .collect();
        let filters = WaveletFilters {
            name,
            reconstruction_lowpass: lo.iter().rev().copied().collect(),
            reconstruction_highpass: hi.iter().rev().copied().collect(),
            decomposition_lowpass: lo,
            decomposition_highpass: hi,
        };
        filters.validate()?;
        Ok(filters)
    }

    pub fn len(&self) -> usize {
        self.decomposition_lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decomposition_lowpass.is_empty()
    }

    /// Checks equal lengths, orthonormality and the quadrature-mirror relation.
    pub fn validate(&self) -> Result<()> {
        let l = self.len();
        let bad = |what: &str| Err(Error::config(format!("wavelet '{}': {what}", self.name)));
        if [
            &self.decomposition_highpass,
            &self.reconstruction_lowpass,
            &self.reconstruction_highpass,
        ]
        .iter()
        .any(|f| f.len() != l)
        {
            return bad("filters differ in length");
        }
        let sum: f64 = self.decomposition_lowpass.iter().sum();
        let energy: f64 = self.decomposition_lowpass.iter().map(|v| v * v).sum();
        if (sum - std::f64::consts::SQRT_2).abs() > 1e-10 {
            return bad("lowpass taps do not sum to sqrt(2)");
        }
        if (energy - 1.0).abs() > 1e-10 {
            return bad("lowpass taps do not have unit energy");
        }
        for k in 0..l {
            let mirror = self.decomposition_lowpass[l - 1 - k] * if k % 2 == 0 { 1.0 } else { -1.0 };
            if (self.decomposition_highpass[k] - mirror).abs() > 1e-10 {
                return bad("highpass is not the quadrature mirror of the lowpass");
            }
        }
        Ok(())
    }
}

struct TableEntry {
    order: usize,
    taps: Vec<f64>,
}

fn table() -> &'static BTreeMap<String, TableEntry> {
    static TABLE: OnceLock<BTreeMap<String, TableEntry>> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(WAVELET_TABLE).expect("shipped wavelet table is well-formed"))
}

fn parse_table(text: &str) -> Result<BTreeMap<String, TableEntry>> {
    let mut out = BTreeMap::new();
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    while let Some(header) = lines.next() {
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [name, order, count] = fields[..] else {
            return Err(Error::parse("wavelet table", format!("bad header '{header}'")));
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse("wavelet table", format!("{s}: {e}")))
        };
        let (order, count) = (parse_usize(order)?, parse_usize(count)?);
        let taps = (0..count)
            .map(|_| {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::parse("wavelet table", format!("{name}: missing taps")))?;
                line.parse::<f64>()
                    .map_err(|e| Error::parse("wavelet table", format!("{name}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(name.to_ascii_lowercase(), TableEntry { order, taps });
    }
    Ok(out)
}

/// Names available to [`load_wavelet`].
pub fn available_wavelets() -> Vec<&'static str> {
    table().keys().map(String::as_str).collect()
}

/// Looks up a wavelet in the shipped coefficient table (case-insensitive).
pub fn load_wavelet(name: &str) -> Result<WaveletFilters> {
    let key = name.trim().to_ascii_lowercase();
    match table().get(&key) {
        Some(entry) => {
            debug_assert!(entry.order >= 1);
            WaveletFilters::from_scaling(key, &entry.taps)
        }
        None => Err(Error::UnknownWavelet {
            name: name.to_string(),
            available: available_wavelets().join(", "),
        }),
    }
}

/// Decomposition level count that keeps 50 Hz inside the deepest detail band.
pub fn default_levels(sample_rate_hz: f64) -> usize {
    if sample_rate_hz == 1000.0 {
        return DEFAULT_LEVELS;
    }
    let levels = (sample_rate_hz / 62.5).log2().round();
    levels.clamp(3.0, 6.0) as usize
}

/// Nominal frequency band `(low, high)` in Hz of detail scale `scale`.
pub fn band_of_scale(scale: usize, sample_rate_hz: f64, levels: usize) -> Result<(f64, f64)> {
    if scale == 0 || scale > levels {
        return Err(Error::ScaleOutOfRange { scale, levels });
    }
    let high = sample_rate_hz / (1u64 << scale) as f64;
    Ok((high / 2.0, high))
}

/// Nominal band of the approximation at the deepest level.
pub fn band_of_approximation(sample_rate_hz: f64, levels: usize) -> (f64, f64) {
    (0.0, sample_rate_hz / (1u64 << (levels + 1)) as f64)
}

/// Approximation at the deepest scale and one detail sequence per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwtDecomposition {
    pub levels: usize,
    pub approximation: Vec<f64>,
    /// `details[j - 1]` holds scale `j`.
    pub details: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
}

impl SwtDecomposition {
    pub fn len(&self) -> usize {
        self.approximation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.approximation.is_empty()
    }

    pub fn detail(&self, scale: usize) -> Result<&[f64]> {
        self.details
            .get(scale.wrapping_sub(1))
            .map(Vec::as_slice)
            .ok_or(Error::ScaleOutOfRange {
                scale,
                levels: self.levels,
            })
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(Error::LevelsOutOfRange(self.levels));
        }
        if self.details.len() != self.levels {
            return Err(Error::LengthMismatch {
                left: self.details.len(),
                right: self.levels,
            });
        }
        let n = self.approximation.len();
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        for d in &self.details {
            if d.len() != n {
                return Err(Error::LengthMismatch {
                    left: d.len(),
                    right: n,
                });
            }
        }
        if n % (1usize << self.levels) != 0 {
            return Err(Error::UnalignedLength {
                len: n,
                levels: self.levels,
            });
        }
        Ok(())
    }
}

/// Rounded centroid of the squared taps.
fn energy_centroid(taps: &[f64]) -> usize {
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let moment: f64 = taps.iter().enumerate().map(|(k, v)| k as f64 * v * v).sum();
    (moment / energy).round() as usize
}

/// `out[n] = sum_k taps[k] * input[(n + (advance - k) * dilation) mod N]`.
fn dilated_circular_conv(
    input: &[f64],
    taps: &[f64],
    dilation: usize,
    advance: isize,
    out: &mut [f64],
) {
    let n = input.len() as isize;
    let offsets: Vec<(usize, f64)> = taps
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let shift = ((advance - k as isize) * dilation as isize).rem_euclid(n);
            (shift as usize, t)
        })
        .collect();
    out.iter_mut().for_each(|o| *o = 0.0);
    let len = input.len();
    for &(shift, tap) in &offsets {
        // out[i] += tap * input[(i + shift) mod len], split to avoid a modulo per sample
        let (head, tail) = out.split_at_mut(len - shift);
        for (o, &x) in head.iter_mut().zip(&input[shift..]) {
            *o += tap * x;
        }
        for (o, &x) in tail.iter_mut().zip(&input[..shift]) {
            *o += tap * x;
        }
    }
}

/// Stationary wavelet decomposition with `levels` scales.
///
/// The signal length must be divisible by `2^levels`; use
/// [`crate::signal::pad_symmetric`] first.
pub fn swt_decompose(
    signal: &Signal,
    filters: &WaveletFilters,
    levels: usize,
) -> Result<SwtDecomposition> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(Error::LevelsOutOfRange(levels));
    }
    signal.require_non_empty()?;
    let n = signal.len();
    if n % (1usize << levels) != 0 {
        return Err(Error::UnalignedLength { len: n, levels });
    }
    let adv_lo = energy_centroid(&filters.decomposition_lowpass) as isize;
    let adv_hi = energy_centroid(&filters.decomposition_highpass) as isize;

    let mut approx = signal.samples().to_vec();
    let mut next = vec![0.0; n];
    let mut details = Vec::with_capacity(levels);
    for level in 0..levels {
        let dilation = 1usize << level;
        let mut detail = vec![0.0; n];
        dilated_circular_conv(&approx, &filters.decomposition_highpass, dilation, adv_hi, &mut detail);
        dilated_circular_conv(&approx, &filters.decomposition_lowpass, dilation, adv_lo, &mut next);
        std::mem::swap(&mut approx, &mut next);
        details.push(detail);
    }
    Ok(SwtDecomposition {
        levels,
        approximation: approx,
        details,
        sample_rate_hz: signal.sample_rate_hz(),
    })
}

/// Inverse of [`swt_decompose`].
pub fn swt_reconstruct(decomposition: &SwtDecomposition, filters: &WaveletFilters) -> Result<Signal> {
    decomposition.validate()?;
    let l = filters.len() as isize;
    // Adjoint of an advance `a` with taps h is an advance `L-1-a` with reversed taps.
    let adv_lo = l - 1 - energy_centroid(&filters.decomposition_lowpass) as isize;
    let adv_hi = l - 1 - energy_centroid(&filters.decomposition_highpass) as isize;
    let n = decomposition.len();

    let mut approx = decomposition.approximation.clone();
    let mut from_lo = vec![0.0; n];
    let mut from_hi = vec![0.0; n];
    for level in (0..decomposition.levels).rev() {
        let dilation = 1usize << level;
        dilated_circular_conv(&approx, &filters.reconstruction_lowpass, dilation, adv_lo, &mut from_lo);
        dilated_circular_conv(
            &decomposition.details[level],
            &filters.reconstruction_highpass,
            dilation,
            adv_hi,
            &mut from_hi,
        );
        for ((a, lo), hi) in approx.iter_mut().zip(&from_lo).zip(&from_hi) {
            *a = 0.5 * (lo + hi);
        }
    }
    Signal::new(approx, decomposition.sample_rate_hz)
}

/// Inserts `factor - 1` zeros between consecutive taps.
pub fn dilate(taps: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    let mut out = vec![0.0; (taps.len() - 1) * factor + 1];
    for (k, &t) in taps.iter().enumerate() {
        out[k * factor] = t;
    }
    out
}
