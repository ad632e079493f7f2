//! One-sided power spectra for diagnostics and tests.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One-sided power spectral density estimate on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub resolution_hz: f64,
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution_hz
    }

    /// Frequency of the largest bin inside `[lo_hz, hi_hz]`.
    pub fn peak_in(&self, lo_hz: f64, hi_hz: f64) -> Option<f64> {
        self.bins_in(lo_hz, hi_hz)
            .max_by(|&a, &b| self.density[a].total_cmp(&self.density[b]))
            .map(|k| self.frequency(k))
    }

    /// Integrated power over `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.bins_in(lo_hz, hi_hz).map(|k| self.density[k]).sum::<f64>() * self.resolution_hz
    }

    fn bins_in(&self, lo_hz: f64, hi_hz: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = (lo_hz / self.resolution_hz).ceil().max(0.0) as usize;
        let hi = ((hi_hz / self.resolution_hz).floor() as usize).min(self.density.len().saturating_sub(1));
        lo..=hi
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

fn windowed_psd(segment: &[f64], window: &[f64], fs: f64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = segment.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = segment
        .iter()
        .zip(window)
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    let norm = fs * window.iter().map(|w| w * w).sum::<f64>();
    let half = n / 2;
    (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / norm;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Rectangular-window periodogram, optionally zero-padded to `nfft`.
pub fn periodogram(x: &[f64], fs: f64, nfft: Option<usize>) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = nfft.unwrap_or(x.len()).max(x.len());
    let mut padded = x.to_vec();
    padded.resize(n, 0.0);
    let mut window = vec![1.0; x.len()];
    window.resize(n, 0.0);
    let mut planner = FftPlanner::new();
    let density = windowed_psd(&padded, &window, fs, &mut planner);
    Ok(Spectrum { resolution_hz: fs / n as f64, density })
}

/// Welch estimate with Hann segments of `segment_len` samples and 50% overlap.
pub fn welch(x: &[f64], fs: f64, segment_len: usize) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    let seg = segment_len.min(x.len()).max(2);
    let step = (seg / 2).max(1);
    let window = hann(seg);
    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        let psd = windowed_psd(&x[start..start + seg], &window, fs, &mut planner);
        acc.iter_mut().zip(&psd).for_each(|(a, p)| *a += p);
        count += 1;
        start += step;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(Spectrum { resolution_hz: fs / seg as f64, density: acc })
}
