//! Output SNR, ASCI, beat segmentation into TQ and QRST intervals, and a
//! derivative-energy R-peak detector.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notch::{butterworth_highpass, butterworth_lowpass, filtfilt, BiquadCascade};
use crate::signal::{ensure_aligned, mean_square, Signal};

/// Returned by [`snr_out`] when the residual is numerically zero.
pub const SNR_CAP_DB: f64 = 200.0;
pub const DEFAULT_BETA_FRACTION: f64 = 0.05;

/// `10 log10(P(denoised) / P(denoised - clean))`, capped at [`SNR_CAP_DB`].
pub fn snr_out(clean: &Signal, denoised: &Signal) -> Result<f64> {
    ensure_aligned(clean, denoised)?;
    clean.require_non_empty()?;
    let residual: Vec<f64> = denoised
        .samples()
        .iter()
        .zip(clean.samples())
        .map(|(d, c)| d - c)
        .collect();
    let p_res = mean_square(&residual);
    if p_res < 1e-30 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (mean_square(denoised.samples()) / p_res).log10()).min(SNR_CAP_DB))
}

fn population_std(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = x.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    (x.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
}

/// Where the tolerance β takes its standard deviation from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaScope {
    /// The whole clean record, even when scoring sub-intervals.
    #[default]
    WholeRecord,
    /// Only the samples being scored.
    ScoredSamples,
}

/// Sorted, merged, bounds-checked copy of `intervals`.
fn merge_intervals(intervals: &[Range<usize>], len: usize) -> Result<Vec<Range<usize>>> {
    let mut sorted: Vec<Range<usize>> = Vec::with_capacity(intervals.len());
    for r in intervals {
        if r.end > len {
            return Err(Error::config(format!("interval {r:?} exceeds record length {len}")));
        }
        if r.start < r.end {
            sorted.push(r.clone());
        }
    }
    sorted.sort_by_key(|r| r.start);
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match merged.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => merged.push(r),
        }
    }
    if merged.is_empty() {
        return Err(Error::EmptyIntervals);
    }
    Ok(merged)
}

/// Adaptive signed correlation index in percent.
///
/// Each scored sample counts +1 when `|reference - test| <= β` and -1
/// otherwise, with `β = beta_fraction × std(reference)`. `intervals` defaults
/// to the whole record; overlapping intervals are scored once.
pub fn asci(
    reference: &Signal,
    test: &Signal,
    beta_fraction: f64,
    intervals: Option<&[Range<usize>]>,
    scope: BetaScope,
) -> Result<f64> {
    ensure_aligned(reference, test)?;
    reference.require_non_empty()?;
    if !(beta_fraction >= 0.0 && beta_fraction.is_finite()) {
        return Err(Error::config(format!("beta fraction {beta_fraction} must be >= 0")));
    }
    let n = reference.len();
    let whole = [0..n];
    let merged = merge_intervals(intervals.unwrap_or(&whole), n)?;
    let (x, y) = (reference.samples(), test.samples());
    let scored = || merged.iter().flat_map(|r| r.clone());
    let std = match scope {
        BetaScope::WholeRecord => population_std(x.iter().copied()),
        BetaScope::ScoredSamples => population_std(scored().map(|k| x[k])),
    };
    let beta = beta_fraction * std;
    let (mut total, mut count) = (0i64, 0usize);
    for k in scored() {
        total += if (x[k] - y[k]).abs() <= beta { 1 } else { -1 };
        count += 1;
    }
    Ok(100.0 * total as f64 / count as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub r_peak: usize,
    pub reference_point: usize,
    pub tq: Range<usize>,
    pub qrst: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatSegmentation {
    pub beats: Vec<Beat>,
}

impl BeatSegmentation {
    fn kept(&self, drop_edge_beats: bool) -> &[Beat] {
        if drop_edge_beats && self.beats.len() > 2 {
            &self.beats[1..self.beats.len() - 1]
        } else {
            &self.beats
        }
    }

    /// TQ intervals; with `drop_edge_beats` the first and last beats, whose
    /// intervals rest on boundary rules, are left out.
    pub fn tq_intervals(&self, drop_edge_beats: bool) -> Vec<Range<usize>> {
        self.kept(drop_edge_beats).iter().map(|b| b.tq.clone()).collect()
    }

    pub fn qrst_intervals(&self, drop_edge_beats: bool) -> Vec<Range<usize>> {
        self.kept(drop_edge_beats).iter().map(|b| b.qrst.clone()).collect()
    }
}

pub const REFERENCE_OFFSET_MS: f64 = 50.0;
pub const LAST_QRST_MS: f64 = 600.0;
const RR_HISTORY: usize = 5;

/// Splits a record into per-beat TQ and QRST intervals.
///
/// The reference point sits 50 ms before each R-peak. TQ is the stretch of
/// length `L` before it, where `L` is a quarter of the mean of the (up to)
/// five preceding RR intervals, floored to whole samples. QRST runs from the
/// reference point to the start of the next beat's TQ; the last beat's QRST
/// stops after 600 ms or at the record end.
pub fn segment_beats(r_peaks: &[usize], sample_rate_hz: f64, record_length: usize) -> Result<BeatSegmentation> {
    if r_peaks.len() < 2 {
        return Err(Error::TooFewPeaks(r_peaks.len()));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidRate(sample_rate_hz));
    }
    if let Some(w) = r_peaks.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidAnnotation(format!(
            "R-peaks not strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if let Some(&last) = r_peaks.last().filter(|&&p| p >= record_length) {
        return Err(Error::InvalidAnnotation(format!(
            "R-peak {last} outside record of {record_length} samples"
        )));
    }
    let offset = (REFERENCE_OFFSET_MS * 1e-3 * sample_rate_hz).floor() as usize;
    let tail = (LAST_QRST_MS * 1e-3 * sample_rate_hz).floor() as usize;
    let references: Vec<usize> = r_peaks.iter().map(|&r| r.saturating_sub(offset)).collect();
    let history = |b: usize| -> usize {
        let rr: Vec<usize> = if b == 0 {
            vec![r_peaks[1] - r_peaks[0]]
        } else {
            (b.saturating_sub(RR_HISTORY) + 1..=b)
                .map(|i| r_peaks[i] - r_peaks[i - 1])
                .collect()
        };
        let mean = rr.iter().sum::<usize>() as f64 / rr.len() as f64;
        (0.25 * mean).floor() as usize
    };
    // a beat's TQ never reaches back past the previous reference point
    let tq_start: Vec<usize> = (0..r_peaks.len())
        .map(|b| {
            let start = references[b].saturating_sub(history(b));
            if b == 0 {
                start
            } else {
                start.max(references[b - 1])
            }
        })
        .collect();
    let beats = (0..r_peaks.len())
        .map(|b| {
            let qrst_end = if b + 1 < r_peaks.len() {
                tq_start[b + 1]
            } else {
                (references[b] + tail).min(record_length)
            };
            Beat {
                r_peak: r_peaks[b],
                reference_point: references[b],
                tq: tq_start[b]..references[b],
                qrst: references[b]..qrst_end,
            }
        })
        .collect();
    Ok(BeatSegmentation { beats })
}

const DETECTOR_BAND_HZ: (f64, f64) = (5.0, 25.0);
const INTEGRATION_MS: f64 = 150.0;
const REFRACTORY_MS: f64 = 250.0;
const REFINE_MS: f64 = 40.0;
const THRESHOLD_FRACTION: f64 = 0.4;
const PEAK_MEMORY: usize = 8;
/// Minimum ratio between the mean QRS energy peak and the quiet-level
/// (10th percentile) of the integrated envelope.
const MIN_DYNAMIC_RANGE: f64 = 4.0;

/// Derivative-energy QRS detector.
///
/// Zero-phase 5–25 Hz band-pass, squared five-point derivative, 150 ms
/// moving integration, then local maxima above 0.4 of the running mean of
/// the last eight accepted peaks (measured from the envelope's quiet level),
/// with a 250 ms refractory period. Each detection is moved to the largest
/// raw sample within ±40 ms.
pub fn detect_r_peaks(signal: &Signal) -> Result<Vec<usize>> {
    let fs = signal.sample_rate_hz();
    let x = signal.samples();
    let n = x.len();
    if (n as f64) < 2.0 * fs {
        return Err(Error::NoPeaks(format!("record of {n} samples is shorter than 2 s")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let band = BiquadCascade {
        sections: vec![
            butterworth_highpass(DETECTOR_BAND_HZ.0, fs)?,
            butterworth_lowpass(DETECTOR_BAND_HZ.1, fs)?,
        ],
        center_hz: 0.5 * (DETECTOR_BAND_HZ.0 + DETECTOR_BAND_HZ.1),
        bandwidth_hz: DETECTOR_BAND_HZ.1 - DETECTOR_BAND_HZ.0,
        sample_rate_hz: fs,
    };
    let y = filtfilt(&band, x);
    let at = |k: isize| y[k.clamp(0, n as isize - 1) as usize];
    let energy: Vec<f64> = (0..n as isize)
        .map(|k| {
            let d = (2.0 * at(k + 1) + at(k + 2) - at(k - 1) - 2.0 * at(k - 2)) * fs / 8.0;
            d * d
        })
        .collect();

    let half = ((INTEGRATION_MS * 1e-3 * fs) / 2.0).floor() as usize;
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + energy[k];
    }
    let envelope: Vec<f64> = (0..n)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(half), (k + half + 1).min(n));
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();

    let mut sorted = envelope.clone();
    sorted.sort_by(f64::total_cmp);
    let quiet = sorted[n / 10];
    let initial = envelope[..(2.0 * fs) as usize]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if !(initial > quiet * MIN_DYNAMIC_RANGE && initial > 0.0) {
        return Err(Error::NoPeaks("no QRS-like energy bursts above the background".into()));
    }

    let refractory = (REFRACTORY_MS * 1e-3 * fs).round() as usize;
    let mut memory = vec![initial];
    let mut accepted: Vec<usize> = Vec::new();
    for k in 1..n - 1 {
        let v = envelope[k];
        if !(v > envelope[k - 1] && v >= envelope[k + 1]) {
            continue;
        }
        let level = memory.iter().sum::<f64>() / memory.len() as f64;
        if v < quiet + THRESHOLD_FRACTION * (level - quiet) {
            continue;
        }
        match accepted.last() {
            Some(&last) if k - last < refractory => {
                if v > envelope[last] {
                    *accepted.last_mut().expect("non-empty") = k;
                    *memory.last_mut().expect("non-empty") = v;
                }
            }
            _ => {
                accepted.push(k);
                memory.push(v);
                if memory.len() > PEAK_MEMORY {
                    memory.remove(0);
                }
            }
        }
    }
    if accepted.len() < 2 {
        return Err(Error::NoPeaks(format!("only {} candidate beats", accepted.len())));
    }

    let reach = (REFINE_MS * 1e-3 * fs).round() as usize;
    let mut peaks: Vec<usize> = accepted
        .iter()
        .map(|&k| {
            let (lo, hi) = (k.saturating_sub(reach), (k + reach + 1).min(n));
            (lo..hi).max_by(|&a, &b| x[a].total_cmp(&x[b])).expect("non-empty window")
        })
        .collect();
    peaks.dedup();
    Ok(peaks)
}

/// Identifies what a report row was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub scenario: String,
    /// `f64::INFINITY` for a clean input.
    pub snr_in_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub beta_fraction: f64,
    pub beta_scope: BetaScope,
    pub drop_edge_beats: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            beta_fraction: DEFAULT_BETA_FRACTION,
            beta_scope: BetaScope::WholeRecord,
            drop_edge_beats: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub scenario: String,
    pub snr_in_db: f64,
    pub snr_out_db: f64,
    pub asci_global_pct: f64,
    pub asci_tq_pct: f64,
    pub asci_qrst_pct: f64,
    pub beat_count: usize,
}

/// Scores `denoised` against `clean`.
///
/// R-peaks come from `r_peaks` when given, then from the clean signal's
/// annotations, and only then from the detector run on the clean signal.
pub fn evaluate(
    clean: &Signal,
    denoised: &Signal,
    r_peaks: Option<&[usize]>,
    meta: &ReportMeta,
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    ensure_aligned(clean, denoised)?;
    let detected;
    let peaks = match r_peaks {
        Some(p) => p,
        None if !clean.annotations().is_empty() => clean.annotations(),
        None => {
            detected = detect_r_peaks(clean)?;
            &detected
        }
    };
    let seg = segment_beats(peaks, clean.sample_rate_hz(), clean.len())?;
    let score = |iv: Option<&[Range<usize>]>| asci(clean, denoised, options.beta_fraction, iv, options.beta_scope);
    let tq = seg.tq_intervals(options.drop_edge_beats);
    let qrst = seg.qrst_intervals(options.drop_edge_beats);
    Ok(EvaluationReport {
        method: meta.method.clone(),
        scenario: meta.scenario.clone(),
        snr_in_db: meta.snr_in_db,
        snr_out_db: snr_out(clean, denoised)?,
        asci_global_pct: score(None)?,
        asci_tq_pct: score(Some(&tq))?,
        asci_qrst_pct: score(Some(&qrst))?,
        beat_count: seg.beats.len(),
    })
}
