//! Seeded generators: synthetic AF ECG (ventricular activity without P waves
//! plus sawtooth f-waves) and three power-line interference scenarios.
//!
//! Every generator owns a ChaCha8 generator seeded from the config seed. Each
//! random quantity family reads its own ChaCha stream, so adding a draw to
//! one family never shifts another.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mix_at_snr_over, Mixture, Signal, SnrDb};

const STREAM_RR: u64 = 1;
const STREAM_FWAVE: u64 = 2;
const STREAM_PLI_AMP: u64 = 3;
const STREAM_PLI_FREQ: u64 = 4;
const STREAM_PLI_PHASE: u64 = 5;
const STREAM_PLI_SCENARIO: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn sample_count(duration_s: f64, sample_rate_hz: f64) -> Result<usize> {
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::InvalidRate(sample_rate_hz));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::config(format!("duration must be positive, got {duration_s}")));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    Ok(n)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(format!("key '{key}'"), format!("cannot parse '{value}'")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    if value.trim().eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn optional_text(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

/// One Gaussian event of the ventricular dynamical model.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveEvent {
    pub name: String,
    pub angle_deg: f64,
    pub amplitude: f64,
    pub width_rad: f64,
    /// Angles scale with `(hr/60)^angle_rate_exponent`.
    pub angle_rate_exponent: f64,
}

const EVENT_TABLE: &str = include_str!("../data/ventricular_events.txt");

fn parse_events(text: &str) -> Result<Vec<WaveEvent>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::parse("ventricular event table", format!("bad row '{line}'")));
            }
            let num = |i: usize| parse_value::<f64>(f[0], f[i]);
            Ok(WaveEvent {
                name: f[0].to_string(),
                angle_deg: num(1)?,
                amplitude: num(2)?,
                width_rad: num(3)?,
                angle_rate_exponent: num(4)?,
            })
        })
        .collect()
}

/// The shipped Q, R, S, T event table.
pub fn ventricular_events() -> &'static [WaveEvent] {
    static EVENTS: OnceLock<Vec<WaveEvent>> = OnceLock::new();
    EVENTS.get_or_init(|| parse_events(EVENT_TABLE).expect("shipped event table is valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfEcgConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub heart_rate_bpm: f64,
    /// Each RR interval deviates uniformly by up to this fraction of the mean.
    pub rr_variability_fraction: f64,
    /// Half the peak-to-peak amplitude of the atrial track, in µV.
    pub fwave_amplitude_uv: f64,
    /// Drawn from N(6, 1.5) Hz when unset. Clamped so the modulated
    /// instantaneous frequency stays within [3, 9] Hz.
    pub fwave_fundamental_hz: Option<f64>,
    pub fwave_harmonics: usize,
    pub fm_deviation_hz: f64,
    pub fm_rate_hz: f64,
}

impl Default for AfEcgConfig {
    fn default() -> Self {
        AfEcgConfig {
            seed: 0,
            duration_s: 60.0,
            sample_rate_hz: 1000.0,
            heart_rate_bpm: 80.0,
            rr_variability_fraction: 0.0,
            fwave_amplitude_uv: 75.0,
            fwave_fundamental_hz: None,
            fwave_harmonics: 3,
            fm_deviation_hz: 0.2,
            fm_rate_hz: 0.1,
        }
    }
}

impl AfEcgConfig {
    pub fn validate(&self) -> Result<()> {
        sample_count(self.duration_s, self.sample_rate_hz)?;
        let bad = |msg: String| Err(Error::config(msg));
        if !(30.0..=220.0).contains(&self.heart_rate_bpm) {
            return bad(format!("heart rate {} bpm outside [30, 220]", self.heart_rate_bpm));
        }
        if !(0.0..=0.25).contains(&self.rr_variability_fraction) {
            return bad(format!(
                "RR variability {} outside [0, 0.25]",
                self.rr_variability_fraction
            ));
        }
        if !(self.fwave_amplitude_uv >= 0.0 && self.fwave_amplitude_uv.is_finite()) {
            return bad(format!("f-wave amplitude {} µV must be >= 0", self.fwave_amplitude_uv));
        }
        if self.fwave_harmonics == 0 {
            return bad("at least one f-wave harmonic is required".into());
        }
        if !(self.fm_deviation_hz >= 0.0 && self.fm_rate_hz >= 0.0) {
            return bad("f-wave modulation depth and rate must be >= 0".into());
        }
        if let Some(f) = self.fwave_fundamental_hz {
            if !f.is_finite() {
                return bad(format!("f-wave fundamental {f} Hz is not finite"));
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> Result<usize> {
        sample_count(self.duration_s, self.sample_rate_hz)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("seed", self.seed.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("heart_rate_bpm", self.heart_rate_bpm.to_string()),
            ("rr_variability_fraction", self.rr_variability_fraction.to_string()),
            ("fwave_amplitude_uv", self.fwave_amplitude_uv.to_string()),
            ("fwave_fundamental_hz", optional_text(self.fwave_fundamental_hz)),
            ("fwave_harmonics", self.fwave_harmonics.to_string()),
            ("fm_deviation_hz", self.fm_deviation_hz.to_string()),
            ("fm_rate_hz", self.fm_rate_hz.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Overrides fields from `key = value` pairs; unknown keys are an error.
    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, value) in pairs {
            match key {
                "seed" => self.seed = parse_value(key, value)?,
                "duration_s" => self.duration_s = parse_value(key, value)?,
                "sample_rate_hz" => self.sample_rate_hz = parse_value(key, value)?,
                "heart_rate_bpm" => self.heart_rate_bpm = parse_value(key, value)?,
                "rr_variability_fraction" => self.rr_variability_fraction = parse_value(key, value)?,
                "fwave_amplitude_uv" => self.fwave_amplitude_uv = parse_value(key, value)?,
                "fwave_fundamental_hz" => self.fwave_fundamental_hz = parse_optional(key, value)?,
                "fwave_harmonics" => self.fwave_harmonics = parse_value(key, value)?,
                "fm_deviation_hz" => self.fm_deviation_hz = parse_value(key, value)?,
                "fm_rate_hz" => self.fm_rate_hz = parse_value(key, value)?,
                other => return Err(Error::config(format!("unknown ECG key '{other}'"))),
            }
        }
        self.validate()
    }

    fn echo(&self) -> String {
        self.to_pairs()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The f-wave fundamental actually used: the configured value or the
    /// seeded N(6, 1.5) draw, clamped to `[3 + Δf, 9 - Δf]` Hz.
    pub fn resolved_fwave_fundamental_hz(&self) -> f64 {
        let mut rng = stream(self.seed, STREAM_FWAVE);
        let drawn = Normal::new(6.0, 1.5).expect("valid normal").sample(&mut rng);
        let margin = self.fm_deviation_hz.min(3.0);
        self.fwave_fundamental_hz.unwrap_or(drawn).clamp(3.0 + margin, 9.0 - margin)
    }
}

/// R-peak sample positions; position 0 is a virtual beat before the record.
fn beat_knots(config: &AfEcgConfig, n: usize) -> Vec<f64> {
    let fs = config.sample_rate_hz;
    let v = config.rr_variability_fraction;
    let mean = 60.0 / config.heart_rate_bpm * fs;
    let (mut lo, mut hi) = ((mean * (1.0 - v)).ceil(), (mean * (1.0 + v)).floor());
    if lo > hi {
        lo = mean.round();
        hi = lo;
    }
    let mut rng = stream(config.seed, STREAM_RR);
    let mut draw = || {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        (mean * (1.0 + v * u)).round().clamp(lo, hi)
    };
    let before = draw();
    let first = (before / 2.0).round();
    let mut knots = vec![first - before, first];
    while *knots.last().expect("non-empty") <= n as f64 + 1.0 {
        let next = knots.last().expect("non-empty") + draw();
        knots.push(next);
    }
    knots
}

/// Cardiac phase in `[-π, π)` at fractional sample position `pos`; zero at
/// every R-peak and advancing linearly within each RR interval.
fn cardiac_phase(knots: &[f64], pos: f64) -> f64 {
    let i = knots.partition_point(|&k| k <= pos) - 1;
    let theta = 2.0 * PI * (pos - knots[i]) / (knots[i + 1] - knots[i]);
    if theta >= PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

/// Ventricular trace and its R-peak sample indices.
///
/// The cardiac phase is tracked directly on the model's unit limit cycle and
/// the z equation is integrated with classical RK4 at step `1/fs`. The trace
/// is rescaled to [-0.4, 1.2] mV.
pub fn synth_ventricular(config: &AfEcgConfig) -> Result<(Signal, Vec<usize>)> {
    config.validate()?;
    let n = config.sample_count()?;
    let fs = config.sample_rate_hz;
    let knots = beat_knots(config, n);
    let ratio = config.heart_rate_bpm / 60.0;
    let events: Vec<(f64, f64, f64)> = ventricular_events()
        .iter()
        .map(|e| {
            (
                e.angle_deg.to_radians() * ratio.powf(e.angle_rate_exponent),
                e.amplitude,
                e.width_rad * ratio.sqrt(),
            )
        })
        .collect();
    let dz = |pos: f64, z: f64| {
        let theta = cardiac_phase(&knots, pos);
        let drive: f64 = events
            .iter()
            .map(|&(ti, ai, bi)| {
                let d = (theta - ti + PI).rem_euclid(2.0 * PI) - PI;
                ai * d * (-d * d / (2.0 * bi * bi)).exp()
            })
            .sum();
        -drive - z
    };
    let dt = 1.0 / fs;
    let mut z = vec![0.0; n];
    for k in 1..n {
        let (p, y) = ((k - 1) as f64, z[k - 1]);
        let k1 = dz(p, y);
        let k2 = dz(p + 0.5, y + 0.5 * dt * k1);
        let k3 = dz(p + 0.5, y + 0.5 * dt * k2);
        let k4 = dz(p + 1.0, y + dt * k3);
        z[k] = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !z[k].is_finite() {
            return Err(Error::Diverged { index: k, config: config.echo() });
        }
    }
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        return Err(Error::Diverged { index: 0, config: config.echo() });
    }
    let span = 1.6 / (hi - lo);
    z.iter_mut().for_each(|v| *v = (*v - lo) * span - 0.4);
    let peaks: Vec<usize> = knots
        .iter()
        .filter(|&&k| k >= 0.0 && k < n as f64)
        .map(|&k| k as usize)
        .collect();
    let signal = Signal::new(z, fs)?.with_annotations(peaks.clone())?;
    Ok((signal, peaks))
}

/// Sawtooth-like atrial track of summed harmonics with a sinusoidally
/// modulated fundamental.
pub fn synth_fwaves(config: &AfEcgConfig) -> Result<Signal> {
    config.validate()?;
    let n = config.sample_count()?;
    let fs = config.sample_rate_hz;
    if config.fwave_amplitude_uv == 0.0 {
        return Signal::zeros(n, fs);
    }
    let f0 = config.resolved_fwave_fundamental_hz();
    let mut rng = stream(config.seed, STREAM_FWAVE);
    let _ = Normal::new(6.0, 1.5).expect("valid normal").sample(&mut rng);
    let phase0: f64 = rng.gen();
    let depth = if config.fm_rate_hz > 0.0 {
        config.fm_deviation_hz / (2.0 * PI * config.fm_rate_hz)
    } else {
        0.0
    };
    let mut a: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / fs;
            let phi = phase0 + f0 * t + depth * (1.0 - (2.0 * PI * config.fm_rate_hz * t).cos());
            (1..=config.fwave_harmonics)
                .map(|m| 2.0 / (m as f64 * PI) * (2.0 * PI * m as f64 * phi).sin())
                .sum()
        })
        .collect();
    let (lo, hi) = a
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let target = 2.0 * config.fwave_amplitude_uv * 1e-3;
    let gain = if hi > lo { target / (hi - lo) } else { 0.0 };
    a.iter_mut().for_each(|v| *v *= gain);
    Signal::new(a, fs)
}

/// A generated record with its additive components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    /// `ventricular + atrial + noise`, annotated with the R-peaks.
    pub composite: Signal,
    pub ventricular: Signal,
    pub atrial: Signal,
    pub noise: Signal,
    pub r_peaks: Vec<usize>,
    pub config_echo: Vec<(String, String)>,
}

impl GeneratedRecord {
    fn assemble(
        ventricular: Signal,
        atrial: Signal,
        noise: Signal,
        r_peaks: Vec<usize>,
        config_echo: Vec<(String, String)>,
    ) -> Result<Self> {
        let composite = ventricular
            .add(&atrial)?
            .add(&noise)?
            .with_annotations(r_peaks.clone())?;
        Ok(GeneratedRecord { composite, ventricular, atrial, noise, r_peaks, config_echo })
    }

    pub fn components(&self) -> [(&'static str, &Signal); 3] {
        [("ventricular", &self.ventricular), ("atrial", &self.atrial), ("noise", &self.noise)]
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.composite.sample_rate_hz()
    }

    pub fn len(&self) -> usize {
        self.composite.len()
    }

    pub fn is_empty(&self) -> bool {
        self.composite.is_empty()
    }
}

/// Clean synthetic AF ECG: ventricular plus atrial activity, zero noise track.
pub fn synth_af_ecg(config: &AfEcgConfig) -> Result<GeneratedRecord> {
    let (ventricular, r_peaks) = synth_ventricular(config)?;
    let atrial = synth_fwaves(config)?;
    let noise = Signal::zeros(ventricular.len(), config.sample_rate_hz)?;
    let mut echo = config.to_pairs();
    echo.push((
        "fwave_fundamental_resolved_hz".into(),
        config.resolved_fwave_fundamental_hz().to_string(),
    ));
    GeneratedRecord::assemble(ventricular.with_annotations(Vec::new())?, atrial, noise, r_peaks, echo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PliScenario {
    Common,
    AmpVarying,
    FreqDev,
}

impl PliScenario {
    pub const ALL: [PliScenario; 3] = [PliScenario::Common, PliScenario::AmpVarying, PliScenario::FreqDev];

    pub fn name(self) -> &'static str {
        match self {
            PliScenario::Common => "common",
            PliScenario::AmpVarying => "amp-varying",
            PliScenario::FreqDev => "freq-dev",
        }
    }
}

impl fmt::Display for PliScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PliScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PliScenario::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown PLI scenario '{s}' (common, amp-varying, freq-dev)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PliConfig {
    pub seed: u64,
    pub scenario: PliScenario,
    pub fundamental_hz: f64,
    pub max_freq_fraction: f64,
    pub max_amp_fraction: f64,
    /// Power of harmonics 2, 3, ... relative to the fundamental.
    pub harmonic_power_fractions: Vec<f64>,
    pub interharmonic_fm_deviation_hz: f64,
    pub interharmonic_fm_rate_hz: f64,
    /// Update rate of the slow amplitude and frequency random walks.
    pub fluctuation_update_hz: f64,
    pub onset_s: f64,
    /// Drawn from U[0.5, 2] Hz when unset.
    pub am_rate_hz: Option<f64>,
    pub am_depth: f64,
    /// Drawn from U[-max_freq_offset_hz, max_freq_offset_hz] when unset.
    pub freq_offset_hz: Option<f64>,
    pub max_freq_offset_hz: f64,
}

impl Default for PliConfig {
    fn default() -> Self {
        PliConfig {
            seed: 0,
            scenario: PliScenario::Common,
            fundamental_hz: 50.0,
            max_freq_fraction: 0.01,
            max_amp_fraction: 0.10,
            harmonic_power_fractions: vec![0.02, 0.05, 0.01, 0.06],
            interharmonic_fm_deviation_hz: 0.5,
            interharmonic_fm_rate_hz: 8.0,
            fluctuation_update_hz: 1.0,
            onset_s: 10.0,
            am_rate_hz: None,
            am_depth: 0.5,
            freq_offset_hz: None,
            max_freq_offset_hz: 3.0,
        }
    }
}

/// Scenario-specific random draws of a [`PliConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioDraws {
    pub am_rate_hz: f64,
    pub freq_offset_hz: f64,
}

impl PliConfig {
    pub fn new(scenario: PliScenario, seed: u64) -> Self {
        PliConfig { seed, scenario, ..PliConfig::default() }
    }

    /// Same scenario with harmonics, slow fluctuations and interharmonic
    /// modulation all switched off.
    pub fn stationary(mut self) -> Self {
        self.max_freq_fraction = 0.0;
        self.max_amp_fraction = 0.0;
        self.harmonic_power_fractions.clear();
        self.interharmonic_fm_deviation_hz = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        let fraction = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.fundamental_hz > 0.0 && self.fundamental_hz.is_finite()) {
            return bad(format!("PLI fundamental {} Hz must be positive", self.fundamental_hz));
        }
        if !fraction(self.max_freq_fraction) || !fraction(self.max_amp_fraction) {
            return bad("fluctuation bounds must lie in [0, 1]".into());
        }
        if let Some(f) = self.harmonic_power_fractions.iter().find(|&&f| !fraction(f)) {
            return bad(format!("harmonic power fraction {f} outside [0, 1]"));
        }
        if !(self.interharmonic_fm_deviation_hz >= 0.0 && self.interharmonic_fm_rate_hz > 0.0) {
            return bad("interharmonic deviation must be >= 0 and rate > 0".into());
        }
        if !(self.fluctuation_update_hz > 0.0) {
            return bad("fluctuation update rate must be positive".into());
        }
        if !(self.onset_s >= 0.0) {
            return bad(format!("onset {} s must be >= 0", self.onset_s));
        }
        if !fraction(self.am_depth) {
            return bad(format!("AM depth {} outside [0, 1]", self.am_depth));
        }
        if let Some(r) = self.am_rate_hz {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("AM rate {r} Hz must be positive"));
            }
        }
        if !(self.max_freq_offset_hz >= 0.0) {
            return bad("maximum frequency offset must be >= 0".into());
        }
        if let Some(o) = self.freq_offset_hz {
            if !o.is_finite() || o.abs() >= self.fundamental_hz {
                return bad(format!("frequency offset {o} Hz is out of range"));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let fractions = self
            .harmonic_power_fractions
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        [
            ("seed", self.seed.to_string()),
            ("scenario", self.scenario.to_string()),
            ("fundamental_hz", self.fundamental_hz.to_string()),
            ("max_freq_fraction", self.max_freq_fraction.to_string()),
            ("max_amp_fraction", self.max_amp_fraction.to_string()),
            ("harmonic_power_fractions", fractions),
            ("interharmonic_fm_deviation_hz", self.interharmonic_fm_deviation_hz.to_string()),
            ("interharmonic_fm_rate_hz", self.interharmonic_fm_rate_hz.to_string()),
            ("fluctuation_update_hz", self.fluctuation_update_hz.to_string()),
            ("onset_s", self.onset_s.to_string()),
            ("am_rate_hz", optional_text(self.am_rate_hz)),
            ("am_depth", self.am_depth.to_string()),
            ("freq_offset_hz", optional_text(self.freq_offset_hz)),
            ("max_freq_offset_hz", self.max_freq_offset_hz.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, value) in pairs {
            match key {
                "seed" => self.seed = parse_value(key, value)?,
                "scenario" => self.scenario = value.parse()?,
                "fundamental_hz" => self.fundamental_hz = parse_value(key, value)?,
                "max_freq_fraction" => self.max_freq_fraction = parse_value(key, value)?,
                "max_amp_fraction" => self.max_amp_fraction = parse_value(key, value)?,
                "harmonic_power_fractions" => {
                    self.harmonic_power_fractions = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_value(key, s))
                        .collect::<Result<_>>()?
                }
                "interharmonic_fm_deviation_hz" => self.interharmonic_fm_deviation_hz = parse_value(key, value)?,
                "interharmonic_fm_rate_hz" => self.interharmonic_fm_rate_hz = parse_value(key, value)?,
                "fluctuation_update_hz" => self.fluctuation_update_hz = parse_value(key, value)?,
                "onset_s" => self.onset_s = parse_value(key, value)?,
                "am_rate_hz" => self.am_rate_hz = parse_optional(key, value)?,
                "am_depth" => self.am_depth = parse_value(key, value)?,
                "freq_offset_hz" => self.freq_offset_hz = parse_optional(key, value)?,
                "max_freq_offset_hz" => self.max_freq_offset_hz = parse_value(key, value)?,
                other => return Err(Error::config(format!("unknown PLI key '{other}'"))),
            }
        }
        self.validate()
    }

    /// AM rate and frequency offset, configured or drawn. Both are always
    /// drawn, whatever the scenario, so the stream layout never changes.
    pub fn scenario_draws(&self) -> ScenarioDraws {
        let mut rng = stream(self.seed, STREAM_PLI_SCENARIO);
        let am: f64 = rng.gen_range(0.5..=2.0);
        let offset: f64 = if self.max_freq_offset_hz > 0.0 {
            rng.gen_range(-self.max_freq_offset_hz..=self.max_freq_offset_hz)
        } else {
            0.0
        };
        ScenarioDraws {
            am_rate_hz: self.am_rate_hz.unwrap_or(am),
            freq_offset_hz: self.freq_offset_hz.unwrap_or(offset),
        }
    }

    fn nominal_hz(&self) -> f64 {
        match self.scenario {
            PliScenario::FreqDev => self.fundamental_hz + self.scenario_draws().freq_offset_hz,
            _ => self.fundamental_hz,
        }
    }

    fn onset_sample(&self, sample_rate_hz: f64) -> usize {
        (self.onset_s * sample_rate_hz).ceil() as usize
    }
}

/// Clipped Gaussian random walk with knots every `1/update_hz` seconds,
/// linearly interpolated to the sample grid.
fn fluctuation(seed: u64, id: u64, bound: f64, update_hz: f64, n: usize, fs: f64) -> Vec<f64> {
    if bound == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = stream(seed, id);
    let knots_needed = ((n as f64 / fs) * update_hz).ceil() as usize + 2;
    let step = bound / 4.0;
    let mut u: f64 = rng.gen_range(-bound..=bound);
    let mut knots = Vec::with_capacity(knots_needed);
    for _ in 0..knots_needed {
        knots.push(u);
        let z: f64 = StandardNormal.sample(&mut rng);
        u = (u + step * z).clamp(-bound, bound);
    }
    (0..n)
        .map(|k| {
            let pos = k as f64 / fs * update_hz;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            (knots[i] * (1.0 - frac) + knots[i + 1] * frac).clamp(-bound, bound)
        })
        .collect()
}

fn frequency_samples(config: &PliConfig, n: usize, fs: f64) -> Vec<f64> {
    let nominal = config.nominal_hz();
    fluctuation(config.seed, STREAM_PLI_FREQ, config.max_freq_fraction, config.fluctuation_update_hz, n, fs)
        .into_iter()
        .map(|u| nominal * (1.0 + u))
        .collect()
}

/// Instantaneous frequency of the PLI fundamental, excluding the fast
/// interharmonic modulation.
pub fn instantaneous_frequency_track(config: &PliConfig, duration_s: f64, sample_rate_hz: f64) -> Result<Signal> {
    config.validate()?;
    let n = sample_count(duration_s, sample_rate_hz)?;
    Signal::new(frequency_samples(config, n, sample_rate_hz), sample_rate_hz)
}

/// Power-line interference with unit nominal fundamental amplitude.
pub fn synth_pli(config: &PliConfig, duration_s: f64, sample_rate_hz: f64) -> Result<Signal> {
    config.validate()?;
    let n = sample_count(duration_s, sample_rate_hz)?;
    let fs = sample_rate_hz;
    if config.scenario == PliScenario::AmpVarying && config.onset_s >= duration_s {
        return Err(Error::config(format!(
            "onset {} s must precede the end of a {duration_s} s record",
            config.onset_s
        )));
    }
    let components = 1 + config.harmonic_power_fractions.len();
    let highest = components as f64 * config.nominal_hz() * (1.0 + config.max_freq_fraction)
        + config.interharmonic_fm_deviation_hz;
    if highest >= fs / 2.0 {
        return Err(Error::config(format!(
            "PLI component at {highest:.1} Hz exceeds Nyquist for {fs} Hz"
        )));
    }

    let freq = frequency_samples(config, n, fs);
    let amp = fluctuation(config.seed, STREAM_PLI_AMP, config.max_amp_fraction, config.fluctuation_update_hz, n, fs);
    let mut rng = stream(config.seed, STREAM_PLI_PHASE);
    let offsets: Vec<(f64, f64)> = (0..components)
        .map(|_| (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let weights: Vec<f64> = std::iter::once(1.0)
        .chain(config.harmonic_power_fractions.iter().map(|p| p.sqrt()))
        .collect();
    let beta = config.interharmonic_fm_deviation_hz / config.interharmonic_fm_rate_hz;
    let fm_w = 2.0 * PI * config.interharmonic_fm_rate_hz;
    let draws = config.scenario_draws();
    let onset = config.onset_sample(fs);

    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            phase += PI * (freq[k - 1] + freq[k]) / fs;
        }
        let t = k as f64 / fs;
        let mut v = 0.0;
        for (m, (&w, &(psi, chi))) in weights.iter().zip(&offsets).enumerate() {
            let order = (m + 1) as f64;
            v += w * (order * phase + psi + beta * (fm_w * t + chi).sin()).sin();
        }
        v *= 1.0 + amp[k];
        if config.scenario == PliScenario::AmpVarying {
            v *= if k < onset {
                0.0
            } else {
                1.0 + config.am_depth * (2.0 * PI * draws.am_rate_hz * t).sin()
            };
        }
        out.push(v);
    }
    Signal::new(out, fs)
}

/// Clean record plus its PLI-contaminated twin.
#[derive(Debug, Clone)]
pub struct RecordPair {
    pub clean: GeneratedRecord,
    pub noisy: GeneratedRecord,
    pub gain: f64,
    /// Sample range over which SNR_in was calibrated.
    pub calibration: Range<usize>,
}

/// Adds PLI to an existing clean record at `snr_in`. For the amp-varying
/// scenario the SNR is calibrated after the onset only.
pub fn contaminate(clean: &GeneratedRecord, pli: &PliConfig, snr_in: SnrDb) -> Result<RecordPair> {
    let (mix, calibration) = contaminate_signal(&clean.composite, pli, snr_in)?;
    let mut echo = clean.config_echo.clone();
    echo.extend(pli.to_pairs().into_iter().map(|(k, v)| (format!("pli.{k}"), v)));
    let snr_text = if snr_in.is_infinite() { "inf".to_string() } else { snr_in.db().to_string() };
    echo.push(("snr_in_db".into(), snr_text));
    echo.push(("noise_gain".into(), mix.gain.to_string()));
    let noisy = GeneratedRecord::assemble(
        clean.ventricular.clone(),
        clean.atrial.clone(),
        clean.noise.add(&mix.scaled_noise)?,
        clean.r_peaks.clone(),
        echo,
    )?;
    Ok(RecordPair { clean: clean.clone(), noisy, gain: mix.gain, calibration })
}

/// PLI mixed into any clean signal at `snr_in`, with the same calibration
/// rule as [`contaminate`]. Also returns the calibration range.
pub fn contaminate_signal(clean: &Signal, pli: &PliConfig, snr_in: SnrDb) -> Result<(Mixture, Range<usize>)> {
    let fs = clean.sample_rate_hz();
    let n = clean.len();
    let noise = synth_pli(pli, n as f64 / fs, fs)?;
    let calibration = match pli.scenario {
        PliScenario::AmpVarying => pli.onset_sample(fs).min(n)..n,
        _ => 0..n,
    };
    let mix = mix_at_snr_over(clean, &noise, snr_in, calibration.clone())?;
    Ok((mix, calibration))
}

/// Generates a clean AF record and contaminates it.
pub fn synth_noise_free_pair(af: &AfEcgConfig, pli: &PliConfig, snr_in: SnrDb) -> Result<RecordPair> {
    contaminate(&synth_af_ecg(af)?, pli, snr_in)
}
