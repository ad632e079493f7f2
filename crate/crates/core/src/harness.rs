//! Experiment plans, parallel execution, directory ingestion and results
//! tables.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{detect_r_peaks, evaluate, BetaScope, EvaluationOptions, EvaluationReport, ReportMeta};
use crate::io;
use crate::notch::{adaptive_notch, design_butterworth_notch, filter_signal, AdaptiveNotchConfig};
use crate::shrinkage::{self, DenoiserSpec, ShrinkageMethod};
use crate::signal::{resample, Signal, SnrDb};
use crate::synthesis::{contaminate_signal, synth_af_ecg, AfEcgConfig, PliConfig, PliScenario};

pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SNR_IN_DB: [f64; 6] = [15.0, 10.0, 5.0, 0.0, -5.0, -10.0];
pub const DEFAULT_RESAMPLE_HZ: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Wavelet(ShrinkageMethod),
    NotchFixed,
    NotchAdaptive,
    /// Adaptive notch without harmonic references.
    NotchAdaptiveFundamental,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Wavelet(ShrinkageMethod::ProposedHybrid),
        Method::Wavelet(ShrinkageMethod::HardMinimax),
        Method::Wavelet(ShrinkageMethod::SoftMinimax),
        Method::Wavelet(ShrinkageMethod::HyperbolicMinimax),
        Method::NotchFixed,
        Method::NotchAdaptive,
        Method::NotchAdaptiveFundamental,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wavelet(m) => m.name(),
            Method::NotchFixed => "notch-fixed",
            Method::NotchAdaptive => "notch-adaptive",
            Method::NotchAdaptiveFundamental => "notch-adaptive-f1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Parameters shared by every method of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    /// `method` is overridden per run.
    pub denoiser: DenoiserSpec,
    pub notch_center_hz: f64,
    pub notch_half_bandwidth_hz: f64,
    pub adaptive: AdaptiveNotchConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            denoiser: DenoiserSpec::default(),
            notch_center_hz: 50.0,
            notch_half_bandwidth_hz: 1.0,
            adaptive: AdaptiveNotchConfig::default(),
        }
    }
}

impl MethodSettings {
    /// Builds settings from `[denoiser]` and `[notch]` key-value pairs.
    pub fn from_pairs(denoiser: &[(String, String)], notch: &[(String, String)]) -> Result<Self> {
        let mut out = MethodSettings {
            denoiser: DenoiserSpec::from_pairs(denoiser.iter().map(|(k, v)| (k.as_str(), v.as_str())))?,
            ..MethodSettings::default()
        };
        for (key, value) in notch {
            match key.as_str() {
                "center_hz" => out.notch_center_hz = parse_one(key, value)?,
                "half_bandwidth_hz" => out.notch_half_bandwidth_hz = parse_one(key, value)?,
                "adaptive_step_size" => out.adaptive.step_size = parse_one(key, value)?,
                "adaptive_harmonics" => out.adaptive.harmonics = parse_one(key, value)?,
                "adaptive_reference_amplitude" => out.adaptive.reference_amplitude = parse_one(key, value)?,
                other => return Err(Error::parse("notch", format!("unknown key '{other}'"))),
            }
        }
        out.adaptive.fundamental_hz = out.notch_center_hz;
        Ok(out)
    }

    pub fn apply(&self, method: Method, noisy: &Signal) -> Result<Signal> {
        match method {
            Method::Wavelet(m) => {
                let spec = DenoiserSpec { method: m, ..self.denoiser.clone() };
                shrinkage::denoise(noisy, &spec)
            }
            Method::NotchFixed => {
                let notch =
                    design_butterworth_notch(self.notch_center_hz, self.notch_half_bandwidth_hz, noisy.sample_rate_hz())?;
                filter_signal(&notch, noisy)
            }
            Method::NotchAdaptive => adaptive_notch(noisy, self.adaptive),
            Method::NotchAdaptiveFundamental => adaptive_notch(noisy, self.adaptive.fundamental_only()),
        }
    }
}

/// AF ECG grid: every combination of the three sweep lists is one record.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthGrid {
    pub base: AfEcgConfig,
    pub heart_rates_bpm: Vec<f64>,
    pub rr_variability: Vec<f64>,
    pub fwave_amplitudes_uv: Vec<f64>,
}

impl Default for SynthGrid {
    fn default() -> Self {
        let base = AfEcgConfig::default();
        SynthGrid {
            heart_rates_bpm: vec![base.heart_rate_bpm],
            rr_variability: vec![base.rr_variability_fraction],
            fwave_amplitudes_uv: vec![base.fwave_amplitude_uv],
            base,
        }
    }
}

impl SynthGrid {
    fn points(&self) -> Vec<AfEcgConfig> {
        let mut out = Vec::new();
        for &hr in &self.heart_rates_bpm {
            for &v in &self.rr_variability {
                for &a in &self.fwave_amplitudes_uv {
                    out.push(AfEcgConfig {
                        heart_rate_bpm: hr,
                        rr_variability_fraction: v,
                        fwave_amplitude_uv: a,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordSource {
    Synthesized(SynthGrid),
    Directory {
        path: PathBuf,
        sample_rate_hz: f64,
        resample_to_hz: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub name: String,
    pub methods: Vec<Method>,
    pub scenarios: Vec<PliScenario>,
    /// `f64::INFINITY` means no PLI is added.
    pub snr_in_db: Vec<f64>,
    pub source: RecordSource,
    pub seed: u64,
    pub trials: usize,
    /// Base PLI parameters; scenario and seed are set per run.
    pub pli: PliConfig,
    pub settings: MethodSettings,
    pub evaluation: EvaluationOptions,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: "default".into(),
            methods: Method::ALL.to_vec(),
            scenarios: PliScenario::ALL.to_vec(),
            snr_in_db: DEFAULT_SNR_IN_DB.to_vec(),
            source: RecordSource::Synthesized(SynthGrid::default()),
            seed: 0,
            trials: DEFAULT_TRIALS,
            pli: PliConfig::default(),
            settings: MethodSettings::default(),
            evaluation: EvaluationOptions::default(),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::parse("plan", format!("{key} = {s}: {e}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::parse("plan", format!("{key} = {value}: {e}")))
}

fn parse_snr(key: &str, value: &str) -> Result<Vec<f64>> {
    let list: Vec<f64> = parse_list(key, value)?;
    for &db in &list {
        if !db.is_infinite() {
            SnrDb::new(db)?;
        } else if db < 0.0 {
            return Err(Error::config("snr_in_db = -inf is not a valid SNR"));
        }
    }
    Ok(list)
}

fn format_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("plan has no methods"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::config("plan has no PLI scenarios"));
        }
        if self.snr_in_db.is_empty() {
            return Err(Error::config("plan has no SNR_in values"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if !(self.evaluation.beta_fraction > 0.0 && self.evaluation.beta_fraction.is_finite()) {
            return Err(Error::config("beta_fraction must be > 0"));
        }
        self.settings.denoiser.validate()?;
        self.pli.validate()?;
        match &self.source {
            RecordSource::Synthesized(grid) => {
                if grid.heart_rates_bpm.is_empty() || grid.rr_variability.is_empty() || grid.fwave_amplitudes_uv.is_empty()
                {
                    return Err(Error::config("synthesized source has an empty sweep list"));
                }
                grid.points().iter().try_for_each(AfEcgConfig::validate)
            }
            RecordSource::Directory { sample_rate_hz, resample_to_hz, .. } => {
                for r in [sample_rate_hz, resample_to_hz] {
                    if !(*r > 0.0 && r.is_finite()) {
                        return Err(Error::InvalidRate(*r));
                    }
                }
                Ok(())
            }
        }
    }

    /// Parses a plan from sectioned `key = value` text. Relative directory
    /// paths are resolved against `base_dir`.
    pub fn from_config_str(text: &str, base_dir: &Path) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| Error::parse("plan", e.to_string()))?;
        let mut plan = ExperimentPlan::default();
        let mut source_kind = "synthesized".to_string();
        let mut dir_path: Option<PathBuf> = None;
        let mut dir_rate: Option<f64> = None;
        let mut resample_to = DEFAULT_RESAMPLE_HZ;
        let mut grid = SynthGrid::default();
        let mut ecg_pairs: Vec<(String, String)> = Vec::new();
        let mut pli_pairs: Vec<(String, String)> = Vec::new();
        let mut denoiser_pairs: Vec<(String, String)> = Vec::new();
        let mut notch_pairs: Vec<(String, String)> = Vec::new();

        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                match (section.unwrap_or(""), key) {
                    ("plan", "name") => plan.name = value.to_string(),
                    ("plan", "methods") => plan.methods = parse_list(key, value)?,
                    ("plan", "scenarios") => plan.scenarios = parse_list(key, value)?,
                    ("plan", "snr_in_db") => plan.snr_in_db = parse_snr(key, value)?,
                    ("plan", "seed") => plan.seed = parse_one(key, value)?,
                    ("plan", "trials") => plan.trials = parse_one(key, value)?,
                    ("source", "kind") => source_kind = value.to_string(),
                    ("source", "path") => dir_path = Some(base_dir.join(value)),
                    ("source", "sample_rate_hz") => dir_rate = Some(parse_one(key, value)?),
                    ("source", "resample_to_hz") => resample_to = parse_one(key, value)?,
                    ("source", "heart_rate_bpm") => grid.heart_rates_bpm = parse_list(key, value)?,
                    ("source", "rr_variability_fraction") => grid.rr_variability = parse_list(key, value)?,
                    ("source", "fwave_amplitude_uv") => grid.fwave_amplitudes_uv = parse_list(key, value)?,
                    ("source", "seed") => {
                        return Err(Error::config("record seeds derive from [plan] seed; remove [source] seed"))
                    }
                    ("source", _) => ecg_pairs.push((key.to_string(), value.to_string())),
                    ("pli", "scenario" | "seed") => {
                        return Err(Error::config(format!("[pli] {key} is set per run; use [plan] instead")))
                    }
                    ("pli", _) => pli_pairs.push((key.to_string(), value.to_string())),
                    ("denoiser", "method") => return Err(Error::config("[denoiser] method is set by [plan] methods")),
                    ("denoiser", _) => denoiser_pairs.push((key.to_string(), value.to_string())),
                    ("notch", _) => notch_pairs.push((key.to_string(), value.to_string())),
                    ("evaluation", "beta_fraction") => plan.evaluation.beta_fraction = parse_one(key, value)?,
                    ("evaluation", "beta_scope") => {
                        plan.evaluation.beta_scope = match value {
                            "whole-record" => BetaScope::WholeRecord,
                            "scored-samples" => BetaScope::ScoredSamples,
                            other => return Err(Error::parse("plan", format!("beta_scope = {other}"))),
                        }
                    }
                    ("evaluation", "drop_edge_beats") => plan.evaluation.drop_edge_beats = parse_one(key, value)?,
                    (s, k) => return Err(Error::parse("plan", format!("unknown key '{k}' in section [{s}]"))),
                }
            }
        }

        grid.base.apply_pairs(ecg_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        plan.pli.apply_pairs(pli_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        plan.settings = MethodSettings::from_pairs(&denoiser_pairs, &notch_pairs)?;
        plan.source = match source_kind.as_str() {
            "synthesized" => RecordSource::Synthesized(grid),
            "directory" => RecordSource::Directory {
                path: dir_path.ok_or_else(|| Error::config("directory source needs a path"))?,
                sample_rate_hz: dir_rate.ok_or_else(|| Error::config("directory source needs sample_rate_hz"))?,
                resample_to_hz: resample_to,
            },
            other => return Err(Error::config(format!("unknown source kind '{other}'"))),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_config_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Key facts of the plan, written as comment headers of exported tables.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("plan".to_string(), self.name.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("trials".to_string(), self.trials.to_string()),
            ("methods".to_string(), format_list(&self.methods)),
            ("scenarios".to_string(), format_list(&self.scenarios)),
            ("snr_in_db".to_string(), format_list(&self.snr_in_db)),
        ];
        match &self.source {
            RecordSource::Synthesized(g) => {
                out.push(("source".into(), "synthesized".into()));
                out.push(("heart_rate_bpm".into(), format_list(&g.heart_rates_bpm)));
                out.push(("rr_variability_fraction".into(), format_list(&g.rr_variability)));
                out.push(("fwave_amplitude_uv".into(), format_list(&g.fwave_amplitudes_uv)));
                out.push(("duration_s".into(), g.base.duration_s.to_string()));
            }
            RecordSource::Directory { path, sample_rate_hz, resample_to_hz } => {
                out.push(("source".into(), format!("directory {}", path.display())));
                out.push(("source_rate_hz".into(), sample_rate_hz.to_string()));
                out.push(("resample_to_hz".into(), resample_to_hz.to_string()));
            }
        }
        out.extend(self.settings.denoiser.to_pairs().into_iter().skip(1).map(|(k, v)| (format!("denoiser.{k}"), v)));
        out
    }
}

/// Key-value pairs of one section of a config file, in file order. Keys
/// outside any section belong to the section named "".
pub fn config_sections(text: &str) -> Result<Vec<(String, Vec<(String, String)>)>> {
    let ini = ini::Ini::load_from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
    Ok(ini
        .iter()
        .map(|(name, props)| {
            let pairs = props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
            (name.unwrap_or("").to_string(), pairs)
        })
        .collect())
}

/// A loaded real record.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedRecord {
    pub name: String,
    pub signal: Signal,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub records: Vec<IngestedRecord>,
    pub skipped: Vec<(PathBuf, String)>,
}

fn ingest_file(path: &Path, sample_rate_hz: f64, resample_to_hz: f64) -> Result<Signal> {
    let mut signal = io::read_signal_csv(path, sample_rate_hz, None)?;
    let ann = io::annotation_path(path);
    if ann.is_file() {
        signal = signal.with_annotations(io::read_annotations(&ann)?)?;
    }
    resample(&signal, resample_to_hz)
}

/// Loads every `*.csv` in `dir` (sorted by name), with `.ann` sidecars, and
/// resamples to `resample_to_hz`. Malformed files are logged and skipped.
pub fn ingest_directory(dir: &Path, sample_rate_hz: f64, resample_to_hz: f64) -> Result<IngestReport> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    let mut report = IngestReport::default();
    for path in paths {
        match ingest_file(&path, sample_rate_hz, resample_to_hz) {
            Ok(signal) => {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record").to_string();
                report.records.push(IngestedRecord { name, signal });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                report.skipped.push((path, e.to_string()));
            }
        }
    }
    if report.records.is_empty() {
        log::warn!("no usable records in {}", dir.display());
    }
    Ok(report)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one stream of one trial. Depends only on the master seed and the
/// given coordinates, never on scheduling.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

const SEED_ECG: u64 = 1;
const SEED_PLI: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Trial,
    Mean,
    Std,
}

/// One line of a results table. Aggregate rows leave the trial columns
/// empty and carry the number of successful trials in `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: RowKind,
    pub record: String,
    pub heart_rate_bpm: Option<f64>,
    pub rr_variability: Option<f64>,
    pub fwave_amplitude_uv: Option<f64>,
    pub method: String,
    pub scenario: String,
    pub snr_in_db: f64,
    pub trial: Option<usize>,
    pub ecg_seed: Option<u64>,
    pub pli_seed: Option<u64>,
    pub n: Option<usize>,
    pub snr_out_db: f64,
    pub asci_global_pct: f64,
    pub asci_tq_pct: f64,
    pub asci_qrst_pct: f64,
    pub beat_count: f64,
    pub error: String,
}

pub const METRICS: [&str; 5] = ["snr_out_db", "asci_global_pct", "asci_tq_pct", "asci_qrst_pct", "beat_count"];

impl TableRow {
    pub fn metrics(&self) -> [f64; 5] {
        [self.snr_out_db, self.asci_global_pct, self.asci_tq_pct, self.asci_qrst_pct, self.beat_count]
    }

    fn set_metrics(&mut self, m: [f64; 5]) {
        [self.snr_out_db, self.asci_global_pct, self.asci_tq_pct, self.asci_qrst_pct, self.beat_count] = m;
    }

    fn same_cell(&self, other: &TableRow) -> bool {
        self.record == other.record
            && self.method == other.method
            && self.scenario == other.scenario
            && self.snr_in_db.to_bits() == other.snr_in_db.to_bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    Csv,
    Json,
    /// CSV with one metric per row.
    Long,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "long" => Ok(ExportFormat::Long),
            other => Err(Error::parse("format", format!("'{other}' is not csv, json or long"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub echo: Vec<(String, String)>,
    pub rows: Vec<TableRow>,
}

#[derive(Serialize)]
struct LongRow<'a> {
    kind: RowKind,
    record: &'a str,
    heart_rate_bpm: Option<f64>,
    rr_variability: Option<f64>,
    fwave_amplitude_uv: Option<f64>,
    method: &'a str,
    scenario: &'a str,
    snr_in_db: f64,
    trial: Option<usize>,
    metric: &'a str,
    value: f64,
}

impl ResultsTable {
    pub fn trials(&self) -> impl Iterator<Item = &TableRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Trial)
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &TableRow> {
        self.rows.iter().filter(|r| r.kind != RowKind::Trial)
    }

    /// Mean row of a cell, if present. `record` may be `None` when the plan
    /// has a single record.
    pub fn mean(&self, record: Option<&str>, method: &str, scenario: &str, snr_in_db: f64) -> Option<&TableRow> {
        self.rows.iter().find(|r| {
            r.kind == RowKind::Mean
                && record.is_none_or(|x| r.record == x)
                && r.method == method
                && r.scenario == scenario
                && r.snr_in_db.to_bits() == snr_in_db.to_bits()
        })
    }

    /// Mean and sample standard deviation per cell over the successful
    /// trials, in first-appearance order of the cells.
    pub fn compute_aggregates(trials: &[TableRow]) -> Vec<TableRow> {
        let mut cells: Vec<Vec<&TableRow>> = Vec::new();
        for row in trials.iter().filter(|r| r.kind == RowKind::Trial) {
            match cells.iter_mut().find(|c| c[0].same_cell(row)) {
                Some(c) => c.push(row),
                None => cells.push(vec![row]),
            }
        }
        let mut out = Vec::with_capacity(cells.len() * 2);
        for cell in cells {
            let ok: Vec<[f64; 5]> = cell.iter().filter(|r| r.error.is_empty()).map(|r| r.metrics()).collect();
            let n = ok.len();
            let mut mean = [f64::NAN; 5];
            let mut std = [f64::NAN; 5];
            for i in 0..5 {
                if n > 0 {
                    mean[i] = ok.iter().map(|m| m[i]).sum::<f64>() / n as f64;
                    std[i] = if n > 1 {
                        (ok.iter().map(|m| (m[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                }
            }
            let failed = cell.len() - n;
            for (kind, values) in [(RowKind::Mean, mean), (RowKind::Std, std)] {
                let mut row = TableRow {
                    kind,
                    trial: None,
                    ecg_seed: None,
                    pli_seed: None,
                    n: Some(n),
                    error: if failed > 0 { format!("{failed} failed trial(s)") } else { String::new() },
                    ..cell[0].clone()
                };
                row.set_metrics(values);
                out.push(row);
            }
        }
        out
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        for (k, v) in &self.echo {
            writeln!(buf, "# {k} = {v}")?;
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(buf);
        w.write_record(table_header())
            .map_err(|e| Error::parse("results", e.to_string()))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::parse("results", e.to_string()))?;
        }
        let buf = w.into_inner().map_err(|e| Error::parse("results", e.to_string()))?;
        String::from_utf8(buf).map_err(|e| Error::parse("results", e.to_string()))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut echo = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix('#') else { break };
            let rest = rest.trim_end_matches(['\n', '\r']).trim_start();
            let (k, v) = rest.split_once(" = ").unwrap_or((rest, ""));
            echo.push((k.to_string(), v.to_string()));
            body_start += line.len();
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start..]);
        let header = reader.headers().map_err(|e| Error::parse("results", e.to_string()))?;
        if header.iter().ne(table_header().iter().copied()) {
            return Err(Error::parse("results", "unexpected column header"));
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<TableRow>, _>>()
            .map_err(|e| Error::parse("results", e.to_string()))?;
        Ok(ResultsTable { echo, rows })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let echo: serde_json::Map<String, serde_json::Value> =
            self.echo.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({ "echo": echo, "rows": self.rows }))?)
    }

    pub fn to_long_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            for (metric, value) in METRICS.iter().zip(row.metrics()) {
                w.serialize(LongRow {
                    kind: row.kind,
                    record: &row.record,
                    heart_rate_bpm: row.heart_rate_bpm,
                    rr_variability: row.rr_variability,
                    fwave_amplitude_uv: row.fwave_amplitude_uv,
                    method: &row.method,
                    scenario: &row.scenario,
                    snr_in_db: row.snr_in_db,
                    trial: row.trial,
                    metric,
                    value,
                })
                .map_err(|e| Error::parse("results", e.to_string()))?;
            }
        }
        if self.rows.is_empty() {
            w.write_record([
                "kind",
                "record",
                "heart_rate_bpm",
                "rr_variability",
                "fwave_amplitude_uv",
                "method",
                "scenario",
                "snr_in_db",
                "trial",
                "metric",
                "value",
            ])
            .map_err(|e| Error::parse("results", e.to_string()))?;
        }
        let buf = w.into_inner().map_err(|e| Error::parse("results", e.to_string()))?;
        String::from_utf8(buf).map_err(|e| Error::parse("results", e.to_string()))
    }
}

fn table_header() -> [&'static str; 18] {
    [
        "kind",
        "record",
        "heart_rate_bpm",
        "rr_variability",
        "fwave_amplitude_uv",
        "method",
        "scenario",
        "snr_in_db",
        "trial",
        "ecg_seed",
        "pli_seed",
        "n",
        "snr_out_db",
        "asci_global_pct",
        "asci_tq_pct",
        "asci_qrst_pct",
        "beat_count",
        "error",
    ]
}

pub fn export_results(table: &ResultsTable, format: ExportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => table.to_csv_string()?,
        ExportFormat::Json => table.to_json_string()?,
        ExportFormat::Long => table.to_long_csv_string()?,
    };
    fs::write(path, text)?;
    Ok(())
}

struct PlanRecord {
    name: String,
    grid: Option<AfEcgConfig>,
    ingested: Option<Signal>,
}

fn resolve_records(plan: &ExperimentPlan) -> Result<Vec<PlanRecord>> {
    match &plan.source {
        RecordSource::Synthesized(grid) => Ok(grid
            .points()
            .into_iter()
            .map(|cfg| PlanRecord {
                name: format!(
                    "hr{}-rr{}-fw{}",
                    cfg.heart_rate_bpm, cfg.rr_variability_fraction, cfg.fwave_amplitude_uv
                ),
                grid: Some(cfg),
                ingested: None,
            })
            .collect()),
        RecordSource::Directory { path, sample_rate_hz, resample_to_hz } => {
            if !path.is_dir() {
                return Err(Error::config(format!("record directory {} not found", path.display())));
            }
            let report = ingest_directory(path, *sample_rate_hz, *resample_to_hz)?;
            if report.records.is_empty() {
                return Err(Error::config(format!("no usable records in {}", path.display())));
            }
            Ok(report
                .records
                .into_iter()
                .map(|r| PlanRecord { name: r.name, grid: None, ingested: Some(r.signal) })
                .collect())
        }
    }
}

fn scenario_index(s: PliScenario) -> u64 {
    PliScenario::ALL.iter().position(|&x| x == s).unwrap_or(0) as u64
}

fn run_cell(
    plan: &ExperimentPlan,
    method: Method,
    clean: &Signal,
    peaks: &[usize],
    pli: &PliConfig,
    snr: f64,
    meta: &ReportMeta,
) -> Result<EvaluationReport> {
    let snr_db = if snr.is_infinite() { SnrDb::infinite() } else { SnrDb::new(snr)? };
    let (mix, _) = contaminate_signal(clean, pli, snr_db)?;
    let denoised = plan.settings.apply(method, &mix.noisy)?;
    evaluate(clean, &denoised, Some(peaks), meta, &plan.evaluation)
}

fn run_unit(plan: &ExperimentPlan, record: &PlanRecord, trial: usize) -> Vec<TableRow> {
    let ecg_seed = derive_seed(plan.seed, &[SEED_ECG, trial as u64]);
    let template = |method: Method, scenario: PliScenario, snr: f64| TableRow {
        kind: RowKind::Trial,
        record: record.name.clone(),
        heart_rate_bpm: record.grid.as_ref().map(|g| g.heart_rate_bpm),
        rr_variability: record.grid.as_ref().map(|g| g.rr_variability_fraction),
        fwave_amplitude_uv: record.grid.as_ref().map(|g| g.fwave_amplitude_uv),
        method: method.name().to_string(),
        scenario: scenario.name().to_string(),
        snr_in_db: snr,
        trial: Some(trial),
        ecg_seed: record.grid.as_ref().map(|_| ecg_seed),
        pli_seed: Some(derive_seed(plan.seed, &[SEED_PLI, scenario_index(scenario), trial as u64])),
        n: None,
        snr_out_db: f64::NAN,
        asci_global_pct: f64::NAN,
        asci_tq_pct: f64::NAN,
        asci_qrst_pct: f64::NAN,
        beat_count: f64::NAN,
        error: String::new(),
    };

    let clean = match (&record.grid, &record.ingested) {
        (Some(cfg), _) => synth_af_ecg(&AfEcgConfig { seed: ecg_seed, ..cfg.clone() }).map(|r| r.composite),
        (None, Some(sig)) => Ok(sig.clone()),
        (None, None) => Err(Error::config("record without data")),
    };
    let clean_and_peaks = clean.and_then(|c| {
        let peaks = if c.annotations().is_empty() { detect_r_peaks(&c)? } else { c.annotations().to_vec() };
        Ok((c, peaks))
    });

    let mut rows = Vec::new();
    for &scenario in &plan.scenarios {
        for &snr in &plan.snr_in_db {
            for &method in &plan.methods {
                let mut row = template(method, scenario, snr);
                let outcome = match &clean_and_peaks {
                    Err(e) => Err(e.to_string()),
                    Ok((clean, peaks)) => {
                        let pli = PliConfig { scenario, seed: row.pli_seed.unwrap_or(0), ..plan.pli.clone() };
                        let meta =
                            ReportMeta { method: row.method.clone(), scenario: row.scenario.clone(), snr_in_db: snr };
                        run_cell(plan, method, clean, peaks, &pli, snr, &meta).map_err(|e| e.to_string())
                    }
                };
                match outcome {
                    Ok(r) => row.set_metrics([
                        r.snr_out_db,
                        r.asci_global_pct,
                        r.asci_tq_pct,
                        r.asci_qrst_pct,
                        r.beat_count as f64,
                    ]),
                    Err(e) => row.error = e,
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Runs every (record, trial) unit on a pool of `jobs` threads and returns
/// trial rows ordered by (record, scenario, snr, method, trial) followed by
/// the per-cell mean and standard deviation rows. The output does not
/// depend on `jobs`.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize) -> Result<ResultsTable> {
    plan.validate()?;
    let records = resolve_records(plan)?;
    let units: Vec<(usize, usize)> =
        (0..records.len()).flat_map(|r| (0..plan.trials).map(move |t| (r, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let per_unit: Vec<Vec<TableRow>> =
        pool.install(|| units.par_iter().map(|&(r, t)| run_unit(plan, &records[r], t)).collect());

    let cells_per_record = plan.scenarios.len() * plan.snr_in_db.len() * plan.methods.len();
    let mut keyed: Vec<((usize, usize, usize), TableRow)> = Vec::new();
    for (&(r, t), rows) in units.iter().zip(per_unit) {
        for (i, row) in rows.into_iter().enumerate() {
            keyed.push(((r * cells_per_record + i, t, 0), row));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    let mut rows: Vec<TableRow> = keyed.into_iter().map(|(_, r)| r).collect();
    let aggregates = ResultsTable::compute_aggregates(&rows);
    rows.extend(aggregates);
    Ok(ResultsTable { echo: plan.echo(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan(trials: usize) -> ExperimentPlan {
        let mut grid = SynthGrid::default();
        grid.base.duration_s = 12.0;
        ExperimentPlan {
            name: "tiny".into(),
            methods: vec![Method::Wavelet(ShrinkageMethod::ProposedHybrid)],
            scenarios: vec![PliScenario::Common],
            snr_in_db: vec![0.0],
            source: RecordSource::Synthesized(grid),
            seed: 3,
            trials,
            ..ExperimentPlan::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("wiener".parse::<Method>().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_coordinate() {
        let a = derive_seed(7, &[1, 0]);
        assert_eq!(a, derive_seed(7, &[1, 0]));
        assert_ne!(a, derive_seed(7, &[1, 1]));
        assert_ne!(a, derive_seed(7, &[2, 0]));
        assert_ne!(a, derive_seed(8, &[1, 0]));
    }

    #[test]
    fn two_trials_give_two_rows_and_one_aggregate() {
        let t = run_plan(&tiny_plan(2), 1).unwrap();
        assert_eq!(t.trials().count(), 2);
        let means: Vec<_> = t.rows.iter().filter(|r| r.kind == RowKind::Mean).collect();
        assert_eq!(means.len(), 1);
        assert_eq!(means[0].n, Some(2));
        let trials: Vec<_> = t.trials().collect();
        let expected = (trials[0].asci_global_pct + trials[1].asci_global_pct) / 2.0;
        assert!((means[0].asci_global_pct - expected).abs() < 1e-12);
        assert!(trials.iter().all(|r| r.error.is_empty()));
    }

    #[test]
    fn parallel_matches_serial() {
        let plan = ExperimentPlan { trials: 3, snr_in_db: vec![5.0, -5.0], ..tiny_plan(3) };
        let a = run_plan(&plan, 1).unwrap().to_csv_string().unwrap();
        let b = run_plan(&plan, 4).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded_per_row() {
        let mut plan = tiny_plan(1);
        // a 12 s record cannot hold a PLI onset at 20 s
        plan.scenarios = vec![PliScenario::Common, PliScenario::AmpVarying];
        plan.pli.onset_s = 20.0;
        let t = run_plan(&plan, 1).unwrap();
        let rows: Vec<_> = t.trials().collect();
        assert!(rows[0].error.is_empty());
        assert!(!rows[1].error.is_empty());
        assert!(rows[1].asci_global_pct.is_nan());
        let mean = t.mean(None, "proposed-hybrid", "amp-varying", 0.0).unwrap();
        assert_eq!(mean.n, Some(0));
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut plan = tiny_plan(2);
        plan.snr_in_db = vec![f64::INFINITY, -2.5];
        let t = run_plan(&plan, 2).unwrap();
        let csv = t.to_csv_string().unwrap();
        let back = ResultsTable::from_csv_str(&csv).unwrap();
        assert_eq!(back.to_csv_string().unwrap(), csv);
        assert_eq!(back.rows.len(), t.rows.len());
        let json: serde_json::Value = serde_json::from_str(&t.to_json_string().unwrap()).unwrap();
        assert_eq!(json["rows"].as_array().unwrap().len(), t.rows.len());
    }

    #[test]
    fn empty_table_exports_header_only() {
        let csv = ResultsTable::default().to_csv_string().unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("kind,record,"));
        let long = ResultsTable::default().to_long_csv_string().unwrap();
        assert_eq!(long.lines().count(), 1);
    }

    #[test]
    fn aggregates_are_recomputable() {
        let t = run_plan(&tiny_plan(3), 2).unwrap();
        let trials: Vec<TableRow> = t.trials().cloned().collect();
        let again = ResultsTable::compute_aggregates(&trials);
        let stored: Vec<TableRow> = t.aggregates().cloned().collect();
        assert_eq!(again, stored);
    }

    #[test]
    fn config_parses_sections() {
        let text = "\
[plan]
name = sweep
methods = proposed-hybrid, notch-fixed
scenarios = common
snr_in_db = 0, inf
trials = 4
seed = 9

[source]
heart_rate_bpm = 60, 120
duration_s = 20

[pli]
onset_s = 5

[denoiser]
threshold_gain = 1.2

[notch]
adaptive_reference_amplitude = 0.5

[evaluation]
beta_scope = scored-samples
";
        let plan = ExperimentPlan::from_config_str(text, Path::new(".")).unwrap();
        assert_eq!(plan.name, "sweep");
        assert_eq!(plan.methods, vec![Method::Wavelet(ShrinkageMethod::ProposedHybrid), Method::NotchFixed]);
        assert_eq!(plan.snr_in_db, vec![0.0, f64::INFINITY]);
        assert_eq!((plan.trials, plan.seed), (4, 9));
        assert_eq!(plan.pli.onset_s, 5.0);
        assert_eq!(plan.settings.denoiser.threshold_gain, 1.2);
        assert_eq!(plan.settings.adaptive.reference_amplitude, 0.5);
        assert_eq!(plan.evaluation.beta_scope, BetaScope::ScoredSamples);
        let RecordSource::Synthesized(g) = &plan.source else { panic!() };
        assert_eq!(g.heart_rates_bpm, vec![60.0, 120.0]);
        assert_eq!(g.base.duration_s, 20.0);
    }

    #[test]
    fn config_rejects_bad_input() {
        let base = Path::new(".");
        assert!(ExperimentPlan::from_config_str("[plan]\ntrials = 0\n", base).is_err());
        assert!(ExperimentPlan::from_config_str("[plan]\nmethods = \n", base).is_err());
        assert!(ExperimentPlan::from_config_str("[plan]\nbogus = 1\n", base).is_err());
        assert!(ExperimentPlan::from_config_str("[pli]\nseed = 1\n", base).is_err());
        assert!(ExperimentPlan::from_config_str("[plan]\nsnr_in_db = 90\n", base).is_err());
        assert!(ExperimentPlan::from_config_str("[source]\nkind = directory\n", base).is_err());
    }

    #[test]
    fn missing_directory_fails_before_work() {
        let mut plan = tiny_plan(1);
        plan.source = RecordSource::Directory {
            path: PathBuf::from("/nonexistent/records"),
            sample_rate_hz: 360.0,
            resample_to_hz: 1000.0,
        };
        assert!(run_plan(&plan, 1).is_err());
    }
}
