use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swtpli::evaluation::{evaluate, EvaluationOptions, ReportMeta};
use swtpli::harness::{config_sections, export_results, run_plan, ExperimentPlan, ExportFormat, Method, MethodSettings};
use swtpli::io;
use swtpli::synthesis::{synth_af_ecg, synth_pli, AfEcgConfig, PliConfig, PliScenario};

#[derive(Parser)]
#[command(name = "swtpli", version, about = "Power-line interference removal for AF ECG: synthesis, denoising, evaluation and benchmarks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file (sectioned key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `bench`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an AF ECG record (CSV with components, plus .ann R-peaks).
    SynthEcg {
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        fs: Option<f64>,
        #[arg(long = "heart-rate")]
        heart_rate: Option<f64>,
        #[arg(long = "rr-variability")]
        rr_variability: Option<f64>,
        #[arg(long = "fwave-amplitude")]
        fwave_amplitude: Option<f64>,
        #[arg(long, default_value = "ecg")]
        name: String,
    },
    /// Synthesize a unit-scale PLI track.
    SynthPli {
        #[arg(long, default_value = "common")]
        scenario: PliScenario,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 1000.0)]
        fs: f64,
    },
    /// Denoise a CSV signal; writes <input>.denoised.csv.
    Denoise {
        #[arg(long, default_value = "proposed-hybrid")]
        method: Method,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fs: f64,
        /// Column to read from a multi-column CSV.
        #[arg(long)]
        column: Option<String>,
    },
    /// Score a denoised CSV against a clean CSV.
    Evaluate {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        denoised: PathBuf,
        #[arg(long)]
        fs: f64,
        /// Column of the clean CSV to score against.
        #[arg(long = "clean-column")]
        clean_column: Option<String>,
        /// R-peak sidecar; defaults to the clean file's .ann when present.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value = "")]
        method: String,
        #[arg(long, default_value = "")]
        scenario: String,
        #[arg(long = "snr-in", default_value_t = f64::NAN)]
        snr_in: f64,
    },
    /// Run an experiment plan (given with --config) and export results.
    Bench {
        /// Also write one-metric-per-row CSV.
        #[arg(long)]
        long: bool,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<swtpli::Error> for Failure {
    fn from(e: swtpli::Error) -> Self {
        match e {
            swtpli::Error::InvalidConfig(_) | swtpli::Error::UnknownMethod(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(global: &Global) -> Result<PathBuf, Failure> {
    let dir = global.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn section(global: &Global, name: &str) -> Result<Vec<(String, String)>, Failure> {
    let Some(path) = &global.config else { return Ok(Vec::new()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(config_sections(&text)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .into_iter()
        .filter(|(s, _)| s == name)
        .flat_map(|(_, pairs)| pairs)
        .collect())
}

fn as_refs(pairs: &[(String, String)]) -> impl Iterator<Item = (&str, &str)> {
    pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    if g.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::SynthEcg { duration, fs, heart_rate, rr_variability, fwave_amplitude, name } => {
            let mut cfg = AfEcgConfig::default();
            cfg.apply_pairs(as_refs(&section(g, "ecg")?))?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            cfg.duration_s = duration.unwrap_or(cfg.duration_s);
            cfg.sample_rate_hz = fs.unwrap_or(cfg.sample_rate_hz);
            cfg.heart_rate_bpm = heart_rate.unwrap_or(cfg.heart_rate_bpm);
            cfg.rr_variability_fraction = rr_variability.unwrap_or(cfg.rr_variability_fraction);
            cfg.fwave_amplitude_uv = fwave_amplitude.unwrap_or(cfg.fwave_amplitude_uv);
            let record = synth_af_ecg(&cfg)?;
            let path = out_dir(g)?.join(format!("{name}.csv"));
            io::write_record_csv(&path, &record)?;
            io::write_annotations(&io::annotation_path(&path), &record.r_peaks)?;
            println!("{}", path.display());
        }
        Command::SynthPli { scenario, duration, fs } => {
            let mut cfg = PliConfig::new(scenario, 0);
            cfg.apply_pairs(as_refs(&section(g, "pli")?))?;
            cfg.scenario = scenario;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let pli = synth_pli(&cfg, duration, fs)?;
            let path = out_dir(g)?.join(format!("pli-{scenario}.csv"));
            io::write_signal_csv(&path, &pli, "pli", &cfg.to_pairs())?;
            println!("{}", path.display());
        }
        Command::Denoise { method, input, fs, column } => {
            let settings = MethodSettings::from_pairs(&section(g, "denoiser")?, &section(g, "notch")?)?;
            let signal = io::read_signal_csv(&input, fs, column.as_deref())?;
            let denoised = settings.apply(method, &signal)?;
            let mut path = io::sibling_path(&input, "denoised");
            if let Some(dir) = &g.out {
                fs::create_dir_all(dir)?;
                path = dir.join(path.file_name().unwrap_or_default());
            }
            let echo = vec![("method".to_string(), method.to_string()), ("input".to_string(), input.display().to_string())];
            io::write_signal_csv(&path, &denoised, "denoised", &echo)?;
            println!("{}", path.display());
        }
        Command::Evaluate { clean, denoised, fs, clean_column, annotations, method, scenario, snr_in } => {
            let clean_sig = io::read_signal_csv(&clean, fs, clean_column.as_deref())?;
            let denoised_sig = io::read_signal_csv(&denoised, fs, None)?;
            let ann_path = annotations.or_else(|| Some(io::annotation_path(&clean)).filter(|p| p.is_file()));
            let peaks = ann_path.as_deref().map(io::read_annotations).transpose()?;
            let meta = ReportMeta { method, scenario, snr_in_db: snr_in };
            let report = evaluate(&clean_sig, &denoised_sig, peaks.as_deref(), &meta, &EvaluationOptions::default())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Data(e.to_string()))?;
            println!("{json}");
            if let Some(dir) = &g.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("evaluation.json"), json + "\n")?;
            }
        }
        Command::Bench { long } => {
            let Some(config) = &g.config else {
                return Err(Failure::Usage("bench needs --config <plan file>".into()));
            };
            let mut plan = ExperimentPlan::load(config).map_err(|e| match e {
                swtpli::Error::Io(_) => Failure::Data(format!("{}: {e}", config.display())),
                other => Failure::Usage(format!("{}: {other}", config.display())),
            })?;
            plan.seed = g.seed.unwrap_or(plan.seed);
            let table = run_plan(&plan, g.jobs)?;
            let dir = out_dir(g)?;
            let stem = dir.join(&plan.name);
            let written = write_tables(&table, &stem, long)?;
            let failed = table.trials().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                log::warn!("{failed} trial row(s) failed; see the error column");
            }
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn write_tables(table: &swtpli::harness::ResultsTable, stem: &Path, long: bool) -> Result<Vec<PathBuf>, Failure> {
    let mut formats = vec![(ExportFormat::Csv, "results.csv"), (ExportFormat::Json, "results.json")];
    if long {
        formats.push((ExportFormat::Long, "results-long.csv"));
    }
    let mut out = Vec::new();
    for (format, suffix) in formats {
        let path = PathBuf::from(format!("{}.{suffix}", stem.display()));
        export_results(table, format, &path)?;
        out.push(path);
    }
    Ok(out)
}
