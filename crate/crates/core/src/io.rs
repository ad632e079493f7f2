//! CSV and annotation-file reading and writing.
//!
//! Signal files hold one or two columns (optional time, amplitude), an
//! optional header row, comma or semicolon separators and `#` comment lines.
//! Annotation files hold one sample index per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::synthesis::GeneratedRecord;

fn context(path: &Path) -> String {
    path.display().to_string()
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if first.contains(';') {
        b';'
    } else {
        b','
    }
}

/// Column used when a file has more than two columns and none is named.
pub const DEFAULT_COLUMN: &str = "composite";

/// Parses signal samples from CSV text.
///
/// With `column` unset, one- and two-column files use their last column and
/// wider files with a header use [`DEFAULT_COLUMN`].
pub fn parse_signal_csv(text: &str, sample_rate_hz: f64, column: Option<&str>, ctx: &str) -> Result<Signal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(detect_delimiter(text))
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut samples = Vec::new();
    let mut index: Option<usize> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(ctx, e.to_string()))?;
        let width = record.len();
        if row == 0 {
            let is_header = record.iter().any(|f| f.parse::<f64>().is_err());
            let wanted = column.or((width > 2).then_some(DEFAULT_COLUMN));
            index = match (wanted, is_header) {
                (Some(name), true) => Some(
                    record
                        .iter()
                        .position(|f| f == name)
                        .ok_or_else(|| Error::parse(ctx, format!("no column named '{name}'")))?,
                ),
                (Some(name), false) => return Err(Error::parse(ctx, format!("no header to find column '{name}' in"))),
                (None, _) => Some(width - 1),
            };
            if is_header {
                continue;
            }
        }
        let i = index.unwrap_or(width - 1);
        let field = &record[i];
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => samples.push(v),
            Ok(_) => return Err(Error::parse(ctx, format!("row {}: non-finite value", row + 1))),
            Err(_) => return Err(Error::parse(ctx, format!("row {}: not a number: '{field}'", row + 1))),
        }
    }
    if samples.is_empty() {
        return Err(Error::parse(ctx, "no samples"));
    }
    Signal::new(samples, sample_rate_hz)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::parse(context(path), e.to_string()))
}

pub fn read_signal_csv(path: &Path, sample_rate_hz: f64, column: Option<&str>) -> Result<Signal> {
    parse_signal_csv(&read_text(path)?, sample_rate_hz, column, &context(path))
}

pub fn parse_annotations(text: &str, ctx: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<usize>()
                .map_err(|_| Error::parse(ctx, format!("line {}: not a sample index: '{l}'", i + 1)))
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<usize>> {
    parse_annotations(&read_text(path)?, &context(path))
}

/// `x.csv` → `x.ann`.
pub fn annotation_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("ann")
}

/// `x.csv` → `x.<suffix>.csv`.
pub fn sibling_path(csv_path: &Path, suffix: &str) -> PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("signal");
    csv_path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn write_echo(out: &mut impl Write, echo: &[(String, String)]) -> Result<()> {
    for (k, v) in echo {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn write_columns(path: &Path, echo: &[(String, String)], header: &[&str], fs: f64, columns: &[&[f64]]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write_echo(&mut out, echo)?;
    writeln!(out, "time_s,{}", header.join(","))?;
    let n = columns.first().map_or(0, |c| c.len());
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        line.push_str(&(i as f64 / fs).to_string());
        for c in columns {
            line.push(',');
            line.push_str(&c[i].to_string());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `time_s,<column>` rows, preceded by `# key = value` comment lines.
pub fn write_signal_csv(path: &Path, signal: &Signal, column: &str, echo: &[(String, String)]) -> Result<()> {
    write_columns(path, echo, &[column], signal.sample_rate_hz(), &[signal.samples()])
}

/// Writes the composite and its components side by side.
pub fn write_record_csv(path: &Path, record: &GeneratedRecord) -> Result<()> {
    write_columns(
        path,
        &record.config_echo,
        &["composite", "ventricular", "atrial", "noise"],
        record.sample_rate_hz(),
        &[
            record.composite.samples(),
            record.ventricular.samples(),
            record.atrial.samples(),
            record.noise.samples(),
        ],
    )
}

pub fn write_annotations(path: &Path, indices: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(indices.len() * 7);
    for i in indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
