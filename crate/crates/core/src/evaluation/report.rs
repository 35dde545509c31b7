use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{MetricSummary, MetricsReport, ProtocolReport, SweepReport};
use crate::{util, Error};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    /// `.csv` and `.md`/`.markdown` pick those formats; anything else is JSON.
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => ReportFormat::Csv,
            Some("md" | "markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn csv_rows(out: &mut String, prefix: Option<f64>, results: &[MetricsReport]) {
    for r in results {
        for ((name, mean), std) in MetricSummary::NAMES.iter().zip(r.mean.values()).zip(r.std.values()) {
            if let Some(f) = prefix {
                let _ = write!(out, "{},", fmt_num(f));
            }
            let _ = writeln!(out, "{},{},{},{},{}", fmt_num(r.ratio), name, fmt_num(mean), fmt_num(std), r.runs);
        }
    }
}

fn fmt_num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "NaN".into())
}

fn md_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

fn md_rows(out: &mut String, prefix: Option<f64>, results: &[MetricsReport]) {
    for r in results {
        if let Some(f) = prefix {
            let _ = write!(out, "| {} ", f);
        }
        let _ = write!(out, "| {}% ", 100.0 * r.ratio);
        for (m, s) in r.mean.values().iter().zip(r.std.values()) {
            let _ = write!(out, "| {} ", md_cell(*m, s));
        }
        let _ = writeln!(out, "| {} |", r.runs);
    }
}

const MD_HEADER: &str = "| known ratio | accuracy | macro-F1 | F1 (OOD) | F1 (IND) | runs |";
const MD_RULE: &str = "|---|---|---|---|---|---|";

/// JSON is the full report; CSV (`ratio,metric,mean,std,runs`) and Markdown
/// carry the mean ± std summary, one Markdown row per ratio.
pub fn encode_report(report: &ProtocolReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("ratio,metric,mean,std,runs\n");
            csv_rows(&mut out, None, &report.results);
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "{MD_HEADER}\n{MD_RULE}");
            md_rows(&mut out, None, &report.results);
        }
    }
    out
}

/// Like [`encode_report`], with a leading training-fraction column.
pub fn encode_sweep(sweep: &SweepReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(sweep).expect("report serializes");
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("train_fraction,ratio,metric,mean,std,runs\n");
            for e in &sweep.entries {
                csv_rows(&mut out, Some(e.train_fraction), &e.report.results);
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| train fraction {MD_HEADER}\n|---{MD_RULE}");
            for e in &sweep.entries {
                md_rows(&mut out, Some(e.train_fraction), &e.report.results);
            }
        }
    }
    out
}

pub fn emit_report(report: &ProtocolReport, path: &Path, format: ReportFormat) -> Result<(), Error> {
    write(path, encode_report(report, format))
}

pub fn emit_sweep(sweep: &SweepReport, path: &Path, format: ReportFormat) -> Result<(), Error> {
    write(path, encode_sweep(sweep, format))
}

fn write(path: &Path, text: String) -> Result<(), Error> {
    util::write_atomic(path, text.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_report(path: &Path) -> Result<ProtocolReport, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        }
    })
}
