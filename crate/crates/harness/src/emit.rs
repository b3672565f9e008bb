//! CSV and JSON output of summary rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stats::SummaryStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 18] = [
    "experiment_id",
    "estimator",
    "n",
    "T",
    "d",
    "epsilon",
    "delta",
    "rho_data",
    "mse",
    "median_se",
    "iqr_lo",
    "iqr_hi",
    "bias_sq",
    "variance",
    "hist_failure_rate",
    "clip_rate",
    "k",
    "base_seed",
];

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot read results: {0}")]
    Parse(String),
}

pub fn write_results<W: Write>(stats: &[SummaryStats], out: W, format: Format) -> Result<(), EmitError> {
    let io = |e: &dyn std::fmt::Display| EmitError::Io { path: "<writer>".into(), message: e.to_string() };
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if stats.is_empty() {
                w.write_record(CSV_HEADER).map_err(|e| io(&e))?;
            }
            for s in stats {
                w.serialize(s).map_err(|e| io(&e))?;
            }
            w.flush().map_err(|e| io(&e))
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, stats).map_err(|e| io(&e))?;
            out.write_all(b"\n").map_err(|e| io(&e))
        }
    }
}

pub fn emit_results(stats: &[SummaryStats], path: impl AsRef<Path>, format: Format) -> Result<(), EmitError> {
    let path = path.as_ref();
    let named = |e: EmitError| match e {
        EmitError::Io { message, .. } => EmitError::Io { path: path.display().to_string(), message },
        other => other,
    };
    let file = File::create(path).map_err(|e| named(EmitError::Io { path: String::new(), message: e.to_string() }))?;
    write_results(stats, BufWriter::new(file), format).map_err(named)
}

pub fn read_results(text: &str, format: Format) -> Result<Vec<SummaryStats>, EmitError> {
    match format {
        Format::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<Vec<SummaryStats>, _>>()
            .map_err(|e| EmitError::Parse(e.to_string())),
        Format::Json => serde_json::from_str(text).map_err(|e| EmitError::Parse(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> SummaryStats {
        SummaryStats {
            experiment_id: "x".into(),
            estimator: "central_1d".into(),
            n,
            t: 1,
            d: 1,
            epsilon: 0.1,
            delta: 1e-4,
            rho_data: 2.5,
            mse: 0.01,
            median_se: 0.005,
            iqr_lo: 0.001,
            iqr_hi: 0.02,
            bias_sq: 1e-5,
            variance: 0.00999,
            hist_failure_rate: 0.0,
            clip_rate: 0.125,
            k: 10,
            base_seed: 7,
            runtime_secs: 0.0,
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let rows = vec![row(100), row(200)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf, Format::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(read_results(&text, Format::Csv).unwrap(), rows);
    }

    #[test]
    fn json_round_trip() {
        let rows = vec![row(100)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf, Format::Json).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"T\": 1"));
        assert_eq!(read_results(&text, Format::Json).unwrap(), rows);
    }

    #[test]
    fn empty_csv_keeps_header() {
        let mut buf = Vec::new();
        write_results(&[], &mut buf, Format::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER.join(","));
    }
}
