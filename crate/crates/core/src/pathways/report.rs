use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::psa::PsaReport;
use super::tps::TpsReport;
use super::RunRecord;
use crate::error::{Error, Result};
use crate::nn::Scores;

/// One CSV row; field names are the column headers.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    setting: String,
    run: usize,
    #[serde(rename = "accF1_A")]
    acc_f1_a: f64,
    #[serde(rename = "accF2_A")]
    acc_f2_a: f64,
    #[serde(rename = "balanced_A")]
    balanced_a: f64,
    #[serde(rename = "accF1_B")]
    acc_f1_b: f64,
    #[serde(rename = "accF2_B")]
    acc_f2_b: f64,
    #[serde(rename = "balanced_B")]
    balanced_b: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        kind: "csv",
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Writes the per-run table: setting, run, then per-label and balanced
/// accuracy on each test set, at full precision.
pub fn write_records_csv<'a>(path: &Path, records: impl IntoIterator<Item = &'a RunRecord>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(CsvRow {
            setting: r.setting.clone(),
            run: r.run,
            acc_f1_a: r.on_a.acc_f1,
            acc_f2_a: r.on_a.acc_f2,
            balanced_a: r.on_a.balanced,
            acc_f1_b: r.on_b.acc_f1,
            acc_f2_b: r.on_b.acc_f2,
            balanced_b: r.on_b.balanced,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a table written by [`write_records_csv`]. Seeds and checkpoints
/// are not part of the table and come back empty.
pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            Ok(RunRecord {
                setting: row.setting,
                run: row.run,
                seed: 0,
                on_a: Scores {
                    acc_f1: row.acc_f1_a,
                    acc_f2: row.acc_f2_a,
                    balanced: row.balanced_a,
                },
                on_b: Scores {
                    acc_f1: row.acc_f1_b,
                    acc_f2: row.acc_f2_b,
                    balanced: row.balanced_b,
                },
                checkpoint: None,
                best_epoch: None,
                frozen_before: None,
                frozen_after: None,
            })
        })
        .collect()
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:6.2} ± {std:4.2}")
}

/// Scheme summary with the chosen scheme starred.
pub fn render_psa_table(report: &PsaReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:<12} {:>15} {:>15} {:>6}", "scheme", "test A", "test B", "peak").unwrap();
    for s in &report.schemes {
        let a = &s.aggregate;
        let mark = if s.scheme == report.chosen_scheme { "*" } else { "" };
        writeln!(
            out,
            "{:<12} {:>15} {:>15} {:>6}",
            format!("{}{mark}", s.scheme),
            pm(a.mean_a, a.std_a),
            pm(a.mean_b, a.std_b),
            a.peak_run
        )
        .unwrap();
    }
    writeln!(out, "chosen scheme: {} (run {})", report.chosen_scheme, report.chosen_run).unwrap();
    out
}

/// Pathway summary per architecture with the chosen setting starred.
pub fn render_tps_table(report: &TpsReport) -> String {
    let mut out = String::new();
    writeln!(out, "padding: {}", report.scheme).unwrap();
    for arch in &report.architectures {
        writeln!(out, "\n[{}]", arch.name).unwrap();
        writeln!(out, "{:<8} {:<26} {:>15} {:>15} {:>6}", "setting", "pathway", "test A", "test B", "peak").unwrap();
        for s in &arch.settings {
            let a = &s.aggregate;
            let mark = if Some(s.setting) == arch.chosen { "*" } else { "" };
            writeln!(
                out,
                "{:<8} {:<26} {:>15} {:>15} {:>6}",
                format!("{}{mark}", s.setting),
                s.setting.description(),
                pm(a.mean_a, a.std_a),
                pm(a.mean_b, a.std_b),
                a.peak_run
            )
            .unwrap();
        }
        match arch.chosen {
            Some(c) => writeln!(out, "chosen pathway: {c}").unwrap(),
            None => writeln!(out, "chosen pathway: none (needs at least two settings)").unwrap(),
        }
    }
    out
}
