//! Files written into a run's output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ccnets_core::trainer::{EpochRecord, LossSummary};

use crate::error::{CliError, Result};
use crate::experiments::{CurveTable, ExperimentOutput, ExperimentReport};

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EPOCHS_FILE: &str = "epochs.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_curve_csv(path: &Path, table: &CurveTable) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "epoch,phase,series,value").map_err(io)?;
    for p in &table.rows {
        writeln!(w, "{},{},{},{}", p.epoch, p.phase, p.series, p.value).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_epochs_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "epoch,phase,{}", LossSummary::NAMES.join(",")).map_err(io)?;
    let mut line = |epoch: usize, phase: &str, s: &LossSummary| {
        let values: Vec<String> = s.values().iter().map(f64::to_string).collect();
        writeln!(w, "{epoch},{phase},{}", values.join(","))
    };
    for r in records {
        line(r.epoch, "train", &r.train).map_err(io)?;
        if let Some(t) = &r.test {
            line(r.epoch, "test", t).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes `report.json` (with wall-clock time), the reproducible
/// `metrics.json`, every curve CSV, the epoch table and the checkpoints.
pub fn write_experiment(dir: &Path, out: &ExperimentOutput, wall_clock_seconds: f64) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(METRICS_FILE), &out.report)?;
    let timed = ExperimentReport {
        wall_clock_seconds: Some(wall_clock_seconds),
        ..out.report.clone()
    };
    write_json(&dir.join(REPORT_FILE), &timed)?;
    for c in &out.curves {
        write_curve_csv(&dir.join(c.file_name()), c)?;
    }
    if let Some(records) = &out.epochs {
        write_epochs_csv(&dir.join(EPOCHS_FILE), records)?;
    }
    for (name, ck) in &out.checkpoints {
        ck.save(&dir.join(name))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Plain-text table of a report's arms.
pub fn render_report(r: &ExperimentReport) -> String {
    let mut s = format!(
        "{} (seed {}) on {}: {} train / {} test rows\n",
        r.experiment, r.seed, r.dataset.source, r.dataset.train_rows, r.dataset.test_rows
    );
    s.push_str(&format!(
        "{:<20} {:>8} {:>9} {:>8} {:>7} {:>7} {:>7} {:>9}\n",
        "arm", "f1", "precision", "recall", "tp", "fp", "fn", "tn"
    ));
    for a in &r.arms {
        s.push_str(&format!(
            "{:<20} {:>8.4} {:>9.4} {:>8.4} {:>7} {:>7} {:>7} {:>9}\n",
            a.name, a.f1, a.precision, a.recall, a.tp, a.fp, a.fn_, a.tn
        ));
    }
    if let Some(t) = r.wall_clock_seconds {
        s.push_str(&format!("wall clock: {t:.1} s\n"));
    }
    s
}
