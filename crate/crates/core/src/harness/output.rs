//! Run directories and CSV point clouds.
//!
//! Each run directory holds:
//!
//! * `config.toml` – the experiment configuration that produced it;
//! * `metrics.csv` – `iteration,lambda,drmmd,mmd2,w2,val_mmd2`, one row per
//!   iteration, 17 significant digits, empty cells for absent values;
//! * `timings.csv` – `iteration,wall_ms`;
//! * `snapshot_<iter>.csv` – particle positions, one point per row;
//! * `summary.json` – run metadata and first/last metrics.
//!
//! Wall-clock times live apart from `metrics.csv` so that the metrics of two
//! runs with the same seed compare byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{Algorithm, FlowConfig};
use crate::particles::ParticleSystem;
use crate::record::{MetricRow, RunRecord};

pub const METRICS_HEADER: [&str; 6] = ["iteration", "lambda", "drmmd", "mmd2", "w2", "val_mmd2"];

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_points(path: &Path, points: &ParticleSystem) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for p in points.points() {
        w.write_record(p.iter().map(|v| fmt_f64(*v)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV matrix. A first row that does not parse as numbers is
/// treated as a header.
pub fn read_points(path: &Path) -> Result<ParticleSystem> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Input(format!(
                    "{}: line {}: {e}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    ParticleSystem::from_rows(&rows).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = METRICS_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration,
            fmt_opt(r.lambda),
            fmt_opt(r.drmmd),
            fmt_f64(r.mmd2),
            fmt_opt(r.w2),
            fmt_opt(r.val_mmd2),
        ));
    }
    out
}

#[derive(Debug, Serialize)]
struct MetricSummary {
    iteration: usize,
    lambda: Option<f64>,
    drmmd: Option<f64>,
    mmd2: f64,
    w2: Option<f64>,
    val_mmd2: Option<f64>,
}

impl From<&MetricRow> for MetricSummary {
    fn from(r: &MetricRow) -> Self {
        Self {
            iteration: r.iteration,
            lambda: r.lambda,
            drmmd: r.drmmd,
            mmd2: r.mmd2,
            w2: r.w2,
            val_mmd2: r.val_mmd2,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    algorithm: Algorithm,
    seed: u64,
    n: usize,
    m: usize,
    dim: usize,
    flow: &'a FlowConfig,
    factorizations: usize,
    iterations: usize,
    snapshot_iterations: Vec<usize>,
    initial: MetricSummary,
    last: MetricSummary,
    total_wall_ms: f64,
}

/// Writes one run directory and returns its path.
#[allow(clippy::too_many_arguments)]
pub fn write_run(
    root: &Path,
    name: &str,
    algorithm: Algorithm,
    flow: &FlowConfig,
    config_echo: &str,
    target_len: usize,
    record: &RunRecord,
) -> Result<PathBuf> {
    let dir = root.join(name);
    create_dir(&dir)?;
    write_file(&dir.join("config.toml"), config_echo.as_bytes())?;
    write_file(&dir.join("metrics.csv"), metrics_csv(&record.rows).as_bytes())?;

    let mut timings = String::from("iteration,wall_ms\n");
    for r in &record.rows {
        timings.push_str(&format!("{},{}\n", r.iteration, fmt_f64(r.wall_ms)));
    }
    write_file(&dir.join("timings.csv"), timings.as_bytes())?;

    for s in &record.snapshots {
        write_points(&dir.join(format!("snapshot_{}.csv", s.iteration)), &s.positions)?;
    }

    let summary = RunSummary {
        name,
        algorithm,
        seed: record.seed,
        n: record.final_state.len(),
        m: target_len,
        dim: record.final_state.dim(),
        flow,
        factorizations: record.factorizations,
        iterations: record.rows.len() - 1,
        snapshot_iterations: record.snapshots.iter().map(|s| s.iteration).collect(),
        initial: record.first().into(),
        last: record.last().into(),
        total_wall_ms: record.rows.iter().map(|r| r.wall_ms).sum(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::io(dir.join("summary.json"), std::io::Error::other(e)))?;
    write_file(&dir.join("summary.json"), json.as_bytes())?;
    Ok(dir)
}
