//! Output writers: CSV with a provenance header, the JSON run summary, and
//! gnuplot script emission.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips 64-bit values exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use vpfp_core::experiments::{RateFitResult, SweepRow};
use vpfp_core::measures::DistanceRow;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file whose first line embeds the resolved config hash and whose
/// second line names the columns.
pub struct CsvWriter {
    path: PathBuf,
    buffer: String,
}

impl CsvWriter {
    pub fn create(dir: &Path, name: &str, config_hash: &str, columns: &[&str]) -> Self {
        let mut buffer = String::new();
        buffer.push_str(&format!("# config_sha256={config_hash}\n"));
        buffer.push_str(&columns.join(","));
        buffer.push('\n');
        Self {
            path: dir.join(name),
            buffer,
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buffer.push_str(&fields.join(","));
        self.buffer.push('\n');
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let mut f = fs::File::create(&self.path)
            .with_context(|| format!("creating {}", self.path.display()))?;
        f.write_all(self.buffer.as_bytes())?;
        Ok(self.path)
    }
}

pub fn write_sweep_rows(
    dir: &Path,
    name: &str,
    hash: &str,
    rows: &[SweepRow],
) -> anyhow::Result<PathBuf> {
    let mut csv = CsvWriter::create(dir, name, hash, &["sweep_kind", "n", "seed", "value", "stderr"]);
    for row in rows {
        csv.row(&[
            row.kind.to_string(),
            row.n.to_string(),
            row.seed.to_string(),
            fmt_float(row.value),
            fmt_float(row.stderr),
        ]);
    }
    csv.finish()
}

pub fn write_distance_rows(
    dir: &Path,
    name: &str,
    hash: &str,
    rows: &[DistanceRow],
) -> anyhow::Result<PathBuf> {
    let mut csv = CsvWriter::create(
        dir,
        name,
        hash,
        &["n", "seed", "t", "p", "method", "value", "stderr"],
    );
    for row in rows {
        csv.row(&[
            row.n.to_string(),
            row.seed.to_string(),
            fmt_float(row.t),
            fmt_float(row.p),
            row.method.name().to_string(),
            fmt_float(row.value),
            fmt_float(row.stderr),
        ]);
    }
    csv.finish()
}

pub fn fit_to_json(fit: &RateFitResult) -> serde_json::Value {
    serde_json::json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_stderr": fit.slope_stderr,
        "r_squared": fit.r_squared,
        "per_point": fit.per_point.iter().map(|(n, med, spread)| {
            serde_json::json!({"n": n, "median": med, "spread": spread})
        }).collect::<Vec<_>>(),
    })
}

/// The JSON-like run summary: resolved config, seeds, wall clock, results,
/// and the pass/fail verdicts.
pub fn write_summary(dir: &Path, summary: &serde_json::Value) -> anyhow::Result<PathBuf> {
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(summary)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// One gnuplot script per CSV in the output directory; sweeps get log-log
/// axes, time series get linear ones.
pub fn emit_plot_scripts(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("plot")
            .to_string();
        let header = fs::read_to_string(&path)?
            .lines()
            .nth(1)
            .unwrap_or_default()
            .to_string();
        let columns: Vec<&str> = header.split(',').collect();
        let script_path = dir.join(format!("{stem}.gnuplot"));
        let mut script = String::new();
        script.push_str("set datafile separator ','\n");
        script.push_str(&format!("set title '{stem}'\n"));
        script.push_str(&format!("set output '{stem}.png'\nset terminal png size 900,600\n"));
        if columns.first() == Some(&"time") {
            // trajectory or distance series: linear time axis
            let ycol = columns.len().min(3);
            script.push_str(&format!(
                "set xlabel 'time'\nplot '{stem}.csv' skip 2 using 1:{ycol} with lines title '{}'\n",
                columns.get(ycol - 1).unwrap_or(&"value")
            ));
        } else {
            // sweep: value against N on log-log axes (power laws are lines)
            let (xcol, ycol) = if columns.first() == Some(&"sweep_kind") {
                (2, 4)
            } else {
                (1, 6)
            };
            script.push_str("set logscale xy\nset xlabel 'N'\nset ylabel 'value'\n");
            script.push_str(&format!(
                "plot '{stem}.csv' skip 2 using {xcol}:{ycol} with points title '{stem}'\n"
            ));
        }
        fs::write(&script_path, script)?;
        written.push(script_path);
    }
    written.sort();
    Ok(written)
}
