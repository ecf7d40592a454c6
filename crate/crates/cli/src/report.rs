//! Experiment outputs: a machine-readable JSON report, one CSV per metric
//! series, a run manifest, and a human-readable summary. Every emitted
//! number carries a descriptive label of the physical quantity it targets.
//! All file contents are fully determined by (config, seed).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use annilab_core::observables::MetricSeries;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct PointJson {
    pub time: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricBlock {
    pub name: String,
    /// What the series measures, e.g. "per-type particle density".
    pub quantity: String,
    pub points: Vec<PointJson>,
}

/// One verdict line: a measured value against its target with an explicit
/// tolerance. `calibrated` marks thresholds that are implementation-chosen
/// statistical gates rather than exact constants.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub quantity: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: String,
    pub pass: bool,
    pub calibrated: bool,
}

impl CheckLine {
    pub fn new(
        name: impl Into<String>,
        quantity: impl Into<String>,
        measured: f64,
        target: f64,
        tolerance: impl Into<String>,
        pass: bool,
    ) -> Self {
        Self {
            name: name.into(),
            quantity: quantity.into(),
            measured,
            target,
            tolerance: tolerance.into(),
            pass,
            calibrated: false,
        }
    }

    pub fn calibrated(mut self) -> Self {
        self.calibrated = true;
        self
    }
}

/// Exact-vs-simulated marginal row for the oracle certification table.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub system: String,
    pub mode: String,
    pub time: f64,
    pub site: usize,
    pub particle_type: char,
    pub exact: f64,
    pub simulated: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricBlock>,
    pub checks: Vec<CheckLine>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_table: Option<Vec<OracleRow>>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.kind.name().to_string(),
            config: config.clone(),
            metrics: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            oracle_table: None,
        }
    }

    pub fn push_series(
        &mut self,
        series: &MetricSeries,
        quantity: impl Into<String>,
    ) -> Result<(), annilab_core::observables::ObservablesError> {
        let points = series
            .summary()?
            .into_iter()
            .map(|p| PointJson {
                time: p.time,
                mean: p.mean,
                se: p.se,
                n: p.n,
            })
            .collect();
        self.metrics.push(MetricBlock {
            name: series.name().to_string(),
            quantity: quantity.into(),
            points,
        });
        Ok(())
    }

    pub fn push_check(&mut self, check: CheckLine) {
        self.checks.push(check);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.failed_checks() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable verdict table.
    pub fn render_summary(&self, wall_seconds: Option<f64>) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment: {}\n", self.experiment));
        for block in &self.metrics {
            out.push_str(&format!("  metric {} ({})\n", block.name, block.quantity));
            for p in &block.points {
                out.push_str(&format!(
                    "    t={:<10} mean={:<14.6} se={:<12.3e} n={}\n",
                    p.time, p.mean, p.se, p.n
                ));
            }
        }
        for c in &self.checks {
            out.push_str(&format!(
                "  [{}] {}: measured {:.6} target {:.6} tol {}{}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.target,
                c.tolerance,
                if c.calibrated { " (calibrated)" } else { "" },
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        if let Some(w) = wall_seconds {
            out.push_str(&format!("  wall time: {w:.2} s\n"));
        }
        out
    }
}

/// Run manifest: identifying parameters plus the total event count. Wall
/// time is deliberately absent so the file is byte-deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub mode: Option<String>,
    pub lambda: Option<f64>,
    pub sides: Option<Vec<u32>>,
    pub seed: u64,
    pub replicas: Option<usize>,
    pub total_events: u64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let mut f = fs::File::create(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `report.json`, `manifest.json`, and one `<metric>.csv` per series.
pub fn write_artifacts(
    out_dir: &Path,
    report: &Report,
    manifest: &Manifest,
    series: &[&MetricSeries],
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    let report_path = out_dir.join("report.json");
    write_file(&report_path, report.to_json().as_bytes())?;
    written.push(report_path);
    let manifest_path = out_dir.join("manifest.json");
    write_file(
        &manifest_path,
        serde_json::to_string_pretty(manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    written.push(manifest_path);
    for s in series {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).map_err(|source| ReportError::Io {
            path: s.name().to_string(),
            source,
        })?;
        let path = out_dir.join(format!("{}.csv", s.name()));
        write_file(&path, &buf)?;
        written.push(path);
    }
    Ok(written)
}
