//! JSON reports, JSON-lines traces and CSV tables.
//!
//! Reports contain no timings or host information, so identical inputs
//! give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hma_core::diagnostics::{CherrierRow, EstimateReport};
use hma_core::solver::{IterationRecord, PathPoint, SolveReport};
use hma_core::{HermField, ScalarField};
use serde::Serialize;

use crate::error::CliError;
use crate::hmf;

/// One trace line per accepted Newton iteration.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TraceLine {
    pub t: f64,
    pub iter: usize,
    pub residual_sup: f64,
    pub b: f64,
    pub positivity_margin: f64,
    pub damping: f64,
}

impl From<&IterationRecord> for TraceLine {
    fn from(r: &IterationRecord) -> Self {
        Self {
            t: r.t,
            iter: r.iter,
            residual_sup: r.residual_sup,
            b: r.b,
            positivity_margin: r.positivity_margin,
            damping: r.damping,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathJson {
    pub t: f64,
    pub b: f64,
    pub residual_sup: f64,
    pub positivity_margin: f64,
    pub c2_ratio: f64,
    pub newton_iterations: usize,
}

impl From<&PathPoint> for PathJson {
    fn from(p: &PathPoint) -> Self {
        Self {
            t: p.t,
            b: p.b,
            residual_sup: p.residual_sup,
            positivity_margin: p.positivity_margin,
            c2_ratio: p.c2_ratio,
            newton_iterations: p.newton_iterations,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CherrierJson {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub saturated: bool,
}

impl From<&CherrierRow> for CherrierJson {
    fn from(r: &CherrierRow) -> Self {
        Self {
            p: r.p,
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            saturated: r.saturated,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatesJson {
    pub abs_b: f64,
    pub sup_f: f64,
    pub c_meas: f64,
    pub b_bound_slack: f64,
    pub b_bound_holds: bool,
    pub c2_sup_trace: f64,
    pub c2_k: f64,
    pub c2_ratio: f64,
    pub eta_band_violations: usize,
    pub eta_band_min_gap: f64,
    pub eta_dual_difference: f64,
    pub cherrier: Vec<CherrierJson>,
    /// Exponents whose ratio exceeded ten times the first row.
    pub cherrier_tripped: Vec<f64>,
    pub beta_closedness: Option<f64>,
}

impl From<&EstimateReport> for EstimatesJson {
    fn from(e: &EstimateReport) -> Self {
        Self {
            abs_b: e.b_bound.abs_b,
            sup_f: e.b_bound.sup_f,
            c_meas: e.b_bound.c_meas,
            b_bound_slack: e.b_bound.slack,
            b_bound_holds: e.b_bound.holds(),
            c2_sup_trace: e.c2.sup_trace,
            c2_k: e.c2.k,
            c2_ratio: e.c2.ratio,
            eta_band_violations: e.eta_band.violations.len(),
            eta_band_min_gap: e.eta_band.min_gap,
            eta_dual_difference: e.eta_band.dual_difference,
            cherrier: e.cherrier.iter().map(Into::into).collect(),
            cherrier_tripped: hma_core::diagnostics::cherrier_tripwire(&e.cherrier, 10.0),
            beta_closedness: e.beta_closedness,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridJson {
    pub n: usize,
    pub sizes: Vec<usize>,
}

impl GridJson {
    pub fn of(g: &hma_core::TorusGrid) -> Self {
        Self {
            n: g.dim(),
            sizes: g.sizes().to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Recovery {
    /// `sup|u - u*| / sup|u*|` after matching means.
    pub u_relative_error: f64,
    pub b_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveJson {
    pub command: &'static str,
    pub pipeline: String,
    pub variant: String,
    pub rhs_volume: String,
    pub grid: GridJson,
    pub b: f64,
    pub final_residual: f64,
    pub positivity_margin: f64,
    pub newton_iterations: usize,
    pub volume_consistency: f64,
    pub path: Vec<PathJson>,
    pub estimates: EstimatesJson,
    pub recovery: Option<Recovery>,
    /// Root-metric checks of the `volume` and `phi` pipelines.
    pub pipeline_checks: Option<PipelineChecks>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineChecks {
    /// `b'` for the volume pipeline, `b` for `phi`.
    pub b_root: f64,
    pub volume_defect: f64,
    pub gauduchon_defect: f64,
}

impl SolveJson {
    pub fn history(report: &SolveReport) -> (Vec<PathJson>, usize) {
        (report.path.iter().map(Into::into).collect(), report.residual_history.len())
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

pub fn write_trace(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&TraceLine::from(r)).map_err(|e| CliError::output(path, e))?;
        writeln!(w, "{line}").map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_cherrier_csv(path: &Path, rows: &[CherrierRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    for r in rows {
        w.serialize(CherrierJson::from(r)).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn save_scalar(path: &Path, f: &ScalarField) -> Result<(), CliError> {
    hmf::write_scalar(path, f).map_err(|e| CliError::output(path, e))
}

pub fn save_herm(path: &Path, f: &HermField) -> Result<(), CliError> {
    hmf::write_herm(path, f).map_err(|e| CliError::output(path, e))
}
