//! Comma-delimited result tables. Floats use the shortest decimal that
//! round-trips, so rereading a table reproduces every value bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use teleqcp::scan::{finite_difference, DetectorCurve, SearchWindow};

use crate::error::{CliError, Result};
use crate::runner::JobReport;

pub const CURVES: &str = "curves.csv";
pub const CORRELATORS: &str = "correlators.csv";
pub const ESTIMATES: &str = "estimates.csv";
pub const EXTRAPOLATIONS: &str = "extrapolations.csv";
pub const COINCIDENCES: &str = "coincidences.csv";
pub const MANIFEST: &str = "manifest.json";
/// Every table a bundle contains.
pub const ALL: [&str; 5] = [CURVES, CORRELATORS, ESTIMATES, EXTRAPOLATIONS, COINCIDENCES];

/// 1-based gnuplot columns of [`CurveRow`].
pub mod curve_columns {
    pub const ID: usize = 1;
    pub const X: usize = 8;
    pub const Y: usize = 9;
    pub const D1: usize = 10;
}

/// 1-based gnuplot columns of [`CorrelatorRow`].
pub mod correlator_columns {
    pub const ID: usize = 1;
    pub const X: usize = 7;
    pub const XX: usize = 9;
}

/// 1-based gnuplot columns of [`EstimateRow`].
pub mod estimate_columns {
    pub const ID: usize = 1;
    pub const KT: usize = 5;
    pub const VALUE: usize = 11;
    pub const ERROR: usize = 12;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub curve: String,
    pub sweep: String,
    pub model: String,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "kT")]
    pub kt: f64,
    pub detector: String,
    pub parameter: String,
    pub x: f64,
    pub y: f64,
    pub d1: f64,
    pub d2: f64,
    pub branch: String,
    pub masked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorRow {
    pub series: String,
    pub sweep: String,
    pub model: String,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "kT")]
    pub kt: f64,
    pub parameter: String,
    pub x: f64,
    pub z: f64,
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub series: String,
    pub sweep: String,
    pub model: String,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "kT")]
    pub kt: f64,
    pub detector: String,
    pub parameter: String,
    pub window_lo: f64,
    pub window_hi: f64,
    pub order: u8,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRow {
    pub series: String,
    pub sweep: String,
    pub model: String,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "kT_min")]
    pub kt_min: f64,
    #[serde(rename = "kT_max")]
    pub kt_max: f64,
    pub detector: String,
    pub parameter: String,
    pub window_lo: f64,
    pub window_hi: f64,
    pub order: u8,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    pub max_abs_residual: f64,
    pub in_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRow {
    pub sweep: String,
    pub model: String,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "kT")]
    pub kt: f64,
    pub parameter: String,
    pub window_lo: f64,
    pub window_hi: f64,
    pub f_ext: f64,
    pub f_ext_error: f64,
    pub d_int: f64,
    pub d_int_error: f64,
    pub overlap: bool,
    pub f_ext_on_branch_change: bool,
    pub d_int_on_branch_change: bool,
    pub verdict: String,
}

const CURVE_HEADER: &[&str] =
    &["curve", "sweep", "model", "L", "kT", "detector", "parameter", "x", "y", "d1", "d2", "branch", "masked"];
const CORRELATOR_HEADER: &[&str] = &["series", "sweep", "model", "L", "kT", "parameter", "x", "z", "xx", "yy", "zz"];
const ESTIMATE_HEADER: &[&str] = &[
    "series", "sweep", "model", "L", "kT", "detector", "parameter", "window_lo", "window_hi", "order", "value", "error",
];
const EXTRAPOLATION_HEADER: &[&str] = &[
    "series",
    "sweep",
    "model",
    "L",
    "kT_min",
    "kT_max",
    "detector",
    "parameter",
    "window_lo",
    "window_hi",
    "order",
    "points",
    "slope",
    "intercept",
    "intercept_stderr",
    "max_abs_residual",
    "in_range",
];
const COINCIDENCE_HEADER: &[&str] = &[
    "sweep",
    "model",
    "L",
    "kT",
    "parameter",
    "window_lo",
    "window_hi",
    "f_ext",
    "f_ext_error",
    "d_int",
    "d_int_error",
    "overlap",
    "f_ext_on_branch_change",
    "d_int_on_branch_change",
    "verdict",
];

pub fn curve_id(job: &str, curve: &DetectorCurve) -> String {
    format!("{job}/{}/kT={}", curve.detector, curve.kt)
}

pub fn correlator_series(job: &str, kt: f64) -> String {
    format!("{job}/kT={kt}")
}

/// Series id shared by every temperature of one (detector, window, order).
pub fn estimate_series(job: &str, detector: &str, window: &SearchWindow, order: u8) -> String {
    format!("{job}/{detector}/{}..{}/o{order}", window.lo, window.hi)
}

fn write_table<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<()> {
    let path = dir.join(name);
    let io = |e: csv::Error| CliError::Other(format!("writing {}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_table<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let err = |e: csv::Error| CliError::Other(format!("reading {}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<std::result::Result<Vec<R>, _>>().map_err(err)
}

#[derive(Debug, Default)]
pub struct Tables {
    pub curves: Vec<CurveRow>,
    pub correlators: Vec<CorrelatorRow>,
    pub estimates: Vec<EstimateRow>,
    pub extrapolations: Vec<ExtrapolationRow>,
    pub coincidences: Vec<CoincidenceRow>,
}

impl Tables {
    /// Rows for every job that produced a sweep, in job order.
    pub fn build(reports: &[JobReport]) -> Result<Self> {
        let mut t = Tables::default();
        for r in reports {
            let Some(result) = &r.result else { continue };
            let param = r.spec.parameter.name().to_string();
            let len = r.spec.model.len();
            for (k, &kt) in result.temperatures.iter().enumerate() {
                for (i, &x) in result.grid.iter().enumerate() {
                    let c = result.correlators[k][i];
                    t.correlators.push(CorrelatorRow {
                        series: correlator_series(&r.id, kt),
                        sweep: r.id.clone(),
                        model: r.model.clone(),
                        len,
                        kt,
                        parameter: param.clone(),
                        x,
                        z: c.z,
                        xx: c.xx,
                        yy: c.yy,
                        zz: c.zz,
                    });
                }
            }
            for (ci, curve) in result.curves.iter().enumerate() {
                let d1 = finite_difference(curve, 1).map_err(|e| CliError::Other(format!("{}: {e}", r.id)))?;
                let d2 = finite_difference(curve, 2).map_err(|e| CliError::Other(format!("{}: {e}", r.id)))?;
                let mask = r.analysis.as_ref().map(|a| &a.masks[ci]);
                let id = curve_id(&r.id, curve);
                for i in 0..curve.grid.len() {
                    t.curves.push(CurveRow {
                        curve: id.clone(),
                        sweep: r.id.clone(),
                        model: r.model.clone(),
                        len,
                        kt: curve.kt,
                        detector: curve.detector.id().to_string(),
                        parameter: param.clone(),
                        x: curve.grid[i],
                        y: curve.values[i],
                        d1: d1.values[i],
                        d2: d2.values[i],
                        branch: curve.branches[i].to_string(),
                        masked: mask.is_some_and(|m| m[i]),
                    });
                }
            }
            let Some(a) = &r.analysis else { continue };
            for e in &a.estimates {
                let q = &e.estimate;
                t.estimates.push(EstimateRow {
                    series: estimate_series(&r.id, q.detector.id(), &e.window, q.order),
                    sweep: r.id.clone(),
                    model: r.model.clone(),
                    len,
                    kt: q.kt,
                    detector: q.detector.id().to_string(),
                    parameter: param.clone(),
                    window_lo: e.window.lo,
                    window_hi: e.window.hi,
                    order: q.order,
                    value: q.value,
                    error: q.error,
                });
            }
            for x in &a.extrapolations {
                let kts = x.fit.estimates.iter().map(|e| e.kt);
                let order = x.window.order.unwrap_or(1);
                t.extrapolations.push(ExtrapolationRow {
                    series: estimate_series(&r.id, x.detector.id(), &x.window, order),
                    sweep: r.id.clone(),
                    model: r.model.clone(),
                    len,
                    kt_min: kts.clone().fold(f64::INFINITY, f64::min),
                    kt_max: kts.fold(f64::NEG_INFINITY, f64::max),
                    detector: x.detector.id().to_string(),
                    parameter: param.clone(),
                    window_lo: x.window.lo,
                    window_hi: x.window.hi,
                    order,
                    points: x.fit.estimates.len(),
                    slope: x.fit.slope,
                    intercept: x.fit.intercept,
                    intercept_stderr: x.fit.intercept_stderr,
                    max_abs_residual: x.fit.max_abs_residual(),
                    in_range: x.in_range,
                });
            }
            for c in &a.coincidences {
                t.coincidences.push(CoincidenceRow {
                    sweep: r.id.clone(),
                    model: r.model.clone(),
                    len,
                    kt: c.kt,
                    parameter: param.clone(),
                    window_lo: c.window.lo,
                    window_hi: c.window.hi,
                    f_ext: c.external.value,
                    f_ext_error: c.external.error,
                    d_int: c.internal.value,
                    d_int_error: c.internal.error,
                    overlap: c.result.overlap,
                    f_ext_on_branch_change: c.result.a_on_branch_change,
                    d_int_on_branch_change: c.result.b_on_branch_change,
                    verdict: c.result.verdict.to_string(),
                });
            }
        }
        Ok(t)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_table(dir, CURVES, CURVE_HEADER, &self.curves)?;
        write_table(dir, CORRELATORS, CORRELATOR_HEADER, &self.correlators)?;
        write_table(dir, ESTIMATES, ESTIMATE_HEADER, &self.estimates)?;
        write_table(dir, EXTRAPOLATIONS, EXTRAPOLATION_HEADER, &self.extrapolations)?;
        write_table(dir, COINCIDENCES, COINCIDENCE_HEADER, &self.coincidences)
    }
}
