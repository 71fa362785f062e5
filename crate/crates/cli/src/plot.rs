//! Gnuplot scripts over the result tables. Scripts hold only table
//! references, series ids and labels, and are meant to be run from the
//! output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::runner::JobReport;
use crate::tables::{
    correlator_columns as cc, correlator_series, curve_columns as kc, curve_id, estimate_columns as ec, estimate_series,
    CORRELATORS, CURVES, ESTIMATES,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub id: String,
    pub title: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    /// File stem; the script is `{stem}.gp` and renders `{stem}.png`.
    pub stem: String,
    pub table: &'static str,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    pub kind: FigureKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureKind {
    /// Detector curve above its first derivative.
    Detector,
    Correlator,
    /// Estimates against kT with error bars.
    Estimates,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotIndex {
    pub figures: Vec<Figure>,
}

fn ylabel(detector: &str) -> &'static str {
    match detector {
        "f_ext" => "mean fidelity F_ext",
        _ => "mean trace distance D_int",
    }
}

impl PlotIndex {
    /// One detector figure per (job, detector), one correlator figure per
    /// config entry across its lengths, and one estimates figure per job with
    /// at least two temperatures and some estimate.
    pub fn from_reports(config: &RunConfig, reports: &[JobReport]) -> Self {
        let mut figures = Vec::new();
        for (i, entry) in config.sweeps.iter().enumerate() {
            let jobs: Vec<&JobReport> = reports.iter().filter(|r| r.entry == i && r.result.is_some()).collect();
            if jobs.is_empty() {
                continue;
            }
            let param = entry.parameter.name();
            let mut xx = Vec::new();
            for r in &jobs {
                let result = r.result.as_ref().expect("filtered on result");
                for &kt in &result.temperatures {
                    xx.push(Series {
                        id: correlator_series(&r.id, kt),
                        title: format!("L={} kT={kt}", r.spec.model.len()),
                    });
                }
            }
            figures.push(Figure {
                stem: format!("{}-xx", entry.name),
                table: CORRELATORS,
                xlabel: param.into(),
                ylabel: "<x_j x_j+1>".into(),
                series: xx,
                kind: FigureKind::Correlator,
            });
            for r in &jobs {
                let result = r.result.as_ref().expect("filtered on result");
                for &det in &entry.detectors {
                    let series = result
                        .curves
                        .iter()
                        .filter(|c| c.detector == det)
                        .map(|c| Series { id: curve_id(&r.id, c), title: format!("kT={}", c.kt) })
                        .collect();
                    figures.push(Figure {
                        stem: format!("{}-{}", r.id, det.id()),
                        table: CURVES,
                        xlabel: param.into(),
                        ylabel: ylabel(det.id()).into(),
                        series,
                        kind: FigureKind::Detector,
                    });
                }
                let Some(a) = &r.analysis else { continue };
                if result.temperatures.len() < 2 || a.estimates.is_empty() {
                    continue;
                }
                let mut series: Vec<Series> = Vec::new();
                for e in &a.estimates {
                    let q = &e.estimate;
                    let id = estimate_series(&r.id, q.detector.id(), &e.window, q.order);
                    if !series.iter().any(|s| s.id == id) {
                        let title = format!("{} [{}, {}] order {}", q.detector.id(), e.window.lo, e.window.hi, q.order);
                        series.push(Series { id, title });
                    }
                }
                figures.push(Figure {
                    stem: format!("{}-estimates", r.id),
                    table: ESTIMATES,
                    xlabel: "kT".into(),
                    ylabel: format!("estimated critical {param}"),
                    series,
                    kind: FigureKind::Estimates,
                });
            }
        }
        PlotIndex { figures }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn plot_lines(out: &mut String, table: &str, series: &[Series], id: usize, x: usize, y: usize, style: &str) {
    out.push_str("plot \\\n");
    for (k, s) in series.iter().enumerate() {
        let sep = if k + 1 == series.len() { "\n" } else { ", \\\n" };
        let _ = write!(
            out,
            "  {} using {x}:(strcol({id}) eq {} ? column({y}) : NaN) with {style} title {}{sep}",
            quote(table),
            quote(&s.id),
            quote(&s.title)
        );
    }
}

/// Script text for one figure; a pure function of the figure description.
pub fn render(fig: &Figure) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} from {}; run with gnuplot from this directory", fig.stem, fig.table);
    s.push_str("set datafile separator \",\"\n");
    s.push_str("set terminal pngcairo size 1000,700\n");
    let _ = writeln!(s, "set output {}", quote(&format!("{}.png", fig.stem)));
    s.push_str("set key outside right\n");
    let _ = writeln!(s, "set xlabel {}", quote(&fig.xlabel));
    match fig.kind {
        FigureKind::Detector => {
            s.push_str("set multiplot layout 2,1\n");
            let _ = writeln!(s, "set ylabel {}", quote(&fig.ylabel));
            plot_lines(&mut s, fig.table, &fig.series, kc::ID, kc::X, kc::Y, "lines");
            let _ = writeln!(s, "set ylabel {}", quote(&format!("d/d{} {}", fig.xlabel, fig.ylabel)));
            plot_lines(&mut s, fig.table, &fig.series, kc::ID, kc::X, kc::D1, "lines");
            s.push_str("unset multiplot\n");
        }
        FigureKind::Correlator => {
            let _ = writeln!(s, "set ylabel {}", quote(&fig.ylabel));
            plot_lines(&mut s, fig.table, &fig.series, cc::ID, cc::X, cc::XX, "lines");
        }
        FigureKind::Estimates => {
            let _ = writeln!(s, "set ylabel {}", quote(&fig.ylabel));
            s.push_str("plot \\\n");
            for (k, ser) in fig.series.iter().enumerate() {
                let sep = if k + 1 == fig.series.len() { "\n" } else { ", \\\n" };
                let _ = write!(
                    s,
                    "  {} using {}:(strcol({}) eq {} ? column({}) : NaN):{} with yerrorbars title {}{sep}",
                    quote(fig.table),
                    ec::KT,
                    ec::ID,
                    quote(&ser.id),
                    ec::VALUE,
                    ec::ERROR,
                    quote(&ser.title)
                );
            }
        }
    }
    s
}

/// Writes `{stem}.gp` for every figure into `dir` and returns the file
/// names. Every referenced table must already exist in `dir`.
pub fn emit_plot_scripts(dir: &Path, index: &PlotIndex) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for fig in &index.figures {
        if !dir.join(fig.table).is_file() {
            return Err(CliError::MissingTable(fig.table.to_string()));
        }
        let name = PathBuf::from(format!("{}.gp", fig.stem));
        let path = dir.join(&name);
        std::fs::write(&path, render(fig)).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        written.push(name);
    }
    Ok(written)
}
