//! Tuning-parameter sweeps, finite-difference derivatives, step-artifact
//! filtering, extremum location and zero-temperature extrapolation.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelSpec, TuningParameter};
use crate::operator::Axis;
use crate::teleport::{external_closed_form, external_detector, internal_closed_form, internal_detector, internal_kink_signs};
use crate::thermal::{CorrelatorSet, LocalStates, Spectrum, WEIGHT_CUTOFF};

/// Closed-form and protocol detectors must agree this closely in validation mode.
pub const PROTOCOL_AGREEMENT_TOL: f64 = 1e-9;
/// Default sweep increment.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    /// Maximal mean fidelity of external teleportation.
    #[serde(rename = "f_ext")]
    ExternalFidelity,
    /// Minimal mean trace distance of internal teleportation.
    #[serde(rename = "d_int")]
    InternalTraceDistance,
}

impl Detector {
    pub const ALL: [Detector; 2] = [Detector::ExternalFidelity, Detector::InternalTraceDistance];

    pub fn id(self) -> &'static str {
        match self {
            Detector::ExternalFidelity => "f_ext",
            Detector::InternalTraceDistance => "d_int",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    /// Detectors from the correlator closed forms.
    #[default]
    ClosedForm,
    /// Closed forms cross-checked against the full teleportation protocol at
    /// every point; a disagreement aborts the sweep.
    Validate,
}

/// Which piece of an optimized detector is active at a grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Correlator `ss` maximizing `(1 + |ss|)/2`.
    Correlator(Axis),
    /// Signs of `z² + zz` and `z³ - z·zz` in the internal closed form.
    KinkSigns([i8; 2]),
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Correlator(a) => write!(f, "{a}{a}"),
            Branch::KinkSigns(s) => {
                let c = |v: i8| match v {
                    1 => '+',
                    -1 => '-',
                    _ => '0',
                };
                write!(f, "{}{}", c(s[0]), c(s[1]))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchWindow {
    pub lo: f64,
    pub hi: f64,
    /// Derivative order (0 locates an extremum of the curve itself); chosen
    /// automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Model with every coupling except the tuning parameter fixed.
    pub model: ModelSpec,
    pub parameter: TuningParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub temperatures: Vec<f64>,
    pub detectors: Vec<Detector>,
    pub windows: Vec<SearchWindow>,
    pub mode: EvaluationMode,
}

impl SweepSpec {
    pub fn new(model: ModelSpec, parameter: TuningParameter, start: f64, stop: f64, temperatures: Vec<f64>) -> Self {
        SweepSpec {
            model,
            parameter,
            start,
            stop,
            step: DEFAULT_STEP,
            temperatures,
            detectors: Detector::ALL.to_vec(),
            windows: Vec::new(),
            mode: EvaluationMode::ClosedForm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.parameter(self.parameter)?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::arg(format!("step must be positive, got {}", self.step)));
        }
        if !(self.start < self.stop) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::arg(format!("range [{}, {}] is empty", self.start, self.stop)));
        }
        if self.temperatures.is_empty() {
            return Err(Error::arg("at least one temperature is required"));
        }
        if let Some(&kt) = self.temperatures.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::arg(format!("kT must be positive, got {kt}")));
        }
        if self.detectors.is_empty() {
            return Err(Error::arg("at least one detector is required"));
        }
        for w in &self.windows {
            if !(w.lo < w.hi) || w.lo < self.start - 1e-9 || w.hi > self.stop + 1e-9 {
                return Err(Error::arg(format!(
                    "window [{}, {}] must be non-empty and inside [{}, {}]",
                    w.lo, w.hi, self.start, self.stop
                )));
            }
            if let Some(o) = w.order {
                if o > 2 {
                    return Err(Error::arg(format!("window order must be 0, 1 or 2, got {o}")));
                }
            }
        }
        Ok(())
    }

    /// Uniform grid `start, start + step, ..., stop`, with values rounded to
    /// 12 decimals so that repeated sweeps share identical abscissae.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| round12(self.start + i as f64 * self.step)).collect()
    }
}

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// A sampled detector (or derivative) curve at fixed `L` and `kT`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorCurve {
    pub detector: Detector,
    pub parameter: TuningParameter,
    pub len: usize,
    pub kt: f64,
    /// 0 for the detector itself, 1 or 2 for derivatives.
    pub order: u8,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub branches: Vec<Branch>,
}

impl DetectorCurve {
    pub fn step(&self) -> Result<f64> {
        uniform_step(&self.grid)
    }

    /// Locations where the attaining branch changes, each reported as the
    /// midpoint between the last sample of the old branch and the first of
    /// the new one. A zero kink sign is compatible with either sign.
    pub fn branch_changes(&self) -> Vec<f64> {
        self.branch_change_indices().into_iter().map(|(j, i)| 0.5 * (self.grid[j] + self.grid[i])).collect()
    }

    /// Index pairs `(last old, first new)` bracketing each branch change.
    fn branch_change_indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        // per kink component: last nonzero sign and where it was seen
        let mut last: [Option<(i8, usize)>; 2] = [None; 2];
        for (i, b) in self.branches.iter().enumerate() {
            match *b {
                Branch::Correlator(_) => {
                    if i > 0 && self.branches[i - 1] != *b {
                        out.push((i - 1, i));
                    }
                }
                Branch::KinkSigns(s) => {
                    let mut changed_at: Option<usize> = None;
                    for k in 0..2 {
                        if s[k] == 0 {
                            continue;
                        }
                        if let Some((prev, j)) = last[k] {
                            if prev != s[k] {
                                changed_at = Some(changed_at.map_or(j, |c| c.max(j)));
                            }
                        }
                        last[k] = Some((s[k], i));
                    }
                    if let Some(j) = changed_at {
                        out.push((j, i));
                    }
                }
            }
        }
        out
    }

    /// Maximal index ranges on which the attaining branch is constant.
    pub fn branch_segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (_, i) in self.branch_change_indices() {
            out.push(start..i);
            start = i;
        }
        out.push(start..self.grid.len());
        out
    }
}

fn uniform_step(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::arg("a grid needs at least two points"));
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::arg("grid must be strictly increasing"));
    }
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::arg("grid is not uniform"));
        }
    }
    Ok(h)
}

/// Detector values and correlators at one grid point and temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointRecord {
    pub correlators: CorrelatorSet,
    pub external: f64,
    pub external_branch: Branch,
    pub internal: f64,
    pub internal_branch: Branch,
}

fn evaluate_local(local: &LocalStates, mode: EvaluationMode) -> Result<PointRecord> {
    let c = local.correlators;
    let ext = external_closed_form(&c);
    let int = internal_closed_form(&c);
    if mode == EvaluationMode::Validate {
        let p_int = internal_detector(&local.site, &local.shifted_pair)?.value;
        let p_ext = external_detector(&local.shifted_pair)?.value;
        if (p_int - int).abs() > PROTOCOL_AGREEMENT_TOL || (p_ext - ext.value).abs() > PROTOCOL_AGREEMENT_TOL {
            return Err(Error::NumericalConsistency(format!(
                "protocol and closed form disagree: D_int {p_int} vs {int}, F_ext {p_ext} vs {}",
                ext.value
            )));
        }
    }
    Ok(PointRecord {
        correlators: c,
        external: ext.value,
        external_branch: Branch::Correlator(ext.branch),
        internal: int,
        internal_branch: Branch::KinkSigns(internal_kink_signs(&c)),
    })
}

/// Records at every temperature of `temperatures` for one model instance.
/// The Hamiltonian is diagonalized once; eigenvector reductions are reused.
pub fn evaluate_point(model: &ModelSpec, temperatures: &[f64], mode: EvaluationMode) -> Result<Vec<PointRecord>> {
    let spectrum = Arc::new(Spectrum::compute(model)?);
    let max_kt = temperatures.iter().copied().fold(0.0, f64::max);
    let max_gap = -WEIGHT_CUTOFF.ln() * max_kt;
    if model.len() >= 3 {
        let reductions = spectrum.eigenvector_reductions(&[1, 2, 3], max_gap)?;
        temperatures
            .iter()
            .map(|&kt| evaluate_local(&LocalStates::from_triple(&reductions.thermal_average(kt)?)?, mode))
            .collect()
    } else {
        temperatures
            .iter()
            .map(|&kt| evaluate_local(&spectrum.thermal(kt)?.local_states()?, mode))
            .collect()
    }
}

/// Output of [`sweep`]: one curve per `(kT, detector)` plus the raw
/// correlators, indexed `[temperature][grid point]`.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub correlators: Vec<Vec<CorrelatorSet>>,
    pub curves: Vec<DetectorCurve>,
}

impl SweepResult {
    pub fn curve(&self, detector: Detector, kt: f64) -> Option<&DetectorCurve> {
        self.curves.iter().find(|c| c.detector == detector && c.kt == kt)
    }

    /// Curves of one detector, in the order of `temperatures`.
    pub fn curves_for(&self, detector: Detector) -> Vec<DetectorCurve> {
        self.curves.iter().filter(|c| c.detector == detector).cloned().collect()
    }
}

/// Evaluates every grid point (in parallel) at every temperature. Output
/// ordering is independent of scheduling.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let grid = spec.grid();
    let points: Vec<Vec<PointRecord>> = grid
        .par_iter()
        .map(|&value| {
            let wrap = |e: Error| Error::SweepPoint { parameter: spec.parameter.name(), value, source: Box::new(e) };
            let model = spec.model.with_parameter(spec.parameter, value).map_err(wrap)?;
            evaluate_point(&model, &spec.temperatures, spec.mode).map_err(wrap)
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    let mut correlators = Vec::new();
    for (t, &kt) in spec.temperatures.iter().enumerate() {
        correlators.push(points.iter().map(|p| p[t].correlators).collect());
        for &detector in &spec.detectors {
            let (values, branches) = points
                .iter()
                .map(|p| match detector {
                    Detector::ExternalFidelity => (p[t].external, p[t].external_branch),
                    Detector::InternalTraceDistance => (p[t].internal, p[t].internal_branch),
                })
                .unzip();
            curves.push(DetectorCurve {
                detector,
                parameter: spec.parameter,
                len: spec.model.len(),
                kt,
                order: 0,
                grid: grid.clone(),
                values,
                branches,
            });
        }
    }
    Ok(SweepResult { grid, temperatures: spec.temperatures.clone(), correlators, curves })
}

/// First or second derivative by central differences on interior points and
/// second-order one-sided stencils at the ends.
pub fn finite_difference(curve: &DetectorCurve, order: u8) -> Result<DetectorCurve> {
    if !(1..=2).contains(&order) {
        return Err(Error::arg(format!("derivative order must be 1 or 2, got {order}")));
    }
    let n = curve.values.len();
    if n < order as usize + 2 {
        return Err(Error::arg(format!("order-{order} differences need at least {} points, got {n}", order + 2)));
    }
    let h = curve.step()?;
    let f = &curve.values;
    let values: Vec<f64> = (0..n)
        .map(|i| match order {
            1 => {
                if i == 0 {
                    (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
                } else if i == n - 1 {
                    (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h)
                } else {
                    (f[i + 1] - f[i - 1]) / (2.0 * h)
                }
            }
            _ => {
                if i == 0 {
                    (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
                } else if i == n - 1 {
                    (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / (h * h)
                } else {
                    (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h)
                }
            }
        })
        .collect();
    Ok(DetectorCurve { order: curve.order + order, values, ..curve.clone() })
}

/// An estimated critical value with the grid-resolution error bar: one grid
/// step per derivative order (±0.01 / ±0.02 at the default step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QcpEstimate {
    pub value: f64,
    pub error: f64,
    pub kt: f64,
    pub len: usize,
    pub detector: Detector,
    pub parameter: TuningParameter,
    /// Derivative order whose extremum was located (0: extremum of the curve itself).
    pub order: u8,
}

fn window_indices(grid: &[f64], lo: f64, hi: f64) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] >= lo - 1e-12 && grid[i] <= hi + 1e-12).collect();
    if idx.is_empty() {
        return Err(Error::arg(format!("window [{lo}, {hi}] contains no grid points")));
    }
    Ok(idx)
}

fn estimate(curve: &DetectorCurve, i: usize, order: u8, h: f64) -> QcpEstimate {
    QcpEstimate {
        value: curve.grid[i],
        error: h * f64::from(order.max(1)),
        kt: curve.kt,
        len: curve.len,
        detector: curve.detector,
        parameter: curve.parameter,
        order,
    }
}

/// Grid point maximizing `|derivative|` inside `[lo, hi]`, skipping points
/// flagged in `mask`. The first maximal point wins ties.
pub fn locate_extremum(dcurve: &DetectorCurve, window: (f64, f64), mask: Option<&[bool]>) -> Result<QcpEstimate> {
    if dcurve.order == 0 {
        return Err(Error::arg("locate_extremum expects a derivative curve"));
    }
    let h = dcurve.step()?;
    let idx = window_indices(&dcurve.grid, window.0, window.1)?;
    let best = idx
        .into_iter()
        .filter(|&i| !mask.is_some_and(|m| m[i]))
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if dcurve.values[i].abs() <= dcurve.values[b].abs() => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| Error::arg(format!("window [{}, {}] is entirely masked", window.0, window.1)))?;
    Ok(estimate(dcurve, best, dcurve.order, h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

/// Minimum or maximum of a detector curve itself inside `[lo, hi]`; the
/// error bar is one grid step.
pub fn locate_curve_extremum(curve: &DetectorCurve, window: (f64, f64), kind: ExtremumKind) -> Result<QcpEstimate> {
    let h = curve.step()?;
    let idx = window_indices(&curve.grid, window.0, window.1)?;
    let better = |a: f64, b: f64| match kind {
        ExtremumKind::Minimum => a < b,
        ExtremumKind::Maximum => a > b,
    };
    let mut best = idx[0];
    for &i in &idx[1..] {
        if better(curve.values[i], curve.values[best]) {
            best = i;
        }
    }
    Ok(estimate(curve, best, curve.order, h))
}

/// Tuning knobs for [`filter_finite_size_steps`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepFilterConfig {
    /// A low-temperature spike survives if the reference profile has a peak
    /// within `radius + drift * (kT_ref - kT)` in the tuning parameter.
    pub radius: f64,
    /// Allowed shift of a genuine feature per unit temperature.
    pub drift: f64,
    /// Smallest temperature accepted as the high-temperature reference.
    pub min_reference_kt: f64,
    /// Peaks below this fraction of a profile's largest `|derivative|` are ignored.
    pub peak_fraction: f64,
    /// A masked region covers the contiguous points around a rejected spike
    /// whose `|derivative|` is at least this fraction of the spike height.
    pub region_fraction: f64,
}

impl Default for StepFilterConfig {
    fn default() -> Self {
        StepFilterConfig { radius: 0.05, drift: 0.15, min_reference_kt: 0.5, peak_fraction: 0.05, region_fraction: 0.25 }
    }
}

/// Per-curve masks of grid points attributed to finite-size steps.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMask {
    /// Same order as the input curves; `true` marks an excluded point.
    pub masks: Vec<Vec<bool>>,
    pub reference_kt: Option<f64>,
    /// No usable high-temperature reference; nothing was masked.
    pub insufficient: bool,
}

impl StepMask {
    /// Number of contiguous masked regions in curve `k`.
    pub fn regions(&self, k: usize) -> usize {
        let m = &self.masks[k];
        (0..m.len()).filter(|&i| m[i] && (i == 0 || !m[i - 1])).count()
    }
}

/// Local maxima of `|d|` whose height and prominence are at least
/// `fraction` of the global maximum and that are interior to one of `segments`, with plateaus reported once (first
/// index). Maxima touching a segment edge come from the grid boundary or
/// from a branch change and are not reported.
fn peaks(d: &[f64], segments: &[std::ops::Range<usize>], fraction: f64) -> Vec<usize> {
    let a: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let top = a.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for seg in segments {
        let (lo, hi) = (seg.start, seg.end);
        let mut i = lo;
        while i < hi {
            let mut j = i;
            while j + 1 < hi && a[j + 1] == a[i] {
                j += 1;
            }
            // central differences at a segment edge straddle the change
            let interior = i > lo + 1 && j + 2 < hi;
            if interior && a[i - 1] < a[i] && a[j + 1] < a[i] && a[i] >= fraction * top {
                let floor_left = a[lo..i].iter().rev().take_while(|&&x| x <= a[i]).fold(a[i], |m, &x| m.min(x));
                let floor_right = a[j + 1..hi].iter().take_while(|&&x| x <= a[i]).fold(a[i], |m, &x| m.min(x));
                if a[i] - floor_left.max(floor_right) >= fraction * top {
                    out.push(i);
                }
            }
            i = j + 1;
        }
    }
    out
}

/// Marks derivative spikes that appear at low temperature but have no
/// counterpart in the high-temperature derivative profile. Reference peaks
/// next to a branch change are discarded, so optimization cusps of the
/// reference support nothing.
pub fn filter_finite_size_steps(curves: &[DetectorCurve], config: &StepFilterConfig) -> Result<StepMask> {
    let empty = |reference_kt| StepMask {
        masks: curves.iter().map(|c| vec![false; c.values.len()]).collect(),
        reference_kt,
        insufficient: true,
    };
    if curves.len() < 2 {
        return Ok(empty(None));
    }
    let grid = &curves[0].grid;
    if curves.iter().any(|c| c.grid != *grid || c.order != 0) {
        return Err(Error::arg("step filtering needs raw detector curves on a shared grid"));
    }
    let (r, reference) = curves
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.kt.total_cmp(&b.1.kt))
        .expect("at least two curves");
    if reference.kt < config.min_reference_kt {
        return Ok(empty(None));
    }
    let ref_d = finite_difference(reference, 1)?;
    // Prominence is measured across branch changes; only peaks whose stencil
    // touches a change are dropped.
    let changes: Vec<usize> = reference.branch_change_indices().into_iter().map(|(_, i)| i).collect();
    let ref_peaks: Vec<f64> = peaks(&ref_d.values, &[0..grid.len()], config.peak_fraction)
        .into_iter()
        .filter(|&p| !changes.iter().any(|&c| p + 2 >= c && p <= c + 1))
        .map(|i| grid[i])
        .collect();

    let mut masks = Vec::with_capacity(curves.len());
    for (k, curve) in curves.iter().enumerate() {
        let mut mask = vec![false; grid.len()];
        if k != r && curve.kt < reference.kt {
            let reach = config.radius + config.drift * (reference.kt - curve.kt) + 1e-9;
            let d = finite_difference(curve, 1)?;
            let a: Vec<f64> = d.values.iter().map(|x| x.abs()).collect();
            for p in peaks(&d.values, &[0..grid.len()], config.peak_fraction) {
                if ref_peaks.iter().any(|&q| (q - grid[p]).abs() <= reach) {
                    continue;
                }
                let floor = config.region_fraction * a[p];
                let mut lo = p;
                while lo > 0 && a[lo - 1] <= a[lo] && a[lo - 1] >= floor {
                    lo -= 1;
                }
                let mut hi = p;
                while hi + 1 < a.len() && a[hi + 1] <= a[hi] && a[hi + 1] >= floor {
                    hi += 1;
                }
                mask[lo..=hi].iter_mut().for_each(|m| *m = true);
            }
            fill_short_gaps(&mut mask, grid, config.radius);
        }
        masks.push(mask);
    }
    Ok(StepMask { masks, reference_kt: Some(reference.kt), insufficient: false })
}

/// Joins masked regions separated by at most `width` in the tuning parameter;
/// the two lobes of one bump-shaped step count as one region.
fn fill_short_gaps(mask: &mut [bool], grid: &[f64], width: f64) {
    let mut last_masked: Option<usize> = None;
    for i in 0..mask.len() {
        if mask[i] {
            if let Some(j) = last_masked {
                if i > j + 1 && grid[i] - grid[j] <= width + 1e-9 {
                    mask[j + 1..i].iter_mut().for_each(|m| *m = true);
                }
            }
            last_masked = Some(i);
        }
    }
}

/// Least-squares line through `(kT, estimate)` pairs; the intercept is the
/// zero-temperature prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroTExtrapolation {
    pub estimates: Vec<QcpEstimate>,
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the intercept (0 when the fit is exact).
    pub intercept_stderr: f64,
    pub residuals: Vec<f64>,
}

impl ZeroTExtrapolation {
    pub fn prediction(&self) -> f64 {
        self.intercept
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

pub fn extrapolate_to_zero_t(estimates: &[QcpEstimate]) -> Result<ZeroTExtrapolation> {
    if estimates.len() < 3 {
        return Err(Error::arg(format!("zero-temperature extrapolation needs at least 3 estimates, got {}", estimates.len())));
    }
    let first = &estimates[0];
    if estimates.iter().any(|e| e.len != first.len || e.detector != first.detector || e.order != first.order) {
        return Err(Error::arg("estimates must share chain length, detector and derivative order"));
    }
    let mut kts: Vec<f64> = estimates.iter().map(|e| e.kt).collect();
    kts.sort_by(f64::total_cmp);
    if kts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("estimates must be at distinct temperatures"));
    }
    let n = estimates.len() as f64;
    let mx = estimates.iter().map(|e| e.kt).sum::<f64>() / n;
    let my = estimates.iter().map(|e| e.value).sum::<f64>() / n;
    let sxx: f64 = estimates.iter().map(|e| (e.kt - mx).powi(2)).sum();
    let sxy: f64 = estimates.iter().map(|e| (e.kt - mx) * (e.value - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = estimates.iter().map(|e| e.value - (intercept + slope * e.kt)).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2 = if estimates.len() > 2 { rss / (n - 2.0) } else { 0.0 };
    let intercept_stderr = (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt();
    Ok(ZeroTExtrapolation { estimates: estimates.to_vec(), slope, intercept, intercept_stderr, residuals })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    QcpConsistent,
    SuspectOptimizationCusp,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::QcpConsistent => "qcp-consistent",
            Verdict::SuspectOptimizationCusp => "suspect-optimization-cusp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coincidence {
    pub verdict: Verdict,
    /// The two estimates agree within their combined error bars.
    pub overlap: bool,
    /// Estimate A sits within one grid step of a branch change of its curve.
    pub a_on_branch_change: bool,
    pub b_on_branch_change: bool,
}

fn near_branch_change(est: &QcpEstimate, curve: &DetectorCurve) -> Result<bool> {
    let h = curve.step()?;
    Ok(curve.branch_changes().iter().any(|&c| (c - est.value).abs() <= h + 1e-9))
}

/// A genuine critical point shows up at the same place in both detectors
/// and away from switches of the optimal correction branch.
pub fn cross_detector_coincidence(
    a: &QcpEstimate,
    a_curve: &DetectorCurve,
    b: &QcpEstimate,
    b_curve: &DetectorCurve,
) -> Result<Coincidence> {
    let overlap = (a.value - b.value).abs() <= a.error + b.error + 1e-9;
    let a_flag = near_branch_change(a, a_curve)?;
    let b_flag = near_branch_change(b, b_curve)?;
    let verdict = if overlap && !a_flag && !b_flag { Verdict::QcpConsistent } else { Verdict::SuspectOptimizationCusp };
    Ok(Coincidence { verdict, overlap, a_on_branch_change: a_flag, b_on_branch_change: b_flag })
}

/// Unmasked interior local maxima of `|derivative|` at or above
/// `peak_fraction` of the largest, ordered by decreasing magnitude.
pub fn ranked_peaks(dcurve: &DetectorCurve, mask: Option<&[bool]>, peak_fraction: f64) -> Result<Vec<QcpEstimate>> {
    if dcurve.order == 0 {
        return Err(Error::arg("ranked_peaks expects a derivative curve"));
    }
    let h = dcurve.step()?;
    let v = &dcurve.values;
    let mut found: Vec<usize> =
        peaks(v, &[0..v.len()], peak_fraction).into_iter().filter(|&i| !mask.is_some_and(|m| m[i])).collect();
    found.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    Ok(found.into_iter().map(|i| estimate(dcurve, i, dcurve.order, h)).collect())
}

/// Automatic search windows: the `count` largest surviving peaks of the
/// first derivative (or of the second derivative when the first has none),
/// each widened by `half_width`.
pub fn auto_windows(curve: &DetectorCurve, mask: &[bool], count: usize, half_width: f64, peak_fraction: f64) -> Result<Vec<SearchWindow>> {
    let (lo_g, hi_g) = (curve.grid[0], curve.grid[curve.grid.len() - 1]);
    for order in [1u8, 2] {
        let d = finite_difference(curve, order)?;
        let mut found = ranked_peaks(&d, Some(mask), peak_fraction)?;
        found.truncate(count);
        if !found.is_empty() {
            found.sort_by(|a, b| a.value.total_cmp(&b.value));
            return Ok(found
                .into_iter()
                .map(|e| SearchWindow {
                    lo: round12((e.value - half_width).max(lo_g)),
                    hi: round12((e.value + half_width).min(hi_g)),
                    order: Some(order),
                })
                .collect());
        }
    }
    Ok(Vec::new())
}

pub fn max_norm_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Max-norm distances `d(L-2, L)` between curves sampled on one grid at
/// different chain lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSizeConvergence {
    /// `(L, d(L-2, L))` for every `L` whose `L-2` partner is present, ascending.
    pub distances: Vec<(usize, f64)>,
}

impl FiniteSizeConvergence {
    pub fn distance(&self, len: usize) -> Option<f64> {
        self.distances.iter().find(|d| d.0 == len).map(|d| d.1)
    }

    /// Distances strictly decrease along the even (or odd) lengths.
    pub fn monotone(&self, even: bool) -> bool {
        let d: Vec<f64> = self.distances.iter().filter(|d| (d.0 % 2 == 0) == even).map(|d| d.1).collect();
        d.windows(2).all(|w| w[1] < w[0])
    }

    /// `d(L-2, L) < d(L-3, L-1)`: the even length `len` has converged
    /// further than its odd predecessor.
    pub fn even_ahead_of_odd(&self, len: usize) -> Option<bool> {
        if len % 2 != 0 || len < 5 {
            return None;
        }
        Some(self.distance(len)? < self.distance(len - 1)?)
    }
}

pub fn finite_size_convergence(curves: &std::collections::BTreeMap<usize, Vec<f64>>) -> Result<FiniteSizeConvergence> {
    let mut distances = Vec::new();
    for (&len, c) in curves {
        if let Some(prev) = len.checked_sub(2).and_then(|l| curves.get(&l)) {
            distances.push((len, max_norm_distance(prev, c)?));
        }
    }
    Ok(FiniteSizeConvergence { distances })
}

/// Post-processing knobs for [`analyze`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    /// `None` disables step filtering.
    pub step_filter: Option<StepFilterConfig>,
    /// Number of automatic windows when the sweep supplies none.
    pub auto_windows: usize,
    pub window_half_width: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { step_filter: Some(StepFilterConfig::default()), auto_windows: 3, window_half_width: 0.1 }
    }
}

/// An estimate tagged with the window and resolved derivative order that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowEstimate {
    pub window: SearchWindow,
    pub estimate: QcpEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowExtrapolation {
    pub detector: Detector,
    pub window: SearchWindow,
    pub fit: ZeroTExtrapolation,
    /// The intercept lies inside the sweep range.
    pub in_range: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowCoincidence {
    pub window: SearchWindow,
    pub kt: f64,
    pub external: QcpEstimate,
    pub internal: QcpEstimate,
    pub result: Coincidence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAnalysis {
    /// One mask per detector curve, in the order of `SweepResult::curves`.
    pub masks: Vec<Vec<bool>>,
    /// Step filtering was requested but no hot reference was available.
    pub filter_insufficient: bool,
    pub estimates: Vec<WindowEstimate>,
    pub extrapolations: Vec<WindowExtrapolation>,
    pub coincidences: Vec<WindowCoincidence>,
    /// Windows that produced no estimate, with the reason.
    pub skipped: Vec<(Detector, SearchWindow, f64, String)>,
}

impl SweepAnalysis {
    pub fn estimates_for(&self, detector: Detector) -> impl Iterator<Item = &WindowEstimate> {
        self.estimates.iter().filter(move |e| e.estimate.detector == detector)
    }
}

/// Curve extremum kind used for order-0 windows: the fidelity dips and the
/// trace distance peaks at a critical point.
pub fn natural_extremum(detector: Detector) -> ExtremumKind {
    match detector {
        Detector::ExternalFidelity => ExtremumKind::Minimum,
        Detector::InternalTraceDistance => ExtremumKind::Maximum,
    }
}

fn merge_windows(mut ws: Vec<SearchWindow>) -> Vec<SearchWindow> {
    ws.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<SearchWindow> = Vec::new();
    for w in ws {
        match out.last_mut() {
            Some(last) if w.lo <= last.hi => {
                last.hi = last.hi.max(w.hi);
                if last.order != w.order {
                    last.order = None;
                }
            }
            _ => out.push(w),
        }
    }
    out
}

/// Resolves the derivative order of a window: first order unless the first
/// derivative has no surviving peak inside it while the second does.
fn resolve_order(curve: &DetectorCurve, window: &SearchWindow, mask: &[bool], fraction: f64) -> Result<u8> {
    if let Some(o) = window.order {
        return Ok(o);
    }
    let inside = |e: &QcpEstimate| e.value >= window.lo - 1e-12 && e.value <= window.hi + 1e-12;
    let d1 = finite_difference(curve, 1)?;
    if ranked_peaks(&d1, Some(mask), fraction)?.iter().any(inside) {
        return Ok(1);
    }
    let d2 = finite_difference(curve, 2)?;
    Ok(if ranked_peaks(&d2, Some(mask), fraction)?.iter().any(inside) { 2 } else { 1 })
}

/// Step filtering, window selection, per-temperature extremum location,
/// zero-temperature extrapolation and cross-detector coincidence for one
/// sweep. Automatic windows are seeded from the coldest curve of each
/// detector and shared between detectors.
pub fn analyze(spec: &SweepSpec, result: &SweepResult, options: &AnalysisOptions) -> Result<SweepAnalysis> {
    let fraction = options.step_filter.map_or(StepFilterConfig::default().peak_fraction, |c| c.peak_fraction);
    let mut masks: Vec<Vec<bool>> = result.curves.iter().map(|c| vec![false; c.values.len()]).collect();
    let mut filter_insufficient = false;
    if let Some(cfg) = options.step_filter {
        for &det in &spec.detectors {
            let idx: Vec<usize> = (0..result.curves.len()).filter(|&i| result.curves[i].detector == det).collect();
            let curves: Vec<DetectorCurve> = idx.iter().map(|&i| result.curves[i].clone()).collect();
            let m = filter_finite_size_steps(&curves, &cfg)?;
            filter_insufficient |= m.insufficient;
            for (k, &i) in idx.iter().enumerate() {
                masks[i] = m.masks[k].clone();
            }
        }
    }
    let coldest = result.temperatures.iter().copied().fold(f64::INFINITY, f64::min);
    let windows = if spec.windows.is_empty() {
        let mut auto = Vec::new();
        for (i, c) in result.curves.iter().enumerate() {
            if c.kt == coldest {
                let ws = auto_windows(c, &masks[i], options.auto_windows, options.window_half_width, fraction)?;
                auto.extend(ws.into_iter().map(|w| SearchWindow { order: None, ..w }));
            }
        }
        merge_windows(auto)
    } else {
        spec.windows.clone()
    };

    let mut estimates = Vec::new();
    let mut skipped = Vec::new();
    for &det in &spec.detectors {
        let cold = (0..result.curves.len())
            .find(|&i| result.curves[i].detector == det && result.curves[i].kt == coldest)
            .ok_or_else(|| Error::arg(format!("no {det} curve in sweep result")))?;
        for w in &windows {
            let order = resolve_order(&result.curves[cold], w, &masks[cold], fraction)?;
            let resolved = SearchWindow { order: Some(order), ..*w };
            for (i, c) in result.curves.iter().enumerate() {
                if c.detector != det {
                    continue;
                }
                let found = if order == 0 {
                    locate_curve_extremum(c, (w.lo, w.hi), natural_extremum(det))
                } else {
                    finite_difference(c, order).and_then(|d| locate_extremum(&d, (w.lo, w.hi), Some(&masks[i])))
                };
                match found {
                    Ok(estimate) => estimates.push(WindowEstimate { window: resolved, estimate }),
                    Err(e) => skipped.push((det, resolved, c.kt, e.to_string())),
                }
            }
        }
    }

    let mut extrapolations = Vec::new();
    for &det in &spec.detectors {
        for w in &windows {
            let es: Vec<QcpEstimate> = estimates
                .iter()
                .filter(|e| e.estimate.detector == det && e.window.lo == w.lo && e.window.hi == w.hi)
                .map(|e| e.estimate)
                .collect();
            if es.len() >= 3 {
                let fit = extrapolate_to_zero_t(&es)?;
                let in_range = fit.intercept >= spec.start && fit.intercept <= spec.stop;
                let window = SearchWindow { order: Some(es[0].order), ..*w };
                extrapolations.push(WindowExtrapolation { detector: det, window, fit, in_range });
            }
        }
    }

    let mut coincidences = Vec::new();
    for f in estimates.iter().filter(|e| e.estimate.detector == Detector::ExternalFidelity) {
        let Some(d) = estimates.iter().find(|d| {
            d.estimate.detector == Detector::InternalTraceDistance
                && d.estimate.kt == f.estimate.kt
                && d.window.lo == f.window.lo
                && d.window.hi == f.window.hi
        }) else {
            continue;
        };
        let fc = result.curve(Detector::ExternalFidelity, f.estimate.kt).expect("curve exists for estimate");
        let dc = result.curve(Detector::InternalTraceDistance, d.estimate.kt).expect("curve exists for estimate");
        let result = cross_detector_coincidence(&f.estimate, fc, &d.estimate, dc)?;
        coincidences.push(WindowCoincidence { window: f.window, kt: f.estimate.kt, external: f.estimate, internal: d.estimate, result });
    }

    Ok(SweepAnalysis { masks, filter_insufficient, estimates, extrapolations, coincidences, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(grid: Vec<f64>, values: Vec<f64>, kt: f64) -> DetectorCurve {
        let n = grid.len();
        DetectorCurve {
            detector: Detector::ExternalFidelity,
            parameter: TuningParameter::Lambda,
            len: 8,
            kt,
            order: 0,
            grid,
            values,
            branches: vec![Branch::Correlator(Axis::X); n],
        }
    }

    fn grid(a: f64, b: f64, h: f64) -> Vec<f64> {
        let n = ((b - a) / h).round() as usize;
        (0..=n).map(|i| round12(a + i as f64 * h)).collect()
    }

    #[test]
    fn derivative_of_linear_is_constant() {
        let g = grid(0.0, 1.0, 0.1);
        let c = curve(g.clone(), g.iter().map(|x| 3.0 * x - 1.0).collect(), 0.1);
        let d = finite_difference(&c, 1).unwrap();
        assert!(d.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert_eq!(d.order, 1);
    }

    #[test]
    fn second_derivative_of_quadratic_is_constant() {
        let g = grid(-1.0, 1.0, 0.05);
        let c = curve(g.clone(), g.iter().map(|x| 2.5 * x * x - x).collect(), 0.1);
        let d = finite_difference(&c, 2).unwrap();
        assert!(d.values.iter().all(|v| (v - 5.0).abs() < 1e-9), "{:?}", d.values);
    }

    #[test]
    fn smooth_function_derivatives_converge_quadratically() {
        // analytic: f = sin(2x) e^{-x/3}
        let f = |x: f64| (2.0 * x).sin() * (-x / 3.0).exp();
        let df = |x: f64| (2.0 * (2.0 * x).cos() - (2.0 * x).sin() / 3.0) * (-x / 3.0).exp();
        let h = 1e-3;
        let g = grid(0.0, 1.0, h);
        let c = curve(g.clone(), g.iter().map(|&x| f(x)).collect(), 0.1);
        let d = finite_difference(&c, 1).unwrap();
        let worst = g.iter().zip(&d.values).map(|(&x, v)| (v - df(x)).abs()).fold(0.0, f64::max);
        assert!(worst < 10.0 * h * h, "{worst}");
    }

    #[test]
    fn too_few_points() {
        let c = curve(vec![0.0, 0.1], vec![1.0, 2.0], 0.1);
        assert!(finite_difference(&c, 1).is_err());
        let c = curve(vec![0.0, 0.1, 0.2], vec![1.0, 2.0, 2.0], 0.1);
        assert!(finite_difference(&c, 1).is_ok());
        assert!(finite_difference(&c, 2).is_err());
    }

    #[test]
    fn tent_kink_is_recovered() {
        let g = grid(0.0, 2.0, 0.01);
        let kink = 0.73;
        // slope 1 before, slope -4 after: second derivative spikes at the kink
        let c = curve(g.clone(), g.iter().map(|&x| if x <= kink { x } else { kink - 4.0 * (x - kink) }).collect(), 0.1);
        let d2 = finite_difference(&c, 2).unwrap();
        let e = locate_extremum(&d2, (0.1, 1.9), None).unwrap();
        assert_eq!(e.value, kink);
        assert!((e.error - 0.02).abs() < 1e-12);
        let top = locate_curve_extremum(&c, (0.0, 2.0), ExtremumKind::Maximum).unwrap();
        assert_eq!(top.value, kink);
    }

    #[test]
    fn masked_points_are_skipped_and_empty_windows_rejected() {
        let g = grid(0.0, 1.0, 0.01);
        let c = curve(g.clone(), g.iter().map(|&x| (x - 0.3).tanh() + 0.2 * (40.0 * (x - 0.8)).tanh()).collect(), 0.1);
        let d = finite_difference(&c, 1).unwrap();
        let e = locate_extremum(&d, (0.0, 1.0), None).unwrap();
        assert_eq!(e.value, 0.8);
        let mask: Vec<bool> = g.iter().map(|&x| (x - 0.8).abs() < 0.1).collect();
        let e = locate_extremum(&d, (0.0, 1.0), Some(&mask)).unwrap();
        assert_eq!(e.value, 0.3);
        assert!(locate_extremum(&d, (1.5, 2.0), None).is_err());
    }

    #[test]
    fn step_filter_keeps_persistent_spikes() {
        let g = grid(0.0, 2.0, 0.01);
        let persistent = |x: f64, w: f64| (((x - 0.5) / w).tanh() + 1.0) * 0.2;
        let transient = |x: f64| 0.05 * (((x - 1.4) / 0.005).tanh() + 1.0);
        let low = curve(g.clone(), g.iter().map(|&x| persistent(x, 0.01) + transient(x)).collect(), 0.01);
        let high = curve(g.clone(), g.iter().map(|&x| persistent(x, 0.1)).collect(), 1.0);
        let m = filter_finite_size_steps(&[low, high], &StepFilterConfig::default()).unwrap();
        assert!(!m.insufficient);
        assert_eq!(m.reference_kt, Some(1.0));
        let masked: Vec<f64> = g.iter().zip(&m.masks[0]).filter(|(_, &b)| b).map(|(&x, _)| x).collect();
        assert!(masked.contains(&1.4) && masked.contains(&1.39));
        assert!(!masked.iter().any(|&x| (x - 0.5).abs() < 0.1));
        assert_eq!(m.regions(0), 1);
        assert!(m.masks[1].iter().all(|&b| !b));
    }

    #[test]
    fn step_filter_leaves_smooth_curves_alone() {
        let g = grid(0.0, 2.0, 0.01);
        let curves: Vec<_> = [0.05, 0.5, 1.0]
            .into_iter()
            .map(|kt| curve(g.clone(), g.iter().map(|&x| 0.5 + 0.1 * (x / (1.0 + kt)).sin()).collect(), kt))
            .collect();
        let m = filter_finite_size_steps(&curves, &StepFilterConfig::default()).unwrap();
        assert!(m.masks.iter().all(|mk| mk.iter().all(|&b| !b)));
    }

    #[test]
    fn step_filter_needs_a_hot_reference() {
        let g = grid(0.0, 1.0, 0.01);
        let a = curve(g.clone(), g.clone(), 0.01);
        let b = curve(g.clone(), g.clone(), 0.1);
        let m = filter_finite_size_steps(&[a.clone(), b], &StepFilterConfig::default()).unwrap();
        assert!(m.insufficient);
        let m = filter_finite_size_steps(&[a], &StepFilterConfig::default()).unwrap();
        assert!(m.insufficient && m.masks[0].iter().all(|&x| !x));
    }

    fn est(value: f64, kt: f64) -> QcpEstimate {
        QcpEstimate {
            value,
            error: 0.01,
            kt,
            len: 10,
            detector: Detector::InternalTraceDistance,
            parameter: TuningParameter::Lambda,
            order: 1,
        }
    }

    #[test]
    fn exact_line_extrapolates_exactly() {
        let es: Vec<_> = [0.01, 0.1, 0.2, 0.3].iter().map(|&t| est(1.0 + 0.5 * t, t)).collect();
        let x = extrapolate_to_zero_t(&es).unwrap();
        assert!((x.intercept - 1.0).abs() < 1e-14);
        assert!((x.slope - 0.5).abs() < 1e-13);
        assert!(x.intercept_stderr < 1e-12);
        assert!(x.max_abs_residual() < 1e-14);
    }

    #[test]
    fn extrapolation_argument_errors() {
        assert!(extrapolate_to_zero_t(&[est(1.0, 0.1), est(1.1, 0.2)]).is_err());
        assert!(extrapolate_to_zero_t(&[est(1.0, 0.1), est(1.1, 0.1), est(1.2, 0.3)]).is_err());
    }

    #[test]
    fn zero_kink_signs_do_not_split_branches() {
        let g = grid(0.0, 0.6, 0.1);
        let mut c = curve(g, vec![0.0; 7], 0.1);
        c.branches = [[0, 0], [1, 0], [1, 0], [1, 1], [0, 1], [1, -1], [1, -1]].into_iter().map(Branch::KinkSigns).collect();
        assert_eq!(c.branch_changes(), vec![0.45]);
        assert_eq!(c.branch_segments(), vec![0..5, 5..7]);
        c.branches[4] = Branch::KinkSigns([-1, 1]);
        assert_eq!(c.branch_changes(), vec![0.35, 0.45]);
    }

    #[test]
    fn correlator_branch_segments_cover_the_grid() {
        let g = grid(0.0, 1.0, 0.1);
        let mut c = curve(g, vec![0.0; 11], 0.1);
        for i in 4..8 {
            c.branches[i] = Branch::Correlator(Axis::Z);
        }
        assert_eq!(c.branch_segments(), vec![0..4, 4..8, 8..11]);
        assert_eq!(c.branch_changes().len(), 2);
    }

    #[test]
    fn cusp_of_the_reference_supports_nothing() {
        let g = grid(0.0, 2.0, 0.01);
        let spike = |x: f64| 0.05 * (((x - 1.0) / 0.005).tanh() + 1.0);
        let low = curve(g.clone(), g.iter().map(|&x| 0.1 * x + spike(x)).collect(), 0.01);
        // hot profile: |x - 1| cusp, which would otherwise look like a peak
        let mut high = curve(g.clone(), g.iter().map(|&x| 0.3 * (x - 1.0).abs()).collect(), 1.0);
        let m = filter_finite_size_steps(&[low.clone(), high.clone()], &StepFilterConfig::default()).unwrap();
        assert!(m.masks[0][100]);
        for (i, &x) in g.iter().enumerate() {
            high.branches[i] = Branch::Correlator(if x < 1.0 { Axis::X } else { Axis::Z });
        }
        let m = filter_finite_size_steps(&[low, high], &StepFilterConfig::default()).unwrap();
        assert!(m.masks[0][100]);
        assert_eq!(m.regions(0), 1);
    }

    #[test]
    fn reference_peak_on_a_cusp_shoulder_still_supports() {
        let g = grid(0.0, 2.0, 0.01);
        // Hot slope: a peak at 0.85 whose right flank only sags slightly
        // before a cusp at 1, and a dominant feature at 1.5. Inside its
        // branch segment the 0.85 peak is barely prominent.
        let slope = |x: f64| match x {
            x if x < 0.85 => 0.5 * (-((x - 0.85) / 0.3).powi(2)).exp(),
            x if x < 1.0 => 0.5 - 0.04 * (x - 0.85) / 0.15,
            x => -0.2 - 0.8 * (-((x - 1.5) / 0.1).powi(2)).exp(),
        };
        let mut acc = 0.0;
        // f(x_i) sums the slopes left of x_i, so the kink sits exactly at 1.
        let hot: Vec<f64> = g
            .iter()
            .map(|&x| {
                let v = acc;
                acc += 0.01 * slope(x);
                v
            })
            .collect();
        let mut high = curve(g.clone(), hot, 1.0);
        for (i, &x) in g.iter().enumerate() {
            high.branches[i] = Branch::Correlator(if x < 0.995 { Axis::X } else { Axis::Z });
        }
        let low = curve(g.clone(), g.iter().map(|&x| 0.1 * x + 0.05 * (((x - 0.99) / 0.005).tanh() + 1.0)).collect(), 0.01);
        let m = filter_finite_size_steps(&[low, high], &StepFilterConfig::default()).unwrap();
        assert_eq!(m.regions(0), 0);
    }

    #[test]
    fn drift_allowance_scales_with_temperature_gap() {
        let g = grid(0.0, 2.0, 0.01);
        let step = |x: f64, c: f64, w: f64| 0.1 * (((x - c) / w).tanh() + 1.0);
        let hot = curve(g.clone(), g.iter().map(|&x| step(x, 1.15, 0.1)).collect(), 1.0);
        let cold = curve(g.clone(), g.iter().map(|&x| step(x, 1.0, 0.005)).collect(), 0.01);
        let warm = curve(g.clone(), g.iter().map(|&x| step(x, 1.0, 0.02)).collect(), 0.9);
        let m = filter_finite_size_steps(&[cold, warm, hot], &StepFilterConfig::default()).unwrap();
        assert!(m.masks[0].iter().all(|&b| !b));
        assert_eq!(m.regions(1), 1);
    }

    #[test]
    fn ranked_peaks_skip_masked_points() {
        let g = grid(0.0, 2.0, 0.01);
        let f = |x: f64| (x / 0.02 - 25.0).tanh() + 0.5 * (x / 0.02 - 75.0).tanh() + 0.25 * (x / 0.02 - 50.0).tanh();
        let c = curve(g.clone(), g.iter().map(|&x| f(x)).collect(), 0.1);
        let d = finite_difference(&c, 1).unwrap();
        let r: Vec<f64> = ranked_peaks(&d, None, 0.05).unwrap().iter().map(|e| e.value).collect();
        assert_eq!(r, vec![0.5, 1.5, 1.0]);
        let mask: Vec<bool> = g.iter().map(|&x| (x - 0.5).abs() < 0.05).collect();
        let r: Vec<f64> = ranked_peaks(&d, Some(&mask), 0.05).unwrap().iter().map(|e| e.value).collect();
        assert_eq!(r, vec![1.5, 1.0]);
        let w = auto_windows(&c, &mask, 1, 0.1, 0.05).unwrap();
        assert_eq!(w, vec![SearchWindow { lo: 1.4, hi: 1.6, order: Some(1) }]);
    }

    #[test]
    fn parity_resolved_convergence() {
        let base: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let shifted = |eps: f64| base.iter().map(|x| x + eps).collect::<Vec<_>>();
        let curves = [(4, 0.5), (5, 0.3), (6, 0.2), (7, 0.1), (8, 0.15)]
            .into_iter()
            .map(|(l, e)| (l, shifted(e)))
            .collect();
        let c = finite_size_convergence(&curves).unwrap();
        assert_eq!(c.distances.len(), 3);
        assert!((c.distance(6).unwrap() - 0.3).abs() < 1e-12);
        assert!(c.monotone(true) && c.monotone(false));
        assert_eq!(c.even_ahead_of_odd(8), Some(true));
        assert_eq!(c.even_ahead_of_odd(6), None);
        assert!(max_norm_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn coincidence_verdicts() {
        let g = grid(0.0, 2.0, 0.01);
        let plain = curve(g.clone(), vec![0.0; g.len()], 0.1);
        let a = est(1.0, 0.1);
        let v = cross_detector_coincidence(&a, &plain, &a, &plain).unwrap();
        assert_eq!(v.verdict, Verdict::QcpConsistent);
        let far = est(1.3, 0.1);
        assert_eq!(cross_detector_coincidence(&a, &plain, &far, &plain).unwrap().verdict, Verdict::SuspectOptimizationCusp);

        let mut switching = plain.clone();
        for (i, &x) in g.iter().enumerate() {
            if x > 1.0 {
                switching.branches[i] = Branch::Correlator(Axis::Z);
            }
        }
        let v = cross_detector_coincidence(&a, &switching, &a, &plain).unwrap();
        assert!(v.a_on_branch_change && !v.b_on_branch_change);
        assert_eq!(v.verdict, Verdict::SuspectOptimizationCusp);
    }

    #[test]
    fn grid_is_inclusive_and_clean() {
        let m = ModelSpec::xy(1.0, 0.0, 4).unwrap();
        let s = SweepSpec::new(m, TuningParameter::Lambda, 0.0, 2.0, vec![0.1]);
        let g = s.grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g[30], 0.3);
        assert_eq!(g[200], 2.0);
    }

    #[test]
    fn spec_validation() {
        let m = ModelSpec::xy(1.0, 0.0, 4).unwrap();
        let mut s = SweepSpec::new(m, TuningParameter::Lambda, 0.0, 2.0, vec![0.1]);
        assert!(s.validate().is_ok());
        s.temperatures.push(-0.1);
        assert!(s.validate().is_err());
        let mut s = SweepSpec::new(m, TuningParameter::Delta, 0.0, 2.0, vec![0.1]);
        assert!(s.validate().is_err());
        s.parameter = TuningParameter::Gamma;
        s.windows.push(SearchWindow { lo: 1.5, hi: 2.5, order: None });
        assert!(s.validate().is_err());
    }

    #[test]
    fn analysis_of_an_explicit_window() {
        let model = ModelSpec::xy(1.0, 0.0, 6).unwrap();
        let mut spec = SweepSpec::new(model, TuningParameter::Lambda, 0.5, 1.5, vec![0.2, 0.3, 0.5]);
        spec.step = 0.02;
        spec.windows = vec![SearchWindow { lo: 0.6, hi: 1.4, order: Some(1) }];
        let result = sweep(&spec).unwrap();
        let options = AnalysisOptions { step_filter: None, ..AnalysisOptions::default() };
        let a = analyze(&spec, &result, &options).unwrap();
        assert!(a.masks.iter().flatten().all(|&m| !m));
        // One estimate per detector and temperature, all inside the window.
        assert!(a.skipped.is_empty(), "{:?}", a.skipped);
        assert_eq!(a.estimates.len(), 6);
        assert!(a.estimates.iter().all(|e| (0.6..=1.4).contains(&e.estimate.value) && e.estimate.order == 1));
        assert_eq!(a.extrapolations.len(), 2);
        assert!(a.extrapolations.iter().all(|e| e.fit.estimates.len() == 3));
        assert_eq!(a.coincidences.len(), 3);
    }
}
