//! Strict TOML run configuration.
//!
//! A `[[sweep]]` entry fixes a model family and every coupling except the
//! tuned one, and expands into one job per chain length.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teleqcp::operator::MAX_SITES;
use teleqcp::scan::{Detector, EvaluationMode, SearchWindow, StepFilterConfig, SweepSpec, DEFAULT_STEP};
use teleqcp::{ModelSpec, TuningParameter};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Xxz,
    Xy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Evaluate detectors through the full protocol and cross-check them
    /// against the closed forms.
    #[serde(default)]
    pub validation: bool,
    #[serde(default = "yes")]
    pub emit_plot_scripts: bool,
    #[serde(default)]
    pub step_filter: StepFilterConfig,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<SweepEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub name: String,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub parameter: TuningParameter,
    pub range: [f64; 2],
    #[serde(default = "default_step")]
    pub step: f64,
    pub lengths: Vec<usize>,
    pub temperatures: Vec<f64>,
    #[serde(default = "all_detectors")]
    pub detectors: Vec<Detector>,
    /// Mask finite-size steps before locating extrema.
    #[serde(default = "yes")]
    pub step_filter: bool,
    /// Automatic windows seeded when no `[[sweep.window]]` is given.
    #[serde(default = "default_auto_windows")]
    pub auto_windows: usize,
    #[serde(default, rename = "window", skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<SearchWindow>,
}

fn yes() -> bool {
    true
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn all_detectors() -> Vec<Detector> {
    Detector::ALL.to_vec()
}

fn default_auto_windows() -> usize {
    3
}

/// One sweep at a single chain length.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    /// `{entry name}-L{len}`; unique within a config.
    pub id: String,
    pub entry: usize,
    pub spec: SweepSpec,
    pub step_filter: bool,
    pub auto_windows: usize,
}

impl SweepEntry {
    /// Model label without the tuned coupling, e.g. `xxz(field=12)`.
    pub fn model_label(&self) -> String {
        let names = match self.family {
            Family::Xxz => [("delta", self.delta), ("field", self.field)],
            Family::Xy => [("lambda", self.lambda), ("gamma", self.gamma)],
        };
        let fixed: Vec<String> = names
            .iter()
            .filter(|(n, _)| *n != self.parameter.name())
            .map(|(n, v)| format!("{n}={}", v.unwrap_or(0.0)))
            .collect();
        let family = match self.family {
            Family::Xxz => "xxz",
            Family::Xy => "xy",
        };
        format!("{family}({})", fixed.join(","))
    }

    fn model(&self, len: usize) -> teleqcp::Result<ModelSpec> {
        let p = |v: Option<f64>| v.unwrap_or(0.0);
        match self.family {
            Family::Xxz => ModelSpec::xxz(p(self.delta), p(self.field), len),
            Family::Xy => ModelSpec::xy(p(self.lambda), p(self.gamma), len),
        }
    }
}

/// Line of the `index`-th `[[sweep]]` header, 1-based.
fn sweep_header_line(text: &str, index: usize) -> Option<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[sweep]]"))
        .nth(index)
        .map(|(n, _)| n + 1)
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Syntax { path: origin.to_path_buf(), message: e.to_string() })?;
        config.validate().map_err(|e| match e {
            CliError::Field { field, line: None, message } => {
                let line = field
                    .strip_prefix("sweep[")
                    .and_then(|r| r.split(']').next())
                    .and_then(|i| i.parse().ok())
                    .and_then(|i| sweep_header_line(text, i));
                CliError::Field { field, line, message }
            }
            other => other,
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Other(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(CliError::field("workers", "must be at least 1"));
        }
        let f = &self.step_filter;
        for (name, v) in [
            ("radius", f.radius),
            ("drift", f.drift),
            ("min_reference_kt", f.min_reference_kt),
            ("peak_fraction", f.peak_fraction),
            ("region_fraction", f.region_fraction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::field(format!("step_filter.{name}"), format!("must be finite and non-negative, got {v}")));
            }
        }
        let mut names = BTreeSet::new();
        for (i, s) in self.sweeps.iter().enumerate() {
            if !names.insert(s.name.as_str()) {
                return Err(CliError::field(format!("sweep[{i}].name"), format!("duplicate sweep name {:?}", s.name)));
            }
            validate_entry(s, &format!("sweep[{i}]"))?;
        }
        Ok(())
    }

    /// Expands every entry into per-length jobs, in config order.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let mode = if self.validation { EvaluationMode::Validate } else { EvaluationMode::ClosedForm };
        let mut jobs = Vec::new();
        for (i, s) in self.sweeps.iter().enumerate() {
            for (k, &len) in s.lengths.iter().enumerate() {
                let model = s.model(len).map_err(|e| CliError::field(format!("sweep[{i}].lengths[{k}]"), e.to_string()))?;
                let spec = SweepSpec {
                    step: s.step,
                    detectors: s.detectors.clone(),
                    windows: s.windows.clone(),
                    mode,
                    ..SweepSpec::new(model, s.parameter, s.range[0], s.range[1], s.temperatures.clone())
                };
                spec.validate().map_err(|e| CliError::field(format!("sweep[{i}]"), e.to_string()))?;
                jobs.push(Job {
                    id: format!("{}-L{len}", s.name),
                    entry: i,
                    spec,
                    step_filter: s.step_filter,
                    auto_windows: s.auto_windows,
                });
            }
        }
        Ok(jobs)
    }
}

fn validate_entry(s: &SweepEntry, at: &str) -> Result<()> {
    let err = |field: &str, msg: String| Err(CliError::field(format!("{at}.{field}"), msg));
    if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
        return err("name", format!("must be non-empty and use only [A-Za-z0-9_.-], got {:?}", s.name));
    }
    let (allowed, foreign): (&[TuningParameter], [(&str, Option<f64>); 2]) = match s.family {
        Family::Xxz => (&[TuningParameter::Delta], [("lambda", s.lambda), ("gamma", s.gamma)]),
        Family::Xy => (&[TuningParameter::Lambda, TuningParameter::Gamma], [("delta", s.delta), ("field", s.field)]),
    };
    for (name, v) in foreign {
        if v.is_some() {
            return err(name, format!("is not a coupling of the {:?} family", s.family));
        }
    }
    if !allowed.contains(&s.parameter) {
        return err("parameter", format!("{} cannot be tuned in the {:?} family", s.parameter, s.family));
    }
    let couplings = [("delta", s.delta), ("field", s.field), ("lambda", s.lambda), ("gamma", s.gamma)];
    for (name, v) in couplings {
        if name == s.parameter.name() && v.is_some() {
            return err(name, "is the tuning parameter and must not be fixed".into());
        }
        let own = matches!(
            (s.family, name),
            (Family::Xxz, "delta" | "field") | (Family::Xy, "lambda" | "gamma")
        );
        if own && name != s.parameter.name() && v.is_none() {
            return err(name, "must be set; it is held fixed during the sweep".into());
        }
        if let Some(x) = v {
            if !x.is_finite() {
                return err(name, format!("must be finite, got {x}"));
            }
        }
    }
    let [a, b] = s.range;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return err("range", format!("must satisfy a < b, got [{a}, {b}]"));
    }
    if !(s.step > 0.0 && s.step.is_finite()) {
        return err("step", format!("must be positive, got {}", s.step));
    }
    if (b - a) / s.step < 3.0 {
        return err("step", format!("range [{a}, {b}] holds fewer than 4 grid points at step {}", s.step));
    }
    if s.lengths.is_empty() {
        return err("lengths", "must list at least one chain length".into());
    }
    for (k, &len) in s.lengths.iter().enumerate() {
        if !(2..=MAX_SITES).contains(&len) {
            return err(&format!("lengths[{k}]"), format!("must be in 2..={MAX_SITES}, got {len}"));
        }
    }
    if s.temperatures.is_empty() {
        return err("temperatures", "must list at least one kT".into());
    }
    for (k, &t) in s.temperatures.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return err(&format!("temperatures[{k}]"), format!("kT must be positive, got {t}"));
        }
    }
    if s.detectors.is_empty() {
        return err("detectors", "must list at least one detector".into());
    }
    for (k, w) in s.windows.iter().enumerate() {
        if !(w.lo < w.hi && w.lo >= a - 1e-9 && w.hi <= b + 1e-9) {
            return err(&format!("window[{k}]"), format!("[{}, {}] must be non-empty and inside [{a}, {b}]", w.lo, w.hi));
        }
        if w.order.is_some_and(|o| o > 2) {
            return err(&format!("window[{k}].order"), "must be 0, 1 or 2".into());
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    RunConfig::from_toml(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"

[[sweep]]
name = "xx"
family = "xy"
gamma = 0.0
parameter = "lambda"
range = [0.5, 1.5]
lengths = [4]
temperatures = [0.1]
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("test.toml"))
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(MINIMAL).unwrap();
        let s = &c.sweeps[0];
        assert_eq!(s.step, 0.01);
        assert_eq!(s.detectors, Detector::ALL.to_vec());
        assert!(s.step_filter && c.emit_plot_scripts && !c.validation);
        assert_eq!(c.step_filter, StepFilterConfig::default());
        assert_eq!(s.model_label(), "xy(gamma=0)");
    }

    #[test]
    fn tuned_coupling_must_be_absent() {
        let e = parse(&MINIMAL.replace("gamma = 0.0", "gamma = 0.0\nlambda = 1.0")).unwrap_err();
        assert!(e.to_string().contains("sweep[0].lambda"), "{e}");
    }

    #[test]
    fn foreign_coupling_rejected() {
        let e = parse(&MINIMAL.replace("gamma = 0.0", "gamma = 0.0\nfield = 1.0")).unwrap_err();
        assert!(e.to_string().contains("sweep[0].field"), "{e}");
    }

    #[test]
    fn field_errors_cite_the_sweep_header_line() {
        let e = parse(&MINIMAL.replace("lengths = [4]", "lengths = [4, 40]")).unwrap_err();
        let CliError::Field { field, line, .. } = e else { panic!("expected a field error") };
        assert_eq!(field, "sweep[0].lengths[1]");
        assert_eq!(line, Some(4));
    }

    #[test]
    fn windows_must_lie_in_range() {
        let text = format!("{MINIMAL}\n[[sweep.window]]\nlo = 0.2\nhi = 1.0\n");
        let e = parse(&text).unwrap_err();
        assert!(e.to_string().contains("sweep[0].window[0]"), "{e}");
    }

    #[test]
    fn jobs_expand_lengths() {
        let c = parse(&MINIMAL.replace("lengths = [4]", "lengths = [4, 6]")).unwrap();
        let ids: Vec<String> = c.jobs().unwrap().into_iter().map(|j| j.id).collect();
        assert_eq!(ids, ["xx-L4", "xx-L6"]);
    }

    #[test]
    fn zero_workers_rejected() {
        let e = parse(&format!("workers = 0\n{MINIMAL}")).unwrap_err();
        assert!(e.to_string().contains("workers"), "{e}");
    }
}
