//! Batch execution of a [`RunConfig`]: jobs run one after another inside a
//! dedicated worker pool that parallelizes sweep points; results are written
//! by a single writer once every job has finished.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use teleqcp::scan::{analyze, sweep, AnalysisOptions, SweepAnalysis, SweepResult, SweepSpec};

use crate::config::RunConfig;
use crate::error::{CliError, Result, EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL};
use crate::plot;
use crate::tables::{Tables, MANIFEST};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "TELEQCP_WORKERS";

#[derive(Debug)]
pub struct JobReport {
    pub id: String,
    /// Index of the config entry the job was expanded from.
    pub entry: usize,
    pub model: String,
    pub spec: SweepSpec,
    pub result: Option<SweepResult>,
    pub analysis: Option<SweepAnalysis>,
    pub error: Option<teleqcp::Error>,
    pub wall_seconds: f64,
}

impl JobReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub jobs: Vec<JobReport>,
    pub workers: usize,
    pub config_sha256: String,
    /// Files written, relative to the output directory.
    pub written: Vec<PathBuf>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &JobReport> {
        self.jobs.iter().filter(|j| j.failed())
    }

    /// 0 when every job succeeded, 2 when any failure is a numerical
    /// cross-check, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        let mut code = EXIT_OK;
        for j in self.failures() {
            if j.error.as_ref().is_some_and(|e| e.is_numerical()) {
                return EXIT_NUMERICAL;
            }
            code = EXIT_PARTIAL;
        }
        code
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Takes precedence over the environment and the config.
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Skip tables, manifest and plot scripts.
    pub dry: bool,
}

/// Worker count from, in order of precedence, the explicit override, the
/// environment and the config; `None` leaves rayon's default.
pub fn resolve_workers(explicit: Option<usize>, config: &RunConfig) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return if n == 0 { Err(CliError::field("--workers", "must be at least 1")) } else { Ok(Some(n)) };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::field(WORKERS_ENV, format!("must be a positive integer, got {v:?}"))),
        };
    }
    Ok(config.workers)
}

pub fn config_hash(config: &RunConfig) -> Result<String> {
    let canonical = config.to_toml()?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn run_job(spec: &SweepSpec, options: &AnalysisOptions) -> (Option<SweepResult>, Option<SweepAnalysis>, Option<teleqcp::Error>) {
    let result = match sweep(spec) {
        Ok(r) => r,
        Err(e) => return (None, None, Some(e)),
    };
    match analyze(spec, &result, options) {
        Ok(a) => (Some(result), Some(a), None),
        Err(e) => (Some(result), None, Some(e)),
    }
}

pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let jobs = config.jobs()?;
    let workers = resolve_workers(options.workers, config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Other(format!("cannot start worker pool: {e}")))?;

    let mut reports = Vec::with_capacity(jobs.len());
    for job in jobs {
        let entry = &config.sweeps[job.entry];
        let analysis = AnalysisOptions {
            step_filter: job.step_filter.then_some(config.step_filter),
            auto_windows: job.auto_windows,
            ..AnalysisOptions::default()
        };
        let start = Instant::now();
        let (result, analysis, error) = pool.install(|| run_job(&job.spec, &analysis));
        let wall_seconds = start.elapsed().as_secs_f64();
        match &error {
            Some(e) => eprintln!("{}: failed after {wall_seconds:.2} s: {e}", job.id),
            None => eprintln!("{}: {} points in {wall_seconds:.2} s", job.id, job.spec.grid().len()),
        }
        reports.push(JobReport {
            id: job.id,
            entry: job.entry,
            model: entry.model_label(),
            spec: job.spec,
            result,
            analysis,
            error,
            wall_seconds,
        });
    }

    let mut report = RunReport {
        jobs: reports,
        workers: pool.current_num_threads(),
        config_sha256: config_hash(config)?,
        written: Vec::new(),
    };
    if !options.dry {
        let dir = options.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
        report.written = write_bundle(&dir, config, &report)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct ManifestJob<'a> {
    id: &'a str,
    model: &'a str,
    len: usize,
    points: usize,
    wall_seconds: f64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    filter_insufficient: bool,
    skipped_windows: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_sha256: &'a str,
    tool_version: &'static str,
    library_version: &'static str,
    workers: usize,
    validation: bool,
    total_wall_seconds: f64,
    jobs: Vec<ManifestJob<'a>>,
    failures: Vec<&'a str>,
}

fn write_bundle(dir: &Path, config: &RunConfig, report: &RunReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let tables = Tables::build(&report.jobs)?;
    tables.write(dir)?;
    let mut written: Vec<PathBuf> = crate::tables::ALL.iter().map(PathBuf::from).collect();

    let manifest = Manifest {
        config_sha256: &report.config_sha256,
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: teleqcp::VERSION,
        workers: report.workers,
        validation: config.validation,
        total_wall_seconds: report.jobs.iter().map(|j| j.wall_seconds).sum(),
        jobs: report
            .jobs
            .iter()
            .map(|j| ManifestJob {
                id: &j.id,
                model: &j.model,
                len: j.spec.model.len(),
                points: j.spec.grid().len(),
                wall_seconds: j.wall_seconds,
                status: if j.failed() { "failed" } else { "ok" },
                error: j.error.as_ref().map(|e| e.to_string()),
                filter_insufficient: j.analysis.as_ref().is_some_and(|a| a.filter_insufficient),
                skipped_windows: j
                    .analysis
                    .iter()
                    .flat_map(|a| &a.skipped)
                    .map(|(d, w, kt, why)| format!("{d} [{}, {}] kT={kt}: {why}", w.lo, w.hi))
                    .collect(),
            })
            .collect(),
        failures: report.failures().map(|j| j.id.as_str()).collect(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(format!("manifest: {e}")))?;
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    written.push(PathBuf::from(MANIFEST));

    if config.emit_plot_scripts {
        let index = plot::PlotIndex::from_reports(config, &report.jobs);
        written.extend(plot::emit_plot_scripts(dir, &index)?);
    }
    Ok(written)
}
