//! End-to-end acceptance checks at full chain lengths. Prints one PASS/FAIL
//! line per criterion; exits nonzero on failure only when
//! `ACCEPTANCE_STRICT=1`. `ACCEPTANCE_ONLY=2,8` restricts the run.
//!
//! Single-core runtime is roughly half an hour, dominated by the L=12
//! transverse-field sweeps.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use teleqcp::models::SymmetrySectorPlan;
use teleqcp::scan::{
    filter_finite_size_steps, finite_difference, finite_size_convergence, locate_curve_extremum, locate_extremum,
    ranked_peaks, cross_detector_coincidence, Branch, Detector, DetectorCurve, ExtremumKind, QcpEstimate,
    StepFilterConfig, SweepResult, SweepSpec, Verdict,
};
use teleqcp::teleport::{external_closed_form, external_detector, internal_closed_form, internal_detector};
use teleqcp::{gibbs_state, Axis, ModelSpec, Result, Spectrum, TuningParameter};

const F: Detector = Detector::ExternalFidelity;
const D: Detector = Detector::InternalTraceDistance;

// Pinned tolerances.
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const TRIVIAL_TOL: f64 = 1e-9;
const XXZ_ZERO_FIELD_TOL: f64 = 0.10;
const XXZ_FIRST_QCP_TOL: f64 = 0.05;
const XX_TOL: f64 = 0.01 + 1e-9;
const XY_TOL: f64 = 0.01 + 1e-9;
const ISING_F_TOL: f64 = 0.01 + 1e-9;
const ISING_D_TOL: f64 = 0.02 + 1e-9;
const GAMMA_TOL: f64 = 0.01 + 1e-9;
const BLOCKING_TOL: f64 = 1e-10;
const BUDGET_L10: Duration = Duration::from_secs(5 * 60);
const BUDGET_L12: Duration = Duration::from_secs(45 * 60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn timed_sweep(spec: &SweepSpec) -> Result<(SweepResult, Duration)> {
    let start = Instant::now();
    let r = teleqcp::scan::sweep(spec)?;
    let t = start.elapsed();
    eprintln!("  swept {} L={} over {} points in {:.1} s", spec.model, spec.model.len(), r.grid.len(), t.as_secs_f64());
    Ok((r, t))
}

fn run_sweep(model: ModelSpec, p: TuningParameter, lo: f64, hi: f64, kts: &[f64]) -> Result<SweepResult> {
    Ok(timed_sweep(&SweepSpec::new(model, p, lo, hi, kts.to_vec()))?.0)
}

/// Step-filter masks for one detector, keyed like `curves_for`.
fn filtered(result: &SweepResult, det: Detector) -> Result<(Vec<DetectorCurve>, Vec<Vec<bool>>)> {
    let curves = result.curves_for(det);
    let mask = filter_finite_size_steps(&curves, &StepFilterConfig::default())?;
    Ok((curves, mask.masks))
}

fn at_kt<'a>(curves: &'a [DetectorCurve], masks: &'a [Vec<bool>], kt: f64) -> (&'a DetectorCurve, &'a [bool]) {
    let k = curves.iter().position(|c| c.kt == kt).expect("temperature is part of the sweep");
    (&curves[k], &masks[k])
}

fn span(c: &DetectorCurve) -> (f64, f64) {
    (c.grid[0], c.grid[c.grid.len() - 1])
}

fn d_extremum(c: &DetectorCurve, order: u8, window: (f64, f64), mask: Option<&[bool]>) -> Result<QcpEstimate> {
    locate_extremum(&finite_difference(c, order)?, window, mask)
}

fn c1_oracle_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let lambdas = [0.2, 0.6, 1.0, 1.4, 1.9];
    let families: [([f64; 5], fn(f64, usize) -> Result<ModelSpec>); 5] = [
        ([-1.5, -0.5, 0.3, 1.0, 1.8], |v, l| ModelSpec::xxz(v, 0.0, l)),
        ([1.0, 2.0, 3.5, 4.875, 5.5], |v, l| ModelSpec::xxz(v, 12.0, l)),
        (lambdas, |v, l| ModelSpec::xy(v, 0.0, l)),
        (lambdas, |v, l| ModelSpec::xy(v, 0.5, l)),
        (lambdas, |v, l| ModelSpec::xy(v, 1.0, l)),
    ];
    let (mut worst, mut cases) = (0.0f64, 0);
    for (values, make) in families {
        for len in [4, 6, 8] {
            for v in values {
                let model = make(v, len)?;
                for kt in [0.05, 0.5, 2.0] {
                    let local = gibbs_state(&model, kt)?.local_states()?;
                    let d = internal_detector(&local.site, &local.shifted_pair)?.value;
                    let f = external_detector(&local.shifted_pair)?.value;
                    worst = worst.max((d - internal_closed_form(&local.correlators)).abs());
                    worst = worst.max((f - external_closed_form(&local.correlators).value).abs());
                    cases += 1;
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < ORACLE_TOL && t < ORACLE_BUDGET,
        format!("{cases} cases, max |protocol - closed form| = {worst:.1e}, {:.1} s", t.as_secs_f64()),
    )
}

fn c2_c3_xxz_zero_field() -> Result<(Outcome, Outcome)> {
    let r = run_sweep(ModelSpec::xxz(0.0, 0.0, 12)?, TuningParameter::Delta, -2.0, 2.0, &[0.01, 1.0])?;
    let max_d = r.curves_for(D).iter().flat_map(|c| c.values.iter().copied()).fold(0.0, f64::max);
    let c2 = Outcome { pass: max_d < TRIVIAL_TOL, detail: format!("max D_int = {max_d:.1e}") };

    let (curves, masks) = filtered(&r, F)?;
    let (cold, mask) = at_kt(&curves, &masks, 0.01);
    let peaks = ranked_peaks(&finite_difference(cold, 1)?, Some(mask), StepFilterConfig::default().peak_fraction)?;
    let top: Vec<f64> = peaks.iter().take(2).map(|e| e.value).collect();
    let near = |target: f64| top.iter().any(|&v| (v - target).abs() <= XXZ_ZERO_FIELD_TOL);
    let c3 = Outcome {
        pass: top.len() == 2 && near(-1.0) && near(1.0),
        detail: format!("two largest |dF/dDelta| peaks at {top:?}, branch changes at {:?}", rounded(&cold.branch_changes())),
    };
    Ok((c2, c3))
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

fn c4_xxz_first_qcp() -> Result<Outcome> {
    let mut found = Vec::new();
    for len in [10, 12] {
        let r = run_sweep(ModelSpec::xxz(0.0, 12.0, len)?, TuningParameter::Delta, 1.5, 3.0, &[0.01, 0.1, 1.0])?;
        for det in Detector::ALL {
            let (curves, masks) = filtered(&r, det)?;
            for kt in [0.01, 0.1] {
                let (c, m) = at_kt(&curves, &masks, kt);
                found.push((len, det, kt, d_extremum(c, 1, span(c), Some(m))?.value));
            }
        }
    }
    let pass = found.iter().all(|e| (e.3 - 2.0).abs() <= XXZ_FIRST_QCP_TOL);
    let detail = found.iter().map(|(l, d, kt, v)| format!("L{l} {d} kT={kt}: {v}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn c5_xxz_second_qcp_trend() -> Result<Outcome> {
    let window = (3.875, 5.7);
    let mut by_det: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for len in [6, 8, 10, 12] {
        let r = run_sweep(ModelSpec::xxz(0.0, 12.0, len)?, TuningParameter::Delta, 3.5, 5.7, &[0.1, 1.0])?;
        for det in Detector::ALL {
            let (curves, masks) = filtered(&r, det)?;
            let (c, m) = at_kt(&curves, &masks, 0.1);
            by_det.entry(det.id()).or_default().push((len, d_extremum(c, 2, window, Some(m))?.value));
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for (det, seq) in &by_det {
        let dist: Vec<f64> = seq.iter().map(|(_, v)| (v - 4.875).abs()).collect();
        pass &= dist.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!("{det}: {}", seq.iter().map(|(l, v)| format!("L{l}={v}")).collect::<Vec<_>>().join(" ")));
    }
    outcome(pass, detail.join("; "))
}

fn c6_c10_xx() -> Result<(Outcome, Outcome)> {
    let xx = |len| ModelSpec::xy(0.0, 0.0, len);
    let r10 = run_sweep(xx(10)?, TuningParameter::Lambda, 0.5, 1.5, &[0.1])?;
    let r12 = run_sweep(xx(12)?, TuningParameter::Lambda, 0.5, 1.5, &[0.01, 0.1])?;
    let mut found = Vec::new();
    for (len, r) in [(10, &r10), (12, &r12)] {
        let c = r.curve(D, 0.1).expect("swept");
        found.push((len, d_extremum(c, 1, span(c), None)?.value));
    }
    let c6 = Outcome {
        pass: found.iter().all(|(_, v)| (v - 1.0).abs() <= XX_TOL),
        detail: found.iter().map(|(l, v)| format!("L{l}: {v}")).collect::<Vec<_>>().join(", "),
    };

    let (f, d) = (r12.curve(F, 0.01).expect("swept"), r12.curve(D, 0.01).expect("swept"));
    let swaps: Vec<f64> = f
        .branch_segments()
        .windows(2)
        .filter(|w| {
            let (a, b) = (f.branches[w[0].start], f.branches[w[1].start]);
            let axes = [a, b].map(|x| match x {
                Branch::Correlator(axis) => Some(axis),
                Branch::KinkSigns(_) => None,
            });
            axes.contains(&Some(Axis::X)) && axes.contains(&Some(Axis::Z))
        })
        .map(|w| 0.5 * (f.grid[w[1].start - 1] + f.grid[w[1].start]))
        .collect();
    let verdict = |window: (f64, f64), order: u8| -> Result<(Verdict, f64, f64)> {
        let (ef, ed) = (d_extremum(f, order, window, None)?, d_extremum(d, order, window, None)?);
        Ok((cross_detector_coincidence(&ef, f, &ed, d)?.verdict, ef.value, ed.value))
    };
    let qcp = verdict((0.9, 1.1), 1)?;
    // The xx/zz swap above the critical point, where F_ext has a cusp. A cusp
    // is a jump of the first derivative, so it is located by the second.
    let swap = swaps.iter().copied().find(|&s| s > 1.05 && s < 1.45);
    let (cusp_ok, cusp_detail) = match swap {
        Some(s) => {
            let v = verdict((s - 0.1, s + 0.1), 2)?;
            (v.0 == Verdict::SuspectOptimizationCusp, format!("xx/zz swap at {s:.3}: {} (F {}, D {})", v.0, v.1, v.2))
        }
        None => (false, format!("no xx/zz swap above the critical point; swaps at {:?}", rounded(&swaps))),
    };
    let c10 = Outcome {
        pass: qcp.0 == Verdict::QcpConsistent && cusp_ok,
        detail: format!("QCP window: {} (F {}, D {}); {cusp_detail}", qcp.0, qcp.1, qcp.2),
    };
    Ok((c6, c10))
}

fn c7_xy_anisotropic() -> Result<Outcome> {
    let r = run_sweep(ModelSpec::xy(0.0, 0.5, 12)?, TuningParameter::Lambda, 0.85, 1.1, &[0.01])?;
    let c = r.curve(D, 0.01).expect("swept");
    let v = d_extremum(c, 1, span(c), None)?.value;
    outcome((v - 0.98).abs() <= XY_TOL, format!("dD_int extremum at {v}"))
}

/// Full Ising sweep timed at L=10 and L=12; returns the L=12 result.
fn c12_performance() -> Result<(Outcome, SweepResult)> {
    let kts = [0.01, 0.1, 0.2, 0.3, 0.4, 0.5];
    let spec = |len| -> Result<SweepSpec> { Ok(SweepSpec::new(ModelSpec::xy(0.0, 1.0, len)?, TuningParameter::Lambda, 0.0, 2.0, kts.to_vec())) };
    let (_, t10) = timed_sweep(&spec(10)?)?;
    let (r12, t12) = timed_sweep(&spec(12)?)?;

    let model = ModelSpec::xy(0.8, 0.5, 8)?;
    let blocked = Arc::new(Spectrum::compute(&model)?);
    let dense = Arc::new(Spectrum::compute_with_plan(&model, &SymmetrySectorPlan::unblocked(8))?);
    let (mut eb, mut ed) = (blocked.energies(), dense.energies());
    eb.sort_by(f64::total_cmp);
    ed.sort_by(f64::total_cmp);
    let mut gap = eb.iter().zip(&ed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for kt in [0.05, 1.0] {
        let a = blocked.thermal(kt)?.reduced_state(&[1, 2, 3])?;
        let b = dense.thermal(kt)?.reduced_state(&[1, 2, 3])?;
        gap = gap.max(a.max_abs_diff(&b));
    }
    let pass = t10 < BUDGET_L10 && t12 < BUDGET_L12 && eb.len() == ed.len() && gap < BLOCKING_TOL;
    let detail = format!(
        "L10 {:.1} s, L12 {:.1} s on {} thread(s); blocked vs unblocked at L8 differ by {gap:.1e}",
        t10.as_secs_f64(),
        t12.as_secs_f64(),
        rayon::current_num_threads()
    );
    Ok((Outcome { pass, detail }, r12))
}

fn c8_ising(r: &SweepResult) -> Result<Outcome> {
    let window = (0.7, 1.3);
    let f = d_extremum(r.curve(F, 0.01).expect("swept"), 1, window, None)?.value;
    let d = d_extremum(r.curve(D, 0.01).expect("swept"), 2, window, None)?.value;
    outcome(
        (f - 0.97).abs() <= ISING_F_TOL && (d - 0.98).abs() <= ISING_D_TOL,
        format!("dF_ext extremum at {f} (0.97 +- 0.01), d2D_int extremum at {d} (0.98 +- 0.02)"),
    )
}

fn c9_gamma() -> Result<Outcome> {
    let r = run_sweep(ModelSpec::xy(1.5, 0.0, 12)?, TuningParameter::Gamma, -0.1, 0.1, &[0.05, 0.5])?;
    let mut found = Vec::new();
    for kt in [0.05, 0.5] {
        let f = r.curve(F, kt).expect("swept");
        let d = r.curve(D, kt).expect("swept");
        found.push((kt, locate_curve_extremum(f, span(f), ExtremumKind::Minimum)?.value, locate_curve_extremum(d, span(d), ExtremumKind::Maximum)?.value));
    }
    let pass = found.iter().all(|&(_, f, d)| f.abs() <= GAMMA_TOL && d.abs() <= GAMMA_TOL);
    let detail = found.iter().map(|(kt, f, d)| format!("kT={kt}: min F at {f}, max D at {d}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn c11_even_odd() -> Result<Outcome> {
    let mut curves = BTreeMap::new();
    for len in 4..=12 {
        let mut spec = SweepSpec::new(ModelSpec::xxz(0.0, 0.0, len)?, TuningParameter::Delta, -2.0, 2.0, vec![1.0]);
        spec.step = 0.05;
        spec.detectors = vec![F];
        let r = teleqcp::scan::sweep(&spec)?;
        curves.insert(len, r.correlators[0].iter().map(|c| c.xx).collect::<Vec<f64>>());
    }
    let conv = finite_size_convergence(&curves)?;
    let ahead = conv.even_ahead_of_odd(12) == Some(true);
    let d = |l| conv.distance(l).unwrap_or(f64::NAN);
    outcome(
        ahead,
        format!("d(10,12) = {:.3e}, d(9,11) = {:.3e}, even lengths monotone: {}", d(12), d(11), conv.monotone(true)),
    )
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |n: u32| only.as_ref().map_or(true, |o| o.contains(&n));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut results: Vec<(u32, &str, Result<Outcome>)> = Vec::new();
    let mut record = |n: u32, name: &'static str, r: Result<Outcome>| {
        let line = match &r {
            Ok(o) => format!("{} {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => format!("FAIL {n:>2} {name}: error: {e}"),
        };
        println!("{line}");
        results.push((n, name, r));
    };
    let split = |r: Result<(Outcome, Outcome)>| match r {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(e.clone()), Err(e)),
    };

    if want(1) {
        record(1, "oracle equivalence", c1_oracle_equivalence());
    }
    if want(2) || want(3) {
        let (a, b) = split(c2_c3_xxz_zero_field());
        record(2, "xxz h=0 internal detector vanishes", a);
        record(3, "xxz h=0 critical points", b);
    }
    if want(4) {
        record(4, "xxz h=12 first critical point", c4_xxz_first_qcp());
    }
    if want(5) {
        record(5, "xxz h=12 second critical point trend", c5_xxz_second_qcp_trend());
    }
    if want(6) || want(10) {
        let (a, b) = split(c6_c10_xx());
        record(6, "xx critical point", a);
        record(10, "cusp classification", b);
    }
    if want(7) {
        record(7, "xy gamma=0.5 critical point", c7_xy_anisotropic());
    }
    if want(8) || want(12) {
        match c12_performance() {
            Ok((perf, r12)) => {
                record(8, "ising critical point", c8_ising(&r12));
                record(12, "performance and blocking", Ok(perf));
            }
            Err(e) => {
                record(8, "ising critical point", Err(e.clone()));
                record(12, "performance and blocking", Err(e));
            }
        }
    }
    if want(9) {
        record(9, "anisotropy transition", c9_gamma());
    }
    if want(11) {
        record(11, "even/odd finite-size convergence", c11_even_odd());
    }

    let passed = results.iter().filter(|r| r.2.as_ref().is_ok_and(|o| o.pass)).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
