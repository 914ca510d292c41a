//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.

use hadamard_flow::harness::config::bundled;
use hadamard_flow::harness::verify::{run_suite, Check, Reports};
use hadamard_flow::harness::{run_scenario, Pipeline, Scenario, Suite, Verdict};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

const GEOMETRY_FLAT: f64 = 1e-6;
const GEOMETRY_CURVED: f64 = 1e-4;
const GEOMETRY_SECONDS: f64 = 30.0;
const ORACLE: f64 = 1e-6;
const ORACLE_SECONDS: f64 = 120.0;
const IEPS: f64 = 1e-6;
const ANTI_FLAT: f64 = 1e-6;
const ANTI_CURVED: f64 = 1e-4;
const TIP: f64 = 1e-6;
const BAND_FRACTION: f64 = 0.8;
const SCALING_SECONDS: f64 = 600.0;
const CLOSURE: f64 = 1e-4;
const CURVATURE: f64 = 1e-4;
const SYMMETRY: f64 = 1e-4;

/// Solved pipeline plus the wall time of the solve.
struct Solved {
    p: Pipeline,
    seconds: f64,
}

impl Solved {
    fn new(s: &Scenario) -> Self {
        let start = Instant::now();
        let p = Pipeline::solved(s).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        Self {
            p,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    /// Checks of one suite and the time the suite took.
    fn suite(&self, suite: Suite) -> (Vec<Check>, f64) {
        let start = Instant::now();
        let mut reports = Reports::default();
        let verdicts: Vec<Verdict> = run_suite(&self.p, suite, &mut reports).unwrap_or_else(|e| panic!("{}: {e}", suite.name()));
        let checks = verdicts.into_iter().flat_map(|v| v.checks).collect();
        (checks, start.elapsed().as_secs_f64())
    }
}

fn worst<'a>(checks: &'a [Check], keep: impl Fn(&str) -> bool) -> f64 {
    let picked: Vec<&'a Check> = checks.iter().filter(|c| keep(&c.name)).collect();
    assert!(!picked.is_empty(), "no checks selected");
    picked.iter().map(|c| c.measured).fold(f64::NEG_INFINITY, f64::max)
}

fn least(checks: &[Check], keep: impl Fn(&str) -> bool) -> f64 {
    let picked: Vec<f64> = checks.iter().filter(|c| keep(&c.name)).map(|c| c.measured).collect();
    assert!(!picked.is_empty(), "no checks selected");
    picked.into_iter().fold(f64::INFINITY, f64::min)
}

struct Ledger {
    failed: Vec<u8>,
}

impl Ledger {
    fn report(&mut self, id: u8, passed: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failed.push(id);
        }
    }
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn main() -> ExitCode {
    let mut ledger = Ledger { failed: Vec::new() };
    let flat = Solved::new(&bundled("minkowski_kg").unwrap());
    let flrw = Solved::new(&bundled("flrw_kg").unwrap());

    let (g_flat, t_flat) = flat.suite(Suite::GeometryIdentities);
    let (g_flrw, t_flrw) = flrw.suite(Suite::GeometryIdentities);
    let (gf, gc) = (worst(&g_flat, |_| true), worst(&g_flrw, |_| true));
    let secs = t_flat.max(t_flrw);
    ledger.report(
        1,
        gf < GEOMETRY_FLAT && gc < GEOMETRY_CURVED && secs < GEOMETRY_SECONDS,
        format!("gradient identity minkowski {gf:.2e} < {GEOMETRY_FLAT:e}, flrw {gc:.2e} < {GEOMETRY_CURVED:e}, {secs:.1}s < {GEOMETRY_SECONDS}s"),
    );

    let mut oracle = 0.0f64;
    let mut oracle_secs = 0.0f64;
    for mass in [1.0, 2.0] {
        let mut s = bundled("minkowski_kg").unwrap();
        s.field.mass = mass;
        let start = Instant::now();
        let mut p = Pipeline::new(&s).unwrap();
        p.solve_transport().unwrap();
        let mut reports = Reports::default();
        let checks: Vec<Check> = run_suite(&p, Suite::CoefficientOracles, &mut reports)
            .unwrap()
            .into_iter()
            .flat_map(|v| v.checks)
            .collect();
        oracle_secs = oracle_secs.max(start.elapsed().as_secs_f64());
        let m = worst(&checks, |n| n.ends_with("_flat_oracle"));
        println!("  m = {mass}: worst oracle spread {m:.2e}");
        oracle = oracle.max(m);
    }
    ledger.report(
        2,
        oracle < ORACLE && oracle_secs < ORACLE_SECONDS,
        format!("flat coefficient oracle, m in {{1, 2}}: {oracle:.2e} < {ORACLE:e}, {oracle_secs:.1}s < {ORACLE_SECONDS}s"),
    );

    let (f_flat, _) = flat.suite(Suite::FHierarchy);
    let (f_flrw, _) = flrw.suite(Suite::FHierarchy);
    let ieps = worst(&f_flat, |n| n.ends_with("ieps_recovery"));
    ledger.report(3, ieps < IEPS, format!("f levels [-1]..[2], {{1}}, {{2}} equal x0 - y0 on the cone: {ieps:.2e} < {IEPS:e}"));

    let af = worst(&f_flat, |n| n.ends_with(".antisymmetry"));
    let ac = worst(&f_flrw, |n| n.ends_with(".antisymmetry"));
    ledger.report(
        4,
        af < ANTI_FLAT && ac < ANTI_CURVED,
        format!("antisymmetry minkowski {af:.2e} < {ANTI_FLAT:e}, flrw {ac:.2e} < {ANTI_CURVED:e}"),
    );

    let tip = worst(&f_flat, |n| n.ends_with("_tip")).max(worst(&f_flrw, |n| n.ends_with("_tip")));
    let sign = least(&f_flat, |n| n.ends_with("_sign")).min(least(&f_flrw, |n| n.ends_with("_sign")));
    ledger.report(
        5,
        tip < TIP && sign >= 1.0,
        format!("tip value {tip:.2e} < {TIP:e}, sign agreement {:.1}% of samples", 100.0 * sign),
    );

    let (e_flat, te_flat) = flat.suite(Suite::EpsilonScaling);
    let (e_flrw, te_flrw) = flrw.suite(Suite::EpsilonScaling);
    let frac_flat = least(&e_flat, |n| n.ends_with("fraction_in_band"));
    let frac_flrw = least(&e_flrw, |n| n.ends_with("fraction_in_band"));
    let secs = (flat.seconds + te_flat).max(flrw.seconds + te_flrw);
    ledger.report(
        6,
        frac_flat >= BAND_FRACTION && frac_flrw >= BAND_FRACTION && secs < SCALING_SECONDS,
        format!(
            "exponent in [1.8, 2.2] at minkowski {:.0}%, flrw {:.0}% (need {:.0}%), {secs:.1}s < {SCALING_SECONDS}s",
            100.0 * frac_flat,
            100.0 * frac_flrw,
            100.0 * BAND_FRACTION
        ),
    );

    let (c_flat, _) = flat.suite(Suite::CoefficientOracles);
    let (c_flrw, _) = flrw.suite(Suite::CoefficientOracles);
    let closure_of = |checks: &[Check]| worst(checks, |n| n.ends_with("_closure"));
    let transport_of = |checks: &[Check]| worst(checks, |n| n.ends_with("_transport"));
    let cx = closure_of(&c_flat).max(closure_of(&c_flrw));
    let cf = transport_of(&f_flat).max(transport_of(&f_flrw));
    ledger.report(
        7,
        cx < CLOSURE && cf < CLOSURE,
        format!("re-substituted residual X/Y {cx:.2e}, f {cf:.2e} < {CLOSURE:e}"),
    );

    let dirac_flat = Solved::new(&bundled("minkowski_dirac").unwrap());
    let dirac_flrw = Solved::new(&bundled("flrw_dirac").unwrap());
    let (d_flat, _) = dirac_flat.suite(Suite::DiracSymmetry);
    let (d_flrw, _) = dirac_flrw.suite(Suite::DiracSymmetry);
    let gamma = worst(&d_flat, |n| n == "gamma_anticommutator");
    let curvature = worst(&d_flat, |n| n == "mu_curvature_oracle").max(worst(&d_flrw, |n| n == "mu_curvature_oracle"));
    let sym = worst(&d_flat, |n| n.ends_with("fsymm")).max(worst(&d_flrw, |n| n.ends_with("fsymm")));
    let band = least(&d_flat, |n| n.ends_with("dirac_fraction_in_band"));
    ledger.report(
        8,
        gamma == 0.0 && curvature < CURVATURE && sym < SYMMETRY && band >= BAND_FRACTION,
        format!(
            "gamma defect {gamma:e}, curvature {curvature:.2e} < {CURVATURE:e}, symmetry {sym:.2e} < {SYMMETRY:e}, dirac exponent in band {:.0}%",
            100.0 * band
        ),
    );

    let scenario = bundled("minkowski_kg").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&scenario, Some(a.path())).unwrap();
    run_scenario(&scenario, Some(b.path())).unwrap();
    let (ca, cb) = (csv_bytes(a.path()), csv_bytes(b.path()));
    ledger.report(
        9,
        !ca.is_empty() && ca == cb,
        format!("two independent runs of {} wrote {} byte-identical CSV files", scenario.name, ca.len()),
    );

    if ledger.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {:?}", ledger.failed);
        ExitCode::FAILURE
    }
}
