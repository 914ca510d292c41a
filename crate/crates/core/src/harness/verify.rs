//! Invariant suites over a solved pipeline.

use super::config::{FieldKind, Scenario};
use super::pipeline::Pipeline;
use crate::dirac::{
    anticommutator_defect, curvature_oracle_defect, dirac_scaling, gamma_matrices, symmetry_check, DiracScalingPoint,
    ScalarKernel, SpinorFrame, SymmetryReport,
};
use crate::error::{Error, Result};
use crate::expansion::{minkowski_ieps_crosscheck, scaling_points, scaling_study, ExpansionSource, FlatAnalytic, NumericLocal, ResidualReport};
use crate::geometry::geodesic::{exp_map, shoot};
use crate::geometry::{Point, SolverConfig};
use crate::regularization::{check_antisymmetry, direction_set, AntisymmetryReport};
use crate::transport::{diagonal_values, CoefficientKind, Y0Choice};
use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    GeometryIdentities,
    CoefficientOracles,
    FHierarchy,
    EpsilonScaling,
    DiracSymmetry,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::GeometryIdentities,
        Suite::CoefficientOracles,
        Suite::FHierarchy,
        Suite::EpsilonScaling,
        Suite::DiracSymmetry,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::GeometryIdentities => "geometry-identities",
            Suite::CoefficientOracles => "coefficient-oracles",
            Suite::FHierarchy => "f-hierarchy",
            Suite::EpsilonScaling => "epsilon-scaling",
            Suite::DiracSymmetry => "dirac-symmetry",
            Suite::All => "all",
        }
    }

    /// The suites this one stands for that apply to the scenario.
    pub fn expand(&self, scenario: &Scenario) -> Vec<Suite> {
        match self {
            Suite::All => Suite::EACH
                .into_iter()
                .filter(|s| *s != Suite::DiracSymmetry || scenario.field.kind == FieldKind::Dirac)
                .collect(),
            s => vec![*s],
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Below,
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, tolerance: f64) -> Self {
        let passed = match relation {
            Relation::Below => measured < tolerance,
            Relation::AtMost => measured <= tolerance,
            Relation::AtLeast => measured >= tolerance,
        };
        Self {
            name: name.into(),
            measured,
            tolerance,
            relation,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: String,
    pub scenario: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Structured by-products of the suites, written out by `run`.
#[derive(Debug, Default)]
pub struct Reports {
    pub residual: Vec<(usize, ResidualReport)>,
    pub antisymmetry: Vec<(usize, AntisymmetryReport)>,
    pub symmetry: Vec<(usize, SymmetryReport)>,
    pub dirac_scaling: Vec<(usize, Vec<DiracScalingPoint>)>,
}

pub fn run_suite(p: &Pipeline, suite: Suite, reports: &mut Reports) -> Result<Vec<Verdict>> {
    suite
        .expand(&p.scenario)
        .into_iter()
        .map(|s| {
            let checks = match s {
                Suite::GeometryIdentities => geometry_identities(p)?,
                Suite::CoefficientOracles => coefficient_oracles(p)?,
                Suite::FHierarchy => f_hierarchy(p, reports)?,
                Suite::EpsilonScaling => epsilon_scaling(p, reports)?,
                Suite::DiracSymmetry => dirac_symmetry(p, reports)?,
                Suite::All => unreachable!("expanded above"),
            };
            Ok(Verdict {
                suite: s.name().to_string(),
                scenario: p.scenario.name.clone(),
                passed: checks.iter().all(|c| c.passed),
                checks,
            })
        })
        .collect()
}

/// Build what the suite needs and run it.
pub fn verify(scenario: &Scenario, suite: Suite) -> Result<(Vec<Verdict>, Reports)> {
    if suite == Suite::DiracSymmetry && scenario.field.kind != FieldKind::Dirac {
        return Err(Error::config("field.kind", "dirac-symmetry needs a dirac scenario"));
    }
    let mut p = Pipeline::new(scenario)?;
    if suite != Suite::GeometryIdentities {
        p.solve_transport()?;
        if suite != Suite::CoefficientOracles {
            p.solve_cones()?;
        }
    }
    let mut reports = Reports::default();
    let verdicts = run_suite(&p, suite, &mut reports)?;
    Ok((verdicts, reports))
}

fn rng(p: &Pipeline, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(p.scenario.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn random_unit(r: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Seeded cone pairs (ω, t), alternating sheets.
pub fn cone_pairs(p: &Pipeline, salt: u64) -> Vec<(Vector3<f64>, f64)> {
    let mut r = rng(p, salt);
    let t_max = p.scenario.cone.t_max;
    (0..p.scenario.cone.pairs)
        .map(|i| {
            let w = random_unit(&mut r);
            let t = r.gen_range(0.15 * t_max..0.8 * t_max);
            (w, if i % 2 == 0 { t } else { -t })
        })
        .collect()
}

fn geometry_identities(p: &Pipeline) -> Result<Vec<Check>> {
    let metric = &p.metric;
    let cfg = SolverConfig::default();
    let mut r = rng(p, 1);
    let bases = &p.scenario.base_points;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let b = Point::from(bases[i % bases.len()]);
        let y = b + Vector4::from_fn(|_, _| r.gen_range(-0.2..0.2));
        let x = y + Vector4::from_fn(|_, _| r.gen_range(-0.35..0.35));
        let (v, _, _) = shoot(&y, &x, metric, &cfg, None)?;
        let gamma = v.dot(&(metric.metric(&y) * v));
        let (end, tangent) = exp_map(metric, &y, &v, &cfg);
        let grad = tangent * 2.0;
        let norm = grad.dot(&(metric.metric(&end) * grad));
        worst = worst.max((norm - 4.0 * gamma).abs() / (1.0 + gamma.abs()));
    }
    let tol = if metric.is_flat() {
        p.scenario.tolerances.geometry_flat
    } else {
        p.scenario.tolerances.geometry_curved
    };
    Ok(vec![Check::new("gradient_identity_random_pairs", worst, Relation::Below, tol)])
}

fn closure_points(radius: f64) -> Vec<Vector4<f64>> {
    let mut pts = vec![Vector4::zeros()];
    for (i, w) in direction_set(8).iter().enumerate() {
        let s = 0.4 * radius;
        let t = if i % 2 == 0 { 0.5 * s } else { -0.3 * s };
        pts.push(Vector4::new(t, s * w[0], s * w[1], s * w[2]));
    }
    pts
}

fn coefficient_oracles(p: &Pipeline) -> Result<Vec<Check>> {
    let tol = p.scenario.tolerances;
    let n = p.scenario.transport.truncation as i32;
    let mut checks = Vec::new();
    for b in &p.bases {
        let sol = &b.transport;
        let tag = format!("b{}", b.index);
        if p.metric.is_flat() && p.scenario.y0 == Y0Choice::Zero {
            let oracle = FlatAnalytic {
                mu: sol.mu.eval(&p.metric, &b.base),
                c: 1.0,
                truncation: n as usize,
                y0: 0.0,
            };
            let (x, y) = oracle.coefficients();
            for k in -1..=n {
                let spread = sol.table(CoefficientKind::X(k))?.spread(x[(k + 1) as usize]);
                checks.push(Check::new(format!("{tag}.X{k}_flat_oracle"), spread, Relation::Below, tol.coefficient));
            }
            for k in 0..=n {
                let spread = sol.table(CoefficientKind::Y(k))?.spread(y[k as usize]);
                checks.push(Check::new(format!("{tag}.Y{k}_flat_oracle"), spread, Relation::Below, tol.coefficient));
            }
        } else {
            for k in 0..=n {
                let (xd, yd) = diagonal_values(k, sol, &p.scenario.y0)?;
                let dx = (sol.at_base(CoefficientKind::X(k))? - xd).abs();
                let dy = (sol.at_base(CoefficientKind::Y(k))? - yd).abs();
                checks.push(Check::new(format!("{tag}.X{k}_diagonal"), dx, Relation::Below, tol.coefficient));
                checks.push(Check::new(format!("{tag}.Y{k}_diagonal"), dy, Relation::Below, tol.coefficient));
            }
        }
        checks.push(Check::new(format!("{tag}.X-1_van_vleck"), sol.vleck_defect(), Relation::Below, tol.coefficient));
        let kinds = (-1..=n).map(CoefficientKind::X).chain((1..=n).map(CoefficientKind::Y));
        for kind in kinds {
            let mut worst = 0.0f64;
            for xi in closure_points(sol.patch.radius()) {
                let c = sol.closure_residual(kind, &xi, p.scenario.expansion.fd_step)?;
                worst = worst.max(c.residual.abs() / (1.0 + c.value.abs()));
            }
            checks.push(Check::new(format!("{tag}.{kind}_closure"), worst, Relation::Below, tol.closure));
        }
    }
    Ok(checks)
}

fn f_hierarchy(p: &Pipeline, reports: &mut Reports) -> Result<Vec<Check>> {
    let tol = p.scenario.tolerances;
    let mut checks = Vec::new();
    for b in &p.bases {
        let cone = b.cone()?;
        let tag = format!("b{}", b.index);
        let y_time = p.metric.time_function(&b.base);
        for &level in &cone.levels {
            let table = cone.table(level)?;
            let residual = cone.transport_residual(level)?;
            checks.push(Check::new(format!("{tag}.f{level}_transport"), residual, Relation::Below, tol.f_transport));
            checks.push(Check::new(format!("{tag}.f{level}_tip"), table.tip_bound(0.0), Relation::Below, tol.f_tip));
            let agree = table.sign_agreement(|s| {
                let k = cone.transport.patch.generator(&Vector3::from(s.omega)).expect("sampled direction");
                p.metric.time_function(&cone.transport.patch.chart_point(&(k * s.t))) - y_time
            });
            checks.push(Check::new(format!("{tag}.f{level}_sign"), agree, Relation::AtLeast, 1.0));
        }
        let pairs = cone_pairs(p, 2 + b.index as u64);
        let anti = check_antisymmetry(cone, &pairs, &p.scenario.transport_config(), p.mu, false)?;
        let atol = if p.metric.is_flat() {
            tol.antisymmetry_flat
        } else {
            tol.antisymmetry_curved
        };
        checks.push(Check::new(format!("{tag}.antisymmetry"), anti.worst(), Relation::Below, atol));
        reports.antisymmetry.push((b.index, anti));
        if p.metric.is_flat() {
            let ieps = minkowski_ieps_crosscheck(cone, 1e-2, tol.ieps)?;
            let worst = ieps.level_deviation.iter().map(|(_, d)| *d).fold(ieps.shift_mismatch, f64::max);
            checks.push(Check::new(format!("{tag}.ieps_recovery"), worst, Relation::Below, tol.ieps));
        }
    }
    Ok(checks)
}

fn epsilon_scaling(p: &Pipeline, reports: &mut Reports) -> Result<Vec<Check>> {
    let e = &p.scenario.expansion;
    let mut checks = Vec::new();
    for b in &p.bases {
        let cone = b.cone()?;
        let points = scaling_points(e.scaling_points, e.gamma_ratio, e.time_range);
        let source = |xi: &Vector4<f64>| -> Result<Box<dyn ExpansionSource>> { Ok(Box::new(NumericLocal::around(cone, xi)?)) };
        let report = scaling_study(&points, &e.epsilon, e.fd_step, e.band, e.required_fraction, &source)?;
        checks.push(Check::new(
            format!("b{}.fraction_in_band", b.index),
            report.fraction_within,
            Relation::AtLeast,
            e.required_fraction,
        ));
        reports.residual.push((b.index, report));
    }
    Ok(checks)
}

fn dirac_symmetry(p: &Pipeline, reports: &mut Reports) -> Result<Vec<Check>> {
    let tol = p.scenario.tolerances;
    let frame = SpinorFrame::new(&p.metric)?;
    let mass = p.scenario.field.mass;
    let mut checks = vec![Check::new("gamma_anticommutator", anticommutator_defect(&gamma_matrices()), Relation::AtMost, 0.0)];
    let mut r = rng(p, 3);
    let mut probe: Vec<Point> = p.bases.iter().map(|b| b.base).collect();
    for b in &p.bases {
        for _ in 0..4 {
            probe.push(b.base + Vector4::from_fn(|_, _| r.gen_range(-0.2..0.2)));
        }
    }
    checks.push(Check::new("mu_curvature_oracle", curvature_oracle_defect(&p.metric, &probe), Relation::Below, tol.curvature));
    let e = &p.scenario.expansion;
    for b in &p.bases {
        let tag = format!("b{}", b.index);
        let cone = b.cone()?;
        let pairs = cone_pairs(p, 2 + b.index as u64);
        let sym = symmetry_check(cone, &pairs, &p.scenario.transport_config(), p.mu, tol.symmetry, false)?;
        checks.push(Check::new(format!("{tag}.fsymm"), sym.worst(), Relation::Below, tol.symmetry));
        reports.symmetry.push((b.index, sym));
        if !p.metric.is_flat() {
            continue;
        }
        let points = scaling_points(e.dirac_points, e.gamma_ratio, e.time_range);
        let mut rows = Vec::new();
        let mut worst_identity = 0.0f64;
        for xi in &points {
            let src = NumericLocal::around(cone, xi)?;
            let kernel = ScalarKernel::flat(&src, b.base);
            let x = b.base + xi;
            let t = crate::dirac::SpinorKernel {
                value: kernel.matrix(&x, e.epsilon[0])?,
                kind: crate::dirac::KernelKind::TEps,
            };
            worst_identity = worst_identity.max(t.offdiagonal_norm());
            let rep = dirac_scaling(&frame, mass, &kernel, &[x], &e.epsilon, e.fd_step, e.band, 1.0)?;
            rows.extend(rep.points);
        }
        let fraction = rows.iter().filter(|r| r.within_band).count() as f64 / rows.len().max(1) as f64;
        checks.push(Check::new(format!("{tag}.t_kernel_identity"), worst_identity, Relation::Below, tol.identity));
        checks.push(Check::new(format!("{tag}.dirac_fraction_in_band"), fraction, Relation::AtLeast, e.required_fraction));
        reports.dirac_scaling.push((b.index, rows));
    }
    Ok(checks)
}
