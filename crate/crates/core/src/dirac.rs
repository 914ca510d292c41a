//! Dirac layer for flat and conformally flat metrics in a fixed frame:
//! P^ε = (D + m)T^ε with T^ε the identity-proportional scalar expansion.

use crate::error::{Error, Result};
use crate::expansion::{evaluate_t, fit_exponent, ExpansionSource};
use crate::geometry::{FamilyId, MetricModel, Point};
use crate::parallel::try_map_range;
use crate::regularization::{far_end, ConeSolution, Level};
use crate::spectral::FD1;
use crate::transport::{CoefficientKind, MuProfile, NormalPatch, TransportConfig, TransportSolution};
use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type SpinMatrix = Matrix4<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// γ⁰, γ¹, γ², γ³ in the Dirac representation, {γ^a, γ^b} = 2η^ab.
pub fn gamma_matrices() -> [SpinMatrix; 4] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    let g0 = SpinMatrix::from_diagonal(&Vector4::new(one, one, -one, -one));
    let sigma = [
        [[z, one], [one, z]],
        [[z, -i], [i, z]],
        [[one, z], [z, -one]],
    ];
    let mut out = [g0, SpinMatrix::zeros(), SpinMatrix::zeros(), SpinMatrix::zeros()];
    for (k, s) in sigma.iter().enumerate() {
        let g = &mut out[k + 1];
        for r in 0..2 {
            for col in 0..2 {
                g[(r, col + 2)] = s[r][col];
                g[(r + 2, col)] = -s[r][col];
            }
        }
    }
    out
}

/// max entry of {γ^a, γ^b} − 2η^ab·𝟙 over all a, b.
pub fn anticommutator_defect(gamma: &[SpinMatrix; 4]) -> f64 {
    let eta = crate::geometry::metric::eta();
    let mut worst = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let m = gamma[a] * gamma[b] + gamma[b] * gamma[a] - SpinMatrix::identity() * c(2.0 * eta[(a, b)], 0.0);
            worst = worst.max(max_entry(&m));
        }
    }
    worst
}

pub fn max_entry(m: &SpinMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// M* = γ⁰ M† γ⁰.
pub fn spin_adjoint(m: &SpinMatrix) -> SpinMatrix {
    let g0 = gamma_matrices()[0];
    g0 * m.adjoint() * g0
}

/// Orthonormal frame e_a = a⁻¹∂_a of a conformally flat chart, with its
/// spinor connection.
#[derive(Debug, Clone)]
pub struct SpinorFrame {
    pub metric: MetricModel,
    pub gamma: [SpinMatrix; 4],
}

impl SpinorFrame {
    pub fn new(metric: &MetricModel) -> Result<Self> {
        if metric.family_id() == FamilyId::Custom {
            return Err(Error::config("metric", "spinor frames need a flat or conformally flat family"));
        }
        Ok(Self {
            metric: metric.clone(),
            gamma: gamma_matrices(),
        })
    }

    fn scale(&self, x: &Point) -> (f64, f64) {
        match self.metric.scale_factor() {
            Some(s) => {
                let (a, da, _) = s.eval(x[0]);
                (a, da)
            }
            None => (1.0, 0.0),
        }
    }

    /// e_a^μ, row a.
    pub fn vierbein(&self, x: &Point) -> Matrix4<f64> {
        Matrix4::identity() / self.scale(x).0
    }

    /// ω_μab from the vierbein by central differences and the Christoffel symbols.
    pub fn spin_connection(&self, x: &Point, h: f64) -> [Matrix4<f64>; 4] {
        let eta = crate::geometry::metric::eta();
        let e = self.vierbein(x);
        let coframe = e.try_inverse().expect("vierbein invertible");
        let gam = self.metric.christoffel(x);
        let mut out = [Matrix4::zeros(); 4];
        for (mu, w) in out.iter_mut().enumerate() {
            let mut xp = *x;
            let mut xm = *x;
            xp[mu] += h;
            xm[mu] -= h;
            let de = (self.vierbein(&xp) - self.vierbein(&xm)) / (2.0 * h);
            // mixed[c][b] = e^c_ν (∂_μ e_b^ν + Γ^ν_μλ e_b^λ)
            let mut mixed = Matrix4::zeros();
            for cc in 0..4 {
                for b in 0..4 {
                    let mut s = 0.0;
                    for nu in 0..4 {
                        let mut cov = de[(b, nu)];
                        for l in 0..4 {
                            cov += gam[nu][mu][l] * e[(b, l)];
                        }
                        s += coframe[(nu, cc)] * cov;
                    }
                    mixed[(cc, b)] = s;
                }
            }
            *w = eta * mixed;
        }
        out
    }

    /// ω_μab = H(η_aμ δ_b⁰ − η_μb δ_a⁰) with H = a′/a.
    pub fn spin_connection_exact(&self, x: &Point) -> [Matrix4<f64>; 4] {
        let eta = crate::geometry::metric::eta();
        let (a, da) = self.scale(x);
        let h = da / a;
        let mut out = [Matrix4::zeros(); 4];
        for (mu, w) in out.iter_mut().enumerate() {
            for i in 0..4 {
                w[(i, 0)] += h * eta[(i, mu)];
                w[(0, i)] -= h * eta[(mu, i)];
            }
        }
        out
    }

    /// Ω_μ = ¼ ω_μab γ^a γ^b.
    pub fn connection_matrices(&self, x: &Point) -> [SpinMatrix; 4] {
        let w = self.spin_connection_exact(x);
        let mut out = [SpinMatrix::zeros(); 4];
        for (mu, o) in out.iter_mut().enumerate() {
            for a in 0..4 {
                for b in 0..4 {
                    if w[mu][(a, b)] != 0.0 {
                        *o += self.gamma[a] * self.gamma[b] * c(0.25 * w[mu][(a, b)], 0.0);
                    }
                }
            }
        }
        out
    }

    /// D F = iγ^a e_a^μ (∂_μ F + Ω_μ F), fourth-order differences of step h.
    pub fn apply(&self, x: &Point, h: f64, f: &dyn Fn(&Point) -> Result<SpinMatrix>) -> Result<SpinMatrix> {
        let e = self.vierbein(x);
        let omega = self.connection_matrices(x);
        let centre = f(x)?;
        let mut out = SpinMatrix::zeros();
        for mu in 0..4 {
            let mut d = SpinMatrix::zeros();
            for (k, w) in FD1.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let mut p = *x;
                p[mu] += (k as f64 - 2.0) * h;
                d += f(&p)? * c(*w / h, 0.0);
            }
            let cov = d + omega[mu] * centre;
            let mut slash = SpinMatrix::zeros();
            for a in 0..4 {
                if e[(a, mu)] != 0.0 {
                    slash += self.gamma[a] * c(e[(a, mu)], 0.0);
                }
            }
            out += slash * cov * c(0.0, 1.0);
        }
        Ok(out)
    }
}

pub fn mu_from_curvature(_metric: &MetricModel, mass: f64) -> MuProfile {
    MuProfile::Dirac { mass }
}

/// max over the points of |𝔰 − 𝔰_FD| with 𝔰_FD by nested differences of the metric.
pub fn curvature_oracle_defect(metric: &MetricModel, points: &[Point]) -> f64 {
    points
        .iter()
        .map(|x| {
            let fd = crate::geometry::metric::scalar_curvature_numeric(|p| metric.metric(p), x, 1e-3);
            (metric.scalar_curvature(x) - fd).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    TEps,
    PEps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorKernel {
    pub value: SpinMatrix,
    pub kind: KernelKind,
}

impl SpinorKernel {
    /// Distance from the nearest multiple of the identity.
    pub fn offdiagonal_norm(&self) -> f64 {
        let trace = self.value.trace() / c(4.0, 0.0);
        (self.value - SpinMatrix::identity() * trace).norm()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<[f64; 2]> = self.value.transpose().iter().map(|z| [z.re, z.im]).collect();
        serde_json::json!({ "kind": self.kind, "representation": "dirac", "entries": entries })
    }
}

/// T^ε(x, y) at chart points x for a fixed base point y.
pub struct ScalarKernel<'a> {
    source: &'a dyn ExpansionSource,
    map: NormalMap<'a>,
}

enum NormalMap<'a> {
    Flat(Point),
    Patch(&'a NormalPatch),
}

impl<'a> ScalarKernel<'a> {
    /// ξ = x − y.
    pub fn flat(source: &'a dyn ExpansionSource, base: Point) -> Self {
        Self {
            source,
            map: NormalMap::Flat(base),
        }
    }

    pub fn on_patch(source: &'a dyn ExpansionSource, patch: &'a NormalPatch) -> Self {
        Self {
            source,
            map: NormalMap::Patch(patch),
        }
    }

    pub fn normal(&self, x: &Point) -> Result<Vector4<f64>> {
        match &self.map {
            NormalMap::Flat(y) => Ok(x - y),
            NormalMap::Patch(p) => p.normal_coordinates(x),
        }
    }

    pub fn value(&self, x: &Point, eps: f64) -> Result<Complex64> {
        evaluate_t(&self.source.sample(&self.normal(x)?)?, eps)
    }

    pub fn matrix(&self, x: &Point, eps: f64) -> Result<SpinMatrix> {
        Ok(SpinMatrix::identity() * self.value(x, eps)?)
    }
}

pub fn evaluate_p(frame: &SpinorFrame, mass: f64, x: &Point, h: f64, t: &dyn Fn(&Point) -> Result<SpinMatrix>) -> Result<SpinorKernel> {
    let value = frame.apply(x, h, t)? + t(x)? * c(mass, 0.0);
    Ok(SpinorKernel {
        value,
        kind: KernelKind::PEps,
    })
}

/// (D − m)P^ε at x, as a matrix.
pub fn dirac_defect(frame: &SpinorFrame, mass: f64, x: &Point, h: f64, t: &dyn Fn(&Point) -> Result<SpinMatrix>) -> Result<(SpinMatrix, SpinMatrix)> {
    let p = |q: &Point| evaluate_p(frame, mass, q, h, t).map(|k| k.value);
    let centre = p(x)?;
    Ok((frame.apply(x, h, &p)? - centre * c(mass, 0.0), centre))
}

/// ‖(D − m)P^ε‖ / ‖P^ε‖ (Frobenius).
pub fn dirac_residual(frame: &SpinorFrame, mass: f64, x: &Point, h: f64, t: &dyn Fn(&Point) -> Result<SpinMatrix>) -> Result<f64> {
    let (r, p) = dirac_defect(frame, mass, x, h, t)?;
    Ok(r.norm() / p.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracScalingPoint {
    pub x: [f64; 4],
    pub epsilon: Vec<f64>,
    pub baseline: f64,
    /// ‖R(ε) − R(0)‖ / ‖P^ε‖.
    pub change: Vec<f64>,
    pub exponent: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracScalingReport {
    pub points: Vec<DiracScalingPoint>,
    pub band: [f64; 2],
    pub fraction_within: f64,
    pub passed: bool,
}

/// Fit ‖R(ε) − R(0)‖ ∝ ε^p at each chart point.
pub fn dirac_scaling(
    frame: &SpinorFrame,
    mass: f64,
    kernel: &ScalarKernel<'_>,
    points: &[Point],
    eps: &[f64],
    h: f64,
    band: [f64; 2],
    required_fraction: f64,
) -> Result<DiracScalingReport> {
    if eps.len() < 2 {
        return Err(Error::FitDegenerate(format!("{} ε values for a slope fit", eps.len())));
    }
    let rows = try_map_range(points.len(), |i| -> Result<DiracScalingPoint> {
        let x = points[i];
        let at = |e: f64| dirac_defect(frame, mass, &x, h, &|q: &Point| kernel.matrix(q, e));
        let (r0, p0) = at(0.0)?;
        let mut change = Vec::with_capacity(eps.len());
        for &e in eps {
            let (r, p) = at(e)?;
            change.push((r - r0).norm() / p.norm());
        }
        let (p, _) = fit_exponent(eps, &change)?;
        Ok(DiracScalingPoint {
            x: [x[0], x[1], x[2], x[3]],
            epsilon: eps.to_vec(),
            baseline: r0.norm() / p0.norm(),
            change,
            exponent: p,
            within_band: p >= band[0] && p <= band[1],
        })
    })?;
    let fraction_within = rows.iter().filter(|p| p.within_band).count() as f64 / rows.len().max(1) as f64;
    Ok(DiracScalingReport {
        passed: !rows.is_empty() && fraction_within >= required_fraction,
        points: rows,
        band,
        fraction_within,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub pairs: usize,
    /// max over pairs of the entrywise defect, per kernel.
    pub max_deviation: BTreeMap<String, f64>,
    /// Y_n(x,y)* − Y_n(y,x) for n ≥ 1: these multiply Γⁿ and drop out on the cone.
    pub diagnostics: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl SymmetryReport {
    pub fn worst(&self) -> f64 {
        self.max_deviation.values().copied().fold(0.0, f64::max)
    }
}

fn coefficient_at(sol: &TransportSolution, kind: CoefficientKind, xi: &Vector4<f64>) -> Result<f64> {
    let w = sol.patch.weights(xi)?;
    Ok(sol.patch.eval(&w, sol.field(kind)?))
}

/// Hadamard coefficients as spinor kernels on both orderings of cone pairs:
/// X(x,y)* = X(y,x), Y₀(x,y)* = Y₀(y,x), (f(x,y) X(x,y))* = −X(y,x) f(y,x)
/// for bracket levels and f(x,y)* = −f(y,x) for brace levels. `flip`
/// negates f at the far end.
pub fn symmetry_check(
    near: &ConeSolution,
    pairs: &[(Vector3<f64>, f64)],
    transport_cfg: &TransportConfig,
    mu: MuProfile,
    tolerance: f64,
    flip: bool,
) -> Result<SymmetryReport> {
    let id = SpinMatrix::identity();
    let scalar = |v: f64| id * c(v, 0.0);
    let n = near.transport.truncation as i32;
    let results = try_map_range(pairs.len(), |i| -> Result<Vec<(String, f64, bool)>> {
        let (omega, t) = pairs[i];
        let omega = omega.normalize();
        let xi = near.transport.patch.generator(&omega)? * t;
        let far = far_end(near, &omega, t, transport_cfg, mu)?;
        let mut kinds: Vec<CoefficientKind> = (-1..=n).map(CoefficientKind::X).collect();
        kinds.extend((0..=n).map(CoefficientKind::Y));
        let mut row = Vec::new();
        for kind in kinds {
            let a = scalar(coefficient_at(&near.transport, kind, &xi)?);
            let b = scalar(coefficient_at(&far.cone.transport, kind, &far.xi)?);
            let gated = !matches!(kind, CoefficientKind::Y(n) if n >= 1);
            row.push((kind.to_string(), max_entry(&(spin_adjoint(&a) - b)), gated));
        }
        for &level in &near.levels {
            let fx = near.value_at(level, &omega, t)?;
            let mut fy = far.cone.value_at(level, &far.back, far.t)?;
            if flip {
                fy = -fy;
            }
            match level {
                Level::Bracket(n) => {
                    let kind = CoefficientKind::X(n);
                    let xa = scalar(coefficient_at(&near.transport, kind, &xi)?);
                    let xb = scalar(coefficient_at(&far.cone.transport, kind, &far.xi)?);
                    let lhs = spin_adjoint(&(scalar(fx) * xa));
                    let rhs = -(xb * scalar(fy));
                    row.push((format!("f{level}{kind}"), max_entry(&(lhs - rhs)), true));
                }
                Level::Brace(_) => {
                    let d = spin_adjoint(&scalar(fx)) + scalar(fy);
                    row.push((format!("f{level}"), max_entry(&d), true));
                }
            }
        }
        Ok(row)
    })?;
    let mut max_deviation = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for row in results {
        for (name, d, gated) in row {
            let map = if gated { &mut max_deviation } else { &mut diagnostics };
            let e = map.entry(name).or_insert(0.0f64);
            *e = e.max(d);
        }
    }
    let worst = max_deviation.values().copied().fold(0.0, f64::max);
    Ok(SymmetryReport {
        pairs: pairs.len(),
        max_deviation,
        diagnostics,
        tolerance,
        passed: worst < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::FlatAnalytic;
    use crate::geometry::ScaleFactor;

    #[test]
    fn clifford_relations_are_exact() {
        let g = gamma_matrices();
        assert_eq!(anticommutator_defect(&g), 0.0);
        for (a, m) in g.iter().enumerate() {
            assert_eq!(max_entry(&(spin_adjoint(m) - m)), 0.0, "γ{a}");
        }
    }

    #[test]
    fn spin_connection_matches_vierbein_differences() {
        let flat = SpinorFrame::new(&MetricModel::minkowski()).unwrap();
        let x = Point::new(0.3, 0.1, -0.2, 0.4);
        for w in flat.spin_connection(&x, 1e-5) {
            assert!(w.amax() < 1e-14);
        }
        let frame = SpinorFrame::new(&MetricModel::conformal_flrw(ScaleFactor::linear(0.5))).unwrap();
        let fd = frame.spin_connection(&x, 1e-5);
        let exact = frame.spin_connection_exact(&x);
        for mu in 0..4 {
            assert!((fd[mu] - exact[mu]).amax() < 1e-6, "{mu}");
            assert!((exact[mu] + exact[mu].transpose()).amax() < 1e-15);
        }
    }

    #[test]
    fn conformal_dirac_operator_factorizes() {
        // D_g ψ = a^{-5/2} D_η (a^{3/2} ψ)
        let metric = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let frame = SpinorFrame::new(&metric).unwrap();
        let flat = SpinorFrame::new(&MetricModel::minkowski()).unwrap();
        let s = metric.scale_factor().unwrap().clone();
        let psi = |p: &Point| -> Result<SpinMatrix> {
            let phase = c(0.0, p[0] - 0.5 * p[1] + 0.2 * p[3]).exp();
            Ok(SpinMatrix::from_fn(|r, q| c((r + 2 * q) as f64 * 0.1 + 1.0, 0.3 * r as f64) * phase))
        };
        let scaled = |p: &Point| Ok(psi(p)? * c(s.eval(p[0]).0.powf(1.5), 0.0));
        let x = Point::new(0.4, 0.1, 0.0, -0.1);
        let lhs = frame.apply(&x, 1e-3, &psi).unwrap();
        let rhs = flat.apply(&x, 1e-3, &scaled).unwrap() * c(s.eval(x[0]).0.powf(-2.5), 0.0);
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm(), "{}", (lhs - rhs).norm());
    }

    #[test]
    fn lichnerowicz_in_flat_frame() {
        let frame = SpinorFrame::new(&MetricModel::minkowski()).unwrap();
        let p = Vector4::new(0.7, 0.2, -0.4, 0.3);
        let box_factor = p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3];
        let base = SpinMatrix::from_fn(|r, q| c(1.0 + r as f64, q as f64 - 0.5));
        let field = |x: &Point| Ok(base * c(p.dot(x).exp(), 0.0));
        for x in [Point::new(0.0, 0.0, 0.0, 0.0), Point::new(0.3, -0.2, 0.5, 0.1)] {
            let h = 1e-2;
            let d = |q: &Point| frame.apply(q, h, &field);
            let dd = frame.apply(&x, h, &d).unwrap();
            let lap = field(&x).unwrap() * c(box_factor, 0.0);
            assert!((dd + lap).norm() < 1e-4, "{}", (dd + lap).norm());
        }
    }

    #[test]
    fn mu_uses_quarter_curvature() {
        let flat = MetricModel::minkowski();
        let x = Point::new(0.2, 0.0, 0.0, 0.0);
        assert_eq!(mu_from_curvature(&flat, 1.0).eval(&flat, &x), 1.0);
        let m = MetricModel::conformal_flrw(ScaleFactor {
            coefficients: vec![1.0, 0.1, 0.3],
        });
        let s = m.scalar_curvature(&x);
        assert!(s.abs() > 0.1);
        assert_eq!(mu_from_curvature(&m, 0.0).eval(&m, &x), -s / 4.0);
        assert!(curvature_oracle_defect(&m, &[x, Point::new(-0.3, 0.5, 0.1, 0.0)]) < 1e-4);
    }

    fn flat_kernel() -> FlatAnalytic {
        FlatAnalytic {
            mu: 1.0,
            c: 1.0,
            truncation: 2,
            y0: 0.0,
        }
    }

    #[test]
    fn flat_p_matches_scalar_derivatives() {
        let frame = SpinorFrame::new(&MetricModel::minkowski()).unwrap();
        let src = flat_kernel();
        let y = Point::new(0.0, 0.0, 0.0, 0.0);
        let kernel = ScalarKernel::flat(&src, y);
        let x = Point::new(0.3, 0.1, 0.05, -0.1);
        let eps = 0.01;
        let t = |q: &Point| kernel.matrix(q, eps);
        let p = evaluate_p(&frame, 1.0, &x, 1e-3, &t).unwrap();
        assert!(p.offdiagonal_norm() > 0.0);
                let g = gamma_matrices();
        let mut oracle = SpinMatrix::identity() * kernel.value(&x, eps).unwrap();
        let h = 1e-5;
        for a in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let d = (kernel.value(&xp, eps).unwrap() - kernel.value(&xm, eps).unwrap()) / (2.0 * h);
            oracle += g[a] * (d * c(0.0, 1.0));
        }
        assert!((p.value - oracle).norm() < 1e-6 * oracle.norm(), "{}", (p.value - oracle).norm());
        let massless = evaluate_p(&frame, 0.0, &x, 1e-3, &t).unwrap();
        let diff = p.value - massless.value - t(&x).unwrap();
        assert!(diff.norm() < 1e-15 * p.value.norm());
    }

    #[test]
    fn flat_dirac_residual_tracks_klein_gordon() {
        let frame = SpinorFrame::new(&MetricModel::minkowski()).unwrap();
        let src = flat_kernel();
        let kernel = ScalarKernel::flat(&src, Point::zeros());
        let x = Point::new(0.2, 0.08, 0.05, -0.06);
        let (r, _) = dirac_defect(&frame, 1.0, &x, 1e-3, &|q: &Point| kernel.matrix(q, 0.01)).unwrap();
        let kg = crate::expansion::residual_klein_gordon(
            &src,
            &x,
            &crate::expansion::ExpansionConfig {
                epsilon: 0.01,
                fd_step: 1e-3,
            },
        )
        .unwrap();
        let expect = SpinMatrix::identity() * (-kg);
        assert!((r - expect).norm() < 1e-3 * kg.norm(), "{} vs {}", r[(0, 0)], -kg);
        let pts = [x, Point::new(-0.18, 0.05, -0.07, 0.06)];
        let rep = dirac_scaling(&frame, 1.0, &kernel, &pts, &[1e-3, 3e-3, 1e-2, 3e-2], 1e-3, [1.8, 2.2], 0.8).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    fn cone_for(metric: &MetricModel, y: Point, mu: MuProfile) -> (ConeSolution, TransportConfig) {
        use crate::regularization::{direction_set, ConeConfig};
        use crate::transport::PatchConfig;
        use std::sync::Arc;
        let cfg = TransportConfig {
            patch: PatchConfig {
                nodes: 9,
                radius: 0.45,
                ..PatchConfig::default()
            },
            quadrature: 14,
            ..TransportConfig::default()
        };
        let t = Arc::new(TransportSolution::solve(metric, &y, mu, &cfg).unwrap());
        (ConeSolution::solve(t, &direction_set(2), &ConeConfig::default()).unwrap(), cfg)
    }

    #[test]
    fn symmetry_holds_on_both_families() {
        let pairs = [(Vector3::new(1.0, 0.0, 0.0), 0.2), (Vector3::new(0.0, 0.6, -0.8), -0.15)];
        let flat = MetricModel::minkowski();
        let mu = mu_from_curvature(&flat, 1.0);
        let (cone, cfg) = cone_for(&flat, Point::zeros(), mu);
        let rep = symmetry_check(&cone, &pairs, &cfg, mu, 1e-8, false).unwrap();
        assert!(rep.passed, "{rep:?}");
        let broken = symmetry_check(&cone, &pairs, &cfg, mu, 1e-8, true).unwrap();
        assert!(!broken.passed && broken.worst() > 0.1);

        let m = MetricModel::conformal_flrw(ScaleFactor {
            coefficients: vec![1.0, 0.5, 0.2],
        });
        let mu = mu_from_curvature(&m, 1.0);
        let (cone, cfg) = cone_for(&m, Point::new(0.5, 0.0, 0.0, 0.0), mu);
        let rep = symmetry_check(&cone, &pairs, &cfg, mu, 1e-4, false).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_deviation.contains_key("f[-1]X-1"));
    }
}
