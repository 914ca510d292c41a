//! The regularized two-point function T^ε, its Klein–Gordon residual and the
//! ε-scaling of that residual.

use crate::error::{Error, Result};
use crate::parallel::try_map_range;
use crate::regularization::{enforce, ConeSolution, Correction, Level, LocalExtension, Sheet};
use crate::spectral::{FD1, FD2};
use crate::transport::TransportSolution;
use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Everything T^ε needs at one point x (for a fixed base point y).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    pub gamma: f64,
    pub mu: f64,
    /// X₋₁ … X_N.
    pub x: Vec<f64>,
    /// Y₀ … Y_N.
    pub y: Vec<f64>,
    /// f_[-1] … f_[N].
    pub f_bracket: Vec<f64>,
    /// f_{1} … f_{N}.
    pub f_brace: Vec<f64>,
}

impl PointSample {
    pub fn truncation(&self) -> usize {
        self.y.len() - 1
    }

    pub fn f(&self, level: Level) -> Result<f64> {
        let missing = || Error::MissingPrerequisite(format!("f{level} not sampled"));
        match level {
            Level::Bracket(n) => self.f_bracket.get((n + 1) as usize).copied().ok_or_else(missing),
            Level::Brace(n) if n >= 1 => self.f_brace.get((n - 1) as usize).copied().ok_or_else(missing),
            Level::Brace(_) => Err(missing()),
        }
    }
}

/// Local data around a base point in normal coordinates ξ.
pub trait ExpansionSource: Sync + Send {
    fn truncation(&self) -> usize;
    fn sample(&self, xi: &Vector4<f64>) -> Result<PointSample>;
    /// Inverse metric and drift b^j with Δ = g^{ij}∂_i∂_j + b^j∂_j.
    fn operator(&self, xi: &Vector4<f64>) -> Result<(Matrix4<f64>, Vector4<f64>)>;
}

/// Closed-form Minkowski data: constant coefficients and f = c·(x⁰ − y⁰).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatAnalytic {
    pub mu: f64,
    pub c: f64,
    pub truncation: usize,
    pub y0: f64,
}

impl FlatAnalytic {
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let mu = self.mu;
        let mut x = vec![1.0, -mu / 4.0];
        let mut y = vec![self.y0];
        for n in 0..self.truncation {
            let m = n as f64;
            let xn = x[n + 1];
            let next = -mu * xn / ((m + 1.0) * (4.0 * m + 8.0));
            x.push(next);
            y.push((-mu * y[n] / (m + 1.0) - 4.0 * next + mu * xn / ((m + 1.0) * (m + 1.0))) / (8.0 + 4.0 * m));
        }
        (x, y)
    }
}

impl ExpansionSource for FlatAnalytic {
    fn truncation(&self) -> usize {
        self.truncation
    }

    fn sample(&self, xi: &Vector4<f64>) -> Result<PointSample> {
        let (x, y) = self.coefficients();
        let f = self.c * xi[0];
        Ok(PointSample {
            gamma: xi[0] * xi[0] - xi[1] * xi[1] - xi[2] * xi[2] - xi[3] * xi[3],
            mu: self.mu,
            x,
            y,
            f_bracket: vec![f; self.truncation + 2],
            f_brace: vec![f; self.truncation],
        })
    }

    fn operator(&self, _xi: &Vector4<f64>) -> Result<(Matrix4<f64>, Vector4<f64>)> {
        Ok((crate::geometry::metric::eta(), Vector4::zeros()))
    }
}

/// Numeric tables near one off-cone point: coefficients from the transport
/// grid, f from the fan of generators through the point's direction.
pub struct NumericLocal {
    pub transport: Arc<TransportSolution>,
    ext: LocalExtension,
    corrections: Vec<Correction>,
}

impl NumericLocal {
    pub fn around(cone: &ConeSolution, xi: &Vector4<f64>) -> Result<Self> {
        let spatial = Vector3::new(xi[1], xi[2], xi[3]);
        if spatial.norm() == 0.0 {
            return Err(Error::PoleHit("point on the time axis of the base point has no cone direction".into()));
        }
        let sheet = if xi[0] >= 0.0 { Sheet::Future } else { Sheet::Past };
        let omega = spatial * (sheet.sign() / spatial.norm());
        let sol = &cone.transport;
        let ext = LocalExtension::build(sol, &omega, sheet, &cone.config)?;
        let corrections = cone
            .levels
            .iter()
            .map(|&l| enforce(sol, &ext, l, &cone.config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            transport: sol.clone(),
            ext,
            corrections,
        })
    }

    fn f(&self, level: Level, xi: &Vector4<f64>) -> Result<f64> {
        let c = self
            .corrections
            .iter()
            .find(|c| c.level == level)
            .ok_or_else(|| Error::MissingPrerequisite(format!("f{level} not extended")))?;
        c.value(&self.ext, &self.transport, xi)
    }
}

impl ExpansionSource for NumericLocal {
    fn truncation(&self) -> usize {
        self.transport.truncation
    }

    fn sample(&self, xi: &Vector4<f64>) -> Result<PointSample> {
        use crate::transport::CoefficientKind as K;
        let sol = &self.transport;
        let w = sol.patch.weights(xi)?;
        let n = sol.truncation as i32;
        let x = (-1..=n).map(|i| Ok(sol.patch.eval(&w, sol.field(K::X(i))?))).collect::<Result<_>>()?;
        let y = (0..=n).map(|i| Ok(sol.patch.eval(&w, sol.field(K::Y(i))?))).collect::<Result<_>>()?;
        let f_bracket = (-1..=n).map(|i| self.f(Level::Bracket(i), xi)).collect::<Result<_>>()?;
        let f_brace = (1..=n).map(|i| self.f(Level::Brace(i), xi)).collect::<Result<_>>()?;
        Ok(PointSample {
            gamma: xi[0] * xi[0] - xi[1] * xi[1] - xi[2] * xi[2] - xi[3] * xi[3],
            mu: sol.patch.eval(&w, &sol.mu_field),
            x,
            y,
            f_bracket,
            f_brace,
        })
    }

    fn operator(&self, xi: &Vector4<f64>) -> Result<(Matrix4<f64>, Vector4<f64>)> {
        let w = self.transport.patch.weights(xi)?;
        Ok(self.transport.patch.local_operator(&w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub epsilon: f64,
    /// Normal-coordinate step of the residual stencil.
    pub fd_step: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            fd_step: 1e-3,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self, patch_radius: f64) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", "must be non-negative"));
        }
        if self.epsilon >= 0.1 * patch_radius {
            return Err(Error::config("epsilon", "must be well below the patch radius"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::config("fd_step", "must be positive"));
        }
        Ok(())
    }
}

/// Γ + iε·f_level. For ε = 0 the imaginary part is a signed zero carrying
/// the side of the cut.
pub fn gamma_bullet(sample: &PointSample, level: Level, eps: f64) -> Result<Complex64> {
    Ok(Complex64::new(sample.gamma, eps * sample.f(level)?))
}

/// X₋₁/Γ_[-1] + Σ X_n Γ_[n]^n log Γ_[n] + Σ Y_n Γ_{n}^n on the principal branch.
pub fn evaluate_t(sample: &PointSample, eps: f64) -> Result<Complex64> {
    let pole = |level: Level| Error::PoleHit(format!("Γ{level} vanishes (ε = {eps})"));
    let g = gamma_bullet(sample, Level::Bracket(-1), eps)?;
    if g == Complex64::new(0.0, 0.0) {
        return Err(pole(Level::Bracket(-1)));
    }
    let mut t = sample.x[0] / g;
    for n in 0..=sample.truncation() {
        let level = Level::Bracket(n as i32);
        let g = gamma_bullet(sample, level, eps)?;
        if g == Complex64::new(0.0, 0.0) {
            return Err(pole(level));
        }
        t += sample.x[n + 1] * g.powi(n as i32) * g.ln();
    }
    t += sample.y[0];
    for n in 1..=sample.truncation() {
        let g = gamma_bullet(sample, Level::Brace(n as i32), eps)?;
        t += sample.y[n] * g.powi(n as i32);
    }
    Ok(t)
}

type Offset = [i8; 4];

fn stencil_offsets() -> Vec<Offset> {
    let mut out = vec![[0; 4]];
    for i in 0..4 {
        for o in [-2i8, -1, 1, 2] {
            let mut a = [0; 4];
            a[i] = o;
            out.push(a);
        }
        for j in 0..i {
            for oi in [-2i8, -1, 1, 2] {
                for oj in [-2i8, -1, 1, 2] {
                    let mut a = [0; 4];
                    a[i] = oi;
                    a[j] = oj;
                    out.push(a);
                }
            }
        }
    }
    out
}

/// (Δ + μ)T^ε at ξ for every ε in the list, by fourth-order differences in
/// normal coordinates. Samples are shared across the ε values.
pub fn residual_sweep(source: &dyn ExpansionSource, xi: &Vector4<f64>, eps: &[f64], step: f64) -> Result<Vec<Complex64>> {
    let offsets = stencil_offsets();
    let at = |o: &Offset| xi + Vector4::from_fn(|i, _| o[i] as f64 * step);
    let samples: HashMap<Offset, PointSample> = offsets
        .iter()
        .map(|o| Ok((*o, source.sample(&at(o))?)))
        .collect::<Result<_>>()?;
    let (ginv, drift) = source.operator(xi)?;
    let centre = &samples[&[0; 4]];
    eps.iter()
        .map(|&e| {
            let values: HashMap<Offset, Complex64> =
                samples.iter().map(|(o, s)| Ok((*o, evaluate_t(s, e)?))).collect::<Result<_>>()?;
            let v = |o: Offset| values[&o];
            let mut lap = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                let axis = |k: i8| {
                    let mut a = [0; 4];
                    a[i] = k;
                    a
                };
                let mut d1 = Complex64::new(0.0, 0.0);
                let mut d2 = Complex64::new(0.0, 0.0);
                for (k, (a, b)) in FD1.iter().zip(FD2.iter()).enumerate() {
                    let val = v(axis(k as i8 - 2));
                    d1 += val * *a;
                    d2 += val * *b;
                }
                lap += d2 * (ginv[(i, i)] / (step * step)) + d1 * (drift[i] / step);
                for j in 0..i {
                    if ginv[(i, j)] == 0.0 {
                        continue;
                    }
                    let mut m = Complex64::new(0.0, 0.0);
                    for (ki, wi) in FD1.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                        for (kj, wj) in FD1.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                            let mut a = [0; 4];
                            a[i] = ki as i8 - 2;
                            a[j] = kj as i8 - 2;
                            m += v(a) * (wi * wj);
                        }
                    }
                    lap += m * (2.0 * ginv[(i, j)] / (step * step));
                }
            }
            Ok(lap + v([0; 4]) * centre.mu)
        })
        .collect()
}

pub fn residual_klein_gordon(source: &dyn ExpansionSource, xi: &Vector4<f64>, cfg: &ExpansionConfig) -> Result<Complex64> {
    Ok(residual_sweep(source, xi, &[cfg.epsilon], cfg.fd_step)?[0])
}

/// Least-squares slope of log y against log x, with its standard error.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::FitDegenerate(format!("{} abscissae for a slope fit", x.len())));
    }
    if let Some(v) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::FitDegenerate(format!("non-positive magnitude {v:e}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitDegenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let p = sxy / sxx;
    let stderr = if lx.len() > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - my - p * (a - mx)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((p, stderr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub xi: [f64; 4],
    pub gamma: f64,
    pub epsilon: Vec<f64>,
    pub baseline: [f64; 2],
    /// Residual at each ε as (re, im).
    pub residual: Vec<[f64; 2]>,
    pub exponent: f64,
    pub stderr: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub points: Vec<ScalingPoint>,
    pub band: [f64; 2],
    pub required_fraction: f64,
    pub fraction_within: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,xi0,xi1,xi2,xi3,gamma,epsilon,re,im,exponent\n");
        for (i, p) in self.points.iter().enumerate() {
            for (e, r) in p.epsilon.iter().zip(&p.residual) {
                out.push_str(&format!(
                    "{i},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    p.xi[0], p.xi[1], p.xi[2], p.xi[3], p.gamma, e, r[0], r[1], p.exponent
                ));
            }
        }
        out
    }
}

/// Timelike points inside the cone (Γ = ratio·(ξ⁰)²), alternating sheets.
pub fn scaling_points(count: usize, ratio: f64, s_range: [f64; 2]) -> Vec<Vector4<f64>> {
    let dirs = crate::regularization::direction_set(count);
    let r = (1.0 - ratio).sqrt();
    dirs.iter()
        .enumerate()
        .map(|(i, w)| {
            let frac = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
            let s = s_range[0] + frac * (s_range[1] - s_range[0]);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            Vector4::new(sign * s, r * s * w[0], r * s * w[1], r * s * w[2])
        })
        .collect()
}

/// Fit |R(ε) − R(0)| ∝ ε^p at each point; pass iff enough points land in the band.
pub fn scaling_study(
    points: &[Vector4<f64>],
    eps: &[f64],
    step: f64,
    band: [f64; 2],
    required_fraction: f64,
    source_at: &(dyn Fn(&Vector4<f64>) -> Result<Box<dyn ExpansionSource>> + Sync),
) -> Result<ResidualReport> {
    if eps.len() < 2 {
        return Err(Error::FitDegenerate(format!("{} ε values for a slope fit", eps.len())));
    }
    let rows = try_map_range(points.len(), |i| -> Result<ScalingPoint> {
        let xi = points[i];
        let source = source_at(&xi)?;
        let mut all = vec![0.0];
        all.extend_from_slice(eps);
        let r = residual_sweep(source.as_ref(), &xi, &all, step)?;
        let base = r[0];
        let diffs: Vec<f64> = r[1..].iter().map(|v| (v - base).norm()).collect();
        let floor = 1e-13 * (1.0 + base.norm());
        if let Some(d) = diffs.iter().find(|d| **d <= floor) {
            return Err(Error::FitDegenerate(format!("residual change {d:e} at the noise floor")));
        }
        let (p, stderr) = fit_exponent(eps, &diffs)?;
        Ok(ScalingPoint {
            xi: [xi[0], xi[1], xi[2], xi[3]],
            gamma: xi[0] * xi[0] - xi[1] * xi[1] - xi[2] * xi[2] - xi[3] * xi[3],
            epsilon: eps.to_vec(),
            baseline: [base.re, base.im],
            residual: r[1..].iter().map(|c| [c.re, c.im]).collect(),
            exponent: p,
            stderr,
            within_band: p >= band[0] && p <= band[1],
        })
    })?;
    let fraction_within = rows.iter().filter(|p| p.within_band).count() as f64 / rows.len().max(1) as f64;
    Ok(ResidualReport {
        passed: !rows.is_empty() && fraction_within >= required_fraction,
        points: rows,
        band,
        required_fraction,
        fraction_within,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IepsReport {
    /// max |f_• − c·(x⁰ − y⁰)| over cone samples, per level.
    pub level_deviation: Vec<(String, f64)>,
    /// max |Γ_[-1] − Γ_shift| − ε²c²/4 over samples, with Γ_shift the interval
    /// at the time-shifted point x⁰ + iεc/2.
    pub shift_mismatch: f64,
    pub passed: bool,
}

/// In Minkowski every f level equals c·(x⁰ − y⁰) on the cone, and Γ_[-1]
/// matches the time-shifted interval up to the ε² term.
pub fn minkowski_ieps_crosscheck(cone: &ConeSolution, eps: f64, tolerance: f64) -> Result<IepsReport> {
    if !cone.transport.patch.metric.is_flat() {
        return Err(Error::config("metric", "the iε cross-check needs the Minkowski metric"));
    }
    let c = cone.config.c;
    let mut level_deviation = Vec::new();
    let mut shift_mismatch = 0.0f64;
    for &level in &cone.levels {
        let table = cone.table(level)?;
        let dev = table.samples.iter().map(|s| (s.value - c * s.t).abs()).fold(0.0, f64::max);
        level_deviation.push((level.to_string(), dev));
        if level == Level::Bracket(-1) {
            for s in &table.samples {
                let g = Complex64::new(0.0, eps * s.value);
                let dt = Complex64::new(s.t, eps * c / 2.0);
                let shifted = dt * dt - s.t * s.t;
                let extra = (g - shifted).norm() - eps * eps * c * c / 4.0;
                shift_mismatch = shift_mismatch.max(extra.abs());
            }
        }
    }
    let passed = level_deviation.iter().all(|(_, d)| *d < tolerance) && shift_mismatch < tolerance;
    Ok(IepsReport {
        level_deviation,
        shift_mismatch,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize) -> FlatAnalytic {
        FlatAnalytic {
            mu: 1.0,
            c: 1.0,
            truncation: n,
            y0: 0.0,
        }
    }

    #[test]
    fn gamma_bullet_examples() {
        let src = flat(2);
        let s = src.sample(&Vector4::new(0.5, 0.5, 0.0, 0.0)).unwrap();
        let g = gamma_bullet(&s, Level::Bracket(0), 0.01).unwrap();
        assert!((g - Complex64::new(0.0, 0.005)).norm() < 1e-15);
        let s = src.sample(&Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let g = gamma_bullet(&s, Level::Brace(2), 0.01).unwrap();
        assert!((g - Complex64::new(1.0, 0.01)).norm() < 1e-15);
        assert_eq!(gamma_bullet(&s, Level::Bracket(1), 0.0).unwrap().im, 0.0);
    }

    #[test]
    fn hand_assembled_flat_value() {
        let src = flat(1);
        let s = src.sample(&Vector4::new(0.5, 0.5, 0.0, 0.0)).unwrap();
        let g = Complex64::new(0.0, 0.005);
        let expect = 1.0 / g + g.ln() * (-0.25) + g * g.ln() * (1.0 / 32.0) + g * (-3.0 / 64.0);
        assert!((evaluate_t(&s, 0.01).unwrap() - expect).norm() < 1e-12);
        assert!(matches!(evaluate_t(&s, 0.0), Err(Error::PoleHit(_))));
    }

    #[test]
    fn flat_recursion_values() {
        let (x, y) = FlatAnalytic { mu: 4.0, ..flat(2) }.coefficients();
        assert!((x[3] + 64.0 / 768.0).abs() < 1e-15);
        assert!((y[1] + 3.0 * 16.0 / 64.0).abs() < 1e-15);
        assert!((y[2] - 7.0 * 64.0 / 2304.0).abs() < 1e-15);
    }

    #[test]
    fn spacelike_limit_is_linear_in_eps() {
        let src = flat(2);
        let s = src.sample(&Vector4::new(0.1, 0.4, 0.1, 0.0)).unwrap();
        let t0 = evaluate_t(&s, 0.0).unwrap();
        let d: Vec<f64> = [1e-4, 1e-3].iter().map(|&e| (evaluate_t(&s, e).unwrap() - t0).norm()).collect();
        let (p, _) = fit_exponent(&[1e-4, 1e-3], &d).unwrap();
        assert!(p > 0.9, "{p}");
    }

    #[test]
    fn flat_scaling_is_quadratic() {
        let pts = scaling_points(6, 0.6, [0.15, 0.25]);
        let eps = [1e-3, 3e-3, 1e-2, 3e-2];
        let src = |_: &Vector4<f64>| -> Result<Box<dyn ExpansionSource>> { Ok(Box::new(flat(2))) };
        let rep = scaling_study(&pts, &eps, 1e-3, [1.8, 2.2], 0.8, &src).unwrap();
        for p in &rep.points {
            assert!(p.within_band, "{p:?}");
        }
        assert!(matches!(
            scaling_study(&pts, &eps[..1], 1e-3, [1.8, 2.2], 0.8, &src),
            Err(Error::FitDegenerate(_))
        ));
    }
}
