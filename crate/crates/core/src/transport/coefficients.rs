//! The X/Y coefficient hierarchy solved by radial integration in normal
//! coordinates.

use super::patch::{NormalPatch, PatchConfig};
use crate::error::{Error, Result};
use crate::geometry::{MetricModel, Point};
use crate::parallel::map_range;
use crate::spectral::{gauss_legendre_unit, Tensor4, FD1, FD2};
use nalgebra::{DMatrix, Vector4};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", content = "level", rename_all = "snake_case")]
pub enum CoefficientKind {
    X(i32),
    Y(i32),
}

impl std::fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientKind::X(n) => write!(f, "X{n}"),
            CoefficientKind::Y(n) => write!(f, "Y{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum MuProfile {
    Constant { mass_squared: f64 },
    /// m² − 𝔰/4.
    Dirac { mass: f64 },
}

impl MuProfile {
    pub fn eval(&self, metric: &MetricModel, x: &Point) -> f64 {
        match *self {
            MuProfile::Constant { mass_squared } => mass_squared,
            MuProfile::Dirac { mass } => mass * mass - metric.scalar_curvature(x) / 4.0,
        }
    }
}

/// The free function Y₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Y0Choice {
    #[default]
    Zero,
    Constant { value: f64 },
    /// c0 + c1·Γ.
    WorldLinear { c0: f64, c1: f64 },
}

impl Y0Choice {
    fn eval(&self, gamma: f64) -> f64 {
        match *self {
            Y0Choice::Zero => 0.0,
            Y0Choice::Constant { value } => value,
            Y0Choice::WorldLinear { c0, c1 } => c0 + c1 * gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub patch: PatchConfig,
    /// Gauss–Legendre nodes for the radial integrals.
    pub quadrature: usize,
    /// Highest level N (X up to X_N, Y up to Y_N).
    pub truncation: usize,
    pub y0: Y0Choice,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            patch: PatchConfig::default(),
            quadrature: 20,
            truncation: 2,
            y0: Y0Choice::Zero,
        }
    }
}

/// Precomputed radial quadrature: F ↦ Σ_q w_q s_q^p F(s_q ξ).
struct RadialQuadrature {
    s: Vec<f64>,
    w: Vec<f64>,
    interp: Vec<DMatrix<f64>>,
}

impl RadialQuadrature {
    fn new(patch: &NormalPatch, q: usize) -> Self {
        let (s, w) = gauss_legendre_unit(q);
        let interp = s.iter().map(|&t| patch.grid.scaled_interp_matrix(t)).collect();
        Self { s, w, interp }
    }

    fn integrate(&self, field: &Tensor4, power: i32) -> Tensor4 {
        let mut acc = Tensor4::zeros(field.n);
        for ((s, w), m) in self.s.iter().zip(&self.w).zip(&self.interp) {
            acc.axpy(w * s.powi(power), &field.apply_all(m));
        }
        acc
    }
}

/// One solved coefficient on the normal patch of its base point.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub kind: CoefficientKind,
    pub patch: Arc<NormalPatch>,
    pub values: Tensor4,
    pub mu: MuProfile,
}

impl CoefficientTable {
    pub fn base(&self) -> Point {
        self.patch.base
    }

    pub fn value_at_normal(&self, xi: &Vector4<f64>) -> Result<f64> {
        let w = self.patch.weights(xi)?;
        Ok(self.patch.eval(&w, &self.values))
    }

    pub fn value_at(&self, x: &Point) -> Result<f64> {
        let xi = self.patch.normal_coordinates(x)?;
        self.value_at_normal(&xi)
    }

    /// Largest deviation from a constant over the grid.
    pub fn spread(&self, value: f64) -> f64 {
        self.values.data.iter().map(|v| (v - value).abs()).fold(0.0, f64::max)
    }

    /// Node coordinates and values as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi0,xi1,xi2,xi3,x0,x1,x2,x3,value\n");
        for (k, v) in self.values.data.iter().enumerate() {
            let xi = self.patch.node_coords(k);
            let x = self.patch.positions[k];
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                xi[0], xi[1], xi[2], xi[3], x[0], x[1], x[2], x[3], v
            ));
        }
        out
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "base": self.base().as_slice(),
            "mu": self.mu,
            "stencil": {
                "layout": "chebyshev_lobatto_normal",
                "nodes_per_axis": self.patch.nodes(),
                "radius": self.patch.radius(),
            },
        })
    }
}

/// All coefficients up to the truncation level on one patch.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub patch: Arc<NormalPatch>,
    pub mu: MuProfile,
    pub mu_field: Tensor4,
    pub truncation: usize,
    /// X₋₁, X₀, …, X_N.
    x: Vec<Tensor4>,
    /// Y₀, …, Y_N.
    y: Vec<Tensor4>,
    lx: Vec<Tensor4>,
    ly: Vec<Tensor4>,
    /// σ = ΔΓ − 8 on the grid.
    pub sigma: Tensor4,
}

impl TransportSolution {
    pub fn solve(metric: &MetricModel, base: &Point, mu: MuProfile, cfg: &TransportConfig) -> Result<Self> {
        let patch = Arc::new(NormalPatch::new(metric, base, &cfg.patch).map_err(|e| e.in_stage("patch"))?);
        Self::solve_on(patch, mu, cfg)
    }

    pub fn solve_on(patch: Arc<NormalPatch>, mu: MuProfile, cfg: &TransportConfig) -> Result<Self> {
        if cfg.quadrature < 2 {
            return Err(Error::config("quadrature", "needs at least two nodes"));
        }
        let quad = RadialQuadrature::new(&patch, cfg.quadrature);
        let metric = &patch.metric;
        let mu_field = Tensor4 {
            n: patch.nodes(),
            data: map_range(patch.positions.len(), |k| mu.eval(metric, &patch.positions[k])),
        };
        let apply_l = |f: &Tensor4| {
            let mut l = patch.laplacian(f);
            l.data.iter_mut().zip(&mu_field.data).zip(&f.data).for_each(|((o, m), v)| *o += m * v);
            l
        };
        let mut sigma = patch.laplacian(&patch.gamma);
        sigma.data.iter_mut().for_each(|v| *v -= 8.0);

        let q = quad.integrate(&sigma, -1);
        let xm1 = q.map(|v| (-v / 4.0).exp());
        let solve = |k: i32, source: &Tensor4| -> Tensor4 {
            let ratio = source.zip_map(&xm1, |s, x| s / x);
            let integral = quad.integrate(&ratio, 1 + k);
            xm1.zip_map(&integral, |x, i| -x * i / 4.0)
        };

        let mut x = vec![xm1.clone()];
        let mut lx = vec![apply_l(&x[0])];
        let x0 = solve(-1, &lx[0]);
        lx.push(apply_l(&x0));
        x.push(x0);
        for n in 0..cfg.truncation {
            let src = lx[n + 1].map(|v| v / (n + 1) as f64);
            let next = solve(n as i32, &src);
            lx.push(apply_l(&next));
            x.push(next);
        }

        let y0 = patch.gamma.map(|g| cfg.y0.eval(g));
        let mut ly = vec![apply_l(&y0)];
        let mut y = vec![y0];
        for n in 0..cfg.truncation {
            let np1 = (n + 1) as f64;
            let mut src = ly[n].map(|v| v / np1);
            src.axpy(4.0, &x[n + 2]);
            src.axpy(-1.0 / (np1 * np1), &lx[n + 1]);
            let next = solve(n as i32, &src);
            ly.push(apply_l(&next));
            y.push(next);
        }
        Ok(Self {
            patch,
            mu,
            mu_field,
            truncation: cfg.truncation,
            x,
            y,
            lx,
            ly,
            sigma,
        })
    }

    pub fn base(&self) -> Point {
        self.patch.base
    }

    fn slot(&self, kind: CoefficientKind) -> Result<usize> {
        let (n, max, lo) = match kind {
            CoefficientKind::X(n) => (n, self.truncation as i32, -1),
            CoefficientKind::Y(n) => (n, self.truncation as i32, 0),
        };
        if n < lo || n > max {
            return Err(Error::MissingPrerequisite(format!("{kind} beyond the solved levels")));
        }
        Ok((n - lo) as usize)
    }

    pub fn field(&self, kind: CoefficientKind) -> Result<&Tensor4> {
        let i = self.slot(kind)?;
        Ok(match kind {
            CoefficientKind::X(_) => &self.x[i],
            CoefficientKind::Y(_) => &self.y[i],
        })
    }

    /// (Δ + μ) applied to a coefficient, on the grid.
    pub fn l_field(&self, kind: CoefficientKind) -> Result<&Tensor4> {
        let i = self.slot(kind)?;
        Ok(match kind {
            CoefficientKind::X(_) => &self.lx[i],
            CoefficientKind::Y(_) => &self.ly[i],
        })
    }

    pub fn table(&self, kind: CoefficientKind) -> Result<CoefficientTable> {
        Ok(CoefficientTable {
            kind,
            patch: self.patch.clone(),
            values: self.field(kind)?.clone(),
            mu: self.mu,
        })
    }

    pub fn tables(&self) -> Vec<CoefficientTable> {
        let n = self.truncation as i32;
        (-1..=n)
            .map(CoefficientKind::X)
            .chain((0..=n).map(CoefficientKind::Y))
            .map(|k| self.table(k).expect("solved level"))
            .collect()
    }

    /// Relative deviation of X₋₁ from |det g_N|^{-1/4} over the grid.
    pub fn vleck_defect(&self) -> f64 {
        self.x[0]
            .data
            .iter()
            .zip(&self.patch.sqrtg.data)
            .map(|(x, s)| (x - s.powf(-0.5)).abs())
            .fold(0.0, f64::max)
    }

    /// Value of a coefficient at the base point, read off the grid.
    pub fn at_base(&self, kind: CoefficientKind) -> Result<f64> {
        let w = self.patch.weights(&Vector4::zeros())?;
        Ok(self.patch.eval(&w, self.field(kind)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureSample {
    pub kind: CoefficientKind,
    pub xi: [f64; 4],
    pub value: f64,
    pub residual: f64,
}

impl TransportSolution {
    fn interpolant(&self, kind: CoefficientKind) -> impl Fn(&Vector4<f64>) -> Result<f64> + '_ {
        move |p| {
            let w = self.patch.weights(p)?;
            Ok(self.patch.eval(&w, self.field(kind)?))
        }
    }

    /// Residual of a coefficient's transport equation at ξ,
    /// 4ξ·∂F + (ΔΓ − 8 + 4(k+2))F + S, with every derivative taken by
    /// fourth-order differences of the interpolants.
    pub fn closure_residual(&self, kind: CoefficientKind, xi: &Vector4<f64>, h: f64) -> Result<ClosureSample> {
        let patch = &self.patch;
        let mu = self.mu.eval(&patch.metric, &patch.chart_point(xi));
        let l = |k: CoefficientKind| -> Result<f64> {
            let (v, _, lap) = normal_laplacian(patch, xi, h, self.interpolant(k))?;
            Ok(lap + mu * v)
        };
        let (value, grad, _) = normal_laplacian(patch, xi, h, self.interpolant(kind))?;
        let (_, _, lap_gamma) = normal_laplacian(patch, xi, h, |p: &Vector4<f64>| {
            Ok(p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3])
        })?;
        let (k, source) = match kind {
            CoefficientKind::X(-1) => (-2, 0.0),
            CoefficientKind::X(0) => (-1, l(CoefficientKind::X(-1))?),
            CoefficientKind::X(n) => (n - 1, l(CoefficientKind::X(n - 1))? / n as f64),
            CoefficientKind::Y(0) => {
                return Err(Error::MissingPrerequisite("Y0 is prescribed, not transported".into()));
            }
            CoefficientKind::Y(n) => {
                let m = n as f64;
                let lx = l(CoefficientKind::X(n - 1))?;
                let ly = l(CoefficientKind::Y(n - 1))?;
                (n - 1, ly / m + 4.0 * self.interpolant(CoefficientKind::X(n))(xi)? - lx / (m * m))
            }
        };
        let residual = 4.0 * xi.dot(&grad) + (lap_gamma - 8.0 + 4.0 * (k + 2) as f64) * value + source;
        Ok(ClosureSample {
            kind,
            xi: [xi[0], xi[1], xi[2], xi[3]],
            value,
            residual,
        })
    }
}

/// Value, gradient and g^{ij}∂_i∂_j f + b^j∂_j f of a normal-coordinate
/// function at ξ, by fourth-order differences of step h.
pub fn normal_laplacian(
    patch: &NormalPatch,
    xi: &Vector4<f64>,
    h: f64,
    f: impl Fn(&Vector4<f64>) -> Result<f64>,
) -> Result<(f64, Vector4<f64>, f64)> {
    let w = patch.weights(xi)?;
    let (ginv, drift) = patch.local_operator(&w);
    let at = |offsets: &[(usize, i32)]| -> Result<f64> {
        let mut p = *xi;
        for &(i, o) in offsets {
            p[i] += o as f64 * h;
        }
        f(&p)
    };
    let value = f(xi)?;
    let mut grad = Vector4::zeros();
    let mut lap = 0.0;
    for i in 0..4 {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for k in 0..5 {
            let v = if k == 2 { value } else { at(&[(i, k as i32 - 2)])? };
            d1 += FD1[k] * v;
            d2 += FD2[k] * v;
        }
        grad[i] = d1 / h;
        lap += ginv[(i, i)] * d2 / (h * h);
        for j in 0..i {
            if ginv[(i, j)].abs() < 1e-14 {
                continue;
            }
            let mut m = 0.0;
            for a in (0..5).filter(|&a| a != 2) {
                for b in (0..5).filter(|&b| b != 2) {
                    m += FD1[a] * FD1[b] * at(&[(i, a as i32 - 2), (j, b as i32 - 2)])?;
                }
            }
            lap += 2.0 * ginv[(i, j)] * m / (h * h);
        }
    }
    lap += drift.dot(&grad);
    Ok((value, grad, lap))
}

/// X_n(y, y) and Y_n(y, y) from the algebraic diagonal conditions. Level n
/// needs (Δ+μ) of level n − 1 at y, taken from `lower`.
pub fn diagonal_values(n: i32, lower: &TransportSolution, y0: &Y0Choice) -> Result<(f64, f64)> {
    if n == -1 {
        return Ok((1.0, 0.0));
    }
    let w = lower.patch.weights(&Vector4::zeros())?;
    let at = |kind| -> Result<f64> { Ok(lower.patch.eval(&w, lower.l_field(kind)?)) };
    if n == 0 {
        let x0 = -at(CoefficientKind::X(-1))? / 4.0;
        return Ok((x0, y0.eval(0.0)));
    }
    let m = (n - 1) as f64;
    let denom = 8.0 + 4.0 * m;
    let lxm = at(CoefficientKind::X(n - 1))?;
    let lym = at(CoefficientKind::Y(n - 1))?;
    let xn = -lxm / ((m + 1.0) * denom);
    let yn = (-lym / (m + 1.0) - 4.0 * xn + lxm / ((m + 1.0) * (m + 1.0))) / denom;
    Ok((xn, yn))
}

/// Second-order centered Laplace–Beltrami of a chart function in divergence
/// form, (1/√g) ∂_i(√g g^{ij} ∂_j f).
pub fn laplacian_fd(
    metric: &MetricModel,
    x: &Point,
    h: f64,
    f: impl Fn(&Point) -> Result<f64>,
) -> Result<f64> {
    let e = |i: usize| {
        let mut v = Vector4::zeros();
        v[i] = h;
        v
    };
    let weight = |p: &Point| -> Result<(f64, nalgebra::Matrix4<f64>)> {
        metric.check_in_chart(p)?;
        let g = metric.metric(p);
        let inv = g.try_inverse().ok_or(Error::SingularJacobian(g.determinant()))?;
        Ok((g.determinant().abs().sqrt(), inv))
    };
    let f0 = f(x)?;
    let (s0, _) = weight(x)?;
    let mut acc = 0.0;
    for i in 0..4 {
        let ei = e(i);
        let fp = f(&(x + ei))?;
        let fm = f(&(x - ei))?;
        let (sp, gp) = weight(&(x + ei * 0.5))?;
        let (sm, gm) = weight(&(x - ei * 0.5))?;
        acc += (sp * gp[(i, i)] * (fp - f0) - sm * gm[(i, i)] * (f0 - fm)) / (h * h);
        for j in (0..4).filter(|&j| j != i) {
            let ej = e(j);
            let flux = |p: &Point| -> Result<f64> {
                let (s, g) = weight(p)?;
                if g[(i, j)] == 0.0 {
                    return Ok(0.0);
                }
                Ok(s * g[(i, j)] * (f(&(p + ej))? - f(&(p - ej))?) / (2.0 * h))
            };
            acc += (flux(&(x + ei))? - flux(&(x - ei))?) / (2.0 * h);
        }
    }
    Ok(acc / s0)
}

/// Finite-difference Laplacian of a table's interpolant at a chart point.
pub fn laplacian_of_coefficient(table: &CoefficientTable, x: &Point, h: f64) -> Result<f64> {
    let margin = table.patch.radius() - 2.0 * h;
    let xi = table.patch.normal_coordinates(x)?;
    if xi.amax() > margin {
        return Err(Error::StencilTooNarrow(format!(
            "point at normal radius {} too close to patch edge {}",
            xi.amax(),
            table.patch.radius()
        )));
    }
    laplacian_fd(&table.patch.metric, x, h, |p| table.value_at(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScaleFactor;

    fn cfg() -> TransportConfig {
        TransportConfig {
            patch: PatchConfig {
                nodes: 9,
                radius: 0.4,
                ..PatchConfig::default()
            },
            quadrature: 16,
            ..TransportConfig::default()
        }
    }

    #[test]
    fn minkowski_constants() {
        for m2 in [1.0, 4.0] {
            let s = TransportSolution::solve(
                &MetricModel::minkowski(),
                &Point::zeros(),
                MuProfile::Constant { mass_squared: m2 },
                &cfg(),
            )
            .unwrap();
            let expect = [
                (CoefficientKind::X(-1), 1.0),
                (CoefficientKind::X(0), -m2 / 4.0),
                (CoefficientKind::X(1), m2 * m2 / 32.0),
                (CoefficientKind::X(2), -m2.powi(3) / 768.0),
                (CoefficientKind::Y(0), 0.0),
                (CoefficientKind::Y(1), -3.0 * m2 * m2 / 64.0),
                (CoefficientKind::Y(2), 7.0 * m2.powi(3) / 2304.0),
            ];
            for (k, v) in expect {
                let spread = s.table(k).unwrap().spread(v);
                assert!(spread < 1e-9, "{k}: {spread}");
            }
        }
    }

    #[test]
    fn diagonal_matches_grid_flrw() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let s = TransportSolution::solve(&m, &Point::new(1.0, 0.0, 0.0, 0.0), MuProfile::Constant { mass_squared: 1.0 }, &cfg())
            .unwrap();
        assert!(s.vleck_defect() < 1e-7, "{}", s.vleck_defect());
        for n in 0..=2 {
            let (xd, yd) = diagonal_values(n, &s, &Y0Choice::Zero).unwrap();
            let xg = s.at_base(CoefficientKind::X(n)).unwrap();
            let yg = s.at_base(CoefficientKind::Y(n)).unwrap();
            assert!((xd - xg).abs() < 1e-6, "X{n}: {xd} vs {xg}");
            assert!((yd - yg).abs() < 1e-6, "Y{n}: {yd} vs {yg}");
        }
    }

    #[test]
    fn diagonal_flat_recursion() {
        let s = TransportSolution::solve(
            &MetricModel::minkowski(),
            &Point::zeros(),
            MuProfile::Constant { mass_squared: 1.0 },
            &cfg(),
        )
        .unwrap();
        let (x0, _) = diagonal_values(0, &s, &Y0Choice::Zero).unwrap();
        let (x1, y1) = diagonal_values(1, &s, &Y0Choice::Zero).unwrap();
        assert!((x0 + 0.25).abs() < 1e-9);
        assert!((x1 - 1.0 / 32.0).abs() < 1e-9, "{x1}");
        assert!((y1 + 3.0 / 64.0).abs() < 1e-9);
    }

    #[test]
    fn fd_laplacian_of_interval() {
        let m = MetricModel::minkowski();
        let y = Point::new(0.1, 0.2, -0.1, 0.0);
        let x = Point::new(0.3, 0.0, 0.1, 0.2);
        let v = laplacian_fd(&m, &x, 1e-3, |p| {
            let d = p - y;
            Ok(d[0] * d[0] - d[1] * d[1] - d[2] * d[2] - d[3] * d[3])
        })
        .unwrap();
        assert!((v - 8.0).abs() < 1e-4, "{v}");
    }

    #[test]
    fn missing_level_is_reported() {
        let s = TransportSolution::solve(
            &MetricModel::minkowski(),
            &Point::zeros(),
            MuProfile::Constant { mass_squared: 1.0 },
            &TransportConfig { truncation: 1, ..cfg() },
        )
        .unwrap();
        assert!(matches!(diagonal_values(3, &s, &Y0Choice::Zero), Err(Error::MissingPrerequisite(_))));
    }

    #[test]
    fn closure_residual_is_small_on_flrw() {
        let m = MetricModel::conformal_flrw(crate::geometry::ScaleFactor::linear(0.5));
        let sol = TransportSolution::solve(&m, &Point::new(0.5, 0.0, 0.0, 0.0), MuProfile::Dirac { mass: 1.0 }, &TransportConfig::default()).unwrap();
        let points = [Vector4::new(0.1, 0.05, -0.08, 0.02), Vector4::new(-0.2, 0.1, 0.15, -0.1), Vector4::zeros()];
        for xi in &points {
            for kind in [CoefficientKind::X(-1), CoefficientKind::X(0), CoefficientKind::X(2), CoefficientKind::Y(1), CoefficientKind::Y(2)] {
                let c = sol.closure_residual(kind, xi, 1e-3).unwrap();
                assert!(c.residual.abs() < 1e-4 * (1.0 + c.value.abs()), "{kind} {xi:?}: {c:?}");
            }
        }
        assert!(matches!(sol.closure_residual(CoefficientKind::Y(0), &points[0], 1e-3), Err(Error::MissingPrerequisite(_))));
    }
}
