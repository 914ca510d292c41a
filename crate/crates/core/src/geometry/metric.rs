//! Metric models on a single chart.

use crate::error::{Error, Result};
use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

pub type Point = Vector4<f64>;
/// `christoffel[a][b][c]` = Γ^a_bc.
pub type Christoffel = [[[f64; 4]; 4]; 4];

pub const MINKOWSKI: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

pub fn eta() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::from(MINKOWSKI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Minkowski,
    ConformalFlrw,
    Custom,
}

/// Conformal factor a(η) given as polynomial coefficients in η = x⁰.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub coefficients: Vec<f64>,
}

impl ScaleFactor {
    pub fn linear(slope: f64) -> Self {
        Self {
            coefficients: vec![1.0, slope],
        }
    }

    /// (a, a', a'') at η.
    pub fn eval(&self, eta: f64) -> (f64, f64, f64) {
        let (mut a, mut da, mut dda) = (0.0, 0.0, 0.0);
        for &c in self.coefficients.iter().rev() {
            dda = dda * eta + 2.0 * da;
            da = da * eta + a;
            a = a * eta + c;
        }
        (a, da, dda)
    }
}

/// Metric sampled on a regular grid, multilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMetric {
    axes: [Vec<f64>; 4],
    /// Ten independent components per node, order g00 g01 g02 g03 g11 g12 g13 g22 g23 g33.
    values: Vec<[f64; 10]>,
}

const SYM_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

impl TabulatedMetric {
    /// Parse rows of `x0,x1,x2,x3,g00,g01,g02,g03,g11,g12,g13,g22,g23,g33`.
    /// Lines starting with `#` and a non-numeric header line are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<([f64; 4], [f64; 10])> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 14 {
                return Err(Error::config(
                    format!("metric_grid line {}", lineno + 1),
                    format!("expected 14 columns, found {}", fields.len()),
                ));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => {
                    let mut x = [0.0; 4];
                    let mut g = [0.0; 10];
                    x.copy_from_slice(&v[..4]);
                    g.copy_from_slice(&v[4..]);
                    rows.push((x, g));
                }
                Err(_) if rows.is_empty() => continue,
                Err(e) => {
                    return Err(Error::config(
                        format!("metric_grid line {}", lineno + 1),
                        e.to_string(),
                    ))
                }
            }
        }
        let mut axes: [Vec<f64>; 4] = Default::default();
        for (ax, axis) in axes.iter_mut().enumerate() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r.0[ax]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            if vals.len() < 2 {
                return Err(Error::config(
                    "metric_grid",
                    format!("axis {ax} needs at least two distinct values"),
                ));
            }
            *axis = vals;
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(Error::config(
                "metric_grid",
                format!("grid is not rectangular: {} rows for {} nodes", rows.len(), total),
            ));
        }
        let mut values = vec![[f64::NAN; 10]; total];
        for (x, g) in rows {
            let mut flat = 0;
            for ax in 0..4 {
                let i = axes[ax]
                    .iter()
                    .position(|v| (v - x[ax]).abs() < 1e-12)
                    .expect("axis value present");
                flat = flat * axes[ax].len() + i;
            }
            values[flat] = g;
        }
        Ok(Self { axes, values })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    pub fn bounds(&self) -> [[f64; 2]; 4] {
        let mut b = [[0.0; 2]; 4];
        for ax in 0..4 {
            b[ax] = [self.axes[ax][0], *self.axes[ax].last().unwrap()];
        }
        b
    }

    fn metric(&self, x: &Point) -> Matrix4<f64> {
        let mut lower = [0usize; 4];
        let mut frac = [0.0; 4];
        for ax in 0..4 {
            let a = &self.axes[ax];
            let xv = x[ax].clamp(a[0], a[a.len() - 1]);
            let mut i = a.partition_point(|v| *v <= xv).saturating_sub(1);
            i = i.min(a.len() - 2);
            lower[ax] = i;
            frac[ax] = (xv - a[i]) / (a[i + 1] - a[i]);
        }
        let mut acc = [0.0; 10];
        for corner in 0..16 {
            let mut w = 1.0;
            let mut flat = 0;
            for ax in 0..4 {
                let bit = (corner >> (3 - ax)) & 1;
                w *= if bit == 1 { frac[ax] } else { 1.0 - frac[ax] };
                flat = flat * self.axes[ax].len() + lower[ax] + bit;
            }
            if w != 0.0 {
                for (k, v) in self.values[flat].iter().enumerate() {
                    acc[k] += w * v;
                }
            }
        }
        let mut g = Matrix4::zeros();
        for (k, &(i, j)) in SYM_INDEX.iter().enumerate() {
            g[(i, j)] = acc[k];
            g[(j, i)] = acc[k];
        }
        g
    }
}

/// A chart, its metric, time function and curvature on a convex patch.
#[derive(Debug, Clone)]
pub struct MetricModel {
    family: Family,
    pub chart_bounds: [[f64; 2]; 4],
    /// Coordinate radius around a base point inside which geodesic
    /// connection is trusted.
    pub patch_radius: f64,
}

#[derive(Debug, Clone)]
enum Family {
    Minkowski,
    ConformalFlrw(ScaleFactor),
    Custom(Arc<TabulatedMetric>),
}

impl MetricModel {
    pub fn minkowski() -> Self {
        Self {
            family: Family::Minkowski,
            chart_bounds: [[-10.0, 10.0]; 4],
            patch_radius: 2.0,
        }
    }

    /// Conformally flat FLRW metric g = a(x⁰)² diag(1,-1,-1,-1).
    pub fn conformal_flrw(scale: ScaleFactor) -> Self {
        // keep a(η) away from zero on the chart
        let mut lo = -2.0f64;
        while scale.eval(lo).0 < 0.5 && lo < 0.0 {
            lo += 0.1;
        }
        Self {
            family: Family::ConformalFlrw(scale),
            chart_bounds: [[lo, 2.0], [-3.0, 3.0], [-3.0, 3.0], [-3.0, 3.0]],
            patch_radius: 1.0,
        }
    }

    pub fn custom(table: TabulatedMetric, patch_radius: f64) -> Self {
        Self {
            chart_bounds: table.bounds(),
            family: Family::Custom(Arc::new(table)),
            patch_radius,
        }
    }

    pub fn family_id(&self) -> FamilyId {
        match self.family {
            Family::Minkowski => FamilyId::Minkowski,
            Family::ConformalFlrw(_) => FamilyId::ConformalFlrw,
            Family::Custom(_) => FamilyId::Custom,
        }
    }

    pub fn scale_factor(&self) -> Option<&ScaleFactor> {
        match &self.family {
            Family::ConformalFlrw(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.family, Family::Minkowski)
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..4).all(|i| x[i] >= self.chart_bounds[i][0] && x[i] <= self.chart_bounds[i][1])
    }

    pub fn check_in_chart(&self, x: &Point) -> Result<()> {
        if self.contains(x) && x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::OutOfChart([x[0], x[1], x[2], x[3]]))
        }
    }

    pub fn metric(&self, x: &Point) -> Matrix4<f64> {
        match &self.family {
            Family::Minkowski => eta(),
            Family::ConformalFlrw(s) => {
                let a = s.eval(x[0]).0;
                eta() * (a * a)
            }
            Family::Custom(t) => t.metric(x),
        }
    }

    /// `dg[c]` = ∂_c g.
    pub fn metric_derivatives(&self, x: &Point) -> [Matrix4<f64>; 4] {
        match &self.family {
            Family::Minkowski => [Matrix4::zeros(); 4],
            Family::ConformalFlrw(s) => {
                let (a, da, _) = s.eval(x[0]);
                [eta() * (2.0 * a * da), Matrix4::zeros(), Matrix4::zeros(), Matrix4::zeros()]
            }
            Family::Custom(_) => {
                let h = 1e-6;
                let mut out = [Matrix4::zeros(); 4];
                for (c, o) in out.iter_mut().enumerate() {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[c] += h;
                    xm[c] -= h;
                    *o = (self.metric(&xp) - self.metric(&xm)) / (2.0 * h);
                }
                out
            }
        }
    }

    pub fn christoffel(&self, x: &Point) -> Christoffel {
        let g = self.metric(x);
        let ginv = g.try_inverse().unwrap_or_else(Matrix4::zeros);
        let dg = self.metric_derivatives(x);
        christoffel_from(&ginv, &dg)
    }

    /// Geodesic acceleration −Γ^a_bc v^b v^c.
    pub fn geodesic_acceleration(&self, x: &Point, v: &Vector4<f64>) -> Vector4<f64> {
        match &self.family {
            Family::Minkowski => Vector4::zeros(),
            Family::ConformalFlrw(s) => {
                let (a, da, _) = s.eval(x[0]);
                let h = da / a;
                let spatial = v[1] * v[1] + v[2] * v[2] + v[3] * v[3];
                Vector4::new(
                    -h * (v[0] * v[0] + spatial),
                    -2.0 * h * v[0] * v[1],
                    -2.0 * h * v[0] * v[2],
                    -2.0 * h * v[0] * v[3],
                )
            }
            Family::Custom(_) => {
                let gam = self.christoffel(x);
                let mut acc = Vector4::zeros();
                for a in 0..4 {
                    let mut s = 0.0;
                    for b in 0..4 {
                        for c in 0..4 {
                            s += gam[a][b][c] * v[b] * v[c];
                        }
                    }
                    acc[a] = -s;
                }
                acc
            }
        }
    }

    /// Time function 𝔱 = x⁰ (increasing towards the future).
    pub fn time_function(&self, x: &Point) -> f64 {
        x[0]
    }

    /// Unit future-directed normal u = ∇𝔱/|∇𝔱| at x (index raised).
    pub fn observer(&self, x: &Point) -> Vector4<f64> {
        let g = self.metric(x);
        let ginv = g.try_inverse().expect("metric invertible");
        let grad = ginv.column(0).into_owned();
        let norm2 = grad.dot(&(g * grad));
        grad / norm2.sqrt()
    }

    /// Coordinate time-translation field ∂_𝔱, used to normalize null generators.
    pub fn time_translation(&self, _x: &Point) -> Vector4<f64> {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Scalar curvature 𝔰.
    pub fn scalar_curvature(&self, x: &Point) -> f64 {
        match &self.family {
            Family::Minkowski => 0.0,
            Family::ConformalFlrw(s) => {
                let (a, _, dda) = s.eval(x[0]);
                -6.0 * dda / (a * a * a)
            }
            Family::Custom(_) => scalar_curvature_numeric(|p| self.metric(p), x, 1e-4),
        }
    }

    /// Check signature (+,−,−,−) at x.
    pub fn has_lorentzian_signature(&self, x: &Point) -> bool {
        let eig = SymmetricEigen::new(self.metric(x));
        let pos = eig.eigenvalues.iter().filter(|&&e| e > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|&&e| e < 0.0).count();
        pos == 1 && neg == 3
    }
}

pub fn christoffel_from(ginv: &Matrix4<f64>, dg: &[Matrix4<f64>; 4]) -> Christoffel {
    let mut gam = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in b..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += ginv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                }
                gam[a][b][c] = 0.5 * s;
                gam[a][c][b] = 0.5 * s;
            }
        }
    }
    gam
}

/// Scalar curvature from a metric callback by nested central differences.
/// R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb, R = g^bd R^a_bad.
pub fn scalar_curvature_numeric(metric: impl Fn(&Point) -> Matrix4<f64>, x: &Point, h: f64) -> f64 {
    let gamma_at = |p: &Point| -> Christoffel {
        let g = metric(p);
        let ginv = g.try_inverse().expect("metric invertible");
        let mut dg = [Matrix4::zeros(); 4];
        for (c, d) in dg.iter_mut().enumerate() {
            let mut xp = *p;
            let mut xm = *p;
            xp[c] += h;
            xm[c] -= h;
            *d = (metric(&xp) - metric(&xm)) / (2.0 * h);
        }
        christoffel_from(&ginv, &dg)
    };
    let gam = gamma_at(x);
    let mut dgam = [[[[0.0; 4]; 4]; 4]; 4];
    for (c, slot) in dgam.iter_mut().enumerate() {
        let mut xp = *x;
        let mut xm = *x;
        xp[c] += h;
        xm[c] -= h;
        let gp = gamma_at(&xp);
        let gm = gamma_at(&xm);
        for a in 0..4 {
            for b in 0..4 {
                for d in 0..4 {
                    slot[a][b][d] = (gp[a][b][d] - gm[a][b][d]) / (2.0 * h);
                }
            }
        }
    }
    let ginv = metric(x).try_inverse().expect("metric invertible");
    // Ricci_bd = R^a_bad
    let mut r = 0.0;
    for b in 0..4 {
        for d in 0..4 {
            let mut ric = 0.0;
            for a in 0..4 {
                ric += dgam[a][a][d][b] - dgam[d][a][a][b];
                for e in 0..4 {
                    ric += gam[a][a][e] * gam[e][d][b] - gam[a][d][e] * gam[e][a][b];
                }
            }
            r += ginv[(b, d)] * ric;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_factor_horner() {
        let s = ScaleFactor {
            coefficients: vec![1.0, 0.1, 0.05],
        };
        let (a, da, dda) = s.eval(0.4);
        assert!((a - (1.0 + 0.04 + 0.008)).abs() < 1e-15);
        assert!((da - (0.1 + 0.04)).abs() < 1e-15);
        assert!((dda - 0.1).abs() < 1e-15);
    }

    #[test]
    fn minkowski_is_eta() {
        let m = MetricModel::minkowski();
        let x = Point::new(0.3, -0.2, 0.1, 0.7);
        assert_eq!(m.metric(&x), eta());
        assert_eq!(m.scalar_curvature(&x), 0.0);
        assert!(m.has_lorentzian_signature(&x));
    }

    #[test]
    fn flrw_derivatives_match_finite_differences() {
        let m = MetricModel::conformal_flrw(ScaleFactor {
            coefficients: vec![1.0, 0.1, 0.03],
        });
        let x = Point::new(0.21, 0.1, -0.3, 0.05);
        let dg = m.metric_derivatives(&x);
        let h = 1e-5;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (m.metric(&xp) - m.metric(&xm)) / (2.0 * h);
            let rel = (fd - dg[c]).norm() / (1.0 + dg[c].norm());
            assert!(rel < 1e-6, "axis {c}: {rel}");
        }
    }

    #[test]
    fn flrw_curvature_matches_numeric_oracle() {
        let m = MetricModel::conformal_flrw(ScaleFactor {
            coefficients: vec![1.0, 0.1, 0.03],
        });
        let x = Point::new(0.2, 0.0, 0.1, 0.0);
        let analytic = m.scalar_curvature(&x);
        let numeric = scalar_curvature_numeric(|p| m.metric(p), &x, 1e-4);
        assert!((analytic - numeric).abs() < 1e-5, "{analytic} vs {numeric}");
    }

    #[test]
    fn flrw_acceleration_matches_christoffel_contraction() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.1));
        let x = Point::new(0.3, 0.1, 0.2, -0.1);
        let v = Vector4::new(1.0, 0.4, -0.3, 0.2);
        let gam = m.christoffel(&x);
        let fast = m.geodesic_acceleration(&x, &v);
        for a in 0..4 {
            let mut s = 0.0;
            for b in 0..4 {
                for c in 0..4 {
                    s += gam[a][b][c] * v[b] * v[c];
                }
            }
            assert!((fast[a] + s).abs() < 1e-14);
        }
    }

    #[test]
    fn tabulated_metric_reproduces_linear_data() {
        let mut csv = String::from("x0,x1,x2,x3,g00,g01,g02,g03,g11,g12,g13,g22,g23,g33\n");
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let (t, x, y, z) = (i as f64, j as f64, k as f64, l as f64);
                        let a = 1.0 + 0.1 * t;
                        csv.push_str(&format!(
                            "{t},{x},{y},{z},{},0,0,0,{},0,0,{},0,{}\n",
                            a,
                            -a,
                            -a,
                            -a
                        ));
                    }
                }
            }
        }
        let tab = TabulatedMetric::parse_csv(&csv).unwrap();
        let m = MetricModel::custom(tab, 0.5);
        let g = m.metric(&Point::new(0.5, 0.2, 0.3, 0.9));
        assert!((g[(0, 0)] - 1.05).abs() < 1e-14);
        assert!((g[(3, 3)] + 1.05).abs() < 1e-14);
    }
}
