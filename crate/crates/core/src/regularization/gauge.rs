//! Off-cone extension f_off = f_cone + Γ·h, with h fixed along a generator so
//! that the gradient bracket 2⟨∇f, ∇P⟩ + P·Δf vanishes on the cone.

use super::generator::{solve_generator, GeneratorFields};
use super::{ConeConfig, Level, Sheet};
use crate::error::{Error, Result};
use crate::parallel::try_map_range;
use crate::spectral::{ChebGrid, Tensor4, FD1, FD2};
use crate::transport::{CoefficientKind, TransportSolution};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// The coefficient multiplying f in the bracket of a level.
pub fn partner(level: Level) -> CoefficientKind {
    match level {
        Level::Bracket(n) => CoefficientKind::X(n),
        Level::Brace(n) => CoefficientKind::Y(n),
    }
}

/// A level's cone values on a fan of generators around a central direction,
/// parametrized by gnomonic coordinates (α, β).
#[derive(Debug, Clone)]
pub struct LocalExtension {
    pub levels: Vec<Level>,
    pub sheet: Sheet,
    pub omega: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    t_grid: ChebGrid,
    ang: ChebGrid,
    /// Per level, values[(i_t * n + i_a) * n + i_b].
    values: Vec<Vec<f64>>,
}

fn transverse_basis(omega: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let w = omega.normalize();
    let seed = if w[0].abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (seed - w * w.dot(&seed)).normalize();
    (e1, w.cross(&e1))
}

impl LocalExtension {
    /// Every level of the hierarchy on the fan around ω.
    pub fn build(sol: &TransportSolution, omega: &Vector3<f64>, sheet: Sheet, cfg: &ConeConfig) -> Result<Self> {
        let omega = omega.normalize();
        let (e1, e2) = transverse_basis(&omega);
        let reach = cfg.t_max * (1.0 + 4.0 * cfg.fd_relative_step + 0.05);
        let t_grid = match sheet {
            Sheet::Future => ChebGrid::new(cfg.t_nodes + 4, 0.0, reach),
            Sheet::Past => ChebGrid::new(cfg.t_nodes + 4, -reach, 0.0),
        };
        let ang = ChebGrid::new(cfg.extension_nodes, -cfg.extension_halfwidth, cfg.extension_halfwidth);
        let n = ang.len();
        let levels = Level::sequence(sol.truncation);
        let columns = try_map_range(n * n, |ab| -> Result<Vec<DVector<f64>>> {
            let dir = omega + e1 * ang.nodes[ab / n] + e2 * ang.nodes[ab % n];
            let g = GeneratorFields::sample_on(sol, &dir.normalize(), sheet, t_grid.clone())?;
            let h = solve_generator(&g, &levels, cfg.c)?;
            levels.iter().map(|l| h.get(*l).cloned()).collect()
        })?;
        let nt = t_grid.len();
        let mut values = vec![vec![0.0; nt * n * n]; levels.len()];
        for (ab, col) in columns.iter().enumerate() {
            for (li, level_values) in col.iter().enumerate() {
                for (it, v) in level_values.iter().enumerate() {
                    values[li][it * n * n + ab] = *v;
                }
            }
        }
        Ok(Self {
            levels,
            sheet,
            omega,
            e1,
            e2,
            t_grid,
            ang,
            values,
        })
    }

    /// Cone value transported off the cone: F(ν(ω)ξ⁰, ω) with
    /// ω = sign(ξ⁰)·ξ⃗/|ξ⃗|.
    pub fn base_value(&self, level: Level, sol: &TransportSolution, xi: &Vector4<f64>) -> Result<f64> {
        let li = self
            .levels
            .iter()
            .position(|l| *l == level)
            .ok_or_else(|| Error::MissingPrerequisite(format!("level {level} not on the fan")))?;
        let spatial = Vector3::new(xi[1], xi[2], xi[3]);
        let r = spatial.norm();
        if r == 0.0 {
            return Ok(0.0);
        }
        let w = spatial * (xi[0].signum() / r);
        let k = sol.patch.generator(&w)?;
        let t = xi[0] / k[0];
        let dot = w.dot(&self.omega);
        let (a, b) = (w.dot(&self.e1) / dot, w.dot(&self.e2) / dot);
        let hw = self.ang.hi;
        if dot <= 0.0 || a.abs() > hw || b.abs() > hw || t < self.t_grid.lo || t > self.t_grid.hi {
            return Err(Error::StencilTooNarrow(format!(
                "extension sample (t={t:.3e}, α={a:.3e}, β={b:.3e}) outside the fan"
            )));
        }
        let bt = self.t_grid.basis(t);
        let ba = self.ang.basis(a);
        let bb = self.ang.basis(b);
        let n = self.ang.len();
        let mut acc = 0.0;
        for (it, wt) in bt.iter().enumerate() {
            for (ia, wa) in ba.iter().enumerate() {
                let row = &self.values[li][(it * n + ia) * n..(it * n + ia + 1) * n];
                acc += wt * wa * row.iter().zip(&bb).map(|(v, w)| v * w).sum::<f64>();
            }
        }
        Ok(acc)
    }
}

/// 2 g^{ij}∂_i f ∂_j P + P·Δf at ξ by fourth-order differences of f.
pub fn bracket_at(
    sol: &TransportSolution,
    partner_grad: &[Tensor4; 4],
    partner_field: &Tensor4,
    xi: &Vector4<f64>,
    step: f64,
    f: &dyn Fn(&Vector4<f64>) -> Result<f64>,
) -> Result<f64> {
    let patch = &sol.patch;
    let w = patch.weights(xi)?;
    let (ginv, drift) = patch.local_operator(&w);
    let p = patch.eval(&w, partner_field);
    let dp = Vector4::from_fn(|i, _| patch.eval(&w, &partner_grad[i]));
    let e = |i: usize| {
        let mut v = Vector4::zeros();
        v[i] = step;
        v
    };
    let f0 = f(xi)?;
    let mut d1 = Vector4::zeros();
    let mut d2 = nalgebra::Matrix4::zeros();
    for i in 0..4 {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (o, (a, b)) in FD1.iter().zip(FD2.iter()).enumerate() {
            let v = if o == 2 { f0 } else { f(&(xi + e(i) * (o as f64 - 2.0)))? };
            s1 += a * v;
            s2 += b * v;
        }
        d1[i] = s1 / step;
        d2[(i, i)] = s2 / (step * step);
        for j in 0..i {
            let mut s = 0.0;
            for (oa, wa) in FD1.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                for (ob, wb) in FD1.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                    let p = xi + e(i) * (oa as f64 - 2.0) + e(j) * (ob as f64 - 2.0);
                    s += wa * wb * f(&p)?;
                }
            }
            d2[(i, j)] = s / (step * step);
            d2[(j, i)] = d2[(i, j)];
        }
    }
    let lap = (ginv.component_mul(&d2)).sum() + drift.dot(&d1);
    Ok(2.0 * d1.dot(&(ginv * dp)) + p * lap)
}

/// Lagrange extrapolation of `values` (given at `nodes`) to x.
fn lagrange(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, (&xi, &vi)) in nodes.iter().zip(values).enumerate() {
        let mut l = 1.0;
        for (j, &xj) in nodes.iter().enumerate() {
            if i != j {
                l *= (x - xj) / (xi - xj);
            }
        }
        acc += l * vi;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionRecord {
    pub level: Level,
    pub sheet: Sheet,
    pub omega: [f64; 3],
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    /// max |bracket| of the extended function over cone samples away from the tip.
    pub residual: f64,
}

/// The correction h of one level along the central generator of a fan.
#[derive(Debug, Clone)]
pub struct Correction {
    pub level: Level,
    pub generator: GeneratorFields,
    pub h: Vec<f64>,
}

impl Correction {
    /// f_cone + Γ·h at ξ, with h carried off the generator along ξ⁰.
    pub fn value(&self, ext: &LocalExtension, sol: &TransportSolution, xi: &Vector4<f64>) -> Result<f64> {
        let gamma = xi[0] * xi[0] - xi[1] * xi[1] - xi[2] * xi[2] - xi[3] * xi[3];
        let nu = 1.0 / self.generator.k[0];
        Ok(ext.base_value(self.level, sol, xi)? + gamma * self.generator.grid.interpolate(&self.h, nu * xi[0]))
    }

    /// Measured bracket of the extended function on the generator's nodes
    /// (tip excluded).
    pub fn measured_bracket(&self, ext: &LocalExtension, sol: &TransportSolution, cfg: &ConeConfig) -> Result<Vec<(f64, f64)>> {
        let field = sol.field(partner(self.level))?;
        let grad = sol.patch.gradient(field);
        let f_off = |xi: &Vector4<f64>| self.value(ext, sol, xi);
        let g = &self.generator;
        let mut out = Vec::new();
        for &t in g.grid.nodes.iter().filter(|t| t.abs() >= cfg.tip_exclusion) {
            let xi = g.k * t;
            let step = cfg.fd_relative_step * xi.amax();
            out.push((t, bracket_at(sol, &grad, field, &xi, step, &f_off)?));
        }
        Ok(out)
    }
}

/// Fix h along the central generator of the fan so that the bracket of the
/// level vanishes on the cone.
pub fn enforce(sol: &TransportSolution, ext: &LocalExtension, level: Level, cfg: &ConeConfig) -> Result<Correction> {
    let g = GeneratorFields::sample(sol, &ext.omega, ext.sheet, cfg)?;
    let kind = partner(level);
    let field = sol.field(kind)?;
    let grad = sol.patch.gradient(field);
    let base = |xi: &Vector4<f64>| ext.base_value(level, sol, xi);
    let t = g.t();
    let m = t.len();
    let mut b = DVector::zeros(m);
    for i in (0..m).filter(|&i| i != g.tip) {
        let xi = g.k * t[i];
        b[i] = bracket_at(sol, &grad, field, &xi, cfg.fd_relative_step * xi.amax(), &base)?;
    }
    let mut near: Vec<usize> = (0..m).filter(|&i| i != g.tip).collect();
    near.sort_by(|&a, &c| t[a].abs().total_cmp(&t[c].abs()));
    near.truncate(6);
    b[g.tip] = lagrange(
        &near.iter().map(|&i| t[i]).collect::<Vec<_>>(),
        &near.iter().map(|&i| b[i]).collect::<Vec<_>>(),
        0.0,
    );

    let p = match kind {
        CoefficientKind::X(n) => g.x_at(n).clone(),
        CoefficientKind::Y(n) => g.y_at(n).clone(),
    };
    let dp = g.derivative(&p);
    let w: Vec<_> = t.iter().map(|&s| sol.patch.weights(&(g.k * s))).collect::<Result<_>>()?;
    let lap_gamma: Vec<f64> = w.iter().map(|w| 8.0 + sol.patch.eval(w, &sol.sigma)).collect();
    let d = g.grid.diff_matrix();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = 4.0 * t[i] * p[i] * d[(i, j)];
        }
        a[(i, i)] += 4.0 * t[i] * dp[i] + lap_gamma[i] * p[i];
    }
    let h = a
        .lu()
        .solve(&(-b))
        .ok_or_else(|| Error::OdeStep(format!("singular gauge system at level {level}")))?;
    Ok(Correction {
        level,
        generator: g,
        h: h.iter().copied().collect(),
    })
}

/// Build the fan around ω, enforce the gauge for one level and measure what
/// is left of its bracket.
pub fn extend_off_cone(
    sol: &TransportSolution,
    level: Level,
    omega: &Vector3<f64>,
    sheet: Sheet,
    cfg: &ConeConfig,
) -> Result<ExtensionRecord> {
    let ext = LocalExtension::build(sol, omega, sheet, cfg)?;
    let corr = enforce(sol, &ext, level, cfg)?;
    let measured = corr.measured_bracket(&ext, sol, cfg)?;
    let residual = measured.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    if !(residual < cfg.tolerance) {
        return Err(Error::EnforcementFailure {
            level: level.to_string(),
            residual,
            tolerance: cfg.tolerance,
        });
    }
    Ok(ExtensionRecord {
        level,
        sheet,
        omega: [ext.omega[0], ext.omega[1], ext.omega[2]],
        t: corr.generator.grid.nodes.clone(),
        h: corr.h,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MetricModel, Point};
    use crate::transport::{MuProfile, PatchConfig, TransportConfig};

    fn flat() -> TransportSolution {
        let cfg = TransportConfig {
            patch: PatchConfig {
                nodes: 7,
                radius: 0.45,
                ..PatchConfig::default()
            },
            quadrature: 12,
            ..TransportConfig::default()
        };
        TransportSolution::solve(&MetricModel::minkowski(), &Point::zeros(), MuProfile::Constant { mass_squared: 1.0 }, &cfg)
            .unwrap()
    }

    #[test]
    fn minkowski_needs_no_correction() {
        let sol = flat();
        let cfg = ConeConfig::default();
        let rec = extend_off_cone(&sol, Level::Bracket(-1), &Vector3::new(1.0, 0.0, 0.0), Sheet::Future, &cfg).unwrap();
        assert!(rec.residual < 1e-9, "{}", rec.residual);
        assert!(rec.h.iter().all(|h| h.abs() < 1e-8), "{:?}", rec.h);
    }

    #[test]
    fn perturbed_extension_is_detected() {
        let sol = flat();
        let cfg = ConeConfig::default();
        let omega = Vector3::new(0.0, 1.0, 0.0);
        let ext = LocalExtension::build(&sol, &omega, Sheet::Future, &cfg).unwrap();
        let mut corr = enforce(&sol, &ext, Level::Bracket(-1), &cfg).unwrap();
        corr.h.iter_mut().for_each(|h| *h = 1.0);
        let worst = corr
            .measured_bracket(&ext, &sol, &cfg)
            .unwrap()
            .iter()
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        assert!(worst > 1.0, "{worst}");
    }

    #[test]
    fn flrw_enforcement_succeeds() {
        use crate::geometry::ScaleFactor;
        let cfg = TransportConfig {
            patch: PatchConfig {
                nodes: 9,
                radius: 0.45,
                ..PatchConfig::default()
            },
            quadrature: 14,
            ..TransportConfig::default()
        };
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let sol = TransportSolution::solve(&m, &Point::new(0.5, 0.0, 0.0, 0.0), MuProfile::Constant { mass_squared: 1.0 }, &cfg)
            .unwrap();
        let cone = ConeConfig::default();
        for level in [Level::Bracket(-1), Level::Bracket(0), Level::Brace(2)] {
            for sheet in [Sheet::Future, Sheet::Past] {
                let rec = extend_off_cone(&sol, level, &Vector3::new(0.3, -0.5, 0.8), sheet, &cone).unwrap();
                eprintln!("{level} {sheet:?} residual {:.3e} h_max {:.3e}", rec.residual, rec.h.iter().fold(0.0f64, |a, b| a.max(b.abs())));
                assert!(rec.residual < 1e-4);
            }
        }
    }
}
