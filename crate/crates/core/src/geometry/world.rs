//! World function Γ(x, y), its derivatives, the van Vleck–Morette factor and
//! null-cone parametrization.

use super::geodesic::{exp_jacobian, exp_map, shoot, SolverConfig};
use super::metric::{MetricModel, Point};
use crate::error::{Error, Result};
use crate::spectral::FD1;
use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldFunctionSample {
    pub gamma: f64,
    /// ∇Γ at x with index raised.
    pub grad_gamma: [f64; 4],
    pub laplacian_gamma: f64,
    pub vleck: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub solver: SolverConfig,
    /// Step for the fourth-order stencil used by the Laplacian of Γ.
    pub laplacian_step: f64,
    /// Velocity step for the exp-map Jacobian in the van Vleck factor.
    pub jacobian_step: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            laplacian_step: 1e-3,
            jacobian_step: 1e-4,
        }
    }
}

/// Orthonormal frame at y (columns, chart components) with e₀ the unit normal
/// to the time slices.
pub fn orthonormal_frame(metric: &MetricModel, y: &Point) -> Matrix4<f64> {
    let g = metric.metric(y);
    let mut e = Matrix4::zeros();
    e.set_column(0, &metric.observer(y));
    for i in 1..4 {
        let mut w = Vector4::zeros();
        w[i] = 1.0;
        for b in 0..i {
            let eb = e.column(b).into_owned();
            let sign = if b == 0 { 1.0 } else { -1.0 };
            w -= eb * (sign * w.dot(&(g * eb)));
        }
        let n2 = -w.dot(&(g * w));
        e.set_column(i, &(w / n2.sqrt()));
    }
    e
}

/// Future null direction E·(1, ω) rescaled so that g(k, ∂_𝔱) = 1.
pub fn normalized_null_direction(
    metric: &MetricModel,
    y: &Point,
    frame: &Matrix4<f64>,
    omega: &Vector3<f64>,
) -> Vector4<f64> {
    let w = omega / omega.norm();
    let k = frame * Vector4::new(1.0, w[0], w[1], w[2]);
    let z = metric.time_translation(y);
    let nu = k.dot(&(metric.metric(y) * z));
    k / nu
}

/// Lowered gradient of Γ(·, y) at the end of velocity v, and the tangent there.
fn lowered_gradient(metric: &MetricModel, y: &Point, v: &Vector4<f64>, cfg: &SolverConfig) -> (Point, Vector4<f64>) {
    let (x, tangent) = exp_map(metric, y, v, cfg);
    (x, metric.metric(&x) * (tangent * 2.0))
}

pub fn world_function(y: &Point, x: &Point, metric: &MetricModel, cfg: &WorldConfig) -> Result<WorldFunctionSample> {
    let (v, _, _) = shoot(y, x, metric, &cfg.solver, None)?;
    let gamma = v.dot(&(metric.metric(y) * v));
    let tangent = exp_map(metric, y, &v, &cfg.solver).1;
    let grad = tangent * 2.0;
    let laplacian_gamma = laplacian_of_gamma(y, x, &v, metric, cfg)?;
    let vleck = van_vleck_with(y, x, &v, metric, cfg)?;
    Ok(WorldFunctionSample {
        gamma,
        grad_gamma: [grad[0], grad[1], grad[2], grad[3]],
        laplacian_gamma,
        vleck,
    })
}

/// Γ only (one shooting solve).
pub fn gamma_only(y: &Point, x: &Point, metric: &MetricModel, cfg: &SolverConfig) -> Result<f64> {
    let (v, _, _) = shoot(y, x, metric, cfg, None)?;
    Ok(v.dot(&(metric.metric(y) * v)))
}

fn laplacian_of_gamma(y: &Point, x: &Point, v: &Vector4<f64>, metric: &MetricModel, cfg: &WorldConfig) -> Result<f64> {
    let h = cfg.laplacian_step;
    let mut hess = Matrix4::zeros();
    for i in 0..4 {
        let mut acc = Vector4::zeros();
        for (k, w) in FD1.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let mut xs = *x;
            xs[i] += (k as f64 - 2.0) * h;
            if !metric.contains(&xs) {
                return Err(Error::DegenerateStencil(format!("node {xs:?} outside chart")));
            }
            let (vs, _, _) = shoot(y, &xs, metric, &cfg.solver, Some(*v))
                .map_err(|e| Error::DegenerateStencil(e.to_string()))?;
            acc += lowered_gradient(metric, y, &vs, &cfg.solver).1 * *w;
        }
        hess.set_row(i, &(acc / h).transpose());
    }
    let hess = (hess + hess.transpose()) * 0.5;
    let ginv = metric.metric(x).try_inverse().expect("metric invertible");
    let gam = metric.christoffel(x);
    let dgamma = lowered_gradient(metric, y, v, &cfg.solver).1;
    let mut lap = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut conn = 0.0;
            for k in 0..4 {
                conn += gam[k][i][j] * dgamma[k];
            }
            lap += ginv[(i, j)] * (hess[(i, j)] - conn);
        }
    }
    Ok(lap)
}

/// √(van Vleck–Morette determinant): |det g|^{-1/4} in normal coordinates at y.
pub fn van_vleck(y: &Point, x: &Point, metric: &MetricModel, cfg: &WorldConfig) -> Result<f64> {
    let (v, _, _) = shoot(y, x, metric, &cfg.solver, None)?;
    van_vleck_with(y, x, &v, metric, cfg)
}

fn van_vleck_with(y: &Point, x: &Point, v: &Vector4<f64>, metric: &MetricModel, cfg: &WorldConfig) -> Result<f64> {
    let frame = orthonormal_frame(metric, y);
    let jv = exp_jacobian(metric, y, v, &cfg.solver, cfg.jacobian_step);
    let j = jv * frame;
    let gn = j.transpose() * metric.metric(x) * j;
    let det = gn.determinant();
    if det.abs() < 1e-12 {
        return Err(Error::SingularJacobian(det));
    }
    Ok(det.abs().powf(-0.25))
}

/// Point at affine parameter t along the null geodesic from y with tangent k.
/// k is rescaled so that g(k, ∂_𝔱) = 1.
pub fn null_cone_point(y: &Point, k: &Vector4<f64>, t: f64, metric: &MetricModel, cfg: &SolverConfig) -> Result<Point> {
    metric.check_in_chart(y)?;
    let g = metric.metric(y);
    let norm = k.dot(&(g * k));
    if norm.abs() > 1e-10 * k.dot(k).max(1e-300) {
        return Err(Error::NotNull(norm));
    }
    let nu = k.dot(&(g * metric.time_translation(y)));
    if nu.abs() < 1e-14 {
        return Err(Error::NotNull(norm));
    }
    let k = k / nu;
    let x = exp_map(metric, y, &(k * t), cfg).0;
    metric.check_in_chart(&x)?;
    Ok(x)
}
