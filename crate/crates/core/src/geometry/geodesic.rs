//! Geodesic initial- and boundary-value problems.

use super::metric::{MetricModel, Point};
use crate::error::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// RK4 steps of the coarse pass; the fine pass uses twice as many and the
    /// two are Richardson-combined.
    pub ivp_steps: usize,
    pub max_iterations: usize,
    /// Terminal defect tolerance in chart units.
    pub tolerance: f64,
    /// Relative step of the finite-difference shooting Jacobian.
    pub jacobian_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ivp_steps: 16,
            max_iterations: 50,
            tolerance: 1e-12,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalCharacter {
    Timelike,
    Null,
    Spacelike,
}

impl CausalCharacter {
    pub fn classify(norm: f64, scale: f64) -> Self {
        if norm.abs() <= 1e-10 * scale.max(1e-300) {
            CausalCharacter::Null
        } else if norm > 0.0 {
            CausalCharacter::Timelike
        } else {
            CausalCharacter::Spacelike
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSample {
    pub t: f64,
    pub position: [f64; 4],
    pub tangent: [f64; 4],
}

/// A solved boundary-value geodesic from `base` to `target` on t ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRecord {
    pub base: [f64; 4],
    pub target: [f64; 4],
    pub initial_velocity: [f64; 4],
    /// Tangent at the target, under the [0, 1] parametrization.
    pub final_tangent: [f64; 4],
    pub samples: Vec<GeodesicSample>,
    pub causal_character: CausalCharacter,
    pub iterations: usize,
    pub defect: f64,
}

impl GeodesicRecord {
    pub fn velocity(&self) -> Vector4<f64> {
        Vector4::from(self.initial_velocity)
    }

    pub fn end_tangent(&self) -> Vector4<f64> {
        Vector4::from(self.final_tangent)
    }
}

type State = (Vector4<f64>, Vector4<f64>);

fn rk4_step(metric: &MetricModel, s: &State, h: f64) -> State {
    let f = |x: &Vector4<f64>, v: &Vector4<f64>| (*v, metric.geodesic_acceleration(x, v));
    let (x, v) = s;
    let (k1x, k1v) = f(x, v);
    let (k2x, k2v) = f(&(x + k1x * (h / 2.0)), &(v + k1v * (h / 2.0)));
    let (k3x, k3v) = f(&(x + k2x * (h / 2.0)), &(v + k2v * (h / 2.0)));
    let (k4x, k4v) = f(&(x + k3x * h), &(v + k3v * h));
    (
        x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
        v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    )
}

/// States at t = k/steps for k = 0..=steps.
pub fn integrate(metric: &MetricModel, y: &Point, v: &Vector4<f64>, steps: usize) -> Vec<State> {
    let h = 1.0 / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = (*y, *v);
    out.push(s);
    for _ in 0..steps {
        s = rk4_step(metric, &s, h);
        out.push(s);
    }
    out
}

fn integrate_end(metric: &MetricModel, y: &Point, v: &Vector4<f64>, steps: usize) -> State {
    let h = 1.0 / steps as f64;
    let mut s = (*y, *v);
    for _ in 0..steps {
        s = rk4_step(metric, &s, h);
    }
    s
}

/// exp_y(v) and the tangent there, Richardson-extrapolated from two RK4 passes.
pub fn exp_map(metric: &MetricModel, y: &Point, v: &Vector4<f64>, cfg: &SolverConfig) -> State {
    if metric.is_flat() {
        return (y + v, *v);
    }
    let n = cfg.ivp_steps.max(1);
    let (xc, vc) = integrate_end(metric, y, v, n);
    let (xf, vf) = integrate_end(metric, y, v, 2 * n);
    ((xf * 16.0 - xc) / 15.0, (vf * 16.0 - vc) / 15.0)
}

/// Jacobian ∂exp_y(v)/∂v by central differences.
pub fn exp_jacobian(
    metric: &MetricModel,
    y: &Point,
    v: &Vector4<f64>,
    cfg: &SolverConfig,
    step: f64,
) -> Matrix4<f64> {
    if metric.is_flat() {
        return Matrix4::identity();
    }
    let mut j = Matrix4::zeros();
    for k in 0..4 {
        let mut vp = *v;
        let mut vm = *v;
        vp[k] += step;
        vm[k] -= step;
        let col = (exp_map(metric, y, &vp, cfg).0 - exp_map(metric, y, &vm, cfg).0) / (2.0 * step);
        j.set_column(k, &col);
    }
    j
}

/// Solve the two-point problem y → x by Newton shooting on the initial velocity.
pub fn geodesic_connect(
    y: &Point,
    x: &Point,
    metric: &MetricModel,
    cfg: &SolverConfig,
) -> Result<GeodesicRecord> {
    let (v, iterations, defect) = shoot(y, x, metric, cfg, None)?;
    Ok(build_record(y, x, &v, metric, cfg, iterations, defect))
}

/// Newton shooting returning (v, iterations, defect); `guess` seeds the iteration.
pub fn shoot(
    y: &Point,
    x: &Point,
    metric: &MetricModel,
    cfg: &SolverConfig,
    guess: Option<Vector4<f64>>,
) -> Result<(Vector4<f64>, usize, f64)> {
    metric.check_in_chart(y)?;
    metric.check_in_chart(x)?;
    let sep = (x - y).amax();
    if sep > metric.patch_radius {
        return Err(Error::NoConvergence {
            iterations: 0,
            defect: sep,
        });
    }
    if metric.is_flat() {
        return Ok((x - y, 0, 0.0));
    }
    let mut v = guess.unwrap_or(x - y);
    let mut defect = f64::INFINITY;
    for it in 0..=cfg.max_iterations {
        let end = exp_map(metric, y, &v, cfg).0;
        if !metric.contains(&end) {
            return Err(Error::NoConvergence {
                iterations: it,
                defect: f64::INFINITY,
            });
        }
        let r = end - x;
        defect = r.amax();
        if defect <= cfg.tolerance {
            return Ok((v, it, defect));
        }
        if it == cfg.max_iterations {
            break;
        }
        let step = cfg.jacobian_step * (1.0 + v.amax());
        let j = exp_jacobian(metric, y, &v, cfg, step);
        let dv = j
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::SingularJacobian(0.0))?;
        v -= dv;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        defect,
    })
}

fn build_record(
    y: &Point,
    x: &Point,
    v: &Vector4<f64>,
    metric: &MetricModel,
    cfg: &SolverConfig,
    iterations: usize,
    defect: f64,
) -> GeodesicRecord {
    let steps = 2 * cfg.ivp_steps.max(1);
    let states = if metric.is_flat() {
        (0..=steps)
            .map(|k| (y + v * (k as f64 / steps as f64), *v))
            .collect()
    } else {
        integrate(metric, y, v, steps)
    };
    let samples = states
        .iter()
        .enumerate()
        .map(|(k, (p, t))| GeodesicSample {
            t: k as f64 / steps as f64,
            position: [p[0], p[1], p[2], p[3]],
            tangent: [t[0], t[1], t[2], t[3]],
        })
        .collect();
    let g = metric.metric(y);
    let norm = v.dot(&(g * v));
    let scale = v.dot(&v);
    let end_tangent = exp_map(metric, y, v, cfg).1;
    GeodesicRecord {
        base: [y[0], y[1], y[2], y[3]],
        target: [x[0], x[1], x[2], x[3]],
        initial_velocity: [v[0], v[1], v[2], v[3]],
        final_tangent: [end_tangent[0], end_tangent[1], end_tangent[2], end_tangent[3]],
        samples,
        causal_character: CausalCharacter::classify(norm, scale),
        iterations,
        defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric::ScaleFactor;

    #[test]
    fn minkowski_straight_lines() {
        let m = MetricModel::minkowski();
        let cfg = SolverConfig::default();
        let y = Point::zeros();
        let rec = geodesic_connect(&y, &Point::new(1.0, 0.0, 0.0, 0.0), &m, &cfg).unwrap();
        assert_eq!(rec.initial_velocity, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rec.causal_character, CausalCharacter::Timelike);
        let rec = geodesic_connect(&y, &Point::new(1.0, 1.0, 0.0, 0.0), &m, &cfg).unwrap();
        assert_eq!(rec.initial_velocity, [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(rec.causal_character, CausalCharacter::Null);
    }

    #[test]
    fn flrw_record_endpoints_and_norm() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.1));
        let cfg = SolverConfig::default();
        let y = Point::new(0.0, 0.0, 0.0, 0.0);
        let x = Point::new(0.5, 0.3, -0.1, 0.2);
        let rec = geodesic_connect(&y, &x, &m, &cfg).unwrap();
        assert!(rec.defect <= cfg.tolerance);
        let first = &rec.samples[0];
        let last = rec.samples.last().unwrap();
        assert_eq!(first.position, rec.base);
        for k in 0..4 {
            assert!((last.position[k] - x[k]).abs() < 1e-9);
        }
        let norms: Vec<f64> = rec
            .samples
            .iter()
            .map(|s| {
                let p = Vector4::from(s.position);
                let t = Vector4::from(s.tangent);
                t.dot(&(m.metric(&p) * t))
            })
            .collect();
        for n in &norms {
            assert!((n - norms[0]).abs() <= 1e-6 * norms[0].abs());
        }
    }

    #[test]
    fn out_of_chart_rejected() {
        let m = MetricModel::minkowski();
        let err = geodesic_connect(
            &Point::zeros(),
            &Point::new(100.0, 0.0, 0.0, 0.0),
            &m,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::OutOfChart(_)));
    }

    #[test]
    fn far_points_do_not_converge() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.1));
        let err = geodesic_connect(
            &Point::zeros(),
            &Point::new(1.5, 0.0, 0.0, 0.0),
            &m,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }
}
