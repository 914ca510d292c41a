//! Riemann normal coordinate patch around a base point, discretized on a
//! Chebyshev–Lobatto tensor grid.

use crate::error::{Error, Result};
use crate::geometry::geodesic::{exp_map, shoot, SolverConfig};
use crate::geometry::{orthonormal_frame, MetricModel, Point};
use crate::parallel::map_range;
use crate::spectral::{tensor_weights, unflatten, ChebGrid, Tensor4};
use nalgebra::{DMatrix, Matrix4, Vector3, Vector4};

/// Node count per axis and half-width of the normal-coordinate box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub nodes: usize,
    pub radius: f64,
    pub solver: SolverConfig,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            nodes: 11,
            radius: 0.5,
            solver: SolverConfig::default(),
        }
    }
}

/// Metric data of the patch in normal coordinates ξ, with x = exp_y(E ξ).
#[derive(Debug, Clone)]
pub struct NormalPatch {
    pub base: Point,
    pub metric: MetricModel,
    pub frame: Matrix4<f64>,
    frame_inv: Matrix4<f64>,
    pub grid: ChebGrid,
    pub solver: SolverConfig,
    diff: DMatrix<f64>,
    /// Chart position of every node.
    pub positions: Vec<Point>,
    pub sqrtg: Tensor4,
    /// Inverse metric components g^{ij} in normal coordinates.
    pub ginv: Vec<Tensor4>,
    /// b^j = (1/√g) ∂_i(√g g^{ij}), so that Δf = g^{ij}∂_i∂_j f + b^j ∂_j f.
    pub drift: Vec<Tensor4>,
    flux: Vec<Tensor4>,
    /// Γ(x, y) = η(ξ, ξ) on the grid.
    pub gamma: Tensor4,
}

/// Interpolation weights of one point, reusable across fields.
#[derive(Debug, Clone)]
pub struct NodeWeights(Vec<f64>);

#[inline]
fn sym(i: usize, j: usize) -> usize {
    i * 4 + j
}

const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

impl NormalPatch {
    pub fn new(metric: &MetricModel, base: &Point, cfg: &PatchConfig) -> Result<Self> {
        if cfg.nodes < 3 || cfg.nodes % 2 == 0 {
            return Err(Error::config("nodes", "must be odd and at least 3"));
        }
        if !(cfg.radius > 0.0) {
            return Err(Error::config("radius", "must be positive"));
        }
        metric.check_in_chart(base)?;
        let frame = orthonormal_frame(metric, base);
        let frame_inv = frame
            .try_inverse()
            .ok_or_else(|| Error::SingularJacobian(frame.determinant()))?;
        let grid = ChebGrid::new(cfg.nodes, -cfg.radius, cfg.radius);
        let diff = grid.diff_matrix();
        let n = cfg.nodes;
        let total = n.pow(4);
        let nodes = grid.nodes.clone();
        let positions: Vec<Point> = map_range(total, |k| {
            let idx = unflatten(n, k);
            let xi = Vector4::new(nodes[idx[0]], nodes[idx[1]], nodes[idx[2]], nodes[idx[3]]);
            exp_map(metric, base, &(frame * xi), &cfg.solver).0
        });
        if let Some(p) = positions.iter().find(|p| !metric.contains(p)) {
            return Err(Error::OutOfChart([p[0], p[1], p[2], p[3]]));
        }

        // Jacobian columns ∂x^c/∂ξ^a by spectral differentiation.
        let comps: Vec<Tensor4> = (0..4)
            .map(|c| Tensor4 {
                n,
                data: positions.iter().map(|p| p[c]).collect(),
            })
            .collect();
        let jac: Vec<Vec<Tensor4>> = comps
            .iter()
            .map(|f| (0..4).map(|a| f.apply_axis(&diff, a)).collect())
            .collect();

        let local: Vec<(f64, Matrix4<f64>)> = map_range(total, |k| {
            let mut j = Matrix4::zeros();
            for c in 0..4 {
                for a in 0..4 {
                    j[(c, a)] = jac[c][a].data[k];
                }
            }
            let g = j.transpose() * metric.metric(&positions[k]) * j;
            let det = g.determinant();
            let inv = g.try_inverse().unwrap_or_else(Matrix4::zeros);
            (det.abs().sqrt(), inv)
        });
        if let Some((s, _)) = local.iter().find(|(s, _)| !(*s > 1e-12)) {
            return Err(Error::SingularJacobian(*s));
        }
        let sqrtg = Tensor4 {
            n,
            data: local.iter().map(|(s, _)| *s).collect(),
        };
        let mut ginv = Vec::with_capacity(16);
        let mut flux = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                let t = Tensor4 {
                    n,
                    data: local.iter().map(|(_, m)| m[(i, j)]).collect(),
                };
                flux.push(t.zip_map(&sqrtg, |a, b| a * b));
                ginv.push(t);
            }
        }
        let drift = (0..4)
            .map(|j| {
                let mut acc = Tensor4::zeros(n);
                for i in 0..4 {
                    acc.axpy(1.0, &flux[sym(i, j)].apply_axis(&diff, i));
                }
                acc.zip_map(&sqrtg, |a, b| a / b)
            })
            .collect();
        let gamma = Tensor4::from_fn(n, |idx| {
            (0..4).map(|a| ETA[a] * nodes[idx[a]] * nodes[idx[a]]).sum()
        });
        Ok(Self {
            base: *base,
            metric: metric.clone(),
            frame,
            frame_inv,
            grid,
            solver: cfg.solver,
            diff,
            positions,
            sqrtg,
            ginv,
            drift,
            flux,
            gamma,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn radius(&self) -> f64 {
        self.grid.hi
    }

    pub fn node_coords(&self, k: usize) -> Vector4<f64> {
        let idx = unflatten(self.nodes(), k);
        let x = &self.grid.nodes;
        Vector4::new(x[idx[0]], x[idx[1]], x[idx[2]], x[idx[3]])
    }

    pub fn ginv_component(&self, i: usize, j: usize) -> &Tensor4 {
        &self.ginv[sym(i, j)]
    }

    pub fn field_from_fn(&self, f: impl Fn(&Vector4<f64>, &Point) -> f64 + Sync) -> Tensor4 {
        Tensor4 {
            n: self.nodes(),
            data: map_range(self.positions.len(), |k| f(&self.node_coords(k), &self.positions[k])),
        }
    }

    pub fn derivative(&self, field: &Tensor4, axis: usize) -> Tensor4 {
        field.apply_axis(&self.diff, axis)
    }

    pub fn gradient(&self, field: &Tensor4) -> [Tensor4; 4] {
        [0, 1, 2, 3].map(|a| self.derivative(field, a))
    }

    /// Laplace–Beltrami operator in divergence form.
    pub fn laplacian(&self, field: &Tensor4) -> Tensor4 {
        let grad = self.gradient(field);
        let mut div = Tensor4::zeros(self.nodes());
        for i in 0..4 {
            let mut v = Tensor4::zeros(self.nodes());
            for (j, gj) in grad.iter().enumerate() {
                v.data
                    .iter_mut()
                    .zip(&self.flux[sym(i, j)].data)
                    .zip(&gj.data)
                    .for_each(|((o, f), g)| *o += f * g);
            }
            div.axpy(1.0, &self.derivative(&v, i));
        }
        div.zip_map(&self.sqrtg, |a, b| a / b)
    }

    /// g(∇a, ∇b) on the grid.
    pub fn inner_gradient(&self, a: &Tensor4, b: &Tensor4) -> Tensor4 {
        let ga = self.gradient(a);
        let gb = self.gradient(b);
        let mut out = Tensor4::zeros(self.nodes());
        for i in 0..4 {
            for j in 0..4 {
                let g = &self.ginv[sym(i, j)].data;
                out.data
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, o)| *o += g[k] * ga[i].data[k] * gb[j].data[k]);
            }
        }
        out
    }

    pub fn contains_normal(&self, xi: &Vector4<f64>) -> bool {
        xi.amax() <= self.radius() * (1.0 + 1e-12)
    }

    pub fn weights(&self, xi: &Vector4<f64>) -> Result<NodeWeights> {
        if !self.contains_normal(xi) {
            return Err(Error::StencilTooNarrow(format!(
                "normal coordinates {:?} leave the patch of radius {}",
                xi.as_slice(),
                self.radius()
            )));
        }
        let w = [0, 1, 2, 3].map(|a| self.grid.basis(xi[a]));
        Ok(NodeWeights(tensor_weights(&w)))
    }

    pub fn eval(&self, w: &NodeWeights, field: &Tensor4) -> f64 {
        field.dot(&w.0)
    }

    /// Inverse metric and drift at an arbitrary point of the patch.
    pub fn local_operator(&self, w: &NodeWeights) -> (Matrix4<f64>, Vector4<f64>) {
        let mut g = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] = self.eval(w, &self.ginv[sym(i, j)]);
            }
        }
        let b = Vector4::from_fn(|j, _| self.eval(w, &self.drift[j]));
        (g, b)
    }

    /// Frame components → chart vector at the base point.
    pub fn to_chart(&self, xi: &Vector4<f64>) -> Vector4<f64> {
        self.frame * xi
    }

    pub fn normal_coordinates(&self, x: &Point) -> Result<Vector4<f64>> {
        let (v, _, _) = shoot(&self.base, x, &self.metric, &self.solver, None)?;
        Ok(self.frame_inv * v)
    }

    pub fn chart_point(&self, xi: &Vector4<f64>) -> Point {
        exp_map(&self.metric, &self.base, &(self.frame * xi), &self.solver).0
    }

    /// Future null direction with components (1, ω)/ν(ω) in the frame, where
    /// ν(ω) = g_y(E(1, ω), ∂_𝔱).
    pub fn generator(&self, omega: &Vector3<f64>) -> Result<Vector4<f64>> {
        let norm = omega.norm();
        if !(norm > 0.0) {
            return Err(Error::NotNull(norm));
        }
        let w = omega / norm;
        let k = Vector4::new(1.0, w[0], w[1], w[2]);
        let g = self.metric.metric(&self.base);
        let nu = (self.frame * k).dot(&(g * self.metric.time_translation(&self.base)));
        Ok(k / nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScaleFactor;

    fn small() -> PatchConfig {
        PatchConfig {
            nodes: 9,
            radius: 0.4,
            ..PatchConfig::default()
        }
    }

    #[test]
    fn minkowski_patch_is_flat() {
        let m = MetricModel::minkowski();
        let p = NormalPatch::new(&m, &Point::zeros(), &small()).unwrap();
        let lap = p.laplacian(&p.gamma);
        assert!(lap.data.iter().all(|v| (v - 8.0).abs() < 1e-9));
        assert!(p.sqrtg.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn flrw_gamma_gradient_identity() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let y = Point::new(1.0, 0.0, 0.0, 0.0);
        let p = NormalPatch::new(&m, &y, &small()).unwrap();
        let gg = p.inner_gradient(&p.gamma, &p.gamma);
        let err = gg
            .data
            .iter()
            .zip(&p.gamma.data)
            .map(|(a, b)| (a - 4.0 * b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        // In normal coordinates the metric is η at the origin.
        let w = p.weights(&Vector4::zeros()).unwrap();
        let (g, _) = p.local_operator(&w);
        let d = (g - crate::geometry::metric::eta()).amax();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn normal_coordinates_round_trip() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let y = Point::new(1.0, 0.0, 0.0, 0.0);
        let p = NormalPatch::new(&m, &y, &small()).unwrap();
        let xi = Vector4::new(0.1, -0.2, 0.05, 0.15);
        let back = p.normal_coordinates(&p.chart_point(&xi)).unwrap();
        assert!((back - xi).amax() < 1e-10);
    }
}
