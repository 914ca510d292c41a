//! Chebyshev collocation, barycentric interpolation, Gauss–Legendre quadrature
//! and separable operations on 4D tensor-product grids.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Chebyshev–Lobatto nodes on `[lo, hi]`, ordered from `lo` to `hi`.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize, lo: f64, hi: f64) -> Self {
        assert!(n >= 2, "need at least two Chebyshev nodes");
        let m = n - 1;
        let nodes = (0..n)
            .map(|j| {
                let c = -(PI * j as f64 / m as f64).cos();
                // snap the symmetric centre exactly
                let c = if 2 * j == m { 0.0 } else { c };
                lo + 0.5 * (hi - lo) * (c + 1.0)
            })
            .collect();
        let weights = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Self {
            lo,
            hi,
            nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Lagrange basis values at `x` (barycentric form).
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.basis_into(x, &mut out);
        out
    }

    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        for (j, &xj) in self.nodes.iter().enumerate() {
            if x == xj {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[j] = 1.0;
                return;
            }
        }
        let mut denom = 0.0;
        for j in 0..self.len() {
            let t = self.weights[j] / (x - self.nodes[j]);
            out[j] = t;
            denom += t;
        }
        out.iter_mut().for_each(|v| *v /= denom);
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let b = self.basis(x);
        b.iter().zip(values).map(|(a, v)| a * v).sum()
    }

    /// Spectral differentiation matrix.
    pub fn diff_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (self.weights[j] / self.weights[i]) / (self.nodes[i] - self.nodes[j]);
                    d[(i, j)] = v;
                    row += v;
                }
            }
            d[(i, i)] = -row;
        }
        d
    }

    /// Matrix whose row `a` evaluates the interpolant at `scale * nodes[a]`.
    pub fn scaled_interp_matrix(&self, scale: f64) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for a in 0..n {
            self.basis_into(scale * self.nodes[a], &mut row);
            for b in 0..n {
                m[(a, b)] = row[b];
            }
        }
        m
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x.push(0.5 * (1.0 - z));
        w.push(1.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

/// Row-major 4D tensor of shape `n^4` on a common 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for (k, v) in t.data.iter_mut().enumerate() {
            *v = f(unflatten(n, k));
        }
        t
    }

    #[inline]
    pub fn index(&self, idx: [usize; 4]) -> usize {
        ((idx[0] * self.n + idx[1]) * self.n + idx[2]) * self.n + idx[3]
    }

    /// Apply `mat` (n×n) along one axis.
    pub fn apply_axis(&self, mat: &DMatrix<f64>, axis: usize) -> Self {
        let n = self.n;
        let stride = n.pow(3 - axis as u32);
        let mut out = Self::zeros(n);
        let block = stride * n;
        for base in (0..self.data.len()).step_by(block) {
            for inner in 0..stride {
                for a in 0..n {
                    let mut acc = 0.0;
                    for b in 0..n {
                        acc += mat[(a, b)] * self.data[base + b * stride + inner];
                    }
                    out.data[base + a * stride + inner] = acc;
                }
            }
        }
        out
    }

    /// Apply the same matrix along all four axes.
    pub fn apply_all(&self, mat: &DMatrix<f64>) -> Self {
        self.apply_axis(mat, 0)
            .apply_axis(mat, 1)
            .apply_axis(mat, 2)
            .apply_axis(mat, 3)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.data.iter().zip(weights).map(|(a, b)| a * b).sum()
    }
}

pub fn unflatten(n: usize, mut k: usize) -> [usize; 4] {
    let mut idx = [0; 4];
    for ax in (0..4).rev() {
        idx[ax] = k % n;
        k /= n;
    }
    idx
}

/// Outer product of four 1D basis vectors, laid out like [`Tensor4`].
pub fn tensor_weights(w: &[Vec<f64>; 4]) -> Vec<f64> {
    let n = w[0].len();
    let mut out = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            let ab = w[0][a] * w[1][b];
            for c in 0..n {
                let abc = ab * w[2][c];
                for d in 0..n {
                    out.push(abc * w[3][d]);
                }
            }
        }
    }
    out
}

/// Fourth-order central difference weights for first and second derivatives
/// at offsets -2..=2 (units of the step).
pub const FD1: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
pub const FD2: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_polynomials_exactly() {
        let g = ChebGrid::new(9, -0.5, 0.7);
        let d = g.diff_matrix();
        let f: Vec<f64> = g.nodes.iter().map(|x| x.powi(5) - 2.0 * x).collect();
        for i in 0..g.len() {
            let df: f64 = (0..g.len()).map(|j| d[(i, j)] * f[j]).sum();
            let x = g.nodes[i];
            assert!((df - (5.0 * x.powi(4) - 2.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn interpolates_smooth_function() {
        let g = ChebGrid::new(16, 0.0, 1.0);
        let f: Vec<f64> = g.nodes.iter().map(|x| x.exp()).collect();
        assert!((g.interpolate(&f, 0.3137) - 0.3137f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre_unit(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(11)).sum();
        assert!((s - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn axis_application_matches_scalar_derivative() {
        let g = ChebGrid::new(7, -1.0, 1.0);
        let d = g.diff_matrix();
        let t = Tensor4::from_fn(7, |i| {
            g.nodes[i[0]] * g.nodes[i[1]].powi(2) + g.nodes[i[2]] * g.nodes[i[3]]
        });
        let dt = t.apply_axis(&d, 1);
        for k in 0..t.data.len() {
            let i = unflatten(7, k);
            let expect = 2.0 * g.nodes[i[0]] * g.nodes[i[1]];
            assert!((dt.data[k] - expect).abs() < 1e-12);
        }
    }
}
