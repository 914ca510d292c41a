//! Coefficient samples and the f hierarchy along a single null generator.

use super::{ConeConfig, Level, Sheet};
use crate::error::{Error, Result};
use crate::spectral::ChebGrid;
use crate::transport::{CoefficientKind, TransportSolution};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};

/// Transport data sampled at the collocation nodes of one generator.
#[derive(Debug, Clone)]
pub struct GeneratorFields {
    pub omega: Vector3<f64>,
    pub sheet: Sheet,
    pub grid: ChebGrid,
    /// Normal-coordinate direction k with ξ(t) = t·k.
    pub k: Vector4<f64>,
    /// X₋₁ … X_N.
    pub x: Vec<DVector<f64>>,
    pub lx: Vec<DVector<f64>>,
    /// Y₀ … Y_N.
    pub y: Vec<DVector<f64>>,
    pub ly: Vec<DVector<f64>>,
    /// Index of the node at t = 0.
    pub tip: usize,
    diff: DMatrix<f64>,
}

pub fn sheet_grid(cfg: &ConeConfig, sheet: Sheet) -> ChebGrid {
    match sheet {
        Sheet::Future => ChebGrid::new(cfg.t_nodes, 0.0, cfg.t_max),
        Sheet::Past => ChebGrid::new(cfg.t_nodes, -cfg.t_max, 0.0),
    }
}

impl GeneratorFields {
    pub fn sample(sol: &TransportSolution, omega: &Vector3<f64>, sheet: Sheet, cfg: &ConeConfig) -> Result<Self> {
        let grid = sheet_grid(cfg, sheet);
        Self::sample_on(sol, omega, sheet, grid)
    }

    pub fn sample_on(sol: &TransportSolution, omega: &Vector3<f64>, sheet: Sheet, grid: ChebGrid) -> Result<Self> {
        let patch = &sol.patch;
        let k = patch.generator(omega)?;
        let weights = grid
            .nodes
            .iter()
            .map(|&t| patch.weights(&(k * t)))
            .collect::<Result<Vec<_>>>()?;
        let sample = |kind| -> Result<(DVector<f64>, DVector<f64>)> {
            let f = sol.field(kind)?;
            let l = sol.l_field(kind)?;
            Ok((
                DVector::from_iterator(weights.len(), weights.iter().map(|w| patch.eval(w, f))),
                DVector::from_iterator(weights.len(), weights.iter().map(|w| patch.eval(w, l))),
            ))
        };
        let n = sol.truncation as i32;
        let (x, lx): (Vec<_>, Vec<_>) = (-1..=n)
            .map(|i| sample(CoefficientKind::X(i)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let (y, ly): (Vec<_>, Vec<_>) = (0..=n)
            .map(|i| sample(CoefficientKind::Y(i)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let tip = grid
            .nodes
            .iter()
            .position(|t| *t == 0.0)
            .expect("generator grid contains the tip");
        let diff = grid.diff_matrix();
        Ok(Self {
            omega: *omega,
            sheet,
            grid,
            k,
            x,
            lx,
            y,
            ly,
            tip,
            diff,
        })
    }

    pub fn t(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.grid.nodes)
    }

    pub fn x_at(&self, n: i32) -> &DVector<f64> {
        &self.x[(n + 1) as usize]
    }

    pub fn lx_at(&self, n: i32) -> &DVector<f64> {
        &self.lx[(n + 1) as usize]
    }

    pub fn y_at(&self, n: i32) -> &DVector<f64> {
        &self.y[n as usize]
    }

    pub fn ly_at(&self, n: i32) -> &DVector<f64> {
        &self.ly[n as usize]
    }

    pub fn derivative(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.diff * f
    }

    /// Solve 4t·P·f′ − Q·f = K with f(0) = 0.
    pub fn solve_linear(&self, level: Level, p: &DVector<f64>, q: &DVector<f64>, k: &DVector<f64>) -> Result<DVector<f64>> {
        let t = self.t();
        let scale = p.amax().max(1e-300);
        let vanish = |ti: f64, value: f64| Error::CoefficientVanishes {
            level: level.to_string(),
            t: ti,
            value,
        };
        for (i, (&pi, &ti)) in p.iter().zip(t.iter()).enumerate() {
            if i != self.tip && pi.abs() <= 1e-12 * scale.max(1.0) {
                return Err(vanish(ti, pi));
            }
        }
        for i in 1..p.len() {
            if p[i - 1] * p[i] < 0.0 {
                let s = p[i - 1] / (p[i - 1] - p[i]);
                return Err(vanish(t[i - 1] + s * (t[i] - t[i - 1]), 0.0));
            }
        }
        let m = t.len();
        let mut a = DMatrix::zeros(m, m);
        let mut rhs = k.clone();
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = 4.0 * t[i] * p[i] * self.diff[(i, j)];
            }
            a[(i, i)] -= q[i];
        }
        a.row_mut(self.tip).fill(0.0);
        a[(self.tip, self.tip)] = 1.0;
        rhs[self.tip] = 0.0;
        a.lu().solve(&rhs).ok_or_else(|| Error::OdeStep(format!("singular collocation system at level {level}")))
    }
}

/// Values of every solved level along one generator, in solve order.
#[derive(Debug, Clone)]
pub struct GeneratorHierarchy {
    pub levels: Vec<(Level, DVector<f64>)>,
    pub sources: Vec<(Level, DVector<f64>)>,
}

impl GeneratorHierarchy {
    pub fn get(&self, level: Level) -> Result<&DVector<f64>> {
        self.levels
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::MissingPrerequisite(format!("level {level} not solved")))
    }

    pub fn source(&self, level: Level) -> Result<&DVector<f64>> {
        self.sources
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::MissingPrerequisite(format!("source {level} not assembled")))
    }
}

/// P, Q of the level's operator 4t·P·∂_t − Q.
pub fn operator(level: Level, g: &GeneratorFields) -> (DVector<f64>, DVector<f64>) {
    match level {
        Level::Bracket(-1) => (DVector::from_element(g.t().len(), 1.0), DVector::from_element(g.t().len(), 4.0)),
        Level::Bracket(0) => {
            let p = g.x_at(0).clone();
            (p.clone(), p * 4.0 + g.lx_at(-1))
        }
        Level::Bracket(1) => {
            let p = g.x_at(1).clone();
            (p.clone(), p * 4.0 + g.lx_at(0))
        }
        Level::Bracket(m) => {
            let n = (m - 2) as f64;
            let p = g.x_at(m).clone();
            (p.clone(), p * 4.0 + g.lx_at(m - 1) / (n + 2.0))
        }
        Level::Brace(m) => {
            let n = (m - 2) as f64;
            let p = g.y_at(m).clone();
            let q = &p * 4.0 + g.x_at(m) * 4.0 + g.ly_at(m - 1) / (n + 2.0) - g.lx_at(m - 1) / ((n + 2.0) * (n + 2.0));
            (p, q)
        }
    }
}

/// Source K of a level along the generator, built from the solved lower
/// levels. Gradient brackets of lower levels vanish in the enforced gauge.
pub fn assemble_source(level: Level, g: &GeneratorFields, lower: &GeneratorHierarchy) -> Result<DVector<f64>> {
    let t = g.t();
    Ok(match level {
        Level::Bracket(-1) => DVector::zeros(t.len()),
        Level::Bracket(0) => -lower.get(Level::Bracket(-1))?.component_mul(g.lx_at(-1)),
        Level::Bracket(1) => -lower.get(Level::Bracket(0))?.component_mul(g.lx_at(0)),
        Level::Bracket(m) => {
            let n = (m - 2) as f64;
            -lower.get(Level::Bracket(m - 1))?.component_mul(g.lx_at(m - 1)) / (n + 2.0)
        }
        Level::Brace(m) => {
            let n = (m - 2) as f64;
            let fx = lower.get(Level::Bracket(m))?;
            let fx_prev = lower.get(Level::Bracket(m - 1))?;
            let fy_prev = lower.get(Level::Brace(m - 1))?;
            let xm = g.x_at(m);
            let lxp = g.lx_at(m - 1);
            let dfx = g.derivative(fx);
            let radial = DVector::from_iterator(t.len(), (0..t.len()).map(|i| 2.0 * t[i] * dfx[i] - 2.0 * fx[i]));
            let mut acc = radial.component_mul(xm) * (2.0 * (2.0 * n + 3.0));
            acc += fx.component_mul(xm) * (4.0 * (n + 1.0) * (n + 2.0));
            acc += fy_prev.component_mul(g.ly_at(m - 1)) * (n + 1.0);
            acc -= fx.component_mul(lxp) * ((n + 1.0) / (n + 2.0));
            acc += (fx_prev - fx).component_mul(lxp);
            -acc / ((n + 1.0) * (n + 2.0))
        }
    })
}

/// Solve every configured level along one generator.
pub fn solve_generator(g: &GeneratorFields, levels: &[Level], c: f64) -> Result<GeneratorHierarchy> {
    let mut h = GeneratorHierarchy {
        levels: Vec::new(),
        sources: Vec::new(),
    };
    for &level in levels {
        let values = match level {
            Level::Bracket(-1) => g.t() * c,
            Level::Brace(1) => h.get(Level::Bracket(1))?.clone(),
            _ => {
                let k = assemble_source(level, g, &h)?;
                let (p, q) = operator(level, g);
                let f = g.solve_linear(level, &p, &q, &k)?;
                h.sources.push((level, k));
                f
            }
        };
        h.levels.push((level, values));
    }
    Ok(h)
}
