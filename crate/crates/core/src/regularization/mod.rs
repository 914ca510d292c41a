//! Regularization functions f on the light cone of a base point.

pub mod cone;
pub mod gauge;
pub mod generator;

use serde::{Deserialize, Serialize};

pub use cone::{
    check_antisymmetry, direction_set, far_end, AntisymmetryReport, ConeFunctionTable, ConeSample, ConeSolution, FarEnd, KSourceTable,
};
pub use gauge::{enforce, extend_off_cone, Correction, ExtensionRecord, LocalExtension};
pub use generator::{GeneratorFields, GeneratorHierarchy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sheet {
    Future,
    Past,
}

impl Sheet {
    pub fn sign(&self) -> f64 {
        match self {
            Sheet::Future => 1.0,
            Sheet::Past => -1.0,
        }
    }
}

/// f_[n] (n ≥ −1) and f_{n} (n ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", content = "n", rename_all = "snake_case")]
pub enum Level {
    Bracket(i32),
    Brace(i32),
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Bracket(n) => write!(f, "[{n}]"),
            Level::Brace(n) => write!(f, "{{{n}}}"),
        }
    }
}

impl Level {
    /// Solve order for truncation N: [−1], [0], [1], then [n], {n} for n = 2..=N.
    /// f_{1} is taken equal to f_[1].
    pub fn sequence(truncation: usize) -> Vec<Level> {
        let mut out = vec![Level::Bracket(-1), Level::Bracket(0), Level::Bracket(1), Level::Brace(1)];
        for n in 2..=truncation as i32 {
            out.push(Level::Bracket(n));
            out.push(Level::Brace(n));
        }
        if truncation == 0 {
            out.truncate(2);
        }
        out
    }

    pub fn slug(&self) -> String {
        match self {
            Level::Bracket(n) => format!("bracket{n}"),
            Level::Brace(n) => format!("brace{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeConfig {
    /// Largest |t| on each sheet.
    pub t_max: f64,
    /// Chebyshev–Lobatto nodes per sheet.
    pub t_nodes: usize,
    /// Integration constant of f_[-1].
    pub c: f64,
    pub tolerance: f64,
    /// Samples with |t| below this are left out of residual metrics.
    pub tip_exclusion: f64,
    /// Angular half-width and node count of the transverse extension patch.
    pub extension_halfwidth: f64,
    pub extension_nodes: usize,
    /// Finite-difference step relative to the distance from the tip.
    pub fd_relative_step: f64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        Self {
            t_max: 0.3,
            t_nodes: 20,
            c: 1.0,
            tolerance: 1e-4,
            tip_exclusion: 1e-3,
            extension_halfwidth: 0.1,
            extension_nodes: 7,
            fd_relative_step: 0.02,
        }
    }
}
