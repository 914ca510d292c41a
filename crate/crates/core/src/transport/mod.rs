//! Hadamard coefficient transport.

pub mod coefficients;
pub mod patch;

pub use coefficients::{
    diagonal_values, laplacian_fd, laplacian_of_coefficient, CoefficientKind, CoefficientTable, MuProfile,
    TransportConfig, TransportSolution, Y0Choice,
};
pub use patch::{NodeWeights, NormalPatch, PatchConfig};
