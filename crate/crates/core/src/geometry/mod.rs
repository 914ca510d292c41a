//! Lorentzian geometry substrate: metrics, geodesics, world function.

pub mod geodesic;
pub mod metric;
pub mod world;

pub use geodesic::{exp_map, geodesic_connect, CausalCharacter, GeodesicRecord, SolverConfig};
pub use metric::{FamilyId, MetricModel, Point, ScaleFactor, TabulatedMetric};
pub use world::{
    gamma_only, normalized_null_direction, null_cone_point, orthonormal_frame, van_vleck, world_function,
    WorldConfig, WorldFunctionSample,
};
