//! Scenario files.

use crate::error::{Error, Result};
use crate::geometry::{MetricModel, Point, ScaleFactor, SolverConfig, TabulatedMetric};
use crate::regularization::ConeConfig;
use crate::transport::{MuProfile, PatchConfig, TransportConfig, Y0Choice};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Version of the numerical defaults below; echoed into every manifest.
pub const DEFAULTS_VERSION: &str = "defaults.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub metric: MetricSpec,
    pub field: FieldSpec,
    pub base_points: Vec<[f64; 4]>,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(default)]
    pub cone: ConeSpec,
    #[serde(default)]
    pub expansion: ExpansionSpec,
    #[serde(default)]
    pub y0: Y0Choice,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_seed() -> u64 {
    7
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Minkowski,
    /// a(η) as polynomial coefficients in η.
    ConformalFlrw { scale_factor: Vec<f64> },
    Custom { table: PathBuf, patch_radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    KleinGordon,
    Dirac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSpec {
    pub nodes: usize,
    pub radius: f64,
    pub quadrature: usize,
    pub truncation: usize,
}

impl Default for TransportSpec {
    fn default() -> Self {
        Self {
            nodes: 11,
            radius: 0.5,
            quadrature: 20,
            truncation: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeSpec {
    pub directions: usize,
    pub t_max: f64,
    pub t_nodes: usize,
    pub c: f64,
    /// Cone pairs for the two-sided checks.
    pub pairs: usize,
}

impl Default for ConeSpec {
    fn default() -> Self {
        Self {
            directions: 12,
            t_max: 0.3,
            t_nodes: 20,
            c: 1.0,
            pairs: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSpec {
    pub epsilon: Vec<f64>,
    pub fd_step: f64,
    pub scaling_points: usize,
    /// Γ/(ξ⁰)² of the scaling points.
    pub gamma_ratio: f64,
    pub time_range: [f64; 2],
    pub band: [f64; 2],
    pub required_fraction: f64,
    pub dirac_points: usize,
}

impl Default for ExpansionSpec {
    fn default() -> Self {
        Self {
            epsilon: vec![1e-3, 3e-3, 1e-2, 3e-2],
            fd_step: 1e-3,
            scaling_points: 20,
            gamma_ratio: 0.6,
            time_range: [0.15, 0.25],
            band: [1.8, 2.2],
            required_fraction: 0.8,
            dirac_points: 6,
        }
    }
}

/// Override block; anything left out keeps its default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub geometry_flat: f64,
    pub geometry_curved: f64,
    pub coefficient: f64,
    pub closure: f64,
    pub f_tip: f64,
    pub f_transport: f64,
    pub antisymmetry_flat: f64,
    pub antisymmetry_curved: f64,
    pub ieps: f64,
    pub symmetry: f64,
    pub curvature: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            geometry_flat: 1e-6,
            geometry_curved: 1e-4,
            coefficient: 1e-6,
            closure: 1e-4,
            f_tip: 1e-6,
            f_transport: 1e-4,
            antisymmetry_flat: 1e-6,
            antisymmetry_curved: 1e-4,
            ieps: 1e-6,
            symmetry: 1e-4,
            curvature: 1e-4,
            identity: 1e-10,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 12] {
        [
            ("geometry_flat", self.geometry_flat),
            ("geometry_curved", self.geometry_curved),
            ("coefficient", self.coefficient),
            ("closure", self.closure),
            ("f_tip", self.f_tip),
            ("f_transport", self.f_transport),
            ("antisymmetry_flat", self.antisymmetry_flat),
            ("antisymmetry_curved", self.antisymmetry_curved),
            ("ieps", self.ieps),
            ("symmetry", self.symmetry),
            ("curvature", self.curvature),
            ("identity", self.identity),
        ]
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "scenario".into());
            Error::config(field, e.message().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut s = Self::parse(&text)?;
        if let MetricSpec::Custom { table, .. } = &mut s.metric {
            if table.is_relative() {
                *table = path.parent().unwrap_or(Path::new(".")).join(&*table);
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let floor = 1e3 * f64::EPSILON;
        for (name, v) in self.tolerances.entries() {
            if !(v >= floor) {
                return Err(Error::config(format!("tolerances.{name}"), format!("must be at least {floor:e}")));
            }
        }
        if self.base_points.is_empty() {
            return Err(Error::config("base_points", "at least one base point is required"));
        }
        if !(self.field.mass >= 0.0) {
            return Err(Error::config("field.mass", "must be non-negative"));
        }
        if let MetricSpec::ConformalFlrw { scale_factor } = &self.metric {
            if scale_factor.is_empty() {
                return Err(Error::config("metric.scale_factor", "needs at least one coefficient"));
            }
        }
        if self.field.kind == FieldKind::Dirac && matches!(self.metric, MetricSpec::Custom { .. }) {
            return Err(Error::config("field.kind", "dirac needs a flat or conformally flat metric"));
        }
        let t = &self.transport;
        if t.nodes < 5 {
            return Err(Error::config("transport.nodes", "needs at least five nodes per axis"));
        }
        if !(t.radius > 0.0) {
            return Err(Error::config("transport.radius", "must be positive"));
        }
        if t.quadrature < 2 {
            return Err(Error::config("transport.quadrature", "needs at least two nodes"));
        }
        if t.truncation > 6 {
            return Err(Error::config("transport.truncation", "supported up to 6"));
        }
        let c = &self.cone;
        if c.directions < 6 {
            return Err(Error::config("cone.directions", "needs at least six directions"));
        }
        if c.t_nodes < 4 {
            return Err(Error::config("cone.t_nodes", "needs at least four nodes"));
        }
        if !(c.t_max > 0.0 && c.t_max < t.radius) {
            return Err(Error::config("cone.t_max", "must lie in (0, transport.radius)"));
        }
        if c.pairs == 0 {
            return Err(Error::config("cone.pairs", "needs at least one pair"));
        }
        let e = &self.expansion;
        for (i, &eps) in e.epsilon.iter().enumerate() {
            if !(eps > 0.0) || eps >= 0.1 * t.radius {
                return Err(Error::config(
                    format!("expansion.epsilon[{i}]"),
                    format!("must lie in (0, {}) for patch radius {}", 0.1 * t.radius, t.radius),
                ));
            }
        }
        if !(e.fd_step > 0.0) {
            return Err(Error::config("expansion.fd_step", "must be positive"));
        }
        if !(e.gamma_ratio > 0.0 && e.gamma_ratio < 1.0) {
            return Err(Error::config("expansion.gamma_ratio", "must lie in (0, 1)"));
        }
        if !(e.time_range[0] > 0.0 && e.time_range[0] <= e.time_range[1]) || e.time_range[1] + 4.0 * e.fd_step >= t.radius {
            return Err(Error::config("expansion.time_range", "must be increasing, positive and inside the patch"));
        }
        if !(e.required_fraction > 0.0 && e.required_fraction <= 1.0) {
            return Err(Error::config("expansion.required_fraction", "must lie in (0, 1]"));
        }
        let metric = self.metric_model()?;
        for (i, b) in self.base_points.iter().enumerate() {
            metric
                .check_in_chart(&Point::from(*b))
                .map_err(|_| Error::config(format!("base_points[{i}]"), "outside the chart"))?;
        }
        Ok(())
    }

    pub fn metric_model(&self) -> Result<MetricModel> {
        Ok(match &self.metric {
            MetricSpec::Minkowski => MetricModel::minkowski(),
            MetricSpec::ConformalFlrw { scale_factor } => MetricModel::conformal_flrw(ScaleFactor {
                coefficients: scale_factor.clone(),
            }),
            MetricSpec::Custom { table, patch_radius } => {
                let t = TabulatedMetric::from_path(table).map_err(|e| Error::config("metric.table", e.to_string()))?;
                MetricModel::custom(t, *patch_radius)
            }
        })
    }

    pub fn mu(&self) -> MuProfile {
        match self.field.kind {
            FieldKind::KleinGordon => MuProfile::Constant {
                mass_squared: self.field.mass * self.field.mass,
            },
            FieldKind::Dirac => MuProfile::Dirac { mass: self.field.mass },
        }
    }

    pub fn transport_config(&self) -> TransportConfig {
        TransportConfig {
            patch: PatchConfig {
                nodes: self.transport.nodes,
                radius: self.transport.radius,
                solver: SolverConfig::default(),
            },
            quadrature: self.transport.quadrature,
            truncation: self.transport.truncation,
            y0: self.y0,
        }
    }

    pub fn cone_config(&self) -> ConeConfig {
        ConeConfig {
            t_max: self.cone.t_max,
            t_nodes: self.cone.t_nodes,
            c: self.cone.c,
            ..ConeConfig::default()
        }
    }

    /// SHA-256 of everything that affects numbers (the output path does not).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("scenario serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(DEFAULTS_VERSION.as_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(h.finalize())
    }
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("minkowski_kg", include_str!("../../scenarios/minkowski_kg.toml")),
    ("flrw_kg", include_str!("../../scenarios/flrw_kg.toml")),
    ("minkowski_dirac", include_str!("../../scenarios/minkowski_dirac.toml")),
    ("flrw_dirac", include_str!("../../scenarios/flrw_dirac.toml")),
];

pub fn bundled(name: &str) -> Result<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::parse(text))
        .unwrap_or_else(|| Err(Error::config("scenario", format!("no bundled scenario `{name}`"))))
}
