//! Cone tables of every level over a set of null directions.

use super::gauge::{extend_off_cone, ExtensionRecord};
use super::generator::{assemble_source, operator, solve_generator, GeneratorFields, GeneratorHierarchy};
use super::{ConeConfig, Level, Sheet};
use crate::error::{Error, Result};
use crate::geometry::{MetricModel, Point};
use crate::parallel::try_map_range;
use crate::spectral::ChebGrid;
use crate::transport::{MuProfile, TransportConfig, TransportSolution};
use nalgebra::{DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Deterministic, roughly uniform directions on the unit sphere.
pub fn direction_set(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeneratorRecord {
    pub fields: GeneratorFields,
    pub hierarchy: GeneratorHierarchy,
}

/// All levels on both sheets along a set of generators from one base point.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub transport: Arc<TransportSolution>,
    pub config: ConeConfig,
    pub levels: Vec<Level>,
    pub generators: Vec<GeneratorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSample {
    pub omega: [f64; 3],
    pub sheet: Sheet,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeFunctionTable {
    pub base: [f64; 4],
    pub level: Level,
    pub c: f64,
    pub samples: Vec<ConeSample>,
    pub extensions: Vec<ExtensionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSourceTable {
    pub base: [f64; 4],
    pub level: Level,
    pub samples: Vec<ConeSample>,
}

impl ConeSolution {
    pub fn solve(transport: Arc<TransportSolution>, directions: &[Vector3<f64>], cfg: &ConeConfig) -> Result<Self> {
        if cfg.t_nodes < 4 {
            return Err(Error::config("t_nodes", "needs at least four nodes"));
        }
        if !(cfg.t_max > 0.0) {
            return Err(Error::config("t_max", "must be positive"));
        }
        let levels = Level::sequence(transport.truncation);
        let jobs: Vec<(Vector3<f64>, Sheet)> = directions
            .iter()
            .flat_map(|d| [(*d, Sheet::Future), (*d, Sheet::Past)])
            .collect();
        let generators = try_map_range(jobs.len(), |i| -> Result<GeneratorRecord> {
            let (omega, sheet) = jobs[i];
            let fields = GeneratorFields::sample(&transport, &omega.normalize(), sheet, cfg)?;
            let hierarchy = solve_generator(&fields, &levels, cfg.c)?;
            Ok(GeneratorRecord { fields, hierarchy })
        })?;
        Ok(Self {
            transport,
            config: *cfg,
            levels,
            generators,
        })
    }

    pub fn base(&self) -> [f64; 4] {
        let b = self.transport.base();
        [b[0], b[1], b[2], b[3]]
    }

    fn samples(&self, pick: impl Fn(&GeneratorRecord) -> Result<DVector<f64>>) -> Result<Vec<ConeSample>> {
        let mut out = Vec::new();
        for g in &self.generators {
            let values = pick(g)?;
            for (t, v) in g.fields.grid.nodes.iter().zip(values.iter()) {
                out.push(ConeSample {
                    omega: [g.fields.omega[0], g.fields.omega[1], g.fields.omega[2]],
                    sheet: g.fields.sheet,
                    t: *t,
                    value: *v,
                });
            }
        }
        Ok(out)
    }

    pub fn table(&self, level: Level) -> Result<ConeFunctionTable> {
        Ok(ConeFunctionTable {
            base: self.base(),
            level,
            c: self.config.c,
            samples: self.samples(|g| g.hierarchy.get(level).cloned())?,
            extensions: Vec::new(),
        })
    }

    /// The assembled source of a level on every generator.
    pub fn source(&self, level: Level) -> Result<KSourceTable> {
        Ok(KSourceTable {
            base: self.base(),
            level,
            samples: self.samples(|g| assemble_source(level, &g.fields, &g.hierarchy))?,
        })
    }

    /// Gauge extension of a level on the first `count` generators of each sheet.
    pub fn extend(&self, level: Level, count: usize) -> Result<Vec<ExtensionRecord>> {
        let picks: Vec<&GeneratorRecord> = self
            .generators
            .iter()
            .filter(|g| g.fields.sheet == Sheet::Future)
            .take(count)
            .chain(self.generators.iter().filter(|g| g.fields.sheet == Sheet::Past).take(count))
            .collect();
        picks
            .iter()
            .map(|g| {
                extend_off_cone(&self.transport, level, &g.fields.omega, g.fields.sheet, &self.config)
                    .map_err(|e| e.in_stage(&format!("extend {level}")))
            })
            .collect()
    }

    /// max |4tPf′ − Qf − K|/(1 + |f|) over off-node samples with |t| above the
    /// tip exclusion; f′ by central differences of the interpolant.
    /// f_{1} has no equation of its own and reports the residual of f_[1].
    pub fn transport_residual(&self, level: Level) -> Result<f64> {
        let level = if level == Level::Brace(1) { Level::Bracket(1) } else { level };
        let mut worst = 0.0f64;
        for g in &self.generators {
            let check = match g.fields.sheet {
                Sheet::Future => ChebGrid::new(self.config.t_nodes + 7, 0.0, self.config.t_max),
                Sheet::Past => ChebGrid::new(self.config.t_nodes + 7, -self.config.t_max, 0.0),
            };
            let fields = GeneratorFields::sample_on(&self.transport, &g.fields.omega, g.fields.sheet, check.clone())?;
            let interp = |v: &DVector<f64>| -> DVector<f64> {
                let vals: Vec<f64> = v.iter().copied().collect();
                DVector::from_iterator(check.len(), check.nodes.iter().map(|&t| g.fields.grid.interpolate(&vals, t)))
            };
            let lower = GeneratorHierarchy {
                levels: g.hierarchy.levels.iter().map(|(l, v)| (*l, interp(v))).collect(),
                sources: Vec::new(),
            };
            let f = lower.get(level)?;
            let k = assemble_source(level, &fields, &lower)?;
            let (p, q) = operator(level, &fields);
            let vals: Vec<f64> = g.hierarchy.get(level)?.iter().copied().collect();
            let dt = 1e-5 * self.config.t_max;
            for (i, &t) in check.nodes.iter().enumerate() {
                if t.abs() < self.config.tip_exclusion || t.abs() > self.config.t_max - dt {
                    continue;
                }
                let fp = (g.fields.grid.interpolate(&vals, t + dt) - g.fields.grid.interpolate(&vals, t - dt)) / (2.0 * dt);
                let r = 4.0 * t * p[i] * fp - q[i] * f[i] - k[i];
                worst = worst.max(r.abs() / (1.0 + f[i].abs()));
            }
        }
        Ok(worst)
    }

    /// Value of a level at parameter t along a direction, solving that
    /// generator if it is not among the stored ones.
    pub fn value_at(&self, level: Level, omega: &Vector3<f64>, t: f64) -> Result<f64> {
        let sheet = if t >= 0.0 { Sheet::Future } else { Sheet::Past };
        let omega = omega.normalize();
        let stored = self
            .generators
            .iter()
            .find(|g| g.fields.sheet == sheet && (g.fields.omega - omega).amax() < 1e-14);
        let values = match stored {
            Some(g) => g.hierarchy.get(level)?.clone(),
            None => {
                let fields = GeneratorFields::sample(&self.transport, &omega, sheet, &self.config)?;
                solve_generator(&fields, &self.levels, self.config.c)?.get(level)?.clone()
            }
        };
        let grid = super::generator::sheet_grid(&self.config, sheet);
        Ok(grid.interpolate(values.as_slice(), t))
    }
}

fn samples_csv(samples: &[ConeSample]) -> String {
    let mut out = String::from("theta,phi,sheet,t,value\n");
    for s in samples {
        let [x, y, z] = s.omega;
        let r = (x * x + y * y + z * z).sqrt();
        let theta = (z / r).acos();
        let phi = y.atan2(x);
        let sheet = match s.sheet {
            Sheet::Future => "future",
            Sheet::Past => "past",
        };
        out.push_str(&format!("{theta:.17e},{phi:.17e},{sheet},{:.17e},{:.17e}\n", s.t, s.value));
    }
    out
}

impl KSourceTable {
    pub fn to_csv(&self) -> String {
        samples_csv(&self.samples)
    }
}

impl ConeFunctionTable {
    /// CSV rows of direction angles, sheet, t and value.
    pub fn to_csv(&self) -> String {
        samples_csv(&self.samples)
    }

    pub fn sidecar(&self) -> serde_json::Value {
        let residual = self.extensions.iter().map(|e| e.residual).fold(0.0, f64::max);
        serde_json::json!({
            "level": self.level.to_string(),
            "base": self.base,
            "c": self.c,
            "enforcement_residual": residual,
            "extensions": self.extensions.len(),
        })
    }

    /// max |f| over samples with |t| at or below `tmax`.
    pub fn tip_bound(&self, tmax: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t.abs() <= tmax)
            .map(|s| s.value.abs())
            .fold(0.0, f64::max)
    }

    /// Fraction of samples with t ≠ 0 whose sign matches the time ordering.
    pub fn sign_agreement(&self, time_of: impl Fn(&ConeSample) -> f64) -> f64 {
        let relevant: Vec<&ConeSample> = self.samples.iter().filter(|s| s.t != 0.0).collect();
        if relevant.is_empty() {
            return 1.0;
        }
        let ok = relevant
            .iter()
            .filter(|s| s.value.signum() == time_of(s).signum() && s.value != 0.0)
            .count();
        ok as f64 / relevant.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntisymmetryReport {
    pub pairs: usize,
    /// max |f(x,y) + f(y,x)| per level.
    pub max_deviation: BTreeMap<String, f64>,
}

impl AntisymmetryReport {
    pub fn worst(&self) -> f64 {
        self.max_deviation.values().copied().fold(0.0, f64::max)
    }
}

/// The base point y seen from a cone point x = exp_y(t·k(ω)): a cone
/// solution based at x and the generator (back, tb) through y.
pub struct FarEnd {
    pub cone: ConeSolution,
    pub back: Vector3<f64>,
    pub t: f64,
    /// Normal coordinates of y around x.
    pub xi: Vector4<f64>,
}

pub fn far_end(
    near: &ConeSolution,
    omega: &Vector3<f64>,
    t: f64,
    transport_cfg: &TransportConfig,
    mu: MuProfile,
) -> Result<FarEnd> {
    let metric: &MetricModel = &near.transport.patch.metric;
    let y: Point = near.transport.base();
    let k = near.transport.patch.generator(omega)?;
    let x = near.transport.patch.chart_point(&(k * t));
    let far = Arc::new(TransportSolution::solve(metric, &x, mu, transport_cfg).map_err(|e| e.in_stage("far transport"))?);
    let xi = far.patch.normal_coordinates(&y)?;
    let spatial = Vector3::new(xi[1], xi[2], xi[3]);
    let back = spatial * (xi[0].signum() / spatial.norm());
    let kb = far.patch.generator(&back)?;
    Ok(FarEnd {
        cone: ConeSolution {
            transport: far,
            config: near.config,
            levels: near.levels.clone(),
            generators: Vec::new(),
        },
        back,
        t: xi[0] / kb[0],
        xi,
    })
}

/// Solve the hierarchy independently at each cone point x and compare
/// f(y, x) with f(x, y). `flip` negates f at the far end (a regression guard).
pub fn check_antisymmetry(
    near: &ConeSolution,
    pairs: &[(Vector3<f64>, f64)],
    transport_cfg: &TransportConfig,
    mu: MuProfile,
    flip: bool,
) -> Result<AntisymmetryReport> {
    let results = try_map_range(pairs.len(), |i| -> Result<Vec<(Level, f64)>> {
        let (omega, t) = pairs[i];
        let omega = omega.normalize();
        let far = far_end(near, &omega, t, transport_cfg, mu)?;
        near.levels
            .iter()
            .map(|&level| {
                let a = near.value_at(level, &omega, t)?;
                let mut b = far.cone.value_at(level, &far.back, far.t)?;
                if flip {
                    b = -b;
                }
                Ok((level, (a + b).abs()))
            })
            .collect()
    })?;
    let mut max_deviation = BTreeMap::new();
    for row in results {
        for (level, d) in row {
            let e = max_deviation.entry(level.to_string()).or_insert(0.0f64);
            *e = e.max(d);
        }
    }
    Ok(AntisymmetryReport {
        pairs: pairs.len(),
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScaleFactor;
    use crate::transport::PatchConfig;

    fn tcfg() -> TransportConfig {
        TransportConfig {
            patch: PatchConfig {
                nodes: 9,
                radius: 0.45,
                ..PatchConfig::default()
            },
            quadrature: 14,
            ..TransportConfig::default()
        }
    }

    fn solve(metric: &MetricModel, y: Point) -> ConeSolution {
        let mu = MuProfile::Constant { mass_squared: 1.0 };
        let t = Arc::new(TransportSolution::solve(metric, &y, mu, &tcfg()).unwrap());
        ConeSolution::solve(t, &direction_set(4), &ConeConfig::default()).unwrap()
    }

    #[test]
    fn minkowski_levels_recover_time_difference() {
        let cone = solve(&MetricModel::minkowski(), Point::zeros());
        for &level in &cone.levels {
            let table = cone.table(level).unwrap();
            for s in &table.samples {
                assert!((s.value - s.t).abs() < 1e-8, "{level}: {} vs {}", s.value, s.t);
            }
        }
        let k0 = cone.source(Level::Bracket(0)).unwrap();
        assert!(k0.samples.iter().all(|s| (s.value + s.t).abs() < 1e-8));
    }

    #[test]
    fn flrw_levels_and_residuals() {
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let cone = solve(&m, Point::new(0.5, 0.0, 0.0, 0.0));
        for &level in &cone.levels {
            let r = cone.transport_residual(level).unwrap();
            assert!(r < 1e-4, "{level}: {r}");
            let table = cone.table(level).unwrap();
            assert!(table.tip_bound(0.0) < 1e-12);
            assert_eq!(table.sign_agreement(|s| s.t), 1.0);
        }
    }

    #[test]
    fn integration_constant_scales_linearly() {
        let mu = MuProfile::Constant { mass_squared: 1.0 };
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let t = Arc::new(TransportSolution::solve(&m, &Point::new(0.5, 0.0, 0.0, 0.0), mu, &tcfg()).unwrap());
        let dirs = direction_set(2);
        let a = ConeSolution::solve(t.clone(), &dirs, &ConeConfig::default()).unwrap();
        let b = ConeSolution::solve(t, &dirs, &ConeConfig { c: 2.5, ..ConeConfig::default() }).unwrap();
        let ta = a.table(Level::Bracket(-1)).unwrap();
        let tb = b.table(Level::Bracket(-1)).unwrap();
        for (x, y) in ta.samples.iter().zip(&tb.samples) {
            assert!((2.5 * x.value - y.value).abs() < 1e-14);
        }
    }

    #[test]
    fn antisymmetry_both_families() {
        let mu = MuProfile::Constant { mass_squared: 1.0 };
        let pairs = [(Vector3::new(1.0, 0.0, 0.0), 0.2), (Vector3::new(0.0, 0.6, 0.8), -0.15)];
        let flat = solve(&MetricModel::minkowski(), Point::zeros());
        let r = check_antisymmetry(&flat, &pairs, &tcfg(), mu, false).unwrap();
        assert!(r.worst() < 1e-8, "{r:?}");
        let broken = check_antisymmetry(&flat, &pairs, &tcfg(), mu, true).unwrap();
        assert!(broken.worst() > 0.1);
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let curved = solve(&m, Point::new(0.5, 0.0, 0.0, 0.0));
        let r = check_antisymmetry(&curved, &pairs, &tcfg(), mu, false).unwrap();
        eprintln!("{r:?}");
        assert!(r.worst() < 1e-4, "{r:?}");
    }

    #[test]
    fn sign_change_of_multiplier_is_reported() {
        let mu = MuProfile::Constant { mass_squared: 1.0 };
        let m = MetricModel::conformal_flrw(ScaleFactor::linear(0.5));
        let t = Arc::new(TransportSolution::solve(&m, &Point::new(0.1, 0.0, 0.0, 0.0), mu, &tcfg()).unwrap());
        let err = ConeSolution::solve(t, &[Vector3::new(0.3, -0.5, 0.8)], &ConeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CoefficientVanishes { .. }), "{err:?}");
    }
}
