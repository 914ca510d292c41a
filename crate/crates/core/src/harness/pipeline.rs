//! Stage-by-stage solve of a scenario, kept in memory for the checks.

use super::config::Scenario;
use crate::error::{Error, Result};
use crate::geometry::{MetricModel, Point};
use crate::parallel::try_map_range;
use crate::regularization::{direction_set, ConeSolution};
use crate::transport::{MuProfile, TransportSolution};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    pub ok: bool,
}

pub struct BaseRun {
    pub index: usize,
    pub base: Point,
    pub transport: Arc<TransportSolution>,
    pub cone: Option<ConeSolution>,
}

impl BaseRun {
    pub fn cone(&self) -> Result<&ConeSolution> {
        self.cone
            .as_ref()
            .ok_or_else(|| Error::MissingPrerequisite(format!("cone stage not run for base {}", self.index)))
    }
}

pub struct Pipeline {
    pub scenario: Scenario,
    pub metric: MetricModel,
    pub mu: MuProfile,
    pub bases: Vec<BaseRun>,
    pub timings: Vec<StageTiming>,
}

impl Pipeline {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let mut timings = Vec::new();
        let metric = timed(&mut timings, "geometry", || scenario.metric_model())?;
        Ok(Self {
            mu: scenario.mu(),
            scenario: scenario.clone(),
            metric,
            bases: Vec::new(),
            timings,
        })
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            ok: out.is_ok(),
        });
        out.map_err(|e| e.in_stage(stage))
    }

    pub fn solve_transport(&mut self) -> Result<()> {
        let solved = self.time("transport", |p| {
            let cfg = p.scenario.transport_config();
            p.scenario
                .base_points
                .iter()
                .map(|b| TransportSolution::solve(&p.metric, &Point::from(*b), p.mu, &cfg).map(Arc::new))
                .collect::<Result<Vec<_>>>()
        })?;
        self.bases = solved
            .into_iter()
            .enumerate()
            .map(|(index, transport)| BaseRun {
                index,
                base: transport.base(),
                transport,
                cone: None,
            })
            .collect();
        Ok(())
    }

    pub fn solve_cones(&mut self) -> Result<()> {
        let cones = self.time("regularization", |p| {
            let dirs = direction_set(p.scenario.cone.directions);
            let cfg = p.scenario.cone_config();
            try_map_range(p.bases.len(), |i| ConeSolution::solve(p.bases[i].transport.clone(), &dirs, &cfg))
        })?;
        for (b, c) in self.bases.iter_mut().zip(cones) {
            b.cone = Some(c);
        }
        Ok(())
    }

    /// Solve every stage up to and including the cone functions.
    pub fn solved(scenario: &Scenario) -> Result<Self> {
        let mut p = Self::new(scenario)?;
        p.solve_transport()?;
        p.solve_cones()?;
        Ok(p)
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
        ok: out.is_ok(),
    });
    out.map_err(|e| e.in_stage(stage))
}
