//! `run` and `export`: solve a scenario, write its tables, reports and manifest.

use super::cache::{sha256_hex, Cache};
use super::config::{Scenario, Tolerances, DEFAULTS_VERSION};
use super::pipeline::{Pipeline, StageTiming};
use super::verify::{run_suite, Reports, Suite, Verdict};
use crate::error::{Error, Result};
use crate::regularization::Level;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// One output table or report. `id` uses slashes (`coeff/b0/X0`); files
/// replace them with underscores.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub id: String,
    pub schema: &'static str,
    pub csv: Option<String>,
    pub json: serde_json::Value,
}

impl Artifact {
    fn new(id: String, schema: &'static str, csv: Option<String>, mut json: serde_json::Value) -> Self {
        let csv = csv.map(|body| format!("# schema={schema}\n{body}"));
        if let serde_json::Value::Object(m) = &mut json {
            m.insert("schema".into(), schema.into());
        } else {
            json = serde_json::json!({ "schema": schema, "data": json });
        }
        Self { id, schema, csv, json }
    }

    pub fn stem(id: &str) -> String {
        id.replace('/', "_")
    }

    fn files(&self) -> Vec<(String, Vec<u8>)> {
        let stem = Self::stem(&self.id);
        let mut out = Vec::new();
        if let Some(csv) = &self.csv {
            out.push((format!("{stem}.csv"), csv.clone().into_bytes()));
        }
        let json = serde_json::to_string_pretty(&self.json).expect("artifact serializes");
        out.push((format!("{stem}.json"), json.into_bytes()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub id: String,
    pub schema: String,
    pub files: Vec<String>,
    pub sha256: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub scenario_hash: String,
    pub defaults_version: String,
    pub tolerances: Tolerances,
    pub cache: CacheStatus,
    pub artifacts: Vec<ArtifactRecord>,
    pub stages: Vec<StageTiming>,
    pub verdicts: Vec<Verdict>,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.status == RunStatus::Ok && self.verdicts.iter().all(|v| v.passed)
    }
}

const VERDICTS: &str = "verdicts.json";
const ARTIFACTS: &str = "artifacts.json";

fn transport_artifacts(p: &Pipeline) -> Vec<Artifact> {
    let mut out = Vec::new();
    for b in &p.bases {
        for table in b.transport.tables() {
            out.push(Artifact::new(
                format!("coeff/b{}/{}", b.index, table.kind),
                "coeff.v1",
                Some(table.to_csv()),
                table.sidecar(),
            ));
        }
    }
    out
}

fn cone_artifacts(p: &Pipeline) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    for b in &p.bases {
        let cone = b.cone()?;
        for &level in &cone.levels {
            let table = cone.table(level)?;
            out.push(Artifact::new(
                format!("cone/b{}/{}", b.index, level.slug()),
                "cone.v1",
                Some(table.to_csv()),
                table.sidecar(),
            ));
            if !matches!(level, Level::Bracket(-1) | Level::Brace(1)) {
                let k = cone.source(level)?;
                out.push(Artifact::new(
                    format!("source/b{}/{}", b.index, level.slug()),
                    "ksource.v1",
                    Some(k.to_csv()),
                    serde_json::json!({ "level": level.to_string(), "base": cone.base() }),
                ));
            }
        }
    }
    Ok(out)
}

fn report_artifacts(reports: &Reports) -> Vec<Artifact> {
    let mut out = Vec::new();
    for (i, r) in &reports.residual {
        out.push(Artifact::new(format!("residual/b{i}"), "residual.v1", Some(r.to_csv()), serde_json::to_value(r).expect("report serializes")));
    }
    for (i, r) in &reports.antisymmetry {
        out.push(Artifact::new(format!("antisymmetry/b{i}"), "antisymmetry.v1", None, serde_json::to_value(r).expect("report serializes")));
    }
    for (i, r) in &reports.symmetry {
        out.push(Artifact::new(format!("symmetry/b{i}"), "symmetry.v1", None, serde_json::to_value(r).expect("report serializes")));
    }
    for (i, rows) in &reports.dirac_scaling {
        let mut csv = String::from("point,x0,x1,x2,x3,epsilon,change,exponent\n");
        for (k, r) in rows.iter().enumerate() {
            for (e, c) in r.epsilon.iter().zip(&r.change) {
                csv.push_str(&format!(
                    "{k},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    r.x[0], r.x[1], r.x[2], r.x[3], e, c, r.exponent
                ));
            }
        }
        out.push(Artifact::new(format!("dirac_residual/b{i}"), "dirac_residual.v1", Some(csv), serde_json::json!({ "points": rows })));
    }
    out
}

struct Writer {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
    files: Vec<(String, Vec<u8>)>,
}

impl Writer {
    fn write(&mut self, artifacts: Vec<Artifact>) -> Result<()> {
        for a in artifacts {
            let files = a.files();
            for (name, bytes) in &files {
                fs::write(self.dir.join(name), bytes)?;
            }
            self.records.push(ArtifactRecord {
                id: a.id.clone(),
                schema: a.schema.to_string(),
                files: files.iter().map(|(n, _)| n.clone()).collect(),
                sha256: files.iter().map(|(_, b)| sha256_hex(b)).collect(),
            });
            self.files.extend(files);
        }
        Ok(())
    }
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Output directory: the override if given, else the scenario's own.
pub fn output_dir(scenario: &Scenario, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| scenario.output.clone())
}

pub fn cache_for(dir: &Path) -> Cache {
    Cache::new(dir.join(".cache"))
}

/// Solve the scenario (or reuse a cached run), write everything to the output
/// directory and return the manifest.
pub fn run_scenario(scenario: &Scenario, out: Option<&Path>) -> Result<RunManifest> {
    let dir = output_dir(scenario, out);
    fs::create_dir_all(&dir)?;
    let cache = cache_for(&dir);
    let key = scenario.hash();
    let mut manifest = RunManifest {
        scenario: scenario.name.clone(),
        scenario_hash: key.clone(),
        defaults_version: DEFAULTS_VERSION.to_string(),
        tolerances: scenario.tolerances,
        cache: CacheStatus::Miss,
        artifacts: Vec::new(),
        stages: Vec::new(),
        verdicts: Vec::new(),
        status: RunStatus::Ok,
        error: None,
    };

    if cache.lookup(&key).is_some() {
        log::info!("cache hit for {}", scenario.name);
        for name in cache.list(&key)? {
            if name != VERDICTS && name != ARTIFACTS {
                fs::write(dir.join(&name), cache.read(&key, &name)?)?;
            }
        }
        manifest.cache = CacheStatus::Hit;
        manifest.verdicts = serde_json::from_slice(&cache.read(&key, VERDICTS)?).map_err(|e| Error::Io(e.to_string()))?;
        manifest.artifacts = serde_json::from_slice(&cache.read(&key, ARTIFACTS)?).map_err(|e| Error::Io(e.to_string()))?;
        write_manifest(&dir, &manifest)?;
        return Ok(manifest);
    }

    let mut writer = Writer {
        dir: dir.clone(),
        records: Vec::new(),
        files: Vec::new(),
    };
    let mut pipeline: Option<Pipeline> = None;
    let outcome = (|| -> Result<Vec<Verdict>> {
        let p = pipeline.insert(Pipeline::new(scenario)?);
        log::info!("transport stage for {} base point(s)", scenario.base_points.len());
        p.solve_transport()?;
        writer.write(transport_artifacts(p))?;
        log::info!("regularization stage");
        p.solve_cones()?;
        writer.write(cone_artifacts(p)?)?;
        log::info!("verification suites");
        let mut reports = Reports::default();
        let verdicts = p.time("verification", |p| run_suite(p, Suite::All, &mut reports))?;
        writer.write(report_artifacts(&reports))?;
        Ok(verdicts)
    })();
    manifest.stages = pipeline.map(|p| p.timings).unwrap_or_default();
    manifest.artifacts = writer.records;
    match outcome {
        Ok(verdicts) => {
            manifest.verdicts = verdicts;
            let mut files = writer.files;
            files.push((VERDICTS.into(), serde_json::to_vec_pretty(&manifest.verdicts).expect("verdicts serialize")));
            files.push((ARTIFACTS.into(), serde_json::to_vec_pretty(&manifest.artifacts).expect("records serialize")));
            cache.store(&key, &files)?;
            write_manifest(&dir, &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            write_manifest(&dir, &manifest)?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Copy a cached artifact of the scenario into `<out>/export/`.
pub fn export(scenario: &Scenario, artifact: &str, format: ExportFormat, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let dir = output_dir(scenario, out);
    let cache = cache_for(&dir);
    let key = scenario.hash();
    if cache.lookup(&key).is_none() {
        return Err(Error::UnknownArtifact(format!("{artifact} (scenario `{}` has not been run)", scenario.name)));
    }
    let ext = match format {
        ExportFormat::Csv => "csv",
        ExportFormat::Json => "json",
    };
    let name = format!("{}.{ext}", Artifact::stem(artifact));
    let bytes = cache.read(&key, &name).map_err(|_| Error::UnknownArtifact(format!("{artifact} as {ext}")))?;
    let target = dir.join("export");
    fs::create_dir_all(&target)?;
    let path = target.join(&name);
    fs::write(&path, bytes)?;
    Ok(vec![path])
}
