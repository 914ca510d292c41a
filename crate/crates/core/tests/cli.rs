use hadamard_flow::harness::RunManifest;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIOS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hadamard-flow"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn unknown_suite_is_a_config_error() {
    let out = cli(&["verify", "no-such-suite"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-suite"));
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = fs::read_to_string(format!("{SCENARIOS}/minkowski_kg.toml")).unwrap();
    fs::write(&path, format!("{text}\n[cone]\nt_max = 0.9\n")).unwrap();
    let out = cli(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cone.t_max"));

    fs::write(&path, format!("{text}\nsurprise = 1\n")).unwrap();
    let out = cli(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn export_before_run_is_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = format!("{SCENARIOS}/minkowski_kg.toml");
    let out = cli(&["export", "coeff/b0/X0", "--scenario", &scenario, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn geometry_suite_runs_on_the_bundled_scenario() {
    let out = cli(&["verify", "geometry-identities"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS geometry-identities"));
}

#[test]
fn run_caches_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let scenario = format!("{SCENARIOS}/minkowski_kg.toml");

    let first = cli(&["run", &scenario, "--out", out_dir]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stdout));
    let m1 = manifest(dir.path());
    assert!(m1.passed());
    assert!(m1.artifacts.iter().any(|a| a.id == "coeff/b0/X0"));
    assert!(m1.stages.iter().any(|s| s.stage == "transport"));
    let csv = fs::read_to_string(dir.path().join("coeff_b0_X0.csv")).unwrap();
    assert!(csv.starts_with("# schema=coeff.v1\n"));

    let second = cli(&["run", &scenario, "--out", out_dir]);
    assert_eq!(code(&second), 0);
    let m2 = manifest(dir.path());
    assert_eq!(serde_json::to_value(m2.cache).unwrap(), "hit");
    assert_eq!(m1.artifacts, m2.artifacts);
    assert_eq!(m1.verdicts, m2.verdicts);

    let exported = cli(&["export", "cone/b0/bracket0", "--format", "json", "--scenario", &scenario, "--out", out_dir]);
    assert_eq!(code(&exported), 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("export/cone_b0_bracket0.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "cone.v1");

    let missing = cli(&["export", "cone/b9/bracket0", "--scenario", &scenario, "--out", out_dir]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.toml");
    let text = fs::read_to_string(format!("{SCENARIOS}/minkowski_kg.toml")).unwrap();
    fs::write(&path, format!("{text}\n[tolerances]\ncoefficient = 1e-12\n")).unwrap();
    let out = cli(&["verify", "coefficient-oracles", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL coefficient-oracles"));
}

#[test]
fn degenerate_scale_factor_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("singular.toml");
    fs::write(
        &path,
        "name = \"singular\"\nbase_points = [[0.5, 0.0, 0.0, 0.0]]\n[metric]\nfamily = \"conformal_flrw\"\nscale_factor = [1.0, -1.9]\n[field]\nkind = \"klein_gordon\"\nmass = 1.0\n",
    )
    .unwrap();
    let out = cli(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let m = manifest(dir.path());
    assert_eq!(serde_json::to_value(m.status).unwrap(), "FAILED");
    assert!(m.error.unwrap().contains("transport"));
}
