use std::fs;
use std::path::{Path, PathBuf};

use carleman_core::acceptance::{run_criterion, AcceptOptions, Faults};
use carleman_core::pipeline::{run_scenario_file, Overrides, RunOutcome};
use carleman_core::scenario::Stage;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(name: &str, stage: Option<Stage>, out: &Path) -> RunOutcome {
    let ov = Overrides {
        out: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    run_scenario_file(&scenario(name), stage, &ov).expect("scenario loads")
}

#[test]
fn every_bundled_scenario_loads() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            carleman_core::scenario::Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn failing_scenarios_map_to_their_exit_codes() {
    for (name, stage, code) in [
        ("isp_short_horizon.toml", Stage::Isp, 2),
        ("weight_annulus.toml", Stage::Weight, 2),
        ("check_tilt.toml", Stage::Check, 2),
        ("weight_half_disc.toml", Stage::Weight, 0),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(name, Some(stage), dir.path());
        assert_eq!(out.exit_code(), code, "{name}: {:?}", out.error);
        let status = fs::read_to_string(dir.path().join("run_status.json")).unwrap();
        assert!(status.contains(&format!("\"exit_code\": {code}")), "{status}");
    }
}

#[test]
fn manifest_hashes_match_the_files() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let out = run("isp_1d.toml", Some(Stage::Isp), dir.path());
    assert_eq!(out.exit_code(), 0);
    assert!(!out.manifest.is_empty());
    for e in &out.manifest {
        let bytes = fs::read(dir.path().join(&e.path)).unwrap();
        assert_eq!(e.bytes, bytes.len(), "{}", e.path);
        assert_eq!(e.sha256, hex::encode(Sha256::digest(&bytes)), "{}", e.path);
    }
}

#[test]
fn all_stage_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run("all_1d.toml", Some(Stage::All), a.path());
    let rb = run("all_1d.toml", Some(Stage::All), b.path());
    assert_eq!(ra.exit_code(), 0, "{:?}", ra.error);
    let ha: Vec<_> = ra.manifest.iter().map(|e| (&e.path, &e.sha256)).collect();
    let hb: Vec<_> = rb.manifest.iter().map(|e| (&e.path, &e.sha256)).collect();
    assert_eq!(ha, hb);
    assert!(a.path().join("isp/f_hat.csv").exists());
    assert!(a.path().join("icp/stability_report.json").exists());
}

#[test]
fn negative_delta_fault_is_caught() {
    let opts = AcceptOptions {
        faults: Faults { negative_delta: true },
        ..AcceptOptions::default()
    };
    let r = run_criterion("weight_admissibility", &opts).unwrap();
    assert!(!r.pass(), "{}", r.line());
    assert!(run_criterion("weight_admissibility", &AcceptOptions::default()).unwrap().pass());
}
