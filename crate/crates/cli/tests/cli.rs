use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn carleman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(stage: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![stage, "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    carleman(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(path, bytes)` of every manifest entry.
fn manifest(dir: &Path) -> Vec<(String, u64)> {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let mut out = Vec::new();
    for entry in text.split('{').skip(1) {
        let field = |key: &str| {
            let start = entry.find(&format!("\"{key}\"")).unwrap();
            let rest = &entry[start + key.len() + 3..];
            rest.trim_start().split([',', '\n', '}']).next().unwrap().trim().trim_matches('"').to_string()
        };
        out.push((field("path"), field("bytes").parse().unwrap()));
    }
    out
}

#[test]
fn short_horizon_isp_exits_with_the_time_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("isp", &scenario("isp_short_horizon.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(time)"), "{}", stderr(&o));
    assert!(dir.path().join("admissibility_report.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn annulus_rotation_is_not_dissipative() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("weight", &scenario("weight_annulus.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(finiteness)"));
    let report = fs::read_to_string(dir.path().join("weight_report.json")).unwrap();
    assert!(report.contains("\"dissipative\": false"));
}

#[test]
fn tilting_field_fails_the_spd_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("check", &scenario("check_tilt.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(spd)"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("isp", &dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = carleman(&["isp", "--scenario", "x.toml", "--lambda", "not-a-number"]);
    assert_eq!(o.status.code(), Some(1));
    let o = carleman(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    // The scenario has no [icp] block.
    let o = run("icp", &scenario("isp_1d.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn beta_outside_the_admissible_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("weight", &scenario("weight_half_disc.toml"), dir.path(), &["--beta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(beta)"));
}

#[test]
fn too_few_time_steps_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("solve_min_x_t.toml")).unwrap();
    let path = dir.path().join("coarse.toml");
    fs::write(&path, text.replace("n = [201]", "n = [201]\nnt = 10")).unwrap();
    let o = run("solve", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("CFL"));
}

#[test]
fn weight_stage_writes_listed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("weight", &scenario("weight_half_disc.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let entries = manifest(dir.path());
    for name in ["phi0.csv", "grad_phi0.csv", "weight_report.json", "run_status.json"] {
        let (_, bytes) = entries.iter().find(|(p, _)| p == name).unwrap_or_else(|| panic!("{name} listed"));
        assert_eq!(fs::metadata(dir.path().join(name)).unwrap().len(), *bytes);
    }
    let header = fs::read_to_string(dir.path().join("phi0.csv")).unwrap();
    assert!(header.starts_with("x,y,t,phi0\n"));
}

#[test]
fn solve_writes_traces_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &scenario("solve_min_x_t.toml"), dir.path(), &["--refine", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace_sigma_plus.csv")).unwrap();
    assert!(trace.starts_with("facet,x,t,u,dtu\n"));
    let report = fs::read_to_string(dir.path().join("solve_report.json")).unwrap();
    assert!(report.contains("\"c_energy\""));
    assert!(dir.path().join("energy.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = scenario("isp_1d.toml");
    for d in [&a, &b] {
        let o = run("isp", &sc, d.path(), &["--seed", "11", "--noise", "0.01"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ma = manifest(a.path());
    assert_eq!(ma, manifest(b.path()));
    for (p, _) in &ma {
        assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap(), "{p}");
    }
}

#[test]
fn s_list_override_reaches_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_carleman"))
        .args(["carleman", "--scenario", scenario("carleman_1d.toml").to_str().unwrap()])
        .args(["--out", dir.path().to_str().unwrap(), "--s-list", "2,4,8"])
        .env("CARLEMAN_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sweep = fs::read_to_string(dir.path().join("carleman_sweep.csv")).unwrap();
    // 20 functions times 3 values of s, plus the header.
    assert_eq!(sweep.lines().count(), 61);
}

#[test]
fn icp2_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("icp2", &scenario("icp2_1d.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["observation_m1.csv", "observation_m2.csv", "f_hat.csv", "stability_report.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}
