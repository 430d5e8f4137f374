use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kerr::config::RunConfig;
use kerr::io::{read_dataset, sha256_hex, Manifest};

fn kerr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kerr"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn kerr")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "kerr failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut RunConfig)) -> String {
    let mut cfg = RunConfig::default();
    edit(&mut cfg);
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn check_manifest(dir: &Path) -> Manifest {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    for o in &m.outputs {
        let bytes = fs::read(dir.join(&o.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), o.sha256, "{}", o.path);
        assert_eq!(bytes.len() as u64, o.bytes);
    }
    m
}

#[test]
fn measure_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    ok(&kerr(&["measure", "--seed", "7", "--out", &out("a")], &[]));
    ok(&kerr(
        &["measure", "--seed", "7", "--out", &out("b")],
        &[("KERR_THREADS", "1")],
    ));
    ok(&kerr(&["measure", "--seed", "8", "--out", &out("c")], &[]));
    let read = |d: &str| fs::read(tmp.path().join(d).join("measure/dataset.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(rows(&tmp.path().join("a/measure/dataset.csv")), 3528);
    let m = check_manifest(&tmp.path().join("a/measure"));
    assert_eq!(m.command, "measure");
    let ds = read_dataset(&tmp.path().join("a/measure/dataset.csv")).unwrap();
    assert_eq!(ds.n_list, (0..8).collect::<Vec<_>>());
    assert_eq!(ds.grid.len(), 441);
}

#[test]
fn single_projection_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |c| c.measure.n_list = vec![0]);
    let out = tmp.path().join("run").to_string_lossy().into_owned();
    ok(&kerr(&["measure", "--config", &cfg, "--out", &out], &[]));
    assert_eq!(rows(&tmp.path().join("run/measure/dataset.csv")), 441);
}

#[test]
fn simulate_writes_every_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_string_lossy().into_owned();
    ok(&kerr(&["simulate", "--out", &out], &[]));
    let dir = tmp.path().join("simulate");
    let m = check_manifest(&dir);
    let csvs = m.outputs.iter().filter(|o| o.path.ends_with(".csv")).count();
    assert_eq!(csvs, 8);
    assert_eq!(m.outputs.len(), 16);
    for o in m.outputs.iter().filter(|o| o.path.ends_with(".csv")) {
        assert_eq!(rows(&dir.join(&o.path)), 441);
    }
    assert!(dir.join("q0_t15ns.csv").exists());
    assert!(dir.join("q0_t3065ns.json").exists());
}

#[test]
fn reconstruct_reports_missing_projection() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |c| c.measure.n_list = (0..7).collect());
    let out = tmp.path().join("run").to_string_lossy().into_owned();
    ok(&kerr(&["measure", "--config", &cfg, "--out", &out], &[]));
    ok(&kerr(&["reconstruct", "--config", &cfg, "--out", &out], &[]));
    let dir = tmp.path().join("run/reconstruct");
    check_manifest(&dir);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["rows_used"], 3087);
    let notes = diag["notes"].as_array().unwrap();
    assert!(
        notes.iter().any(|n| n.as_str().unwrap().contains("3087 rows")),
        "{notes:?}"
    );
    let f = diag["fidelity"]["fidelity"].as_f64().unwrap();
    assert!(f > 0.0 && f <= 1.0);
}

#[test]
fn reconstruct_from_explicit_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run").to_string_lossy().into_owned();
    ok(&kerr(&["measure", "--out", &out], &[]));
    let moved = tmp.path().join("data.csv");
    fs::copy(tmp.path().join("run/measure/dataset.csv"), &moved).unwrap();
    let other = tmp.path().join("other").to_string_lossy().into_owned();
    ok(&kerr(
        &["reconstruct", "--out", &other, "--input", moved.to_str().unwrap()],
        &[],
    ));
    let m = check_manifest(&tmp.path().join("other/reconstruct"));
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(m.inputs[0].sha256, sha256_hex(&fs::read(&moved).unwrap()));
    for name in [
        "rho.json",
        "diagnostics.json",
        "fidelity.json",
        "wigner_rho.csv",
        "wigner_qn.csv",
    ] {
        assert!(m.outputs.iter().any(|o| o.path == name), "{name}");
    }
}

#[test]
fn analyze_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_string_lossy().into_owned();
    ok(&kerr(&["analyze", "--out", &out], &[]));
    let dir = tmp.path().join("analyze");
    check_manifest(&dir);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!((report["collapse_time_ns"].as_f64().unwrap() - 384.6).abs() < 0.1);
    assert!((report["revival_time_ns"].as_f64().unwrap() - 3076.9).abs() < 0.1);
    assert_eq!(rows(&dir.join("evolution.csv")), 50);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"space": {"dim": "thirty"}}"#).unwrap();
    let out = kerr(&["measure", "--config", cfg.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("space.dim"));

    let cfg = write_config(tmp.path(), |c| c.space.dim = 1);
    let out = kerr(&["simulate", "--config", &cfg], &[]);
    assert!(!out.status.success());

    let csv = tmp.path().join("broken.csv");
    fs::write(
        &csv,
        "n,re_alpha,im_alpha,value,kind\n0,0,0,0.1,signal\nx,0.3,0,0.1,signal\n",
    )
    .unwrap();
    let out = kerr(
        &[
            "reconstruct",
            "--input",
            csv.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    let out = kerr(
        &["measure", "--out", tmp.path().to_str().unwrap()],
        &[("KERR_THREADS", "zero")],
    );
    assert!(!out.status.success());
}

#[test]
fn config_round_trip() {
    let mut cfg = RunConfig {
        seed: 99,
        ..RunConfig::default()
    };
    cfg.measure.n_list = vec![0, 2, 4];
    let back = RunConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
}
