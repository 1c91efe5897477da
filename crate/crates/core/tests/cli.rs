mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::small_config;

fn satstereo(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_satstereo"));
    cmd.args(args).env_remove("SATSTEREO_THREADS");
    if let Some(t) = threads {
        cmd.env("SATSTEREO_THREADS", t);
    }
    cmd.output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("synth.json");
    std::fs::write(&cfg, serde_json::to_string(&small_config()).unwrap()).unwrap();
    let data = dir.join("data");
    let out = satstereo(&["synth", "--config", arg(&cfg), "--output", arg(&data)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn synth_run_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = satstereo(&["run", arg(&data.join("pipeline.json"))], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("CP (%)") && stdout.contains("ME (m)"));

    let metrics = dir.path().join("m.json");
    let out = satstereo(
        &["evaluate", "--cloud", arg(&data.join("out/cloud.ply")), "--truth", arg(&data.join("truth.json")), "--output", arg(&metrics)],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(metrics).unwrap()).unwrap();
    assert!(m["completeness_pct"].as_f64().unwrap() > 90.0);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let config = data.join("pipeline.json");
    assert!(satstereo(&["--threads", "1", "run", arg(&config)], None).status.success());
    let one = std::fs::read(data.join("out/heights.pfm")).unwrap();
    assert!(satstereo(&["run", arg(&config)], Some("3")).status.success());
    let three = std::fs::read(data.join("out/heights.pfm")).unwrap();
    assert!(one == three);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = satstereo(&["run", arg(&dir.path().join("absent.json"))], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));

    let data = synth(dir.path());
    std::fs::remove_file(data.join("view_0_rpc.json")).unwrap();
    let out = satstereo(&["run", arg(&data.join("pipeline.json"))], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("view_0_rpc.json"));

    let out = satstereo(&["approx-camera", "--rpc", "x.json", "--aoi", "1,2,3", "--alt", "0,1", "--output", "o.json"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    std::fs::write(data.join("tracks.json"), "[").unwrap();
    let out = satstereo(&["run", arg(&data.join("pipeline.json"))], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest_tracks"));
}

#[test]
fn step_by_step_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    assert!(satstereo(&["run", arg(&data.join("pipeline.json"))], None).status.success());
    let o = data.join("out");
    let heights = dir.path().join("h.pfm");
    let out = satstereo(
        &[
            "sweep",
            "--reference",
            arg(&o.join("corrected_0.pfm")),
            "--sources",
            arg(&o.join("corrected_1.pfm")),
            "--cameras",
            arg(&o.join("stereo_0.json")),
            arg(&o.join("stereo_1.json")),
            "--z-range",
            "-1,29",
            "--output",
            arg(&heights),
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read(&heights).unwrap() == std::fs::read(o.join("heights.pfm")).unwrap());

    let ldr = dir.path().join("ldr.pgm");
    assert!(satstereo(&["tonemap", arg(&data.join("view_0.pgm")), arg(&ldr)], None).status.success());
    assert!(std::fs::read(&ldr).unwrap() == std::fs::read(o.join("ldr_0.pgm")).unwrap());
}
