mod common;

use satstereo::pipeline::{run_pipeline, PipelineConfig};
use satstereo::Error;

use common::{edit_config, small_dataset};

#[test]
fn small_scene_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let summary = small_dataset(dir.path());
    let cfg = PipelineConfig::load(&summary.pipeline_config).unwrap();
    let out = run_pipeline(&cfg).unwrap();

    let m = out.report.metrics.as_ref().unwrap();
    assert!(m.completeness_pct > 90.0 && m.median_error_m < 0.3, "{m:?}");
    for f in [
        "ldr_0.pgm",
        "cube.json",
        "pinhole_1.json",
        "corrected_0.json",
        "corrected_0.pfm",
        "tracks_triangulated.json",
        "ba_report.json",
        "adjusted_1.json",
        "stereo_0.json",
        "heights_wta.pfm",
        "heights.pfm",
        "labels.pgm",
        "cloud.ply",
        "metrics.json",
        "error.pfm",
        "report.json",
        "timings.json",
    ] {
        assert!(cfg.output_dir.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read_to_string(cfg.output_dir.join("report.json")).unwrap();
    assert!(!report.contains("seconds"));
    let stages: Vec<&str> = out.timings.iter().map(|t| t.stage.as_str()).collect();
    assert_eq!(stages.first(), Some(&"tonemap"));
    assert_eq!(stages.last(), Some(&"evaluate"));
}

#[test]
fn missing_rpc_sidecar_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let summary = small_dataset(dir.path());
    std::fs::remove_file(dir.path().join("view_1_rpc.json")).unwrap();
    let err = PipelineConfig::load(&summary.pipeline_config).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)));
    assert!(err.to_string().contains("view_1_rpc.json"), "{err}");
}

#[test]
fn single_image_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let summary = small_dataset(dir.path());
    edit_config(dir.path(), |v| {
        v["images"] = serde_json::json!(["view_0.pgm"]);
        v["rpcs"] = serde_json::json!(["view_0_rpc.json"]);
    });
    assert!(matches!(PipelineConfig::load(&summary.pipeline_config), Err(Error::InvalidInput(_))));
}

#[test]
fn mismatched_rpc_count_and_bad_reference() {
    let dir = tempfile::tempdir().unwrap();
    let summary = small_dataset(dir.path());
    edit_config(dir.path(), |v| v["rpcs"] = serde_json::json!(["view_0_rpc.json"]));
    assert!(PipelineConfig::load(&summary.pipeline_config).is_err());
    edit_config(dir.path(), |v| {
        v["rpcs"] = serde_json::json!(["view_0_rpc.json", "view_1_rpc.json"]);
        v["reference"] = serde_json::json!(2);
    });
    assert!(PipelineConfig::load(&summary.pipeline_config).is_err());
}

#[test]
fn corrupt_tracks_fail_in_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let summary = small_dataset(dir.path());
    std::fs::write(dir.path().join("tracks.json"), "not json").unwrap();
    let cfg = PipelineConfig::load(&summary.pipeline_config).unwrap();
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "ingest_tracks"),
        other => panic!("unexpected {other:?}"),
    }
}
