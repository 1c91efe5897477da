#![allow(dead_code)]

use std::path::Path;

use satstereo::synth::{write_dataset, DatasetSummary, SceneParams, SynthConfig, ViewGeometry};

/// Two 256x256 views of an 80 m scene; runs through the pipeline in seconds.
pub fn small_config() -> SynthConfig {
    let view =
        |off_nadir_deg, azimuth_deg| ViewGeometry { off_nadir_deg, azimuth_deg, gsd_m: 0.4, width: 256, height: 256, ..Default::default() };
    let mut cfg = SynthConfig {
        scene: SceneParams {
            size_m: [80.0, 80.0],
            z_range: [0.0, 30.0],
            num_boxes: 4,
            box_size_m: [10.0, 20.0],
            box_height_m: [5.0, 20.0],
            ..Default::default()
        },
        views: vec![view(3.0, 90.0), view(15.0, 0.0)],
        num_tracks: 300,
        ..Default::default()
    };
    cfg.sweep.z_min = Some(-1.0);
    cfg.sweep.z_max = Some(29.0);
    cfg.sweep.z_step = 0.5;
    cfg
}

pub fn small_dataset(dir: &Path) -> DatasetSummary {
    write_dataset(&small_config(), dir).unwrap()
}

/// Rewrites fields of the dataset's pipeline configuration.
pub fn edit_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("pipeline.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}
