use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    fit_rpc, generate_tracks, render_view, track_length_histogram, PushbroomCamera, RenderParams, SceneParams, SyntheticScene, ViewGeometry,
};
use crate::error::{Error, Result};
use crate::eval::{Dsm, EvalConfig, GeoGrid, DEFAULT_CELL_SIZE};
use crate::geodesy::DEFAULT_CUBE_MARGIN;
use crate::mvs::SweepConfig;
use crate::pinhole::DEFAULT_GRID_SAMPLES;
use crate::pipeline::{Evaluation, PipelineConfig, DEFAULT_MAX_TRACK_RMS_PX};
use crate::raster::{write_pfm, write_pgm16};
use crate::sfm::DEFAULT_LAMBDA;
use crate::tonemap::DEFAULT_PERCENTILE;

/// Everything needed to generate a synthetic multi-view dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scene: SceneParams,
    pub views: Vec<ViewGeometry>,
    pub render: RenderParams,
    pub num_tracks: usize,
    pub track_noise_px: f64,
    pub track_seed: u64,
    /// Sweep settings written into the generated pipeline configuration.
    pub sweep: SweepConfig,
    pub eval: EvalConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let view = |off_nadir_deg: f64, azimuth_deg: f64| ViewGeometry { off_nadir_deg, azimuth_deg, gsd_m: 0.4, ..Default::default() };
        SynthConfig {
            scene: SceneParams {
                size_m: [180.0, 180.0],
                z_range: [0.0, 40.0],
                num_boxes: 12,
                box_size_m: [10.0, 30.0],
                box_height_m: [5.0, 25.0],
                ..Default::default()
            },
            views: vec![view(3.0, 90.0), view(15.0, 0.0), view(15.0, 180.0)],
            render: RenderParams::default(),
            num_tracks: 2000,
            track_noise_px: 0.3,
            track_seed: 11,
            sweep: SweepConfig { z_min: Some(-1.0), z_max: Some(38.8), z_step: 0.2, ..Default::default() },
            eval: EvalConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("synth config", path, e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSummary {
    pub rpc_max_residual_px: f64,
    pub rpc_mean_residual_px: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub views: Vec<ViewSummary>,
    pub num_tracks: usize,
    /// Entry `k` counts the tracks with `k` observations.
    pub track_lengths: Vec<usize>,
    pub mean_track_length: f64,
    /// Pipeline configuration written into the dataset directory.
    pub pipeline_config: PathBuf,
}

/// Generates scene, views, RPCs, tracks and ground truth into `dir` and
/// writes a ready-to-run `pipeline.json` next to them.
pub fn write_dataset(config: &SynthConfig, dir: &Path) -> Result<DatasetSummary> {
    if config.views.len() < 2 {
        return Err(Error::invalid("a dataset needs at least two views"));
    }
    std::fs::create_dir_all(dir)?;
    let scene = SyntheticScene::generate(&config.scene)?;
    let cube = scene.bounding_cube()?;
    let target = scene.center();
    let cams = config.views.iter().map(|g| PushbroomCamera::looking_at(&target, g)).collect::<Result<Vec<_>>>()?;

    let mut images = Vec::new();
    let mut rpcs = Vec::new();
    let mut views = Vec::new();
    for (i, cam) in cams.iter().enumerate() {
        let fit = fit_rpc(cam, &cube, &scene.frame)?;
        let render = RenderParams { seed: config.render.seed.wrapping_add(i as u64), ..config.render };
        let view = render_view(&scene, cam, &render)?;
        let (img, rpc) = (format!("view_{i}.pgm"), format!("view_{i}_rpc.json"));
        write_pgm16(&dir.join(&img), &view.image)?;
        write_pfm(&dir.join(format!("view_{i}_heights.pfm")), &view.heights)?;
        fit.rpc.save(&dir.join(&rpc))?;
        std::fs::write(dir.join(format!("view_{i}_camera.json")), serde_json::to_string_pretty(cam)?)?;
        images.push(PathBuf::from(img));
        rpcs.push(PathBuf::from(rpc));
        views.push(ViewSummary { rpc_max_residual_px: fit.max_residual_px, rpc_mean_residual_px: fit.mean_residual_px });
    }

    let synth = generate_tracks(&scene, &cams, config.num_tracks, config.track_noise_px, config.track_seed)?;
    synth.tracks.save(&dir.join("tracks.json"))?;

    let g = &scene.grid;
    let cell = if config.eval.cell_size > 0.0 { config.eval.cell_size } else { DEFAULT_CELL_SIZE };
    let extent = [g.width as f64 * g.cell_size, g.height as f64 * g.cell_size];
    let grid = GeoGrid::new(g.x_min, g.y_max, cell, (extent[0] / cell).floor() as usize, (extent[1] / cell).floor() as usize)?;
    Dsm { observer: scene.frame.observer(), grid, heights: scene.truth_dsm(&grid) }.save(&dir.join("truth.json"))?;

    let pipeline = PipelineConfig {
        images,
        rpcs,
        aoi: scene.aoi(),
        alt_range: config.scene.z_range,
        observer: Some(scene.frame.observer()),
        grid_samples: DEFAULT_GRID_SAMPLES,
        lambda: DEFAULT_LAMBDA,
        tracks: Some(PathBuf::from("tracks.json")),
        max_track_rms_px: DEFAULT_MAX_TRACK_RMS_PX,
        reference: 0,
        cube_margin: DEFAULT_CUBE_MARGIN,
        tonemap_percentile: DEFAULT_PERCENTILE,
        plane_offset: None,
        sweep: config.sweep.clone(),
        ba: Default::default(),
        evaluation: Some(Evaluation { truth: PathBuf::from("truth.json"), config: config.eval }),
        output_dir: PathBuf::from("out"),
    };
    let pipeline_path = dir.join("pipeline.json");
    std::fs::write(&pipeline_path, serde_json::to_string_pretty(&pipeline)?)?;

    let lengths = track_length_histogram(&synth.tracks);
    let total: usize = lengths.iter().enumerate().map(|(k, c)| k * c).sum();
    let summary = DatasetSummary {
        views,
        num_tracks: synth.tracks.tracks.len(),
        mean_track_length: if synth.tracks.tracks.is_empty() { 0.0 } else { total as f64 / synth.tracks.tracks.len() as f64 },
        track_lengths: lengths,
        pipeline_config: pipeline_path,
    };
    std::fs::write(dir.join("synth_report.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
