//! End-to-end reconstruction: RPC images in, height map, point cloud and
//! (optionally) accuracy metrics out. Every stage persists its artifacts in
//! the output directory so that a failed run leaves a usable trail and
//! stages can be rerun in isolation from the CLI.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{cloud_to_grid, evaluate_maps, Dsm, EvalConfig, MetricReport};
use crate::geodesy::{default_observer, make_bounding_cube, BoundingCube, EnuFrame, GeoRect, GeodeticPoint, DEFAULT_CUBE_MARGIN};
use crate::mvs::{
    build_cost_volume, extract_heightmap_sgm, extract_heightmap_wta, filter_cost_volume, heightmap_to_cloud, write_ply, HeightMap,
    SweepConfig,
};
use crate::pinhole::{
    approximate_rpc, build_reparam_projection, skew_correct, warp_image, CameraFile, PinholeCamera, ReparamProjection44,
    DEFAULT_GRID_SAMPLES,
};
use crate::raster::{read_image, write_pfm, write_pgm16, write_pgm8, Raster};
use crate::rpc::{PixelPoint, RpcCamera};
use crate::sfm::{bundle_adjust, median, triangulate_pinhole, BaOptions, BaProblem, BaReport, TrackSet, DEFAULT_LAMBDA};
use crate::tonemap::{tonemap, DEFAULT_PERCENTILE};

/// Tracks whose triangulation leaves a larger RMS reprojection error are
/// treated as mismatches and dropped.
pub const DEFAULT_MAX_TRACK_RMS_PX: f64 = 4.0;
/// Default distance of the reparametrization plane below the lowest sweep
/// plane.
pub const DEFAULT_PLANE_MARGIN_M: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    /// DSM header (see [`Dsm`]).
    pub truth: PathBuf,
    #[serde(default)]
    pub config: EvalConfig,
}

/// Configuration of [`run_pipeline`]. Relative paths are resolved against
/// the directory of the configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub images: Vec<PathBuf>,
    pub rpcs: Vec<PathBuf>,
    pub aoi: GeoRect,
    pub alt_range: [f64; 2],
    #[serde(default)]
    pub observer: Option<GeodeticPoint>,
    #[serde(default = "default_samples")]
    pub grid_samples: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub tracks: Option<PathBuf>,
    #[serde(default = "default_max_rms")]
    pub max_track_rms_px: f64,
    #[serde(default)]
    pub reference: usize,
    #[serde(default = "default_margin")]
    pub cube_margin: f64,
    #[serde(default = "default_percentile")]
    pub tonemap_percentile: f64,
    /// Height `d` of the reparametrization plane; defaults to 10 m below the
    /// lowest sweep plane.
    #[serde(default)]
    pub plane_offset: Option<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub ba: BaSettings,
    #[serde(default)]
    pub evaluation: Option<Evaluation>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaSettings {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for BaSettings {
    fn default() -> Self {
        let o = BaOptions::default();
        BaSettings { max_iterations: o.max_iterations, relative_tolerance: o.relative_tolerance }
    }
}

fn default_samples() -> usize {
    DEFAULT_GRID_SAMPLES
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_max_rms() -> f64 {
    DEFAULT_MAX_TRACK_RMS_PX
}
fn default_margin() -> f64 {
    DEFAULT_CUBE_MARGIN
}
fn default_percentile() -> f64 {
    DEFAULT_PERCENTILE
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

impl PipelineConfig {
    /// Parses, resolves paths and checks the invariants: at least two
    /// images with one RPC each, every referenced file present, `M >= 2`,
    /// `lambda >= 0`.
    pub fn load(path: &Path) -> Result<Self> {
        require(path)?;
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::format("pipeline config", path, e.to_string()))?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.images.iter_mut().for_each(fix);
        self.rpcs.iter_mut().for_each(fix);
        if let Some(t) = self.tracks.as_mut() {
            fix(t);
        }
        if let Some(e) = self.evaluation.as_mut() {
            fix(&mut e.truth);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 images, got {}", self.images.len())));
        }
        if self.images.len() != self.rpcs.len() {
            return Err(Error::invalid("every image needs exactly one RPC sidecar"));
        }
        if self.reference >= self.images.len() {
            return Err(Error::invalid(format!("reference index {} out of range", self.reference)));
        }
        if self.grid_samples < 2 {
            return Err(Error::invalid("grid_samples (M) must be at least 2"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and non-negative"));
        }
        if !(self.alt_range[0] < self.alt_range[1]) {
            return Err(Error::invalid("alt_range must be increasing"));
        }
        for p in self.images.iter().chain(&self.rpcs).chain(&self.tracks) {
            require(p)?;
        }
        if let Some(e) = &self.evaluation {
            require(&e.truth)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxSummary {
    pub max_error_px: f64,
    pub mean_error_px: f64,
    pub num_samples: usize,
    pub skew: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseSummary {
    pub input_tracks: usize,
    pub kept_tracks: usize,
    pub median_rms_px: f64,
    pub low_confidence: usize,
}

/// Deterministic summary of a run; wall-clock timings are kept apart in
/// [`StageTiming`] records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub observer: GeodeticPoint,
    pub cube: BoundingCube,
    pub reference: usize,
    pub approximations: Vec<ApproxSummary>,
    pub sparse: Option<SparseSummary>,
    pub bundle_adjustment: Option<BaReport>,
    pub plane_offset: f64,
    pub num_planes: usize,
    pub plane_range: [f64; 2],
    pub valid_fraction: f64,
    pub cloud_points: usize,
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub heights: HeightMap,
    pub timings: Vec<StageTiming>,
}

impl PipelineOutput {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }
}

struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage { stage, source: Box::new(e) })?;
        self.timings.push(StageTiming { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }
}

fn to_unit(img: &Raster<u8>) -> Raster<f32> {
    img.map(|v| v as f32 / 255.0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn apply_warp(warp: &nalgebra::Matrix3<f64>, p: &PixelPoint) -> PixelPoint {
    let q = warp * nalgebra::Vector3::new(p.x, p.y, 1.0);
    PixelPoint::new(q.x / q.z, q.y / q.z)
}

/// Triangulates every track, keeping those with a finite solution and an
/// RMS reprojection error within `max_rms`.
fn triangulate_filtered(cams: &[PinholeCamera], tracks: &TrackSet, max_rms: f64) -> Result<(TrackSet, SparseSummary)> {
    tracks.validate(cams.len())?;
    let mut kept = TrackSet::default();
    let mut rms = Vec::new();
    let mut low = 0;
    for t in &tracks.tracks {
        let views: Vec<&PinholeCamera> = t.obs.iter().map(|o| &cams[o.camera]).collect();
        let pix: Vec<PixelPoint> = t.obs.iter().map(|o| o.pixel).collect();
        if let Ok(r) = triangulate_pinhole(&views, &pix) {
            if r.rms <= max_rms {
                let mut t = t.clone();
                t.point = Some(r.point);
                kept.tracks.push(t);
                rms.push(r.rms);
                low += usize::from(r.low_confidence);
            }
        }
    }
    if kept.tracks.is_empty() {
        return Err(Error::InsufficientData("no track survived triangulation".into()));
    }
    let summary = SparseSummary {
        input_tracks: tracks.tracks.len(),
        kept_tracks: kept.tracks.len(),
        median_rms_px: median(&mut rms),
        low_confidence: low,
    };
    Ok((kept, summary))
}

/// Mean depth of the sparse points seen by each camera.
fn sparse_depths(cams: &[PinholeCamera], tracks: &TrackSet) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; cams.len()];
    let mut n = vec![0usize; cams.len()];
    for t in &tracks.tracks {
        if let Some(p) = t.point {
            for o in &t.obs {
                sum[o.camera] += cams[o.camera].depth(&p);
                n[o.camera] += 1;
            }
        }
    }
    sum.iter().zip(&n).map(|(&s, &k)| (k > 0).then(|| s / k as f64)).collect()
}

/// Runs every stage in order, writing artifacts into `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out)?;
    let n = config.images.len();
    let mut st = Stages { timings: Vec::new() };

    let ldr = st.run("tonemap", || {
        let mut images = Vec::with_capacity(n);
        for (i, (img, rpc_path)) in config.images.iter().zip(&config.rpcs).enumerate() {
            let loaded = read_image(img)?;
            let rpc = RpcCamera::load(rpc_path)?;
            if loaded.raster.width() != rpc.cols || loaded.raster.height() != rpc.rows {
                return Err(Error::invalid(format!("{} does not match the size in {}", img.display(), rpc_path.display())));
            }
            let t = tonemap(&loaded.raster, loaded.nominal_max, config.tonemap_percentile)?;
            write_pgm8(&out.join(format!("ldr_{i}.pgm")), &t)?;
            images.push((t, rpc));
        }
        Ok(images)
    })?;

    let (frame, cube) = st.run("bounding_cube", || {
        let observer = match config.observer {
            Some(o) => o,
            None => default_observer(&config.aoi, config.alt_range)?,
        };
        let frame = EnuFrame::new(observer);
        let cube = make_bounding_cube(&config.aoi, config.alt_range, &frame, config.cube_margin)?;
        write_json(&out.join("cube.json"), &serde_json::json!({ "observer": observer, "cube": cube }))?;
        Ok((frame, cube))
    })?;

    let approx = st.run("approximate", || {
        let mut res = Vec::with_capacity(n);
        for (i, (_, rpc)) in ldr.iter().enumerate() {
            let a = approximate_rpc(rpc, &cube, &frame, config.grid_samples)?;
            CameraFile::new(&a.camera, None).save(&out.join(format!("pinhole_{i}.json")))?;
            res.push(a);
        }
        Ok(res)
    })?;

    let (cams, warps, images) = st.run("skew_correct", || {
        let mut cams = Vec::with_capacity(n);
        let mut warps = Vec::with_capacity(n);
        let mut images = Vec::with_capacity(n);
        for (i, (a, (img, _))) in approx.iter().zip(&ldr).enumerate() {
            let (cam, warp) = skew_correct(&a.camera)?;
            let corrected = warp_image(&to_unit(img), &warp)?;
            CameraFile::new(&cam, None).save(&out.join(format!("corrected_{i}.json")))?;
            write_pfm(&out.join(format!("corrected_{i}.pfm")), &corrected)?;
            cams.push(cam);
            warps.push(warp);
            images.push(corrected);
        }
        Ok((cams, warps, images))
    })?;

    let mut sparse = None;
    let mut ba_report = None;
    let mut final_cams = cams.clone();
    let mut depths = vec![None; n];
    if let Some(tracks_path) = &config.tracks {
        let tracks = st.run("ingest_tracks", || {
            let mut t = TrackSet::load(tracks_path)?;
            t.validate(n)?;
            for track in &mut t.tracks {
                track.point = None;
                for o in &mut track.obs {
                    o.pixel = apply_warp(&warps[o.camera], &o.pixel);
                }
            }
            t.save(&out.join("tracks_corrected.json"))?;
            Ok(t)
        })?;
        let (triangulated, summary) = st.run("triangulate", || {
            let r = triangulate_filtered(&cams, &tracks, config.max_track_rms_px)?;
            r.0.save(&out.join("tracks_triangulated.json"))?;
            Ok(r)
        })?;
        sparse = Some(summary);
        let ba = st.run("bundle_adjust", || {
            let problem = BaProblem::new(cams.clone(), triangulated, config.lambda)?;
            let opts = BaOptions {
                max_iterations: config.ba.max_iterations,
                relative_tolerance: config.ba.relative_tolerance,
                ..Default::default()
            };
            let res = bundle_adjust(&problem, &opts)?;
            for (i, c) in res.cameras.iter().enumerate() {
                CameraFile::new(c, None).save(&out.join(format!("adjusted_{i}.json")))?;
            }
            res.tracks.save(&out.join("tracks_adjusted.json"))?;
            write_json(&out.join("ba_report.json"), &res.report)?;
            Ok(res)
        })?;
        depths = sparse_depths(&ba.cameras, &ba.tracks);
        final_cams = ba.cameras;
        ba_report = Some(ba.report);
    }

    let planes =
        config.sweep.planes((cube.min[2], cube.max[2])).map_err(|e| Error::Stage { stage: "reparametrize", source: Box::new(e) })?;
    let z_lo = planes.levels()[0];
    let d = config.plane_offset.unwrap_or(z_lo - DEFAULT_PLANE_MARGIN_M);

    let p44: Vec<ReparamProjection44> = st.run("reparametrize", || {
        let mut res = Vec::with_capacity(n);
        for (i, cam) in final_cams.iter().enumerate() {
            let zbar = depths[i].unwrap_or(approx[i].mean_sample_depth);
            let p = build_reparam_projection(cam, d, zbar, z_lo)?;
            CameraFile::new(cam, Some(&p)).save(&out.join(format!("stereo_{i}.json")))?;
            res.push(p);
        }
        Ok(res)
    })?;

    let r = config.reference;
    let sources: Vec<Raster<f32>> = images.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, im)| im.clone()).collect();
    let src_cams: Vec<ReparamProjection44> = p44.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, p)| *p).collect();
    let window = (config.sweep.census_window[0], config.sweep.census_window[1]);

    let filtered = st.run("sweep", || {
        let raw = build_cost_volume(&images[r], &sources, &p44[r], &src_cams, &planes, window)?;
        let filtered = filter_cost_volume(&raw, &images[r], config.sweep.gf_radius, config.sweep.gf_eps)?;
        drop(raw);
        let wta = extract_heightmap_wta(&filtered, &planes, config.sweep.refine)?;
        write_pfm(&out.join("heights_wta.pfm"), &wta.heights)?;
        Ok(filtered)
    })?;

    let heights = st.run("extract", || {
        let hm = match config.sweep.sgm {
            Some(s) => extract_heightmap_sgm(&filtered, &planes, s.p1, s.p2, config.sweep.refine, config.sweep.max_labels)?,
            None => extract_heightmap_wta(&filtered, &planes, config.sweep.refine)?,
        };
        write_pfm(&out.join("heights.pfm"), &hm.heights)?;
        write_pgm16(&out.join("labels.pgm"), &hm.labels)?;
        Ok(hm)
    })?;
    drop(filtered);

    let cloud = st.run("cloud", || {
        let cloud = heightmap_to_cloud(&heights, &p44[r], Some(&frame))?;
        write_ply(&out.join("cloud.ply"), &cloud, Some(&frame))?;
        Ok(cloud)
    })?;

    let metrics = match &config.evaluation {
        Some(ev) => Some(st.run("evaluate", || {
            let truth = Dsm::load(&ev.truth)?;
            let pts: Vec<_> = cloud.iter().map(|c| c.enu).collect();
            let recon = cloud_to_grid(&pts, Some(&frame), &truth.frame(), &truth.grid)?;
            let m = evaluate_maps(&recon, &truth.heights, &ev.config)?;
            Dsm { observer: truth.observer, grid: truth.grid, heights: recon }.save(&out.join("recon_dsm.json"))?;
            if let Some(e) = &m.error_map {
                write_pfm(&out.join("error.pfm"), e)?;
            }
            write_json(&out.join("metrics.json"), &m)?;
            Ok(m)
        })?),
        None => None,
    };

    let report = PipelineReport {
        observer: frame.observer(),
        cube,
        reference: r,
        approximations: approx
            .iter()
            .map(|a| ApproxSummary {
                max_error_px: a.max_error_px,
                mean_error_px: a.mean_error_px,
                num_samples: a.num_samples,
                skew: a.camera.skew,
            })
            .collect(),
        sparse,
        bundle_adjustment: ba_report,
        plane_offset: d,
        num_planes: planes.len(),
        plane_range: [z_lo, *planes.levels().last().expect("plane set is non-empty")],
        valid_fraction: heights.valid_fraction(),
        cloud_points: cloud.len(),
        metrics,
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &st.timings)?;
    Ok(PipelineOutput { report, heights, timings: st.timings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> PipelineConfig {
        let text = r#"{"images": ["a.pgm", "/abs/b.pgm"], "rpcs": ["a.json", "b.json"],
                       "aoi": {"lat_min": 0.0, "lat_max": 0.01, "lon_min": 0.0, "lon_max": 0.01},
                       "alt_range": [0, 50], "output_dir": "out"}"#;
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let c = minimal();
        assert_eq!(c.grid_samples, DEFAULT_GRID_SAMPLES);
        assert_eq!(c.lambda, DEFAULT_LAMBDA);
        assert_eq!(c.reference, 0);
        assert_eq!(c.tonemap_percentile, DEFAULT_PERCENTILE);
        assert!(c.tracks.is_none() && c.evaluation.is_none() && c.plane_offset.is_none());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut c = minimal();
        c.resolve(Path::new("/data/site"));
        assert_eq!(c.images[0], Path::new("/data/site/a.pgm"));
        assert_eq!(c.images[1], Path::new("/abs/b.pgm"));
        assert_eq!(c.output_dir, Path::new("/data/site/out"));
    }

    #[test]
    fn invariants_checked_before_files() {
        let mut c = minimal();
        c.alt_range = [50.0, 0.0];
        assert!(matches!(c.validate(), Err(Error::InvalidInput(_))));
        let mut c = minimal();
        c.grid_samples = 1;
        assert!(matches!(c.validate(), Err(Error::InvalidInput(_))));
        let mut c = minimal();
        c.lambda = -1.0;
        assert!(matches!(c.validate(), Err(Error::InvalidInput(_))));
        assert!(matches!(minimal().validate(), Err(Error::MissingFile(_))));
    }
}
