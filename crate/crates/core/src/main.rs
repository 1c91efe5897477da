use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use satstereo::eval::{cloud_to_grid, evaluate_maps, Dsm, EvalConfig, MetricReport};
use satstereo::geodesy::{default_observer, make_bounding_cube, EnuFrame, GeoRect, GeodeticPoint, DEFAULT_CUBE_MARGIN};
use satstereo::mvs::{heightmap_to_cloud, plane_sweep, read_ply_with_frame, write_ply, HeightMap, SweepConfig, NO_LABEL};
use satstereo::pinhole::{approximate_rpc, skew_correct, warp_image, CameraFile, ReparamProjection44, DEFAULT_GRID_SAMPLES};
use satstereo::pipeline::{run_pipeline, PipelineConfig};
use satstereo::raster::{read_image, read_pfm, write_pfm, write_pgm8, Raster};
use satstereo::rpc::{PixelPoint, RpcCamera};
use satstereo::sfm::{bundle_adjust, triangulate_pinhole, BaOptions, BaProblem, TrackSet, DEFAULT_LAMBDA};
use satstereo::synth::{write_dataset, SynthConfig};
use satstereo::tonemap::{tonemap, DEFAULT_PERCENTILE};
use satstereo::Error;

#[derive(Parser)]
#[command(name = "satstereo", version, about = "Height maps from RPC satellite images")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "SATSTEREO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gamma-tonemap an HDR image (16-bit PGM or PFM) to an 8-bit PGM.
    Tonemap {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
        percentile: f64,
    },
    /// Fit a pinhole camera to an RPC over the AOI bounding cube.
    ApproxCamera(ApproxArgs),
    /// Remove skew from a pinhole camera and optionally warp its image.
    SkewCorrect {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        output_camera: PathBuf,
        #[arg(long, requires = "output_image")]
        image: Option<PathBuf>,
        #[arg(long)]
        output_image: Option<PathBuf>,
    },
    /// Triangulate feature tracks with pinhole cameras.
    Triangulate {
        #[arg(long, num_args = 2.., required = true)]
        cameras: Vec<PathBuf>,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Regularized bundle adjustment of principal points and points.
    BundleAdjust {
        #[arg(long, num_args = 2.., required = true)]
        cameras: Vec<PathBuf>,
        /// Triangulated tracks.
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Plane-sweep stereo from a reference image and source images.
    Sweep(SweepArgs),
    /// Lift a height map to an ENU point cloud (ASCII PLY).
    Cloud {
        #[arg(long)]
        heights: PathBuf,
        /// Reference camera with its 4x4 projection.
        #[arg(long)]
        camera: PathBuf,
        /// ENU origin as lat,lon,alt; recorded in the PLY header.
        #[arg(long, value_parser = floats::<3>, allow_hyphen_values = true)]
        observer: Option<[f64; 3]>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a point cloud against a ground-truth DSM.
    Evaluate {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0)]
        radius: usize,
        #[arg(long)]
        no_align: bool,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        error_map: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a ready-to-run pipeline config.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the full pipeline from a JSON configuration.
    Run { config: PathBuf },
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    rpc: PathBuf,
    /// lat_min,lat_max,lon_min,lon_max in degrees.
    #[arg(long, value_parser = floats::<4>, allow_hyphen_values = true)]
    aoi: [f64; 4],
    /// Minimum and maximum altitude in meters.
    #[arg(long, value_parser = floats::<2>, allow_hyphen_values = true)]
    alt: [f64; 2],
    #[arg(long, value_parser = floats::<3>, allow_hyphen_values = true)]
    observer: Option<[f64; 3]>,
    #[arg(long, default_value_t = DEFAULT_GRID_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_CUBE_MARGIN)]
    margin: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    sources: Vec<PathBuf>,
    /// Reference camera first, then one per source; all need a 4x4 projection.
    #[arg(long, num_args = 2.., required = true)]
    cameras: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep heights as min,max when the config leaves them unset.
    #[arg(long, value_parser = floats::<2>, allow_hyphen_values = true)]
    z_range: Option<[f64; 2]>,
    #[arg(long)]
    output: PathBuf,
}

/// Comma-separated list of exactly `N` numbers.
fn floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect::<Result<Vec<_>, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

/// Failure class, mapped to the process exit code.
enum Failure {
    Config(Error),
    Stage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Stage(e)
    }
}

fn config<T>(r: satstereo::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).map_err(|e| Failure::Stage(e.into()))?);
    Ok(())
}

fn geodetic(v: &[f64]) -> satstereo::Result<GeodeticPoint> {
    GeodeticPoint::new(v[0], v[1], v[2])
}

/// Image scaled to `[0, 1]`: PGMs by their maxval, PFMs as stored.
fn unit_image(path: &Path) -> satstereo::Result<Raster<f32>> {
    let img = read_image(path)?;
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    Ok(if is_pfm { img.raster } else { img.raster.map(|v| v / img.nominal_max) })
}

fn load_cameras(paths: &[PathBuf]) -> satstereo::Result<Vec<satstereo::pinhole::PinholeCamera>> {
    paths.iter().map(|p| CameraFile::load(p)?.camera()).collect()
}

fn load_stereo_camera(path: &Path) -> satstereo::Result<ReparamProjection44> {
    CameraFile::load(path)?.reparam()?.ok_or_else(|| Error::Format {
        kind: "camera",
        path: path.to_path_buf(),
        reason: "no 4x4 projection (P44, d, zbar)".into(),
    })
}

fn metrics_table(m: &MetricReport, seconds: f64) {
    println!("{:>8} {:>8} {:>9}", "CP (%)", "ME (m)", "time (s)");
    println!("{:>8.2} {:>8.3} {:>9.1}", m.completeness_pct, m.median_error_m, seconds);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Tonemap { input, output, percentile } => {
            let img = config(read_image(&input))?;
            let out = tonemap(&img.raster, img.nominal_max, percentile)?;
            write_pgm8(&output, &out)?;
        }
        Command::ApproxCamera(a) => {
            let rpc = config(RpcCamera::load(&a.rpc))?;
            let aoi = GeoRect { lat_min: a.aoi[0], lat_max: a.aoi[1], lon_min: a.aoi[2], lon_max: a.aoi[3] };
            let alt = a.alt;
            let observer = config(match &a.observer {
                Some(o) => geodetic(o),
                None => default_observer(&aoi, alt),
            })?;
            let frame = EnuFrame::new(observer);
            let cube = config(make_bounding_cube(&aoi, alt, &frame, a.margin))?;
            let approx = approximate_rpc(&rpc, &cube, &frame, a.samples)?;
            CameraFile::new(&approx.camera, None).save(&a.output)?;
            print_json(&serde_json::json!({
                "max_error_px": approx.max_error_px,
                "mean_error_px": approx.mean_error_px,
                "num_samples": approx.num_samples,
                "mean_sample_depth": approx.mean_sample_depth,
            }))?;
        }
        Command::SkewCorrect { camera, output_camera, image, output_image } => {
            let cam = config(CameraFile::load(&camera).and_then(|c| c.camera()))?;
            let img = config(image.as_deref().map(unit_image).transpose())?;
            let (corrected, warp) = skew_correct(&cam)?;
            CameraFile::new(&corrected, None).save(&output_camera)?;
            if let (Some(img), Some(out)) = (img, output_image) {
                write_pfm(&out, &warp_image(&img, &warp)?)?;
            }
            let rows: Vec<[f64; 3]> = (0..3).map(|r| [warp[(r, 0)], warp[(r, 1)], warp[(r, 2)]]).collect();
            print_json(&serde_json::json!({ "warp": rows }))?;
        }
        Command::Triangulate { cameras, tracks, output } => {
            let cams = config(load_cameras(&cameras))?;
            let mut set = config(TrackSet::load(&tracks))?;
            config(set.validate(cams.len()))?;
            let mut rms = Vec::with_capacity(set.tracks.len());
            for t in &mut set.tracks {
                let views: Vec<_> = t.obs.iter().map(|o| &cams[o.camera]).collect();
                let pix: Vec<PixelPoint> = t.obs.iter().map(|o| o.pixel).collect();
                let r = triangulate_pinhole(&views, &pix)?;
                t.point = Some(r.point);
                rms.push(r.rms);
            }
            set.save(&output)?;
            let median = satstereo::sfm::median(&mut rms);
            print_json(&serde_json::json!({ "tracks": set.tracks.len(), "median_rms_px": median }))?;
        }
        Command::BundleAdjust { cameras, tracks, lambda, output_dir } => {
            let cams = config(load_cameras(&cameras))?;
            let set = config(TrackSet::load(&tracks))?;
            let problem = config(BaProblem::new(cams, set, lambda))?;
            let res = bundle_adjust(&problem, &BaOptions::default())?;
            std::fs::create_dir_all(&output_dir).map_err(Error::from)?;
            for (i, c) in res.cameras.iter().enumerate() {
                CameraFile::new(c, None).save(&output_dir.join(format!("adjusted_{i}.json")))?;
            }
            res.tracks.save(&output_dir.join("tracks_adjusted.json"))?;
            std::fs::write(output_dir.join("ba_report.json"), serde_json::to_string_pretty(&res.report).map_err(Error::from)?)
                .map_err(Error::from)?;
            println!("median reprojection error: {:.4} px -> {:.4} px", res.report.before.median_px, res.report.after.median_px);
        }
        Command::Sweep(a) => {
            let reference = config(unit_image(&a.reference))?;
            let sources = config(a.sources.iter().map(|p| unit_image(p)).collect::<satstereo::Result<Vec<_>>>())?;
            if a.cameras.len() != sources.len() + 1 {
                return Err(Failure::Config(Error::InvalidInput("need one camera per image, reference first".into())));
            }
            let cams = config(a.cameras.iter().map(|p| load_stereo_camera(p)).collect::<satstereo::Result<Vec<_>>>())?;
            let mut cfg = config(a.config.as_deref().map(SweepConfig::load).transpose())?.unwrap_or_default();
            if let Some(z) = &a.z_range {
                cfg.z_min = cfg.z_min.or(Some(z[0]));
                cfg.z_max = cfg.z_max.or(Some(z[1]));
            }
            let (Some(lo), Some(hi)) = (cfg.z_min, cfg.z_max) else {
                return Err(Failure::Config(Error::InvalidInput("sweep heights unset: pass --z-range or set z_min/z_max".into())));
            };
            let planes = config(cfg.planes((lo, hi)))?;
            let res = plane_sweep(&reference, &sources, &cams[0], &cams[1..], planes, &cfg)?;
            let hm = res.height_map();
            write_pfm(&a.output, &hm.heights)?;
            println!("{} planes, {:.1}% pixels valid", res.planes.len(), 100.0 * hm.valid_fraction());
        }
        Command::Cloud { heights, camera, observer, output } => {
            let h = config(read_pfm(&heights))?;
            let cam = config(load_stereo_camera(&camera))?;
            let frame = config(observer.as_ref().map(|o| geodetic(o)).transpose())?.map(EnuFrame::new);
            let labels = h.map(|z| if z.is_finite() { 0 } else { NO_LABEL });
            let cloud = heightmap_to_cloud(&HeightMap { heights: h, labels }, &cam, frame.as_ref())?;
            write_ply(&output, &cloud, frame.as_ref())?;
            println!("{} points", cloud.len());
        }
        Command::Evaluate { cloud, truth, radius, no_align, threshold, output, error_map } => {
            let start = Instant::now();
            let (pts, frame) = config(read_ply_with_frame(&cloud))?;
            let dsm = config(Dsm::load(&truth))?;
            let cfg = EvalConfig { search_radius: radius, align: !no_align, threshold, ..Default::default() };
            let recon = cloud_to_grid(&pts, frame.as_ref(), &dsm.frame(), &dsm.grid)?;
            let m = evaluate_maps(&recon, &dsm.heights, &cfg)?;
            if let Some(p) = output {
                std::fs::write(p, serde_json::to_string_pretty(&m).map_err(Error::from)?).map_err(Error::from)?;
            }
            if let (Some(p), Some(e)) = (error_map, &m.error_map) {
                write_pfm(&p, e)?;
            }
            metrics_table(&m, start.elapsed().as_secs_f64());
        }
        Command::Synth { config: path, output } => {
            let cfg = config(path.as_deref().map(SynthConfig::load).transpose())?.unwrap_or_default();
            let summary = write_dataset(&cfg, &output)?;
            print_json(&summary)?;
        }
        Command::Run { config: path } => {
            let cfg = config(PipelineConfig::load(&path))?;
            let out = run_pipeline(&cfg)?;
            match &out.report.metrics {
                Some(m) => metrics_table(m, out.total_seconds()),
                None => println!("done in {:.1} s", out.total_seconds()),
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
