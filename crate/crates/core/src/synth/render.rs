use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PushbroomCamera, SyntheticScene};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    pub sun_azimuth_deg: f64,
    pub sun_elevation_deg: f64,
    pub ambient: f64,
    /// Rays per pixel along each axis.
    pub supersample: usize,
    /// Radiance of a white, sunlit surface in 16-bit counts.
    pub gain: f64,
    /// Sensor noise standard deviation in counts.
    pub noise_counts: f64,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            sun_azimuth_deg: 135.0,
            sun_elevation_deg: 55.0,
            ambient: 0.35,
            supersample: 2,
            gain: 20_000.0,
            noise_counts: 40.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub image: Raster<u16>,
    /// Height of the surface seen through each pixel center (NaN on a miss).
    pub heights: Raster<f32>,
}

struct Hit {
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

/// Marches the ray through heightfield columns from the top of the scene
/// down to its lowest surface.
fn cast(scene: &SyntheticScene, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
    if !(d.z < 0.0) {
        return None;
    }
    let [z_lo, z_hi] = scene.height_bounds();
    let t_start = (z_hi + 1e-6 - o.z) / d.z;
    let t_end = (z_lo - 1e-6 - o.z) / d.z;
    let g = &scene.grid;
    let p = o + d * t_start;
    let gx = (p.x - g.x_min) / g.cell_size;
    let gy = (g.y_max - p.y) / g.cell_size;
    let (dgx, dgy) = (d.x / g.cell_size, -d.y / g.cell_size);
    let (mut cx, mut cy) = (gx.floor() as i64, gy.floor() as i64);
    let step_x: i64 = if dgx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dgy > 0.0 { 1 } else { -1 };
    let next = |pos: f64, cell: i64, dir: f64| {
        if dir == 0.0 {
            f64::INFINITY
        } else {
            let boundary = if dir > 0.0 { cell as f64 + 1.0 } else { cell as f64 };
            t_start + (boundary - pos) / dir
        }
    };
    let mut t_x = next(gx, cx, dgx);
    let mut t_y = next(gy, cy, dgy);
    let dt_x = if dgx == 0.0 { f64::INFINITY } else { 1.0 / dgx.abs() };
    let dt_y = if dgy == 0.0 { f64::INFINITY } else { 1.0 / dgy.abs() };
    let mut t_enter = t_start;
    let mut wall: Option<Vector3<f64>> = None;
    loop {
        let h = scene.height_cell(cx, cy);
        if let Some(n) = wall {
            if o.z + t_enter * d.z <= h {
                return Some(Hit { point: o + d * t_enter, normal: n });
            }
        }
        let t_exit = t_x.min(t_y).min(t_end);
        if o.z + t_exit * d.z <= h {
            let t = (h - o.z) / d.z;
            return Some(Hit { point: o + d * t, normal: Vector3::z() });
        }
        if t_exit >= t_end {
            return None;
        }
        t_enter = t_exit;
        if t_x < t_y {
            cx += step_x;
            t_x += dt_x;
            wall = Some(Vector3::new(-step_x as f64, 0.0, 0.0));
        } else {
            cy += step_y;
            t_y += dt_y;
            wall = Some(Vector3::new(0.0, step_y as f64, 0.0));
        }
    }
}

fn shade(scene: &SyntheticScene, hit: &Hit, sun: &Vector3<f64>, ambient: f64) -> f64 {
    let p = &hit.point;
    let albedo = if hit.normal.z > 0.5 {
        scene.albedo_at(p.x, p.y)
    } else if hit.normal.x != 0.0 {
        scene.albedo_at(p.y + 31.0, p.z * 1.3 + 17.0)
    } else {
        scene.albedo_at(p.x + 53.0, p.z * 1.3 - 11.0)
    };
    albedo * (ambient + (1.0 - ambient) * hit.normal.dot(sun).max(0.0))
}

/// Ray-cast rendering of the scene with Lambertian shading, box-filtered
/// over `supersample^2` rays per pixel, plus Gaussian sensor noise from a
/// per-row seeded generator.
pub fn render_view(scene: &SyntheticScene, cam: &PushbroomCamera, params: &RenderParams) -> Result<RenderedView> {
    if params.supersample == 0 || !(params.gain > 0.0) || !(params.noise_counts >= 0.0) {
        return Err(Error::invalid("render needs supersample >= 1, positive gain and non-negative noise"));
    }
    let center = scene.center();
    match cam.project(&center) {
        Ok(p) if cam.in_image(&p) => {}
        _ => return Err(Error::OutOfBounds("camera does not see the scene".into())),
    }
    let (az, el) = (params.sun_azimuth_deg.to_radians(), params.sun_elevation_deg.to_radians());
    let sun = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
    let (w, h) = (cam.width, cam.height);
    let ss = params.supersample;
    let noise = Normal::new(0.0, params.noise_counts).map_err(|e| Error::invalid(e.to_string()))?;

    let rows: Vec<(Vec<u16>, Vec<f32>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut img = Vec::with_capacity(w);
            let mut hts = Vec::with_capacity(w);
            for x in 0..w {
                let mut sum = 0.0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let u = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let v = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let (o, d) = cam.ray(u, v);
                        if let Some(hit) = cast(scene, &o, &d) {
                            sum += shade(scene, &hit, &sun, params.ambient);
                        }
                    }
                }
                let radiance = params.gain * sum / (ss * ss) as f64 + noise.sample(&mut rng);
                img.push(radiance.round().clamp(0.0, 65535.0) as u16);
                let (o, d) = cam.ray(x as f64, y as f64);
                hts.push(cast(scene, &o, &d).map_or(f32::NAN, |hit| hit.point.z as f32));
            }
            (img, hts)
        })
        .collect();
    let (img, hts): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(RenderedView { image: Raster::from_vec(w, h, img.concat())?, heights: Raster::from_vec(w, h, hts.concat())? })
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_params;
    use super::super::{SceneParams, ViewGeometry};
    use super::*;
    use crate::geodesy::EnuPoint;

    fn view(off_nadir: f64, azimuth: f64) -> ViewGeometry {
        ViewGeometry { off_nadir_deg: off_nadir, azimuth_deg: azimuth, width: 96, height: 80, gsd_m: 1.0, ..Default::default() }
    }

    #[test]
    fn flat_nadir_view_resamples_texture() {
        let p = SceneParams { ground_relief_m: 0.0, num_boxes: 0, ..small_params() };
        let scene = SyntheticScene::generate(&p).unwrap();
        let g = ViewGeometry { line_time_s: 0.0, angular_rate: [0.0; 3], ..view(0.0, 0.0) };
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &g).unwrap();
        let params = RenderParams { noise_counts: 0.0, supersample: 1, sun_elevation_deg: 90.0, ..Default::default() };
        let out = render_view(&scene, &cam, &params).unwrap();
        assert!(out.heights.data().iter().all(|&z| z == 0.0));
        for (x, y) in [(10, 10), (48, 40), (90, 70)] {
            let (o, d) = cam.ray(x as f64, y as f64);
            let hit = o + d * (-o.z / d.z);
            let want = params.gain * scene.albedo_at(hit.x, hit.y);
            assert!((out.image.get(x, y) as f64 - want).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn box_plateau_in_view_heights() {
        let p = SceneParams { ground_relief_m: 0.0, num_boxes: 1, box_size_m: [30.0, 30.0], box_height_m: [15.0, 15.0], ..small_params() };
        let scene = SyntheticScene::generate(&p).unwrap();
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &view(10.0, 45.0)).unwrap();
        let out = render_view(&scene, &cam, &RenderParams::default()).unwrap();
        let plateau = out.heights.data().iter().filter(|&&z| z == 15.0).count();
        assert!(plateau > 500, "{plateau}");
        assert!(out.heights.data().iter().all(|&z| z.is_finite() && (0.0..=15.0).contains(&z)));
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &view(15.0, 120.0)).unwrap();
        let a = render_view(&scene, &cam, &RenderParams::default()).unwrap();
        let b = render_view(&scene, &cam, &RenderParams::default()).unwrap();
        assert_eq!(a.image, b.image);
        let c = render_view(&scene, &cam, &RenderParams { seed: 8, ..Default::default() }).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn visible_heights_reproject_consistently() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let a = PushbroomCamera::looking_at(&EnuPoint::zeros(), &view(5.0, 0.0)).unwrap();
        let out = render_view(&scene, &a, &RenderParams::default()).unwrap();
        for (x, y) in [(20usize, 20usize), (50, 33), (70, 60)] {
            let (o, d) = a.ray(x as f64, y as f64);
            let z = out.heights.get(x, y) as f64;
            let p = o + d * ((z - o.z) / d.z);
            let back = a.project(&p).unwrap();
            assert!((back.x - x as f64).abs() < 1e-6 && (back.y - y as f64).abs() < 1e-6);
            assert!((scene.height_at(p.x, p.y) - z).abs() < 1e-6 || p.z <= scene.height_bounds()[1]);
        }
    }

    #[test]
    fn invisible_scene_rejected() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let cam = PushbroomCamera::looking_at(&EnuPoint::new(5000.0, 0.0, 0.0), &view(0.0, 0.0)).unwrap();
        assert!(render_view(&scene, &cam, &RenderParams::default()).is_err());
    }
}
