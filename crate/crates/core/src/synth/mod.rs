//! Synthetic satellite data: box-city heightfields with procedural texture,
//! linear-array cameras on straight orbits, RPCs fitted to them, rendered
//! views and noisy feature tracks. Everything is seeded and reproducible.

mod camera;
mod dataset;
mod fit;
mod render;
mod tracks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use camera::{PushbroomCamera, ViewGeometry};
pub use dataset::{write_dataset, DatasetSummary, SynthConfig, ViewSummary};
pub use fit::{fit_rpc, RpcFit, RPC_FIT_LIMIT_PX};
pub use render::{render_view, RenderParams, RenderedView};
pub use tracks::{generate_tracks, track_length_histogram, SyntheticTracks};

use crate::error::{Error, Result};
use crate::eval::GeoGrid;
use crate::geodesy::{BoundingCube, EnuFrame, EnuPoint, GeoRect, GeodeticPoint};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// East and north extent of the AOI, meters.
    pub size_m: [f64; 2],
    pub gsd_m: f64,
    /// Declared height range; every surface lies inside it.
    pub z_range: [f64; 2],
    /// Amplitude of the smooth ground undulation.
    pub ground_relief_m: f64,
    pub num_boxes: usize,
    pub box_size_m: [f64; 2],
    pub box_height_m: [f64; 2],
    pub seed: u64,
    pub observer: GeodeticPoint,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            size_m: [500.0, 500.0],
            gsd_m: 0.3,
            z_range: [0.0, 100.0],
            ground_relief_m: 2.0,
            num_boxes: 40,
            box_size_m: [10.0, 40.0],
            box_height_m: [5.0, 40.0],
            seed: 1,
            observer: GeodeticPoint { lat: -34.49, lon: -58.59, alt: 0.0 },
        }
    }
}

/// Piecewise-constant heightfield and albedo over an ENU grid centered on
/// the frame origin.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frame: EnuFrame,
    pub grid: GeoGrid,
    pub heights: Raster<f32>,
    pub albedo: Raster<f32>,
    pub z_range: [f64; 2],
    z_lo: f64,
    z_hi: f64,
}

/// Random lattice sampled bilinearly with wrap-around.
struct Lattice {
    spacing: f64,
    values: Raster<f32>,
}

impl Lattice {
    fn new(rng: &mut ChaCha8Rng, extent: [f64; 2], spacing: f64) -> Self {
        let w = (extent[0] / spacing).ceil() as usize + 1;
        let h = (extent[1] / spacing).ceil() as usize + 1;
        Lattice { spacing, values: Raster::from_fn(w, h, |_, _| rng.random::<f32>()) }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let w = self.values.width() as i64;
        let h = self.values.height() as i64;
        let at = |i: i64, j: i64| self.values.get(i.rem_euclid(w) as usize, j.rem_euclid(h) as usize) as f64;
        let (i, j) = (x0 as i64, y0 as i64);
        let top = at(i, j) * (1.0 - fx) + at(i + 1, j) * fx;
        let bottom = at(i, j + 1) * (1.0 - fx) + at(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

impl SyntheticScene {
    pub fn generate(p: &SceneParams) -> Result<Self> {
        if !(p.gsd_m > 0.0 && p.size_m[0] > p.gsd_m && p.size_m[1] > p.gsd_m) {
            return Err(Error::invalid("scene needs a positive GSD smaller than its extent"));
        }
        if !(p.z_range[0] < p.z_range[1]) || !(p.box_size_m[0] <= p.box_size_m[1]) || !(p.box_height_m[0] <= p.box_height_m[1]) {
            return Err(Error::invalid("scene ranges must be ordered"));
        }
        let w = (p.size_m[0] / p.gsd_m).round() as usize;
        let h = (p.size_m[1] / p.gsd_m).round() as usize;
        let grid = GeoGrid::new(-(w as f64) * p.gsd_m / 2.0, h as f64 * p.gsd_m / 2.0, p.gsd_m, w, h)?;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

        let ground = |x: f64, y: f64| p.z_range[0] + p.ground_relief_m * 0.5 * (1.0 + (x / 70.0).sin() * (y / 90.0).cos());
        let mut heights = Raster::from_fn(w, h, |c, r| {
            let (x, y) = grid.cell_center(c, r);
            ground(x, y) as f32
        });

        let octaves = [(0.9, 0.5), (3.0, 0.3), (12.0, 0.2)];
        let extent = [w as f64 * p.gsd_m, h as f64 * p.gsd_m];
        let lattices: Vec<(Lattice, f64)> = octaves.iter().map(|&(s, weight)| (Lattice::new(&mut rng, extent, s), weight)).collect();
        let mut albedo = Raster::from_fn(w, h, |c, r| {
            let (x, y) = (c as f64 * p.gsd_m, r as f64 * p.gsd_m);
            let n: f64 = lattices.iter().map(|(l, wt)| wt * l.sample(x, y)).sum();
            (0.1 + 0.8 * n) as f32
        });

        for _ in 0..p.num_boxes {
            let bw = rng.random_range(p.box_size_m[0]..=p.box_size_m[1]);
            let bh = rng.random_range(p.box_size_m[0]..=p.box_size_m[1]);
            let lift = rng.random_range(p.box_height_m[0]..=p.box_height_m[1]);
            let tint = rng.random_range(0.6..1.4f32);
            let x0 = rng.random_range(grid.x_min..grid.x_min + extent[0] - bw);
            let y1 = rng.random_range(grid.y_max - extent[1] + bh..grid.y_max);
            let cells = |lo: f64, hi: f64, n: usize| ((lo / p.gsd_m).floor().max(0.0) as usize, ((hi / p.gsd_m).ceil() as usize).min(n));
            let (c0, c1) = cells(x0 - grid.x_min, x0 + bw - grid.x_min, w);
            let (r0, r1) = cells(grid.y_max - y1, grid.y_max - y1 + bh, h);
            let mut top = f32::NEG_INFINITY;
            for r in r0..r1 {
                for c in c0..c1 {
                    top = top.max(heights.get(c, r));
                }
            }
            let top = (top as f64 + lift).min(p.z_range[1]) as f32;
            for r in r0..r1 {
                for c in c0..c1 {
                    heights.set(c, r, top);
                    albedo.set(c, r, (albedo.get(c, r) * tint).clamp(0.03, 1.0));
                }
            }
        }
        let frame = EnuFrame::new(p.observer);
        Self::from_parts(frame, grid, heights, albedo, p.z_range)
    }

    pub fn from_parts(frame: EnuFrame, grid: GeoGrid, heights: Raster<f32>, albedo: Raster<f32>, z_range: [f64; 2]) -> Result<Self> {
        if heights.width() != grid.width || heights.height() != grid.height || !heights.same_size(&albedo) {
            return Err(Error::invalid("heightfield, albedo and grid sizes differ"));
        }
        let (mut z_lo, mut z_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &z in heights.data() {
            let z = z as f64;
            if !(z >= z_range[0] && z <= z_range[1]) {
                return Err(Error::invalid(format!("height {z} outside the declared range {z_range:?}")));
            }
            z_lo = z_lo.min(z);
            z_hi = z_hi.max(z);
        }
        Ok(SyntheticScene { frame, grid, heights, albedo, z_range, z_lo, z_hi })
    }

    /// Height of the surface column containing `(x, y)`; beyond the grid the
    /// edge cells extend outward.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (c, r) = self.cell_index(x, y);
        self.height_cell(c, r)
    }

    pub(crate) fn cell_index(&self, x: f64, y: f64) -> (i64, i64) {
        let g = &self.grid;
        (((x - g.x_min) / g.cell_size).floor() as i64, ((g.y_max - y) / g.cell_size).floor() as i64)
    }

    pub(crate) fn height_cell(&self, c: i64, r: i64) -> f64 {
        let c = c.clamp(0, self.grid.width as i64 - 1) as usize;
        let r = r.clamp(0, self.grid.height as i64 - 1) as usize;
        self.heights.get(c, r) as f64
    }

    /// Bilinear albedo with the texture tiled beyond the grid.
    pub fn albedo_at(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let gx = (x - g.x_min) / g.cell_size - 0.5;
        let gy = (g.y_max - y) / g.cell_size - 0.5;
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (w, h) = (g.width as i64, g.height as i64);
        let at = |i: i64, j: i64| self.albedo.get(i.rem_euclid(w) as usize, j.rem_euclid(h) as usize) as f64;
        let (i, j) = (x0 as i64, y0 as i64);
        let top = at(i, j) * (1.0 - fx) + at(i + 1, j) * fx;
        let bottom = at(i, j + 1) * (1.0 - fx) + at(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Lowest and highest surface heights actually present.
    pub fn height_bounds(&self) -> [f64; 2] {
        [self.z_lo, self.z_hi]
    }

    pub fn center(&self) -> EnuPoint {
        let g = &self.grid;
        let x = g.x_min + g.width as f64 * g.cell_size / 2.0;
        let y = g.y_max - g.height as f64 * g.cell_size / 2.0;
        EnuPoint::new(x, y, self.height_at(x, y))
    }

    /// ENU box spanning the grid and the declared height range.
    pub fn bounding_cube(&self) -> Result<BoundingCube> {
        let g = &self.grid;
        BoundingCube::new(
            [g.x_min, g.y_max - g.height as f64 * g.cell_size, self.z_range[0]],
            [g.x_min + g.width as f64 * g.cell_size, g.y_max, self.z_range[1]],
        )
    }

    /// Geodetic rectangle containing the grid.
    pub fn aoi(&self) -> GeoRect {
        let cube = self.bounding_cube().expect("scene grid is non-empty");
        let corners = cube.corners();
        let pts: Vec<_> = corners[..4].iter().map(|c| self.frame.enu_to_geodetic(&EnuPoint::new(c.x, c.y, 0.0))).collect();
        let fold = |f: fn(&GeodeticPoint) -> f64, min: bool| {
            pts.iter().map(f).fold(if min { f64::INFINITY } else { f64::NEG_INFINITY }, |a, b| if min { a.min(b) } else { a.max(b) })
        };
        GeoRect {
            lat_min: fold(|p| p.lat, true),
            lat_max: fold(|p| p.lat, false),
            lon_min: fold(|p| p.lon, true),
            lon_max: fold(|p| p.lon, false),
        }
    }

    /// Surface height at the center of every cell of `grid` (NaN where the
    /// center falls outside the scene).
    pub fn truth_dsm(&self, grid: &GeoGrid) -> Raster<f32> {
        let g = &self.grid;
        let (x_max, y_min) = (g.x_min + g.width as f64 * g.cell_size, g.y_max - g.height as f64 * g.cell_size);
        Raster::from_fn(grid.width, grid.height, |c, r| {
            let (x, y) = grid.cell_center(c, r);
            if x < g.x_min || x >= x_max || y <= y_min || y > g.y_max {
                f32::NAN
            } else {
                self.height_at(x, y) as f32
            }
        })
    }
}
