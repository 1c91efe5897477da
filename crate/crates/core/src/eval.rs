//! Height-map comparison on a common ground grid: completeness within a
//! threshold and median absolute height error.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{EnuFrame, EnuPoint, GeodeticPoint};
use crate::raster::{read_pfm, write_pfm, Raster};
use crate::sfm::median;

/// North-up ENU grid. Cell `(col, row)` covers
/// `x in [x_min + col*cell, x_min + (col+1)*cell)` and
/// `y in (y_max - (row+1)*cell, y_max - row*cell]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    pub x_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

pub const DEFAULT_CELL_SIZE: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 1.0;
const MIN_OVERLAP: usize = 100;

impl GeoGrid {
    pub fn new(x_min: f64, y_max: f64, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        if !(cell_size > 0.0) || width == 0 || height == 0 {
            return Err(Error::invalid("grid needs a positive cell size and non-zero dimensions"));
        }
        Ok(GeoGrid { x_min, y_max, cell_size, width, height })
    }

    /// Grid covering `[x_min, x_max] x [y_min, y_max]`.
    pub fn covering(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell_size: f64) -> Result<Self> {
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::invalid("grid extent is empty"));
        }
        let w = ((x_max - x_min) / cell_size).ceil().max(1.0) as usize;
        let h = ((y_max - y_min) / cell_size).ceil().max(1.0) as usize;
        Self::new(x_min, y_max, cell_size, w, h)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.x_min) / self.cell_size).floor();
        let r = ((self.y_max - y) / self.cell_size).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height).then_some((c as usize, r as usize))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (self.x_min + (col as f64 + 0.5) * self.cell_size, self.y_max - (row as f64 + 0.5) * self.cell_size)
    }
}

/// Highest point per cell; empty cells are NaN.
pub fn flatten_cloud(points: &[EnuPoint], grid: &GeoGrid) -> Result<Raster<f32>> {
    if points.is_empty() {
        return Err(Error::InsufficientData("empty point cloud".into()));
    }
    let mut out = Raster::filled(grid.width, grid.height, f32::NAN);
    let mut hits = 0usize;
    for p in points {
        if let Some((c, r)) = grid.cell_of(p.x, p.y) {
            let z = p.z as f32;
            let cur = out.get(c, r);
            if cur.is_nan() || z > cur {
                out.set(c, r, z);
            }
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::OutOfBounds("no cloud point falls inside the grid".into()));
    }
    Ok(out)
}

/// Re-expresses `points` from `from` into `to` (when the frames differ)
/// and keeps the highest point per cell of `grid`.
pub fn cloud_to_grid(points: &[EnuPoint], from: Option<&EnuFrame>, to: &EnuFrame, grid: &GeoGrid) -> Result<Raster<f32>> {
    match from {
        Some(f) if f.observer() != to.observer() => {
            let moved: Vec<EnuPoint> = points.iter().map(|p| to.geodetic_to_enu(&f.enu_to_geodetic(p))).collect();
            flatten_cloud(&moved, grid)
        }
        _ => flatten_cloud(points, grid),
    }
}

/// Height map on a ground grid, with the ENU frame its coordinates use.
#[derive(Debug, Clone)]
pub struct Dsm {
    pub observer: GeodeticPoint,
    pub grid: GeoGrid,
    pub heights: Raster<f32>,
}

#[derive(Serialize, Deserialize)]
struct DsmHeader {
    observer: GeodeticPoint,
    grid: GeoGrid,
    /// PFM file, relative to the header.
    heights: String,
}

impl Dsm {
    pub fn frame(&self) -> EnuFrame {
        EnuFrame::new(self.observer)
    }

    /// Reads a JSON header and the PFM raster it names.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let h: DsmHeader = serde_json::from_str(&text).map_err(|e| Error::format("DSM header", path, e.to_string()))?;
        let heights = read_pfm(&path.parent().unwrap_or(Path::new(".")).join(&h.heights))?;
        if heights.width() != h.grid.width || heights.height() != h.grid.height {
            return Err(Error::format("DSM header", path, "raster size does not match the grid"));
        }
        Ok(Dsm { observer: h.observer, grid: h.grid, heights })
    }

    /// Writes `path` (JSON header) and a PFM beside it with the same stem.
    pub fn save(&self, path: &Path) -> Result<()> {
        let pfm = path.with_extension("pfm");
        let name = pfm.file_name().and_then(|n| n.to_str()).ok_or_else(|| Error::invalid("DSM path has no file name"))?;
        write_pfm(&pfm, &self.heights)?;
        let h = DsmHeader { observer: self.observer, grid: self.grid, heights: name.to_string() };
        std::fs::write(path, serde_json::to_string_pretty(&h)?)?;
        Ok(())
    }
}

/// Offset applied to the reconstruction: it is moved `dx` cells east,
/// `dy` cells south (down the rows) and `dz` meters up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub dx: i64,
    pub dy: i64,
    pub dz: f64,
}

fn shifted(recon: &Raster<f32>, x: usize, y: usize, dx: i64, dy: i64) -> Option<f32> {
    let sx = x as i64 - dx;
    let sy = y as i64 - dy;
    if sx < 0 || sy < 0 || sx >= recon.width() as i64 || sy >= recon.height() as i64 {
        return None;
    }
    let v = recon.get(sx as usize, sy as usize);
    v.is_finite().then_some(v)
}

fn differences(recon: &Raster<f32>, truth: &Raster<f32>, dx: i64, dy: i64) -> Vec<f64> {
    let mut out = Vec::new();
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            let t = truth.get(x, y);
            if let (true, Some(r)) = (t.is_finite(), shifted(recon, x, y, dx, dy)) {
                out.push(t as f64 - r as f64);
            }
        }
    }
    out
}

/// Finds the integer shift within `radius` cells and the vertical offset
/// that best register `recon` onto `truth`. Each candidate shift gets
/// `dz = median(truth - recon)` and is scored by the median of
/// `|truth - recon - dz|`; ties keep the smallest shift.
pub fn align_maps(recon: &Raster<f32>, truth: &Raster<f32>, radius: usize) -> Result<Alignment> {
    if !recon.same_size(truth) {
        return Err(Error::invalid("height maps differ in size"));
    }
    let r = radius as i64;
    let mut candidates: Vec<(i64, i64)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    candidates.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    let mut best: Option<(f64, Alignment)> = None;
    for (dx, dy) in candidates {
        let mut d = differences(recon, truth, dx, dy);
        if d.len() < MIN_OVERLAP {
            continue;
        }
        let dz = median(&mut d);
        let mut spread: Vec<f64> = d.iter().map(|v| (v - dz).abs()).collect();
        let score = median(&mut spread);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, Alignment { dx, dy, dz }));
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| Error::InsufficientData(format!("height maps overlap in fewer than {MIN_OVERLAP} valid cells")))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessBase {
    /// Cells valid in the ground truth.
    #[default]
    Truth,
    /// Cells valid in both maps.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub cell_size: f64,
    pub threshold: f64,
    /// Horizontal search radius in cells; 0 aligns heights only.
    pub search_radius: usize,
    pub align: bool,
    pub completeness_base: CompletenessBase,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cell_size: DEFAULT_CELL_SIZE,
            threshold: DEFAULT_THRESHOLD,
            search_radius: 0,
            align: true,
            completeness_base: CompletenessBase::Truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub completeness_pct: f64,
    pub median_error_m: f64,
    pub threshold_m: f64,
    pub alignment: Alignment,
    pub truth_cells: usize,
    pub joint_cells: usize,
    /// Aligned `recon - truth` on the truth grid (NaN outside joint cells).
    #[serde(skip)]
    pub error_map: Option<Raster<f32>>,
}

/// Completeness and median absolute error of `recon` after `alignment`.
pub fn compute_metrics(
    recon: &Raster<f32>,
    truth: &Raster<f32>,
    alignment: Alignment,
    threshold: f64,
    base: CompletenessBase,
) -> Result<MetricReport> {
    if !recon.same_size(truth) {
        return Err(Error::invalid("height maps differ in size"));
    }
    let mut errors = Vec::new();
    let mut error_map = Raster::filled(truth.width(), truth.height(), f32::NAN);
    let mut truth_cells = 0;
    let mut within = 0;
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            let t = truth.get(x, y);
            if !t.is_finite() {
                continue;
            }
            truth_cells += 1;
            if let Some(r) = shifted(recon, x, y, alignment.dx, alignment.dy) {
                let e = r as f64 + alignment.dz - t as f64;
                error_map.set(x, y, e as f32);
                errors.push(e.abs());
                if e.abs() < threshold {
                    within += 1;
                }
            }
        }
    }
    let joint_cells = errors.len();
    if joint_cells == 0 {
        return Err(Error::InsufficientData("no cell is valid in both height maps".into()));
    }
    let denom = match base {
        CompletenessBase::Truth => truth_cells,
        CompletenessBase::Joint => joint_cells,
    };
    Ok(MetricReport {
        completeness_pct: 100.0 * within as f64 / denom as f64,
        median_error_m: median(&mut errors),
        threshold_m: threshold,
        alignment,
        truth_cells,
        joint_cells,
        error_map: Some(error_map),
    })
}

/// Aligns (when configured) and scores a reconstruction against truth.
pub fn evaluate_maps(recon: &Raster<f32>, truth: &Raster<f32>, config: &EvalConfig) -> Result<MetricReport> {
    let alignment = if config.align { align_maps(recon, truth, config.search_radius)? } else { Alignment::default() };
    compute_metrics(recon, truth, alignment, config.threshold, config.completeness_base)
}
