//! Plane-sweep stereo over ground-parallel planes.
//!
//! Source views are warped onto the reference view through homographies
//! derived from the 4x4 reparametrized projections, scored with census
//! Hamming distances, smoothed slice by slice with a guided filter, and
//! reduced to a height map by winner-take-all or semi-global aggregation.

mod census;
mod cloud;
mod cost;
mod extract;
mod guided;
mod homography;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use census::{census_transform, CensusImage};
pub use cloud::{heightmap_to_cloud, read_ply, read_ply_with_frame, write_ply, CloudPoint};
pub use cost::{build_cost_volume, CostVolume};
pub use extract::{extract_heightmap_sgm, extract_heightmap_wta, labeling_energy, DEFAULT_MAX_LABELS};
pub use guided::{filter_cost_volume, guided_filter_slice};
pub use homography::{homography_from_p44, map_pixel};

use crate::error::{Error, Result};
use crate::pinhole::ReparamProjection44;
use crate::raster::Raster;

/// Label value marking no-data pixels.
pub const NO_LABEL: u16 = u16::MAX;

/// Strictly increasing sweep heights (ENU z, meters).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet {
    z: Vec<f64>,
}

impl PlaneSet {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::invalid("a plane set needs at least two planes"));
        }
        if z.iter().any(|v| !v.is_finite()) || z.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("plane heights must be finite and strictly increasing"));
        }
        Ok(PlaneSet { z })
    }

    /// `n` evenly spaced planes from `z_min` to `z_max` inclusive.
    pub fn uniform(z_min: f64, z_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a plane set needs at least two planes"));
        }
        let step = (z_max - z_min) / (n - 1) as f64;
        Self::new((0..n).map(|k| if k + 1 == n { z_max } else { z_min + step * k as f64 }).collect())
    }

    /// Planes every `step` meters from `z_min`, the last one at or above
    /// `z_max`.
    pub fn with_step(z_min: f64, z_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(z_max > z_min) {
            return Err(Error::invalid(format!("bad sweep range [{z_min}, {z_max}] with step {step}")));
        }
        let n = ((z_max - z_min) / step - 1e-9).ceil() as usize + 1;
        Self::new((0..n).map(|k| z_min + step * k as f64).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Heights in ENU meters (NaN = no data) and the plane index each came
/// from ([`NO_LABEL`] = no data).
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub heights: Raster<f32>,
    pub labels: Raster<u16>,
}

impl HeightMap {
    pub fn valid_fraction(&self) -> f64 {
        self.heights.valid_count() as f64 / self.heights.data().len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgmConfig {
    pub p1: f64,
    pub p2: f64,
}

impl Default for SgmConfig {
    fn default() -> Self {
        SgmConfig { p1: 0.01, p2: 0.05 }
    }
}

/// Plane-sweep parameters. Missing heights default to the bounding cube's
/// z range; `sgm: null` selects winner-take-all extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    pub z_step: f64,
    pub census_window: [usize; 2],
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub sgm: Option<SgmConfig>,
    pub refine: bool,
    pub max_labels: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            z_min: None,
            z_max: None,
            z_step: 0.5,
            census_window: [7, 7],
            gf_radius: 8,
            gf_eps: 1e-4,
            sgm: Some(SgmConfig::default()),
            refine: true,
            max_labels: DEFAULT_MAX_LABELS,
        }
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("sweep config", path, e.to_string()))
    }

    /// Planes for this configuration, using `cube_z` where heights are unset.
    pub fn planes(&self, cube_z: (f64, f64)) -> Result<PlaneSet> {
        PlaneSet::with_step(self.z_min.unwrap_or(cube_z.0), self.z_max.unwrap_or(cube_z.1), self.z_step)
    }
}

/// Output of [`plane_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub planes: PlaneSet,
    pub raw: CostVolume,
    pub filtered: CostVolume,
    pub wta: HeightMap,
    pub sgm: Option<HeightMap>,
}

impl SweepResult {
    /// The final height map: SGM when configured, otherwise WTA.
    pub fn height_map(&self) -> &HeightMap {
        self.sgm.as_ref().unwrap_or(&self.wta)
    }
}

/// Cost volume, filtering and height extraction in one call. Images are
/// expected normalized to `[0, 1]`.
pub fn plane_sweep(
    reference: &Raster<f32>,
    sources: &[Raster<f32>],
    ref_cam: &ReparamProjection44,
    src_cams: &[ReparamProjection44],
    planes: PlaneSet,
    config: &SweepConfig,
) -> Result<SweepResult> {
    let window = (config.census_window[0], config.census_window[1]);
    let raw = build_cost_volume(reference, sources, ref_cam, src_cams, &planes, window)?;
    let filtered = filter_cost_volume(&raw, reference, config.gf_radius, config.gf_eps)?;
    let wta = extract_heightmap_wta(&filtered, &planes, config.refine)?;
    let sgm = match config.sgm {
        Some(s) => Some(extract_heightmap_sgm(&filtered, &planes, s.p1, s.p2, config.refine, config.max_labels)?),
        None => None,
    };
    Ok(SweepResult { planes, raw, filtered, wta, sgm })
}
