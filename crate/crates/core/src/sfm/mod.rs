//! Sparse reconstruction with pinhole cameras: multi-view triangulation of
//! feature tracks and bundle adjustment of principal points.

mod ba;
mod report;
mod triangulate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ba::{bundle_adjust, BaOptions, BaProblem, BaReport, BaResult, DEFAULT_LAMBDA};
pub use report::{default_bin_edges, median, reprojection_report, ReprojectionReport};
pub use triangulate::{triangulate_pinhole, triangulate_tracks, PinholeTriangulation, MIN_RAY_ANGLE_DEG};

use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::rpc::PixelPoint;

/// One image measurement of a track, stored on disk as `[camera, u, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, f64, f64)", into = "(usize, f64, f64)")]
pub struct Observation {
    pub camera: usize,
    pub pixel: PixelPoint,
}

impl From<(usize, f64, f64)> for Observation {
    fn from((camera, u, v): (usize, f64, f64)) -> Self {
        Observation { camera, pixel: PixelPoint::new(u, v) }
    }
}

impl From<Observation> for (usize, f64, f64) {
    fn from(o: Observation) -> Self {
        (o.camera, o.pixel.x, o.pixel.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub obs: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<EnuPoint>,
}

impl Track {
    pub fn new(obs: Vec<Observation>) -> Self {
        Track { obs, point: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
}

impl TrackSet {
    /// Checks that every track has at least two observations from distinct,
    /// existing cameras.
    pub fn validate(&self, num_cameras: usize) -> Result<()> {
        for (i, track) in self.tracks.iter().enumerate() {
            if track.obs.len() < 2 {
                return Err(Error::invalid(format!("track {i} has fewer than 2 observations")));
            }
            for (j, o) in track.obs.iter().enumerate() {
                if o.camera >= num_cameras {
                    return Err(Error::invalid(format!("track {i} references camera {} of {num_cameras}", o.camera)));
                }
                if !(o.pixel.x.is_finite() && o.pixel.y.is_finite()) {
                    return Err(Error::invalid(format!("track {i} has a non-finite observation")));
                }
                if track.obs[..j].iter().any(|p| p.camera == o.camera) {
                    return Err(Error::invalid(format!("track {i} observes camera {} twice", o.camera)));
                }
            }
        }
        Ok(())
    }

    pub fn all_triangulated(&self) -> bool {
        self.tracks.iter().all(|t| t.point.is_some())
    }

    pub fn num_observations(&self) -> usize {
        self.tracks.iter().map(|t| t.obs.len()).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("tracks", path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_json_shape() {
        let text = r#"{"tracks": [{"obs": [[0, 10.5, 20.0], [2, 11.0, 19.5]]}]}"#;
        let set: TrackSet = serde_json::from_str(text).unwrap();
        assert_eq!(set.tracks[0].obs[1].camera, 2);
        assert_eq!(set.tracks[0].obs[0].pixel, PixelPoint::new(10.5, 20.0));
        assert!(set.validate(3).is_ok());
        assert!(set.validate(2).is_err());
        let out = serde_json::to_string(&set).unwrap();
        assert_eq!(out, r#"{"tracks":[{"obs":[[0,10.5,20.0],[2,11.0,19.5]]}]}"#);
    }

    #[test]
    fn invalid_tracks() {
        let single = TrackSet { tracks: vec![Track::new(vec![(0, 1.0, 1.0).into()])] };
        assert!(single.validate(2).is_err());
        let dup = TrackSet { tracks: vec![Track::new(vec![(1, 1.0, 1.0).into(), (1, 2.0, 2.0).into()])] };
        assert!(dup.validate(2).is_err());
    }
}
