use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrackSet;
use crate::error::{Error, Result};
use crate::pinhole::PinholeCamera;

/// Reprojection error statistics over a track set.
///
/// Aggregates are over individual observations; the histogram counts tracks
/// by their mean observation error. Values outside the edges fall into the
/// first or last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionReport {
    pub num_tracks: usize,
    pub num_observations: usize,
    pub median_px: f64,
    pub mean_px: f64,
    pub max_px: f64,
    pub per_track_px: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub histogram: Vec<u64>,
}

/// Bins of 0.1 px from 0 to 3 px.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=30).map(|i| i as f64 * 0.1).collect()
}

/// Median; an even count gives the midpoint of the two middle values. Sorts
/// `values` in place.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn reprojection_report(cams: &[PinholeCamera], tracks: &TrackSet, bin_edges: &[f64]) -> Result<ReprojectionReport> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("histogram needs at least two increasing bin edges"));
    }
    tracks.validate(cams.len())?;
    let per_obs: Vec<Vec<f64>> = tracks
        .tracks
        .par_iter()
        .map(|t| {
            let x = t.point.ok_or_else(|| Error::invalid("track has no point"))?;
            Ok(t.obs.iter().map(|o| (cams[o.camera].project(&x) - o.pixel).norm()).collect())
        })
        .collect::<Result<_>>()?;
    let per_track_px: Vec<f64> = per_obs.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    let mut all: Vec<f64> = per_obs.into_iter().flatten().collect();
    let num_observations = all.len();
    let mean_px = all.iter().sum::<f64>() / num_observations.max(1) as f64;
    let max_px = all.iter().copied().fold(0.0, f64::max);
    let median_px = median(&mut all);

    let mut histogram = vec![0u64; bin_edges.len() - 1];
    for &e in &per_track_px {
        let bin = bin_edges[1..].partition_point(|&edge| edge <= e).min(histogram.len() - 1);
        histogram[bin] += 1;
    }
    Ok(ReprojectionReport {
        num_tracks: per_track_px.len(),
        num_observations,
        median_px,
        mean_px,
        max_px,
        per_track_px,
        bin_edges: bin_edges.to_vec(),
        histogram,
    })
}

impl ReprojectionReport {
    /// Histogram as CSV with columns `lower,upper,count`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (i, count) in self.histogram.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.bin_edges[i], self.bin_edges[i + 1], count);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::triangulate::tests::looking_at;
    use super::super::{Observation, Track};
    use super::*;
    use crate::geodesy::EnuPoint;
    use crate::rpc::PixelPoint;
    use nalgebra::Vector3;

    fn setup() -> (Vec<PinholeCamera>, TrackSet) {
        let cams = vec![
            looking_at(Vector3::new(150_000.0, 0.0, 640_000.0), 2.2e6),
            looking_at(Vector3::new(-150_000.0, 10_000.0, 640_000.0), 2.2e6),
        ];
        let tracks = (0..25)
            .map(|i| {
                let x = EnuPoint::new(i as f64 * 7.0 - 80.0, 30.0 - i as f64 * 3.0, (i % 5) as f64 * 9.0);
                Track { obs: (0..2).map(|c| Observation { camera: c, pixel: cams[c].project(&x) }).collect(), point: Some(x) }
            })
            .collect();
        (cams, TrackSet { tracks })
    }

    #[test]
    fn zero_noise_has_zero_error() {
        let (cams, tracks) = setup();
        let r = reprojection_report(&cams, &tracks, &default_bin_edges()).unwrap();
        assert!(r.max_px < 1e-6);
        assert_eq!(r.histogram.iter().sum::<u64>(), 25);
        assert_eq!(r.histogram[0], 25);
    }

    #[test]
    fn perturbed_track_reports_delta() {
        let (cams, mut tracks) = setup();
        for o in &mut tracks.tracks[3].obs {
            o.pixel += PixelPoint::new(0.63, 0.84);
        }
        let r = reprojection_report(&cams, &tracks, &default_bin_edges()).unwrap();
        assert!((r.per_track_px[3] - 1.05).abs() < 1e-6);
        assert_eq!(r.histogram[10], 1);
        assert_eq!(r.histogram.iter().sum::<u64>(), 25);
        assert!(r.histogram_csv().lines().count() == 31);
    }

    #[test]
    fn large_errors_go_to_last_bin() {
        let (cams, mut tracks) = setup();
        tracks.tracks[0].obs[0].pixel.x += 100.0;
        let r = reprojection_report(&cams, &tracks, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.histogram, vec![24, 1]);
    }

    #[test]
    fn even_median_is_midpoint() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0, 1.0, 3.0]), 3.0);
    }
}
