use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PushbroomCamera, SyntheticScene};
use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::sfm::{Observation, Track, TrackSet};

#[derive(Debug, Clone)]
pub struct SyntheticTracks {
    pub tracks: TrackSet,
    /// Generating surface point of each kept track.
    pub points: Vec<EnuPoint>,
}

/// Samples `n` surface points uniformly over the scene, projects them into
/// every camera, perturbs the pixels with Gaussian noise and drops
/// observations that fall outside the image. Tracks seen by fewer than two
/// cameras are discarded. Occlusion is not modeled.
pub fn generate_tracks(scene: &SyntheticScene, cams: &[PushbroomCamera], n: usize, noise_px: f64, seed: u64) -> Result<SyntheticTracks> {
    let noise = Normal::new(0.0, noise_px).map_err(|e| Error::invalid(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &scene.grid;
    let (w, h) = (g.width as f64 * g.cell_size, g.height as f64 * g.cell_size);
    let mut out = SyntheticTracks { tracks: TrackSet::default(), points: Vec::new() };
    for _ in 0..n {
        let x = g.x_min + rng.random::<f64>() * w;
        let y = g.y_max - rng.random::<f64>() * h;
        let p = EnuPoint::new(x, y, scene.height_at(x, y));
        let mut obs = Vec::new();
        for (i, cam) in cams.iter().enumerate() {
            let mut pix = cam.project(&p)?;
            if noise_px > 0.0 {
                pix.x += noise.sample(&mut rng);
                pix.y += noise.sample(&mut rng);
            }
            if cam.in_image(&pix) {
                obs.push(Observation { camera: i, pixel: pix });
            }
        }
        if obs.len() >= 2 {
            out.tracks.tracks.push(Track::new(obs));
            out.points.push(p);
        }
    }
    Ok(out)
}

/// `hist[k]` counts the tracks with exactly `k` observations.
pub fn track_length_histogram(tracks: &TrackSet) -> Vec<usize> {
    let longest = tracks.tracks.iter().map(|t| t.obs.len()).max().unwrap_or(0);
    let mut hist = vec![0; longest + 1];
    for t in &tracks.tracks {
        hist[t.obs.len()] += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_params;
    use super::super::ViewGeometry;
    use super::*;
    use crate::sfm::triangulate_pinhole;

    fn pinhole_views() -> Vec<PushbroomCamera> {
        [(0.0, 0.0), (15.0, 10.0), (15.0, 190.0)]
            .iter()
            .map(|&(off, az)| {
                let g = ViewGeometry {
                    off_nadir_deg: off,
                    azimuth_deg: az,
                    line_time_s: 0.0,
                    angular_rate: [0.0; 3],
                    width: 300,
                    height: 300,
                    ..Default::default()
                };
                PushbroomCamera::looking_at(&EnuPoint::zeros(), &g).unwrap()
            })
            .collect()
    }

    #[test]
    fn noiseless_tracks_triangulate_exactly() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let cams = pinhole_views();
        let pins: Vec<_> = cams.iter().map(|c| c.as_pinhole().unwrap()).collect();
        let synth = generate_tracks(&scene, &cams, 200, 0.0, 3).unwrap();
        assert!(synth.tracks.tracks.len() > 100);
        for (t, want) in synth.tracks.tracks.iter().zip(&synth.points) {
            let views: Vec<_> = t.obs.iter().map(|o| &pins[o.camera]).collect();
            let pix: Vec<_> = t.obs.iter().map(|o| o.pixel).collect();
            let got = triangulate_pinhole(&views, &pix).unwrap();
            assert!((got.point - want).norm() < 1e-4, "{}", (got.point - want).norm());
        }
    }

    #[test]
    fn reproducible_and_lengths() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let cams = pinhole_views();
        let a = generate_tracks(&scene, &cams, 300, 0.5, 9).unwrap();
        let b = generate_tracks(&scene, &cams, 300, 0.5, 9).unwrap();
        assert_eq!(a.tracks, b.tracks);
        let hist = track_length_histogram(&a.tracks);
        assert_eq!(hist.iter().sum::<usize>(), a.tracks.tracks.len());
        assert!(hist[..2].iter().all(|&c| c == 0));
    }

    #[test]
    fn zero_count_is_empty() {
        let scene = SyntheticScene::generate(&small_params()).unwrap();
        let out = generate_tracks(&scene, &pinhole_views(), 0, 0.0, 1).unwrap();
        assert!(out.tracks.tracks.is_empty());
        assert_eq!(track_length_histogram(&out.tracks), vec![0]);
    }
}
