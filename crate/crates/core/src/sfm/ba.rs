use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{default_bin_edges, reprojection_report, ReprojectionReport};
use super::triangulate::project_with_jacobian;
use super::TrackSet;
use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::pinhole::PinholeCamera;

/// Weight of the anchor term.
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Bundle adjustment of principal points and track points.
///
/// The objective is, summed over every observation of a track with point
/// `x` and anchor `x_hat`, the squared pixel residual plus
/// `lambda * |x - x_hat|^2`. Only `c_x`, `c_y` and the points change.
#[derive(Debug, Clone)]
pub struct BaProblem {
    cameras: Vec<PinholeCamera>,
    tracks: TrackSet,
    anchors: Vec<EnuPoint>,
    lambda: f64,
}

impl BaProblem {
    /// Anchors are copies of the current track points, which must all be set.
    pub fn new(cameras: Vec<PinholeCamera>, tracks: TrackSet, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        tracks.validate(cameras.len())?;
        let anchors = tracks
            .tracks
            .iter()
            .map(|t| t.point.ok_or_else(|| Error::invalid("bundle adjustment needs triangulated tracks")))
            .collect::<Result<Vec<_>>>()?;
        if tracks.tracks.is_empty() {
            return Err(Error::InsufficientData("no tracks to adjust".into()));
        }
        Ok(BaProblem { cameras, tracks, anchors, lambda })
    }

    pub fn cameras(&self) -> &[PinholeCamera] {
        &self.cameras
    }

    pub fn tracks(&self) -> &TrackSet {
        &self.tracks
    }

    pub fn anchors(&self) -> &[EnuPoint] {
        &self.anchors
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Objective split into the pixel term and the anchor term.
    pub fn objective_terms(&self, cameras: &[PinholeCamera], points: &[EnuPoint]) -> (f64, f64) {
        let per_track: Vec<(f64, f64)> = self
            .tracks
            .tracks
            .par_iter()
            .zip(points.par_iter().zip(self.anchors.par_iter()))
            .map(|(t, (x, a))| {
                let data = t.obs.iter().map(|o| (cameras[o.camera].project(x) - o.pixel).norm_squared()).sum();
                (data, self.lambda * t.obs.len() as f64 * (x - a).norm_squared())
            })
            .collect();
        per_track.iter().fold((0.0, 0.0), |acc, t| (acc.0 + t.0, acc.1 + t.1))
    }

    fn objective(&self, cameras: &[PinholeCamera], points: &[EnuPoint]) -> f64 {
        let (d, r) = self.objective_terms(cameras, points);
        d + r
    }
}

#[derive(Debug, Clone)]
pub struct BaOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction.
    pub relative_tolerance: f64,
    pub bin_edges: Vec<f64>,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions { max_iterations: 200, relative_tolerance: 1e-8, bin_edges: default_bin_edges() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaReport {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Per-camera `(c_x, c_y)` change in pixels.
    pub principal_point_shifts: Vec<[f64; 2]>,
    pub before: ReprojectionReport,
    pub after: ReprojectionReport,
}

#[derive(Debug, Clone)]
pub struct BaResult {
    pub cameras: Vec<PinholeCamera>,
    pub tracks: TrackSet,
    pub report: BaReport,
}

struct TrackBlock {
    hpp: Matrix3<f64>,
    gp: Vector3<f64>,
    /// `(camera, d residual / d point, residual)` per observation.
    obs: Vec<(usize, Matrix2x3<f64>, Vector2<f64>)>,
}

fn linearize(problem: &BaProblem, cameras: &[PinholeCamera], points: &[EnuPoint]) -> Vec<TrackBlock> {
    problem
        .tracks
        .tracks
        .par_iter()
        .zip(points.par_iter().zip(problem.anchors.par_iter()))
        .map(|(t, (x, a))| {
            let w = problem.lambda * t.obs.len() as f64;
            let mut hpp = Matrix3::identity() * w;
            let mut gp = (a - x) * w;
            let obs = t
                .obs
                .iter()
                .map(|o| {
                    let (pix, j) = project_with_jacobian(&cameras[o.camera], x);
                    let r = o.pixel - pix;
                    hpp += j.transpose() * j;
                    gp += j.transpose() * r;
                    (o.camera, j, r)
                })
                .collect();
            TrackBlock { hpp, gp, obs }
        })
        .collect()
}

/// Solves the damped normal equations by eliminating the point blocks.
fn solve_step(blocks: &[TrackBlock], num_cameras: usize, mu: f64) -> Option<(DVector<f64>, Vec<Vector3<f64>>)> {
    let n = 2 * num_cameras;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for b in blocks {
        for (c, _, r) in &b.obs {
            s[(2 * c, 2 * c)] += 1.0;
            s[(2 * c + 1, 2 * c + 1)] += 1.0;
            rhs[2 * c] += r.x;
            rhs[2 * c + 1] += r.y;
        }
    }
    for i in 0..n {
        s[(i, i)] *= 1.0 + mu;
    }
    let mut inverses = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut h = b.hpp;
        for i in 0..3 {
            h[(i, i)] *= 1.0 + mu;
        }
        let w = h.try_inverse()?;
        let wg = w * b.gp;
        for (ca, ja, _) in &b.obs {
            let jw = ja * w;
            let off = ja * wg;
            rhs[2 * ca] -= off.x;
            rhs[2 * ca + 1] -= off.y;
            for (cb, jb, _) in &b.obs {
                let m = jw * jb.transpose();
                for i in 0..2 {
                    for j in 0..2 {
                        s[(2 * ca + i, 2 * cb + j)] -= m[(i, j)];
                    }
                }
            }
        }
        inverses.push(w);
    }
    let dc = match s.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => s.lu().solve(&rhs)?,
    };
    let dp = blocks
        .iter()
        .zip(&inverses)
        .map(|(b, w)| {
            let mut g = b.gp;
            for (c, j, _) in &b.obs {
                g -= j.transpose() * Vector2::new(dc[2 * c], dc[2 * c + 1]);
            }
            w * g
        })
        .collect();
    Some((dc, dp))
}

/// Levenberg-Marquardt over principal points and track points with point
/// blocks eliminated by Schur complement. Only strictly improving steps are
/// accepted, so the objective never increases.
pub fn bundle_adjust(problem: &BaProblem, options: &BaOptions) -> Result<BaResult> {
    let before = reprojection_report(&problem.cameras, &problem.tracks, &options.bin_edges)?;
    let mut cameras = problem.cameras.clone();
    let mut points = problem.anchors.clone();
    let initial_objective = problem.objective(&cameras, &points);
    let mut cost = initial_objective;
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        if cost == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let blocks = linearize(problem, &cameras, &points);
        let mut accepted = None;
        while mu < 1e16 {
            if let Some((dc, dp)) = solve_step(&blocks, cameras.len(), mu) {
                let mut trial_cams = cameras.clone();
                for (i, cam) in trial_cams.iter_mut().enumerate() {
                    cam.cx += dc[2 * i];
                    cam.cy += dc[2 * i + 1];
                }
                let trial_points: Vec<EnuPoint> = points.iter().zip(&dp).map(|(x, d)| x + d).collect();
                let trial_cost = problem.objective(&trial_cams, &trial_points);
                if trial_cost < cost {
                    accepted = Some((trial_cams, trial_points, trial_cost));
                    mu = (mu * 0.1).max(1e-15);
                    break;
                }
            }
            mu *= 10.0;
        }
        let Some((c, p, new_cost)) = accepted else {
            converged = true;
            break;
        };
        let decrease = cost - new_cost;
        cameras = c;
        points = p;
        cost = new_cost;
        if decrease <= options.relative_tolerance * (cost + decrease) {
            converged = true;
            break;
        }
    }
    if !(cost <= initial_objective) {
        return Err(Error::Diverged(format!("objective rose from {initial_objective:.6e} to {cost:.6e} after {iterations} iterations")));
    }

    let mut tracks = problem.tracks.clone();
    for (t, x) in tracks.tracks.iter_mut().zip(&points) {
        t.point = Some(*x);
    }
    let after = reprojection_report(&cameras, &tracks, &options.bin_edges)?;
    let principal_point_shifts = cameras.iter().zip(&problem.cameras).map(|(a, b)| [a.cx - b.cx, a.cy - b.cy]).collect();
    Ok(BaResult {
        cameras,
        tracks,
        report: BaReport {
            lambda: problem.lambda,
            iterations,
            converged,
            initial_objective,
            final_objective: cost,
            principal_point_shifts,
            before,
            after,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::triangulate::tests::looking_at;
    use super::super::{triangulate_tracks, Observation, Track};
    use super::*;
    use crate::rpc::PixelPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scene(num_cams: usize, num_tracks: usize, seed: u64) -> (Vec<PinholeCamera>, Vec<EnuPoint>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cams = (0..num_cams)
            .map(|i| {
                let a = i as f64 / num_cams as f64 * std::f64::consts::TAU;
                looking_at(Vector3::new(170_000.0 * a.cos(), 170_000.0 * a.sin(), 640_000.0), 2.2e6)
            })
            .collect();
        let pts = (0..num_tracks)
            .map(|_| EnuPoint::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), rng.random_range(0.0..60.0)))
            .collect();
        (cams, pts)
    }

    fn observe(cams: &[PinholeCamera], pts: &[EnuPoint], noise: f64, seed: u64) -> TrackSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let sample = |rng: &mut ChaCha8Rng| if noise > 0.0 { normal.sample(rng) } else { 0.0 };
        TrackSet {
            tracks: pts
                .iter()
                .map(|x| {
                    Track::new(
                        cams.iter()
                            .enumerate()
                            .map(|(c, cam)| Observation {
                                camera: c,
                                pixel: cam.project(x) + PixelPoint::new(sample(&mut rng), sample(&mut rng)),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    fn perturb(cams: &[PinholeCamera], seed: u64) -> Vec<PinholeCamera> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cams.iter()
            .map(|c| {
                let mut c = c.clone();
                c.cx += rng.random_range(-5.0..5.0);
                c.cy += rng.random_range(-5.0..5.0);
                c
            })
            .collect()
    }

    fn problem(cams: Vec<PinholeCamera>, mut tracks: TrackSet, lambda: f64) -> BaProblem {
        triangulate_tracks(&cams, &mut tracks).unwrap();
        BaProblem::new(cams, tracks, lambda).unwrap()
    }

    #[test]
    fn recovers_principal_points_up_to_gauge() {
        let (truth, pts) = scene(5, 300, 1);
        let tracks = observe(&truth, &pts, 0.0, 2);
        let start = perturb(&truth, 3);
        let p = problem(start, tracks, DEFAULT_LAMBDA);
        let res = bundle_adjust(&p, &BaOptions::default()).unwrap();
        assert!(res.report.after.median_px < 1e-3, "{}", res.report.after.median_px);
        // A common point displacement v is invisible to the pixel term; the
        // anchors select it, so compare against truth shifted by v.
        let v = res.tracks.tracks.iter().zip(&pts).map(|(t, x)| t.point.unwrap() - x).sum::<Vector3<f64>>() / pts.len() as f64;
        for (got, want) in res.cameras.iter().zip(&truth) {
            let centroid = EnuPoint::new(0.0, 0.0, 30.0);
            let shift = want.project(&(centroid + v)) - want.project(&centroid);
            assert!((got.cx - want.cx + shift.x).abs() < 0.05, "{} {}", got.cx - want.cx, shift.x);
            assert!((got.cy - want.cy + shift.y).abs() < 0.05);
        }
    }

    #[test]
    fn other_parameters_untouched() {
        let (truth, pts) = scene(4, 50, 4);
        let p = problem(perturb(&truth, 5), observe(&truth, &pts, 0.3, 6), DEFAULT_LAMBDA);
        let res = bundle_adjust(&p, &BaOptions::default()).unwrap();
        for (a, b) in res.cameras.iter().zip(p.cameras()) {
            assert_eq!(a.fx.to_bits(), b.fx.to_bits());
            assert_eq!(a.fy.to_bits(), b.fy.to_bits());
            assert_eq!(a.skew.to_bits(), b.skew.to_bits());
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.translation, b.translation);
        }
        assert!(res.report.final_objective <= res.report.initial_objective);
    }

    #[test]
    fn huge_lambda_pins_points() {
        let (truth, pts) = scene(4, 60, 7);
        let p = problem(perturb(&truth, 8), observe(&truth, &pts, 0.0, 9), 1e9);
        let res = bundle_adjust(&p, &BaOptions::default()).unwrap();
        for (t, a) in res.tracks.tracks.iter().zip(p.anchors()) {
            assert!((t.point.unwrap() - a).norm() < 1e-6);
        }
        assert!(res.report.principal_point_shifts.iter().any(|s| s[0].abs() > 0.1));
    }

    #[test]
    fn noisy_error_drops() {
        let (truth, pts) = scene(6, 400, 10);
        let p = problem(perturb(&truth, 11), observe(&truth, &pts, 0.5, 12), DEFAULT_LAMBDA);
        let res = bundle_adjust(&p, &BaOptions::default()).unwrap();
        let (b, a) = (res.report.before.median_px, res.report.after.median_px);
        assert!(a <= 0.8 * b, "{b} -> {a}");
        for (t, anchor) in res.tracks.tracks.iter().zip(p.anchors()) {
            assert!((t.point.unwrap() - anchor).norm() < 10.0 / DEFAULT_LAMBDA.sqrt());
        }
    }

    #[test]
    fn pixel_term_has_translation_gauge() {
        let (cams, pts) = scene(3, 40, 13);
        let p = problem(cams.clone(), observe(&cams, &pts, 0.2, 14), DEFAULT_LAMBDA);
        let v = Vector3::new(3.0, -2.0, 1.5);
        let moved_cams: Vec<_> = cams
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.translation -= c.rotation * v;
                c
            })
            .collect();
        let moved_pts: Vec<_> = p.anchors().iter().map(|x| x + v).collect();
        let (d0, r0) = p.objective_terms(&cams, p.anchors());
        let (d1, r1) = p.objective_terms(&moved_cams, &moved_pts);
        assert!((d0 - d1).abs() < 1e-6 * d0.max(1.0));
        assert_eq!(r0, 0.0);
        assert!(r1 > 0.0);
    }

    #[test]
    fn rejects_untriangulated_tracks() {
        let (cams, pts) = scene(2, 3, 15);
        let tracks = observe(&cams, &pts, 0.0, 16);
        assert!(BaProblem::new(cams.clone(), tracks, 0.01).is_err());
        let mut tracks = observe(&cams, &pts, 0.0, 16);
        triangulate_tracks(&cams, &mut tracks).unwrap();
        assert!(BaProblem::new(cams, tracks, -1.0).is_err());
    }
}
