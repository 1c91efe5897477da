use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use super::TrackSet;
use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::pinhole::PinholeCamera;
use crate::rpc::PixelPoint;

/// Triangulations whose widest pair of rays is narrower than this are
/// flagged as low confidence.
pub const MIN_RAY_ANGLE_DEG: f64 = 0.05;

const MAX_GN_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeTriangulation {
    pub point: EnuPoint,
    /// RMS of the per-observation pixel errors.
    pub rms: f64,
    /// Largest angle between any two viewing rays, in degrees.
    pub ray_angle_deg: f64,
    pub low_confidence: bool,
}

/// Pixel projection and its Jacobian with respect to the world point.
pub(crate) fn project_with_jacobian(cam: &PinholeCamera, x: &EnuPoint) -> (PixelPoint, nalgebra::Matrix2x3<f64>) {
    let c = cam.to_camera(x);
    let iz = 1.0 / c.z;
    let pix = PixelPoint::new((cam.fx * c.x + cam.skew * c.y) * iz + cam.cx, cam.fy * c.y * iz + cam.cy);
    let d_cam = nalgebra::Matrix2x3::new(
        cam.fx * iz,
        cam.skew * iz,
        -(cam.fx * c.x + cam.skew * c.y) * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * c.y * iz * iz,
    );
    (pix, d_cam * cam.rotation)
}

fn linear_estimate(cams: &[&PinholeCamera], obs: &[PixelPoint]) -> Result<EnuPoint> {
    let mut a = DMatrix::<f64>::zeros(2 * obs.len(), 3);
    let mut b = DVector::<f64>::zeros(2 * obs.len());
    for (i, (cam, u)) in cams.iter().zip(obs).enumerate() {
        let p = cam.projection();
        for (k, coord) in [u.x, u.y].into_iter().enumerate() {
            let row = p.row(2) * coord - p.row(k);
            let norm = row.columns(0, 3).norm();
            for j in 0..3 {
                a[(2 * i + k, j)] = row[j] / norm;
            }
            b[2 * i + k] = -row[3] / norm;
        }
    }
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-15).map_err(|e| Error::degenerate(e.to_string()))?;
    Ok(Vector3::new(x[0], x[1], x[2]))
}

fn max_ray_angle_deg(cams: &[&PinholeCamera], x: &EnuPoint) -> f64 {
    let dirs: Vec<Vector3<f64>> = cams.iter().map(|c| (c.center() - x).normalize()).collect();
    let mut best = 0.0f64;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let cos = dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0);
            best = best.max(cos.acos().to_degrees());
        }
    }
    best
}

/// Triangulates one point from two or more calibrated views: a linear
/// estimate followed by Gauss-Newton on the pixel reprojection error.
pub fn triangulate_pinhole(cams: &[&PinholeCamera], obs: &[PixelPoint]) -> Result<PinholeTriangulation> {
    if cams.len() != obs.len() {
        return Err(Error::invalid("camera and observation counts differ"));
    }
    if obs.len() < 2 {
        return Err(Error::InsufficientData("triangulation needs at least 2 observations".into()));
    }
    let mut x = linear_estimate(cams, obs)?;
    let cost = |x: &EnuPoint| cams.iter().zip(obs).map(|(c, u)| (c.project(x) - u).norm_squared()).sum::<f64>();
    let mut current = cost(&x);
    for _ in 0..MAX_GN_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (cam, u) in cams.iter().zip(obs) {
            let (pix, j) = project_with_jacobian(cam, &x);
            jtj += j.transpose() * j;
            jtr += j.transpose() * (u - pix);
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&jtr)) else { break };
        let next = x + step;
        let next_cost = cost(&next);
        if !(next_cost <= current) {
            break;
        }
        x = next;
        current = next_cost;
        if step.norm() < 1e-12 * (1.0 + x.norm()) {
            break;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::degenerate("triangulation produced a non-finite point"));
    }
    let ray_angle_deg = max_ray_angle_deg(cams, &x);
    Ok(PinholeTriangulation {
        point: x,
        rms: (current / obs.len() as f64).sqrt(),
        ray_angle_deg,
        low_confidence: ray_angle_deg < MIN_RAY_ANGLE_DEG,
    })
}

/// Triangulates every track in place and returns the per-track results.
pub fn triangulate_tracks(cams: &[PinholeCamera], tracks: &mut TrackSet) -> Result<Vec<PinholeTriangulation>> {
    tracks.validate(cams.len())?;
    let results: Vec<Result<PinholeTriangulation>> = tracks
        .tracks
        .par_iter()
        .map(|t| {
            let views: Vec<&PinholeCamera> = t.obs.iter().map(|o| &cams[o.camera]).collect();
            let pix: Vec<PixelPoint> = t.obs.iter().map(|o| o.pixel).collect();
            triangulate_pinhole(&views, &pix)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (track, r) in tracks.tracks.iter_mut().zip(results) {
        let r = r?;
        track.point = Some(r.point);
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::pinhole::PinholeCamera;

    pub(crate) fn looking_at(center: Vector3<f64>, f: f64) -> PinholeCamera {
        let z = (-center).normalize();
        let east = Vector3::new(1.0, 0.0, 0.0);
        let x = (east - z * z.dot(&east)).normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        PinholeCamera {
            fx: f,
            fy: f,
            skew: 0.0,
            cx: 1000.0,
            cy: 1000.0,
            translation: -(rotation * center),
            rotation,
            width: 2000,
            height: 2000,
        }
    }

    #[test]
    fn noiseless_two_view() {
        let a = looking_at(Vector3::new(150_000.0, 0.0, 640_000.0), 2.2e6);
        let b = looking_at(Vector3::new(-150_000.0, 20_000.0, 640_000.0), 2.2e6);
        let x = EnuPoint::new(123.0, -77.0, 42.5);
        let t = triangulate_pinhole(&[&a, &b], &[a.project(&x), b.project(&x)]).unwrap();
        assert!((t.point - x).norm() < 1e-6, "{}", (t.point - x).norm());
        assert!(t.rms < 1e-6 && !t.low_confidence);
    }

    #[test]
    fn noisy_multi_view_improves_on_linear() {
        let cams: Vec<_> =
            (0..4).map(|i| looking_at(Vector3::new(-150_000.0 + 100_000.0 * i as f64, 30_000.0, 640_000.0), 2.2e6)).collect();
        let x = EnuPoint::new(10.0, 20.0, 30.0);
        let obs: Vec<_> = cams.iter().enumerate().map(|(i, c)| c.project(&x) + PixelPoint::new(0.3 * (i as f64 - 1.5), -0.2)).collect();
        let refs: Vec<_> = cams.iter().collect();
        let t = triangulate_pinhole(&refs, &obs).unwrap();
        let lin = linear_estimate(&refs, &obs).unwrap();
        let cost = |p: &EnuPoint| refs.iter().zip(&obs).map(|(c, u)| (c.project(p) - u).norm_squared()).sum::<f64>();
        assert!(cost(&t.point) <= cost(&lin));
        assert!((t.point - x).norm() < 1.0);
    }

    #[test]
    fn parallel_rays_flagged() {
        let a = looking_at(Vector3::new(100.0, 0.0, 640_000.0), 2.2e6);
        let b = looking_at(Vector3::new(200.0, 0.0, 640_000.0), 2.2e6);
        let x = EnuPoint::new(1.0, 2.0, 3.0);
        let t = triangulate_pinhole(&[&a, &b], &[a.project(&x), b.project(&x)]).unwrap();
        assert!(t.low_confidence);
    }

    #[test]
    fn single_observation_rejected() {
        let a = looking_at(Vector3::new(100.0, 0.0, 640_000.0), 2.2e6);
        assert!(triangulate_pinhole(&[&a], &[PixelPoint::new(1.0, 1.0)]).is_err());
    }
}
