use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::pinhole::PinholeCamera;
use crate::rpc::PixelPoint;

/// Satellite view placement relative to a ground target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewGeometry {
    /// Direction from the target to the satellite, degrees clockwise from north.
    pub azimuth_deg: f64,
    /// Angle between the view ray and the local vertical at the target.
    pub off_nadir_deg: f64,
    pub altitude_m: f64,
    /// Ground sample distance at the target, meters per pixel.
    pub gsd_m: f64,
    pub width: usize,
    pub height: usize,
    /// Orbit ground track direction, degrees clockwise from north.
    pub heading_deg: f64,
    pub speed_mps: f64,
    /// Time between consecutive rows; 0 captures the whole frame at once.
    pub line_time_s: f64,
    /// Body rates in the camera frame, rad/s.
    pub angular_rate: [f64; 3],
}

impl Default for ViewGeometry {
    fn default() -> Self {
        ViewGeometry {
            azimuth_deg: 0.0,
            off_nadir_deg: 0.0,
            altitude_m: 650_000.0,
            gsd_m: 0.5,
            width: 512,
            height: 512,
            heading_deg: 180.0,
            speed_mps: 7500.0,
            line_time_s: 1.0e-5,
            angular_rate: [2.0e-5, -1.0e-5, 3.0e-5],
        }
    }
}

/// Linear-array camera on a straight orbit segment.
///
/// Row `v` is exposed at time `t(v) = line_time * (v - cy)` from the pose
/// `C(t) = center + velocity * t`, `R(t) = exp([angular_rate] t) rotation`.
/// A world point lands on the row whose own perspective projection returns
/// that row; along the row it follows the usual perspective model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushbroomCamera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera center at `t = 0`, ENU meters.
    pub center: Vector3<f64>,
    /// World-to-camera rotation at `t = 0`.
    pub rotation: Matrix3<f64>,
    pub velocity: Vector3<f64>,
    pub angular_rate: Vector3<f64>,
    pub line_time: f64,
}

impl PushbroomCamera {
    /// Camera looking at `target` with north up in the image.
    pub fn looking_at(target: &EnuPoint, g: &ViewGeometry) -> Result<Self> {
        if !(g.altitude_m > 0.0 && g.gsd_m > 0.0) || g.width < 2 || g.height < 2 {
            return Err(Error::invalid("view needs positive altitude, GSD and image size"));
        }
        if !(0.0..80.0).contains(&g.off_nadir_deg) {
            return Err(Error::invalid("off-nadir angle must lie in [0, 80) degrees"));
        }
        let (az, zen) = (g.azimuth_deg.to_radians(), g.off_nadir_deg.to_radians());
        let up = Vector3::new(zen.sin() * az.sin(), zen.sin() * az.cos(), zen.cos());
        let range = g.altitude_m / zen.cos();
        let center = target + up * range;
        let z = -up;
        let north = Vector3::new(0.0, 1.0, 0.0);
        let y = -(north - z * north.dot(&z)).normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let heading = g.heading_deg.to_radians();
        let f = range / g.gsd_m;
        let cam = PushbroomCamera {
            width: g.width,
            height: g.height,
            fx: f,
            fy: f,
            cx: (g.width - 1) as f64 / 2.0,
            cy: (g.height - 1) as f64 / 2.0,
            center,
            rotation,
            velocity: Vector3::new(heading.sin(), heading.cos(), 0.0) * g.speed_mps,
            angular_rate: Vector3::from(g.angular_rate),
            line_time: g.line_time_s,
        };
        cam.validate(range)?;
        Ok(cam)
    }

    /// Rejects parameters for which the row equation stops being monotone.
    fn validate(&self, range: f64) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.line_time >= 0.0) {
            return Err(Error::invalid("line time must be non-negative"));
        }
        let drift = self.fy * self.line_time * (self.velocity.norm() / range + self.angular_rate.norm());
        if drift >= 0.8 {
            return Err(Error::invalid(format!("scan drift {drift:.3} per row is too large")));
        }
        Ok(())
    }

    pub fn row_time(&self, v: f64) -> f64 {
        self.line_time * (v - self.cy)
    }

    /// Center and world-to-camera rotation at time `t`.
    pub fn pose(&self, t: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let c = self.center + self.velocity * t;
        let r = Rotation3::new(self.angular_rate * t).into_inner() * self.rotation;
        (c, r)
    }

    fn camera_coords(&self, x: &EnuPoint, t: f64) -> Vector3<f64> {
        let (c, r) = self.pose(t);
        r * (x - c)
    }

    fn row_residual(&self, x: &EnuPoint, v: f64) -> Result<f64> {
        let p = self.camera_coords(x, self.row_time(v));
        if !(p.z > 0.0) {
            return Err(Error::OutOfBounds("point is behind the camera".into()));
        }
        Ok(v - self.cy - self.fy * p.y / p.z)
    }

    /// Pixel of `x`, solving the row equation by Newton's method.
    pub fn project(&self, x: &EnuPoint) -> Result<PixelPoint> {
        let mut v = self.cy;
        let mut converged = false;
        for _ in 0..50 {
            let g = self.row_residual(x, v)?;
            if self.line_time == 0.0 {
                v -= g;
                converged = true;
                break;
            }
            let slope = self.row_residual(x, v + 1.0)? - g;
            let step = g / slope;
            v -= step;
            if step.abs() < 1e-10 * v.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: 50, residual: self.row_residual(x, v)?.abs() });
        }
        let p = self.camera_coords(x, self.row_time(v));
        if !(p.z > 0.0) {
            return Err(Error::OutOfBounds("point is behind the camera".into()));
        }
        Ok(PixelPoint::new(self.cx + self.fx * p.x / p.z, v))
    }

    /// World-space ray `(origin, direction)` through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (c, r) = self.pose(self.row_time(v));
        let d = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (c, r.transpose() * d)
    }

    pub fn in_image(&self, p: &PixelPoint) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// The frame camera this reduces to when rows are captured at once and
    /// the attitude is fixed.
    pub fn as_pinhole(&self) -> Option<PinholeCamera> {
        if self.line_time != 0.0 && (self.velocity.norm() != 0.0 || self.angular_rate.norm() != 0.0) {
            return None;
        }
        let k = Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0);
        PinholeCamera::from_krt(&k, self.rotation, -self.rotation * self.center, self.width, self.height).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_maps_to_image_center() {
        let g = ViewGeometry { azimuth_deg: 40.0, off_nadir_deg: 15.0, ..Default::default() };
        let target = EnuPoint::new(10.0, -20.0, 5.0);
        let cam = PushbroomCamera::looking_at(&target, &g).unwrap();
        let p = cam.project(&target).unwrap();
        assert!((p.x - cam.cx).abs() < 1e-6 && (p.y - cam.cy).abs() < 1e-6);
        assert!(((cam.center - target).z - 650_000.0).abs() < 1e-6);
    }

    #[test]
    fn north_is_up_and_east_is_right() {
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &ViewGeometry::default()).unwrap();
        let c = cam.project(&EnuPoint::zeros()).unwrap();
        let e = cam.project(&EnuPoint::new(10.0, 0.0, 0.0)).unwrap();
        let n = cam.project(&EnuPoint::new(0.0, 10.0, 0.0)).unwrap();
        assert!(e.x > c.x + 15.0 && n.y < c.y - 10.0);
    }

    #[test]
    fn ray_and_projection_agree() {
        let g = ViewGeometry { azimuth_deg: 200.0, off_nadir_deg: 20.0, ..Default::default() };
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &g).unwrap();
        for (u, v) in [(0.0, 0.0), (511.0, 17.5), (250.25, 480.0)] {
            let (o, d) = cam.ray(u, v);
            let x = o + d * (640_000.0 / d.norm());
            let p = cam.project(&x).unwrap();
            assert!((p.x - u).abs() < 1e-6 && (p.y - v).abs() < 1e-6, "{p:?} vs ({u}, {v})");
        }
    }

    #[test]
    fn static_capture_is_pinhole() {
        let g = ViewGeometry { off_nadir_deg: 10.0, line_time_s: 0.0, angular_rate: [0.0; 3], ..Default::default() };
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &g).unwrap();
        let pin = cam.as_pinhole().unwrap();
        let x = EnuPoint::new(40.0, -70.0, 30.0);
        assert!((cam.project(&x).unwrap() - pin.project(&x)).norm() < 1e-9);
        let moving = PushbroomCamera::looking_at(&EnuPoint::zeros(), &ViewGeometry::default()).unwrap();
        assert!(moving.as_pinhole().is_none());
    }

    #[test]
    fn behind_camera_rejected() {
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &ViewGeometry::default()).unwrap();
        assert!(cam.project(&EnuPoint::new(0.0, 0.0, 700_000.0)).is_err());
    }

    #[test]
    fn excessive_drift_rejected() {
        let g = ViewGeometry { line_time_s: 1e-3, ..Default::default() };
        assert!(PushbroomCamera::looking_at(&EnuPoint::zeros(), &g).is_err());
    }
}
