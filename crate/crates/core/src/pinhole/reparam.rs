use nalgebra::{Matrix4, Vector4};

use super::{homogeneous, PinholeCamera};
use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;

/// 4x4 projection whose fourth output, after division by depth, is a
/// height-like coordinate `m = Zbar (z - d) / Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReparamProjection44 {
    m: Matrix4<f64>,
    d: f64,
    zbar: f64,
}

/// Reparametrized image point: pixel plus height-like depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReparamPoint {
    pub u: f64,
    pub v: f64,
    pub m: f64,
}

/// Builds the 4x4 projection from the metric camera `K[R t]` by appending
/// the row `[0, 0, Zbar, -Zbar d]`, then rescales it so the largest entry
/// magnitude is 1. `scene_z_min` is the lowest scene height; the reference
/// plane must lie strictly below it.
pub fn build_reparam_projection(cam: &PinholeCamera, d: f64, zbar: f64, scene_z_min: f64) -> Result<ReparamProjection44> {
    if !(zbar > 0.0 && zbar.is_finite()) {
        return Err(Error::invalid(format!("mean depth must be positive, got {zbar}")));
    }
    if !(d < scene_z_min) {
        return Err(Error::invalid(format!("reference plane d = {d} must lie below the scene (z_min = {scene_z_min})")));
    }
    let p = cam.projection();
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 4>(0, 0).copy_from(&p);
    m[(3, 2)] = zbar;
    m[(3, 3)] = -zbar * d;
    ReparamProjection44::from_parts(m / m.amax(), d, zbar)
}

impl ReparamProjection44 {
    /// Wraps an existing matrix, as read from a camera file.
    pub fn from_parts(m: Matrix4<f64>, d: f64, zbar: f64) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) || m.amax() == 0.0 {
            return Err(Error::invalid("P44 has non-finite or all-zero entries"));
        }
        let det = m.determinant();
        if !(det.abs() > 1e-300) || m.try_inverse().is_none() {
            return Err(Error::degenerate("P44 is not invertible"));
        }
        Ok(ReparamProjection44 { m, d, zbar })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn plane_offset(&self) -> f64 {
        self.d
    }

    pub fn mean_depth(&self) -> f64 {
        self.zbar
    }

    pub fn inverse(&self) -> Matrix4<f64> {
        self.m.try_inverse().expect("invertibility checked at construction")
    }

    /// Single-precision copy for the stereo stage.
    pub fn to_f32(&self) -> Matrix4<f32> {
        self.m.cast::<f32>()
    }

    pub fn project(&self, x: &EnuPoint) -> ReparamPoint {
        let h = self.m * homogeneous(x);
        ReparamPoint { u: h.x / h.z, v: h.y / h.z, m: h.w / h.z }
    }

    /// World point seen at pixel `(u, v)` with reparametrized depth `m`.
    pub fn unproject(&self, u: f64, v: f64, m: f64) -> EnuPoint {
        let h = self.inverse() * Vector4::new(u, v, 1.0, m);
        EnuPoint::new(h.x / h.w, h.y / h.w, h.z / h.w)
    }

    /// Point on the ray through `(u, v)` at height `z`.
    pub fn unproject_to_height(&self, u: f64, v: f64, z: f64) -> Result<EnuPoint> {
        // X(m) = inv * [u, v, 1, m] is a line in homogeneous coordinates;
        // solve for the m where its z/w equals `z`.
        let inv = self.inverse();
        let a = inv * Vector4::new(u, v, 1.0, 0.0);
        let b = inv.column(3).into_owned();
        let den = z * b.w - b.z;
        if den == 0.0 {
            return Err(Error::degenerate("viewing ray parallel to the height plane"));
        }
        let m = (a.z - z * a.w) / den;
        Ok(self.unproject(u, v, m))
    }
}
