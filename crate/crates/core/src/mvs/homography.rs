use nalgebra::{Matrix3, Matrix4, RealField, Vector3, Vector4};

use crate::error::{Error, Result};

/// Homography induced by the plane `n . x = d` from view 1 to view 2,
/// computed from the two 4x4 reparametrized projections.
///
/// With `[q^T, r] = [n; -d]^T P1^-1`, a pixel `u1` on the plane has
/// reparametrized depth `m1 = -q^T u1 / r`, so
/// `u2 ~ P2 P1^-1 [I; -q^T / r] u1` and `H` is the top-left 3x3 block. Every
/// intermediate stays of the order of the (unit-scaled) projection entries,
/// so the computation is usable in single precision.
pub fn homography_from_p44<T: RealField + Copy>(p1: &Matrix4<T>, p2: &Matrix4<T>, normal: &Vector3<T>, d: T) -> Result<Matrix3<T>> {
    let inv = p1.try_inverse().ok_or_else(|| Error::degenerate("reference projection is singular"))?;
    let plane = Vector4::new(normal.x, normal.y, normal.z, -d);
    let qr = inv.transpose() * plane;
    let r = qr.w;
    let tiny = nalgebra::convert::<f64, T>(1e-12);
    if r.abs() <= tiny {
        return Err(Error::degenerate("plane passes through the reference camera center"));
    }
    let p21 = p2 * inv;
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            h[(i, j)] = p21[(i, j)] - p21[(i, 3)] * qr[j] / r;
        }
    }
    Ok(h)
}

/// Applies a homography to a pixel.
#[inline]
pub fn map_pixel<T: RealField + Copy>(h: &Matrix3<T>, u: T, v: T) -> (T, T) {
    let p = h * Vector3::new(u, v, T::one());
    (p.x / p.z, p.y / p.z)
}
