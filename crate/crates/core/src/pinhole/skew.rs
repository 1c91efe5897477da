use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::PinholeCamera;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Splits `K = S K'` where `S` is a pure horizontal shear and `K'` has zero
/// skew.
///
/// Returns the zero-skew camera and the image warp `S^-1`, which maps
/// original pixel coordinates to corrected ones.
pub fn skew_correct(cam: &PinholeCamera) -> Result<(PinholeCamera, Matrix3<f64>)> {
    if !(cam.fy > 0.0) {
        return Err(Error::invalid("skew correction needs f_y > 0"));
    }
    if cam.skew == 0.0 {
        return Ok((cam.clone(), Matrix3::identity()));
    }
    let k = cam.skew / cam.fy;
    let mut out = cam.clone();
    out.skew = 0.0;
    out.cx = cam.cx - k * cam.cy;
    let warp = Matrix3::new(1.0, -k, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    Ok((out, warp))
}

/// Shear matrix `S` that recombines with a corrected camera into the
/// original intrinsics.
pub fn shear(cam: &PinholeCamera) -> Matrix3<f64> {
    Matrix3::new(1.0, cam.skew / cam.fy, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
}

/// Resamples `img` under the forward pixel map `warp` by inverse mapping and
/// bilinear interpolation. Output pixels whose source falls outside the
/// image are NaN.
pub fn warp_image(img: &Raster<f32>, warp: &Matrix3<f64>) -> Result<Raster<f32>> {
    let det = warp.determinant();
    let inv = warp
        .try_inverse()
        .filter(|_| det.is_finite() && det.abs() > 1e-12 * warp.amax().powi(3))
        .ok_or_else(|| Error::invalid("warp is not invertible"))?;
    let width = img.width();
    let mut data = vec![f32::NAN; width * img.height()];
    data.par_chunks_mut(width.max(1)).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let s = inv * Vector3::new(x as f64, y as f64, 1.0);
            if s.z == 0.0 {
                continue;
            }
            let (u, v) = (s.x / s.z, s.y / s.z);
            if let Some(val) = img.bilinear64(u, v) {
                *out = val;
            }
        }
    });
    Raster::from_vec(width, img.height(), data)
}
