//! Local perspective approximation of satellite cameras.
//!
//! An RPC camera is sampled over the ENU bounding cube, a 3x4 projection is
//! fitted by DLT, and the result is factored into `K[R t]`. Skew is then
//! moved into an image warp so downstream stereo sees zero-skew intrinsics,
//! and a fourth projection row turns depth into height above a reference
//! plane.

mod dlt;
mod reparam;
mod skew;

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub use dlt::{factorize_projection, fit_projection_dlt, DltFit, ProjectionMatrix34};
pub use reparam::{build_reparam_projection, ReparamProjection44};
pub use skew::{shear, skew_correct, warp_image};

use crate::error::{Error, Result};
use crate::geodesy::{BoundingCube, EnuFrame, EnuPoint};
use crate::rpc::{sample_rpc_grid, PixelPoint, RpcCamera};

/// Pinhole camera `K[R t]` in ENU meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
    /// World (ENU) to camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn from_krt(k: &Matrix3<f64>, rotation: Matrix3<f64>, translation: Vector3<f64>, width: usize, height: usize) -> Result<Self> {
        let cam = PinholeCamera {
            fx: k[(0, 0)] / k[(2, 2)],
            fy: k[(1, 1)] / k[(2, 2)],
            skew: k[(0, 1)] / k[(2, 2)],
            cx: k[(0, 2)] / k[(2, 2)],
            cy: k[(1, 2)] / k[(2, 2)],
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        let r = &self.rotation;
        if (r * r.transpose() - Matrix3::identity()).norm() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation is not a proper orthonormal matrix"));
        }
        Ok(())
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Metric projection `K[R t]`: its third output is the conventional depth.
    pub fn projection(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.k() * rt
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Point in camera coordinates.
    pub fn to_camera(&self, x: &EnuPoint) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn depth(&self, x: &EnuPoint) -> f64 {
        self.to_camera(x).z
    }

    /// Projection of a world point; no visibility check.
    pub fn project(&self, x: &EnuPoint) -> PixelPoint {
        let c = self.to_camera(x);
        PixelPoint::new((self.fx * c.x + self.skew * c.y) / c.z + self.cx, self.fy * c.y / c.z + self.cy)
    }

    pub fn in_image(&self, pix: &PixelPoint) -> bool {
        pix.x >= 0.0 && pix.y >= 0.0 && pix.x <= (self.width - 1) as f64 && pix.y <= (self.height - 1) as f64
    }

    /// Unit viewing direction (world frame) through a pixel.
    pub fn ray_direction(&self, pix: &PixelPoint) -> Vector3<f64> {
        let y = (pix.y - self.cy) / self.fy;
        let x = (pix.x - self.cx - self.skew * y) / self.fx;
        (self.rotation.transpose() * Vector3::new(x, y, 1.0)).normalize()
    }
}

/// On-disk camera record. Matrices are row-major.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub K: [[f64; 3]; 3],
    pub R: [[f64; 3]; 3],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub P44: Option<[[f64; 4]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zbar: Option<f64>,
}

fn rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

impl CameraFile {
    pub fn new(cam: &PinholeCamera, reparam: Option<&ReparamProjection44>) -> Self {
        CameraFile {
            K: rows3(&cam.k()),
            R: rows3(&cam.rotation),
            t: [cam.translation.x, cam.translation.y, cam.translation.z],
            width: cam.width,
            height: cam.height,
            P44: reparam.map(|p| std::array::from_fn(|r| std::array::from_fn(|c| p.matrix()[(r, c)]))),
            d: reparam.map(|p| p.plane_offset()),
            zbar: reparam.map(|p| p.mean_depth()),
        }
    }

    pub fn camera(&self) -> Result<PinholeCamera> {
        let k = Matrix3::from_fn(|r, c| self.K[r][c]);
        let rot = Matrix3::from_fn(|r, c| self.R[r][c]);
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] == 0.0 {
            return Err(Error::invalid("K must be upper triangular with K[2][2] != 0"));
        }
        PinholeCamera::from_krt(&k, rot, Vector3::from(self.t), self.width, self.height)
    }

    /// The stored 4x4 projection, if this camera has been prepared for stereo.
    pub fn reparam(&self) -> Result<Option<ReparamProjection44>> {
        match (self.P44, self.d, self.zbar) {
            (Some(p), Some(d), Some(zbar)) => {
                let m = Matrix4::from_fn(|r, c| p[r][c]);
                Ok(Some(ReparamProjection44::from_parts(m, d, zbar)?))
            }
            (None, None, None) => Ok(None),
            _ => Err(Error::invalid("P44, d and zbar must be given together")),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("camera", path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Default number of samples per axis when approximating an RPC.
pub const DEFAULT_GRID_SAMPLES: usize = 100;

/// Pinhole approximation of an RPC camera over a bounding cube.
#[derive(Debug, Clone)]
pub struct RpcApproximation {
    pub projection: ProjectionMatrix34,
    pub camera: PinholeCamera,
    pub max_error_px: f64,
    pub mean_error_px: f64,
    pub num_samples: usize,
    /// Mean conventional depth of the samples; used as a fallback mean depth
    /// before any sparse points exist.
    pub mean_sample_depth: f64,
}

/// Samples the RPC on an `m^3` grid, fits a projection matrix and factors it.
pub fn approximate_rpc(rpc: &RpcCamera, cube: &BoundingCube, frame: &EnuFrame, m: usize) -> Result<RpcApproximation> {
    let samples = sample_rpc_grid(rpc, cube, frame, m)?;
    let fit = fit_projection_dlt(&samples)?;
    let camera = factorize_projection(&fit.projection, rpc.cols, rpc.rows)?;
    let mean_sample_depth = samples.iter().map(|(x, _)| camera.depth(x)).sum::<f64>() / samples.len() as f64;
    Ok(RpcApproximation {
        projection: fit.projection,
        camera,
        max_error_px: fit.max_error_px,
        mean_error_px: fit.mean_error_px,
        num_samples: samples.len(),
        mean_sample_depth,
    })
}

/// Homogeneous 4-vector of an ENU point.
#[inline]
pub(crate) fn homogeneous(x: &EnuPoint) -> Vector4<f64> {
    Vector4::new(x.x, x.y, x.z, 1.0)
}
