use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, SMatrix, Vector3};
use rayon::prelude::*;

use super::{homogeneous, PinholeCamera};
use crate::error::{Error, Result};
use crate::geodesy::EnuPoint;
use crate::rpc::PixelPoint;

/// Condition ratio of the normalized design matrix above which the sample
/// set is treated as degenerate.
const MAX_CONDITION: f64 = 1e12;
const CHUNK: usize = 2048;

/// 3x4 projection matrix in ENU meters, canonically scaled: the largest
/// magnitude entry of the left 3x3 block is 1 and that block has a positive
/// determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix34(Matrix3x4<f64>);

impl ProjectionMatrix34 {
    pub fn new(p: Matrix3x4<f64>) -> Result<Self> {
        let left = p.fixed_view::<3, 3>(0, 0).into_owned();
        let det = left.determinant();
        let scale = left.amax();
        if !det.is_finite() || scale == 0.0 || (det / scale.powi(3)).abs() < 1e-15 {
            return Err(Error::degenerate("left 3x3 block of projection is singular"));
        }
        let s = if det > 0.0 { scale } else { -scale };
        Ok(ProjectionMatrix34(p / s))
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    pub fn project(&self, x: &EnuPoint) -> PixelPoint {
        let h = self.0 * homogeneous(x);
        PixelPoint::new(h.x / h.z, h.y / h.z)
    }
}

/// Result of a DLT fit.
#[derive(Debug, Clone)]
pub struct DltFit {
    pub projection: ProjectionMatrix34,
    pub max_error_px: f64,
    pub mean_error_px: f64,
}

fn normalizing_3d(points: &[(EnuPoint, PixelPoint)]) -> Matrix4<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |acc, (x, _)| acc + x) / n;
    let mean_dist = points.iter().map(|(x, _)| (x - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { 3f64.sqrt() / mean_dist } else { 1.0 };
    Matrix4::new(s, 0.0, 0.0, -s * c.x, 0.0, s, 0.0, -s * c.y, 0.0, 0.0, s, -s * c.z, 0.0, 0.0, 0.0, 1.0)
}

fn normalizing_2d(points: &[(EnuPoint, PixelPoint)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(PixelPoint::zeros(), |acc, (_, u)| acc + u) / n;
    let mean_dist = points.iter().map(|(_, u)| (u - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { 2f64.sqrt() / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Upper triangular factor of the normalized design rows for one chunk of
/// correspondences.
fn chunk_r(chunk: &[(EnuPoint, PixelPoint)], t3: &Matrix4<f64>, t2: &Matrix3<f64>) -> SMatrix<f64, 12, 12> {
    let mut a = DMatrix::<f64>::zeros(2 * chunk.len().max(6), 12);
    for (i, (x, u)) in chunk.iter().enumerate() {
        let xn = t3 * homogeneous(x);
        let un = t2 * Vector3::new(u.x, u.y, 1.0);
        let (un_x, un_y) = (un.x / un.z, un.y / un.z);
        for j in 0..4 {
            a[(2 * i, j)] = xn[j];
            a[(2 * i, 8 + j)] = -un_x * xn[j];
            a[(2 * i + 1, 4 + j)] = xn[j];
            a[(2 * i + 1, 8 + j)] = -un_y * xn[j];
        }
    }
    let r = a.qr().r();
    SMatrix::<f64, 12, 12>::from_fn(|i, j| if i < r.nrows() { r[(i, j)] } else { 0.0 })
}

/// Fits a projection matrix to 3D-2D correspondences by normalized DLT.
///
/// The design matrix is reduced chunk by chunk with QR, so memory stays
/// bounded for large sample grids, and the fit is the right singular vector
/// of the final triangular factor.
pub fn fit_projection_dlt(correspondences: &[(EnuPoint, PixelPoint)]) -> Result<DltFit> {
    if correspondences.len() < 6 {
        return Err(Error::InsufficientData(format!("DLT needs at least 6 correspondences, got {}", correspondences.len())));
    }
    if correspondences.iter().any(|(x, u)| !x.iter().chain(u.iter()).all(|v| v.is_finite())) {
        return Err(Error::invalid("non-finite correspondence"));
    }
    let t3 = normalizing_3d(correspondences);
    let t2 = normalizing_2d(correspondences);

    let partial: Vec<_> = correspondences.par_chunks(CHUNK).map(|c| chunk_r(c, &t3, &t2)).collect();
    let mut r = partial[0];
    for next in &partial[1..] {
        let mut stacked = DMatrix::<f64>::zeros(24, 12);
        stacked.view_mut((0, 0), (12, 12)).copy_from(&r);
        stacked.view_mut((12, 0), (12, 12)).copy_from(next);
        let q = stacked.qr().r();
        r = SMatrix::<f64, 12, 12>::from_fn(|i, j| q[(i, j)]);
    }

    let svd = r.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::degenerate("SVD failed"))?;
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[10]];
    if !(second_smallest > 0.0) || largest / second_smallest > MAX_CONDITION {
        return Err(Error::degenerate(format!(
            "design matrix condition {:.3e} exceeds {MAX_CONDITION:e}; samples may be coplanar",
            largest / second_smallest
        )));
    }
    let h = v_t.row(order[11]);
    let pn = Matrix3x4::from_fn(|i, j| h[4 * i + j]);
    let t2_inv = t2.try_inverse().ok_or_else(|| Error::degenerate("pixel normalization is singular"))?;
    let projection = ProjectionMatrix34::new(t2_inv * pn * t3)?;

    let errors: Vec<f64> = correspondences.par_iter().map(|(x, u)| (projection.project(x) - u).norm()).collect();
    let max_error_px = errors.iter().copied().fold(0.0, f64::max);
    let mean_error_px = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(DltFit { projection, max_error_px, mean_error_px })
}

/// Factors a projection matrix into `K[R t]` with a positive-diagonal upper
/// triangular `K` (normalized to `K[2][2] = 1`) and a proper rotation `R`.
pub fn factorize_projection(p: &ProjectionMatrix34, width: usize, height: usize) -> Result<PinholeCamera> {
    let m = p.matrix().fixed_view::<3, 3>(0, 0).into_owned();
    let mut p4 = p.matrix().column(3).into_owned();

    // RQ via QR of the row-reversed transpose.
    let flip = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    let qr = (flip * m).transpose().qr();
    let mut k = flip * qr.r().transpose() * flip;
    let mut rot = flip * qr.q().transpose();

    let signs = Matrix3::from_diagonal(&Vector3::from_fn(|i, _| if k[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    k *= signs;
    rot = signs * rot;
    if rot.determinant() < 0.0 {
        rot = -rot;
        p4 = -p4;
    }
    if k.diagonal().iter().any(|&d| d == 0.0) {
        return Err(Error::degenerate("left 3x3 block of projection is singular"));
    }
    let t = k.solve_upper_triangular(&p4).ok_or_else(|| Error::degenerate("singular intrinsics"))?;
    let k = k / k[(2, 2)];
    let k = Matrix3::new(k[(0, 0)], k[(0, 1)], k[(0, 2)], 0.0, k[(1, 1)], k[(1, 2)], 0.0, 0.0, 1.0);
    PinholeCamera::from_krt(&k, rot, t, width, height)
}
