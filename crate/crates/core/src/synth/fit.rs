use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use super::PushbroomCamera;
use crate::error::{Error, Result};
use crate::geodesy::{BoundingCube, EnuFrame, EnuPoint, GeodeticPoint};
use crate::rpc::{basis, RpcCamera, NUM_TERMS};

/// Fits above this residual are refused: the cube is too large for a
/// rational-cubic model of the camera.
pub const RPC_FIT_LIMIT_PX: f64 = 0.01;

const FIT_STEPS: usize = 14;
const REWEIGHT_PASSES: usize = 3;

#[derive(Debug, Clone)]
pub struct RpcFit {
    pub rpc: RpcCamera,
    /// Worst residual over the fitting grid and an interleaved check grid.
    pub max_residual_px: f64,
    pub mean_residual_px: f64,
}

fn grid_points(cube: &BoundingCube, steps: usize, offset: f64) -> Vec<EnuPoint> {
    let n = steps + 1;
    let axis = |a: usize, i: usize| cube.min[a] + cube.extent(a) * ((i as f64 + offset) / steps as f64).min(1.0);
    let count = if offset > 0.0 { steps } else { n };
    (0..count * count * count)
        .map(|i| EnuPoint::new(axis(0, i % count), axis(1, (i / count) % count), axis(2, i / (count * count))))
        .collect()
}

fn project_all(cam: &PushbroomCamera, frame: &EnuFrame, pts: &[EnuPoint]) -> Result<Vec<(GeodeticPoint, Vector3<f64>)>> {
    pts.par_iter()
        .map(|p| {
            let pix = cam.project(p)?;
            Ok((frame.enu_to_geodetic(p), Vector3::new(pix.x, pix.y, 0.0)))
        })
        .collect()
}

/// One ratio `num / den` with `den[0] = 1`, by iteratively reweighted linear
/// least squares on `num - target * den = 0`.
fn fit_ratio(rows: &[[f64; NUM_TERMS]], target: &[f64]) -> Result<([f64; NUM_TERMS], [f64; NUM_TERMS])> {
    let n = rows.len();
    let unknowns = 2 * NUM_TERMS - 1;
    let mut weights = vec![1.0; n];
    let mut num = [0.0; NUM_TERMS];
    let mut den = [0.0; NUM_TERMS];
    den[0] = 1.0;
    for _ in 0..REWEIGHT_PASSES {
        let mut a = DMatrix::zeros(n, unknowns);
        let mut b = DVector::zeros(n);
        for (i, (row, &t)) in rows.iter().zip(target).enumerate() {
            let w = weights[i];
            for k in 0..NUM_TERMS {
                a[(i, k)] = w * row[k];
            }
            for k in 1..NUM_TERMS {
                a[(i, NUM_TERMS + k - 1)] = -w * t * row[k];
            }
            b[i] = w * t;
        }
        let svd = a.svd(true, true);
        let cutoff = svd.singular_values.max() * 1e-12;
        let x = svd.solve(&b, cutoff).map_err(|e| Error::degenerate(format!("RPC fit: {e}")))?;
        num.copy_from_slice(&x.as_slice()[..NUM_TERMS]);
        den[1..].copy_from_slice(&x.as_slice()[NUM_TERMS..]);
        for (w, row) in weights.iter_mut().zip(rows) {
            let d: f64 = den.iter().zip(row).map(|(c, m)| c * m).sum();
            if d.abs() < 1e-6 {
                return Err(Error::degenerate("RPC fit produced a vanishing denominator"));
            }
            *w = 1.0 / d.abs();
        }
    }
    Ok((num, den))
}

/// Least-squares RPC for `cam` over `cube`.
///
/// Normalization constants come from the sample extents; the 78 free
/// coefficients are fitted on a regular grid and the residual is measured
/// on that grid plus an interleaved one.
pub fn fit_rpc(cam: &PushbroomCamera, cube: &BoundingCube, frame: &EnuFrame) -> Result<RpcFit> {
    let fit = project_all(cam, frame, &grid_points(cube, FIT_STEPS, 0.0))?;
    let check = project_all(cam, frame, &grid_points(cube, FIT_STEPS, 0.5))?;

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (g, _) in &fit {
        for (i, v) in [g.lat, g.lon, g.alt].into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let half = |i: usize| {
        let s = (hi[i] - lo[i]) / 2.0;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let mut rpc = RpcCamera {
        rows: cam.height,
        cols: cam.width,
        line_num: [0.0; NUM_TERMS],
        line_den: [0.0; NUM_TERMS],
        samp_num: [0.0; NUM_TERMS],
        samp_den: [0.0; NUM_TERMS],
        lat_off: (lo[0] + hi[0]) / 2.0,
        lat_scale: half(0),
        lon_off: (lo[1] + hi[1]) / 2.0,
        lon_scale: half(1),
        alt_off: (lo[2] + hi[2]) / 2.0,
        alt_scale: half(2),
        row_off: (cam.height as f64 - 1.0) / 2.0,
        row_scale: cam.height as f64 / 2.0,
        col_off: (cam.width as f64 - 1.0) / 2.0,
        col_scale: cam.width as f64 / 2.0,
    };

    let rows: Vec<[f64; NUM_TERMS]> = fit
        .iter()
        .map(|(g, _)| {
            let n = rpc.normalize(g);
            basis(n.x, n.y, n.z)
        })
        .collect();
    let cols_t: Vec<f64> = fit.iter().map(|(_, p)| (p.x - rpc.col_off) / rpc.col_scale).collect();
    let rows_t: Vec<f64> = fit.iter().map(|(_, p)| (p.y - rpc.row_off) / rpc.row_scale).collect();
    (rpc.samp_num, rpc.samp_den) = fit_ratio(&rows, &cols_t)?;
    (rpc.line_num, rpc.line_den) = fit_ratio(&rows, &rows_t)?;
    rpc.validate()?;

    let mut max = 0.0f64;
    let mut sum = 0.0;
    for (g, want) in fit.iter().chain(&check) {
        let got = rpc.project(g)?;
        let e = ((got.x - want.x).powi(2) + (got.y - want.y).powi(2)).sqrt();
        max = max.max(e);
        sum += e;
    }
    let mean = sum / (fit.len() + check.len()) as f64;
    if !(max <= RPC_FIT_LIMIT_PX) {
        return Err(Error::Degenerate(format!("RPC fit residual {max:.4} px exceeds {RPC_FIT_LIMIT_PX} px")));
    }
    Ok(RpcFit { rpc, max_residual_px: max, mean_residual_px: mean })
}

#[cfg(test)]
mod tests {
    use super::super::ViewGeometry;
    use super::*;
    use crate::geodesy::GeodeticPoint;

    fn frame() -> EnuFrame {
        EnuFrame::new(GeodeticPoint::new(-34.49, -58.59, 0.0).unwrap())
    }

    fn cube() -> BoundingCube {
        BoundingCube::new([-250.0, -250.0, 0.0], [250.0, 250.0, 100.0]).unwrap()
    }

    fn wide_view(g: ViewGeometry) -> ViewGeometry {
        ViewGeometry { width: 2000, height: 2000, ..g }
    }

    #[test]
    fn pinhole_special_case() {
        let g = wide_view(ViewGeometry {
            off_nadir_deg: 12.0,
            azimuth_deg: 70.0,
            line_time_s: 0.0,
            angular_rate: [0.0; 3],
            ..Default::default()
        });
        let cam = PushbroomCamera::looking_at(&EnuPoint::new(0.0, 0.0, 50.0), &g).unwrap();
        let fit = fit_rpc(&cam, &cube(), &frame()).unwrap();
        assert!(fit.max_residual_px < 1e-3, "{}", fit.max_residual_px);
    }

    #[test]
    fn standard_orbit_fits() {
        let g = wide_view(ViewGeometry { off_nadir_deg: 20.0, azimuth_deg: 200.0, ..Default::default() });
        let cam = PushbroomCamera::looking_at(&EnuPoint::new(0.0, 0.0, 50.0), &g).unwrap();
        let fit = fit_rpc(&cam, &cube(), &frame()).unwrap();
        assert!(fit.max_residual_px < 0.01, "{}", fit.max_residual_px);
        let p = EnuPoint::new(123.0, -77.0, 33.0);
        let want = cam.project(&p).unwrap();
        let got = fit.rpc.project(&frame().enu_to_geodetic(&p)).unwrap();
        assert!((want - got).norm() < 0.01);
    }

    #[test]
    fn cube_behind_camera_rejected() {
        let cam = PushbroomCamera::looking_at(&EnuPoint::zeros(), &ViewGeometry::default()).unwrap();
        let behind = BoundingCube::new([-10.0, -10.0, 700_000.0], [10.0, 10.0, 700_100.0]).unwrap();
        assert!(fit_rpc(&cam, &behind, &frame()).is_err());
    }
}
