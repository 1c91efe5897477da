//! Rational polynomial camera model.
//!
//! Each image coordinate is the ratio of two cubic polynomials in normalized
//! (latitude, longitude, altitude). Coefficients are stored in the RPC00B
//! monomial order, with `x = latitude`, `y = longitude`, `z = altitude`
//! after normalization:
//!
//! ```text
//!  0: 1      1: x      2: y      3: z      4: xy
//!  5: xz     6: yz     7: x²     8: y²     9: z²
//! 10: xyz   11: x³    12: xy²   13: xz²   14: x²y
//! 15: y³    16: yz²   17: x²z   18: y²z   19: z³
//! ```
//!
//! `samp` polynomials give the column `u`, `line` polynomials the row `v`.
//! Pixel centers sit at integer coordinates; a pixel is inside the image when
//! `0 <= u <= cols - 1` and `0 <= v <= rows - 1`.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, SMatrix, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{BoundingCube, EnuFrame, EnuPoint, GeodeticPoint};

/// Pixel coordinates `(u, v)` = (column, row).
pub type PixelPoint = Vector2<f64>;

pub const NUM_TERMS: usize = 20;

/// Monomial values in RPC00B order.
pub fn basis(x: f64, y: f64, z: f64) -> [f64; NUM_TERMS] {
    [
        1.0,
        x,
        y,
        z,
        x * y,
        x * z,
        y * z,
        x * x,
        y * y,
        z * z,
        x * y * z,
        x * x * x,
        x * y * y,
        x * z * z,
        x * x * y,
        y * y * y,
        y * z * z,
        x * x * z,
        y * y * z,
        z * z * z,
    ]
}

/// Nested evaluation of a cubic in RPC00B order.
#[inline]
pub fn eval_poly(c: &[f64; NUM_TERMS], x: f64, y: f64, z: f64) -> f64 {
    let no_x = c[0] + z * (c[3] + z * (c[9] + z * c[19])) + y * (c[2] + z * (c[6] + z * c[16]) + y * (c[8] + z * c[18] + y * c[15]));
    let with_x = c[1] + z * (c[5] + z * c[13]) + y * (c[4] + z * c[10] + y * c[12]) + x * (c[7] + y * c[14] + z * c[17] + x * c[11]);
    no_x + x * with_x
}

/// Gradient of the cubic with respect to (x, y, z).
#[inline]
pub fn eval_poly_grad(c: &[f64; NUM_TERMS], x: f64, y: f64, z: f64) -> [f64; 3] {
    let dx = c[1]
        + c[4] * y
        + c[5] * z
        + 2.0 * c[7] * x
        + c[10] * y * z
        + 3.0 * c[11] * x * x
        + c[12] * y * y
        + c[13] * z * z
        + 2.0 * c[14] * x * y
        + 2.0 * c[17] * x * z;
    let dy = c[2]
        + c[4] * x
        + c[6] * z
        + 2.0 * c[8] * y
        + c[10] * x * z
        + 2.0 * c[12] * x * y
        + c[14] * x * x
        + 3.0 * c[15] * y * y
        + c[16] * z * z
        + 2.0 * c[18] * y * z;
    let dz = c[3]
        + c[5] * x
        + c[6] * y
        + 2.0 * c[9] * z
        + c[10] * x * y
        + 2.0 * c[13] * x * z
        + 2.0 * c[16] * y * z
        + c[17] * x * x
        + c[18] * y * y
        + 3.0 * c[19] * z * z;
    [dx, dy, dz]
}

const MIN_DENOMINATOR: f64 = 1e-12;

/// An RPC camera. Field names follow the JSON sidecar format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcCamera {
    pub rows: usize,
    pub cols: usize,
    pub line_num: [f64; NUM_TERMS],
    pub line_den: [f64; NUM_TERMS],
    pub samp_num: [f64; NUM_TERMS],
    pub samp_den: [f64; NUM_TERMS],
    pub lat_off: f64,
    pub lat_scale: f64,
    pub lon_off: f64,
    pub lon_scale: f64,
    pub alt_off: f64,
    pub alt_scale: f64,
    pub row_off: f64,
    pub row_scale: f64,
    pub col_off: f64,
    pub col_scale: f64,
}

impl RpcCamera {
    /// Checks the structural invariants: positive scales, unit constant
    /// terms in both denominators, non-empty image.
    pub fn validate(&self) -> Result<()> {
        let scales = [
            ("lat_scale", self.lat_scale),
            ("lon_scale", self.lon_scale),
            ("alt_scale", self.alt_scale),
            ("row_scale", self.row_scale),
            ("col_scale", self.col_scale),
        ];
        for (name, s) in scales {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("RPC {name} must be positive, got {s}")));
            }
        }
        for (name, den) in [("line_den", &self.line_den), ("samp_den", &self.samp_den)] {
            if (den[0] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("RPC {name}[0] must be 1, got {}", den[0])));
            }
        }
        let all = self.line_num.iter().chain(&self.line_den).chain(&self.samp_num).chain(&self.samp_den);
        if all.into_iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("RPC coefficients must be finite"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("RPC image size must be non-zero"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cam: RpcCamera = serde_json::from_str(s)?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let cam: RpcCamera = serde_json::from_str(&text).map_err(|e| Error::format("RPC", path, e.to_string()))?;
        cam.validate().map_err(|e| Error::format("RPC", path, e.to_string()))?;
        Ok(cam)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn normalize(&self, p: &GeodeticPoint) -> Vector3<f64> {
        Vector3::new(
            (p.lat - self.lat_off) / self.lat_scale,
            (p.lon - self.lon_off) / self.lon_scale,
            (p.alt - self.alt_off) / self.alt_scale,
        )
    }

    pub fn denormalize(&self, n: &Vector3<f64>) -> GeodeticPoint {
        GeodeticPoint {
            lat: self.lat_off + self.lat_scale * n.x,
            lon: self.lon_off + self.lon_scale * n.y,
            alt: self.alt_off + self.alt_scale * n.z,
        }
    }

    pub fn in_image(&self, pix: &PixelPoint) -> bool {
        pix.x >= 0.0 && pix.y >= 0.0 && pix.x <= (self.cols - 1) as f64 && pix.y <= (self.rows - 1) as f64
    }

    /// Projection of a normalized ground point.
    pub fn project_normalized(&self, n: &Vector3<f64>) -> Result<PixelPoint> {
        let (x, y, z) = (n.x, n.y, n.z);
        let den_u = eval_poly(&self.samp_den, x, y, z);
        let den_v = eval_poly(&self.line_den, x, y, z);
        if den_u.abs() < MIN_DENOMINATOR || den_v.abs() < MIN_DENOMINATOR {
            return Err(Error::degenerate(format!("RPC denominator vanishes at normalized ({x:.4}, {y:.4}, {z:.4})")));
        }
        let u = self.col_off + self.col_scale * eval_poly(&self.samp_num, x, y, z) / den_u;
        let v = self.row_off + self.row_scale * eval_poly(&self.line_num, x, y, z) / den_v;
        Ok(PixelPoint::new(u, v))
    }

    /// Projection plus its 2x3 Jacobian with respect to normalized coordinates.
    pub fn project_normalized_with_jacobian(&self, n: &Vector3<f64>) -> Result<(PixelPoint, SMatrix<f64, 2, 3>)> {
        let (x, y, z) = (n.x, n.y, n.z);
        let mut out = PixelPoint::zeros();
        let mut jac = SMatrix::<f64, 2, 3>::zeros();
        let polys = [
            (&self.samp_num, &self.samp_den, self.col_off, self.col_scale),
            (&self.line_num, &self.line_den, self.row_off, self.row_scale),
        ];
        for (row, (num, den, off, scale)) in polys.into_iter().enumerate() {
            let d = eval_poly(den, x, y, z);
            if d.abs() < MIN_DENOMINATOR {
                return Err(Error::degenerate("RPC denominator vanishes"));
            }
            let nv = eval_poly(num, x, y, z);
            let gn = eval_poly_grad(num, x, y, z);
            let gd = eval_poly_grad(den, x, y, z);
            out[row] = off + scale * nv / d;
            for k in 0..3 {
                jac[(row, k)] = scale * (gn[k] * d - nv * gd[k]) / (d * d);
            }
        }
        Ok((out, jac))
    }

    pub fn project(&self, p: &GeodeticPoint) -> Result<PixelPoint> {
        self.project_normalized(&self.normalize(p))
    }
}

pub fn rpc_project(cam: &RpcCamera, p: &GeodeticPoint) -> Result<PixelPoint> {
    cam.project(p)
}

const INVERSE_MAX_ITERS: usize = 100;
const INVERSE_TOL_PX: f64 = 1e-3;

/// Ground point at a given altitude that projects to `pix`.
///
/// Newton iteration on normalized (lat, lon) starting from the RPC offsets.
/// The returned altitude is exactly the one requested.
pub fn rpc_inverse_project(cam: &RpcCamera, pix: &PixelPoint, altitude: f64) -> Result<GeodeticPoint> {
    if !cam.in_image(pix) {
        return Err(Error::OutOfBounds(format!("pixel ({:.3}, {:.3}) outside {}x{} image", pix.x, pix.y, cam.cols, cam.rows)));
    }
    let z = (altitude - cam.alt_off) / cam.alt_scale;
    let mut q = Vector2::new(0.0, 0.0);
    for _ in 0..INVERSE_MAX_ITERS {
        let (proj, jac) = cam.project_normalized_with_jacobian(&Vector3::new(q.x, q.y, z))?;
        let r = pix - proj;
        let residual = r.norm();
        let j2 = Matrix2::new(jac[(0, 0)], jac[(0, 1)], jac[(1, 0)], jac[(1, 1)]);
        let Some(inv) = j2.try_inverse() else {
            return Err(Error::degenerate("RPC Jacobian singular during inverse projection"));
        };
        let step = inv * r;
        q += step;
        if step.norm() < 1e-15 || residual < 1e-11 {
            break;
        }
    }
    let p = Vector3::new(q.x, q.y, z);
    let residual = (pix - cam.project_normalized(&p)?).norm();
    if !(residual <= INVERSE_TOL_PX) {
        return Err(Error::NoConvergence { iterations: INVERSE_MAX_ITERS, residual });
    }
    let mut g = cam.denormalize(&p);
    g.alt = altitude;
    Ok(g)
}

/// Result of multi-view RPC triangulation.
#[derive(Debug, Clone, Copy)]
pub struct RpcTriangulation {
    pub point: GeodeticPoint,
    /// Root-mean-square pixel residual after the fit.
    pub rms: f64,
    /// Set when the normal equations are close to rank deficient (for example
    /// repeated viewpoints), meaning the point is poorly constrained along a ray.
    pub ill_conditioned: bool,
    pub iterations: usize,
}

const LM_MAX_ITERS: usize = 100;
const LM_LAMBDA_INIT: f64 = 1e-3;
/// Ratio of extreme singular values of the metric Jacobian above which the
/// solution is flagged.
const TRIANGULATION_COND_LIMIT: f64 = 1e4;

/// Least-squares intersection of RPC viewing rays by Levenberg–Marquardt on
/// (lat, lon, alt), parameterized in the first camera's normalized
/// coordinates.
pub fn rpc_triangulate(cams: &[&RpcCamera], obs: &[PixelPoint], init: &GeodeticPoint) -> Result<RpcTriangulation> {
    if cams.len() != obs.len() {
        return Err(Error::invalid("camera and observation counts differ"));
    }
    if cams.len() < 2 {
        return Err(Error::InsufficientData("RPC triangulation needs at least two views".into()));
    }
    let base = cams[0];

    let to_geo = |q: &Vector3<f64>| base.denormalize(q);
    // residuals and Jacobian w.r.t. base-normalized parameters
    let evaluate = |q: &Vector3<f64>, with_jac: bool| -> Result<(Vec<f64>, Vec<SMatrix<f64, 2, 3>>)> {
        let g = to_geo(q);
        let mut res = Vec::with_capacity(2 * cams.len());
        let mut jacs = Vec::with_capacity(if with_jac { cams.len() } else { 0 });
        for (cam, o) in cams.iter().zip(obs) {
            let n = cam.normalize(&g);
            if with_jac {
                let (p, j) = cam.project_normalized_with_jacobian(&n)?;
                let chain = Matrix3::from_diagonal(&Vector3::new(
                    base.lat_scale / cam.lat_scale,
                    base.lon_scale / cam.lon_scale,
                    base.alt_scale / cam.alt_scale,
                ));
                jacs.push(j * chain);
                res.extend_from_slice(&[o.x - p.x, o.y - p.y]);
            } else {
                let p = cam.project_normalized(&n)?;
                res.extend_from_slice(&[o.x - p.x, o.y - p.y]);
            }
        }
        Ok((res, jacs))
    };
    let cost_of = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut q = base.normalize(init);
    let (mut res, mut jacs) = evaluate(&q, true)?;
    let initial_cost = cost_of(&res);
    let mut cost = initial_cost;
    let mut lambda = LM_LAMBDA_INIT;
    let mut iterations = 0;

    for it in 0..LM_MAX_ITERS {
        iterations = it + 1;
        let mut h = Matrix3::<f64>::zeros();
        let mut g = Vector3::<f64>::zeros();
        for (k, j) in jacs.iter().enumerate() {
            let r = Vector2::new(res[2 * k], res[2 * k + 1]);
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        if g.norm() < 1e-14 * (1.0 + cost.sqrt()) {
            break;
        }
        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = h;
            for d in 0..3 {
                damped[(d, d)] += lambda * h[(d, d)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = q + step;
            match evaluate(&cand, false) {
                Ok((r_new, _)) if cost_of(&r_new) < cost => {
                    accepted = Some((cand, cost_of(&r_new), step.norm()));
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((cand, new_cost, step_norm)) = accepted else {
            break;
        };
        let improvement = cost - new_cost;
        q = cand;
        cost = new_cost;
        lambda = (lambda / 10.0).max(1e-12);
        (res, jacs) = evaluate(&q, true)?;
        if step_norm < 1e-14 * (1.0 + q.norm()) || improvement <= 1e-15 * cost + 1e-30 {
            break;
        }
    }

    if !cost.is_finite() || cost > 100.0 * initial_cost.max(1e-30) {
        return Err(Error::Diverged(format!("RPC triangulation residual grew from {:.3e} to {:.3e}", initial_cost.sqrt(), cost.sqrt())));
    }

    // conditioning in metric units
    let geo = to_geo(&q);
    let meters_per_unit = Vector3::new(
        base.lat_scale.to_radians() * 6_371_000.0,
        base.lon_scale.to_radians() * 6_371_000.0 * geo.lat.to_radians().cos(),
        base.alt_scale,
    );
    let mut h = Matrix3::<f64>::zeros();
    for j in &jacs {
        let jm = j * Matrix3::from_diagonal(&meters_per_unit.map(|m| 1.0 / m));
        h += jm.transpose() * jm;
    }
    let eig = h.symmetric_eigenvalues();
    let (emin, emax) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let ill_conditioned = !(emin > 0.0) || (emax / emin).sqrt() > TRIANGULATION_COND_LIMIT;

    Ok(RpcTriangulation { point: geo, rms: (cost / cams.len() as f64).sqrt(), ill_conditioned, iterations })
}

/// Projects an `m x m x m` grid spanning `cube` (endpoints included) and keeps
/// the correspondences that land inside the image.
///
/// Output order is deterministic: x varies fastest, then y, then z.
pub fn sample_rpc_grid(cam: &RpcCamera, cube: &BoundingCube, frame: &EnuFrame, m: usize) -> Result<Vec<(EnuPoint, PixelPoint)>> {
    if m < 2 {
        return Err(Error::invalid("grid sampling needs M >= 2"));
    }
    let axis = |a: usize, i: usize| cube.min[a] + (cube.max[a] - cube.min[a]) * i as f64 / (m - 1) as f64;
    let total = m * m * m;
    let samples: Vec<Option<(EnuPoint, PixelPoint)>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (ix, iy, iz) = (idx % m, (idx / m) % m, idx / (m * m));
            let p = EnuPoint::new(axis(0, ix), axis(1, iy), axis(2, iz));
            let pix = cam.project(&frame.enu_to_geodetic(&p))?;
            Ok(cam.in_image(&pix).then_some((p, pix)))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<_> = samples.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::OutOfBounds("no grid sample projects inside the image".into()));
    }
    Ok(kept)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// u = μu + σu·x̂, v = μv + σv·ŷ.
    pub(crate) fn identity_rpc() -> RpcCamera {
        let mut samp_num = [0.0; 20];
        let mut line_num = [0.0; 20];
        let mut den = [0.0; 20];
        samp_num[1] = 1.0;
        line_num[2] = 1.0;
        den[0] = 1.0;
        RpcCamera {
            rows: 2000,
            cols: 2000,
            line_num,
            line_den: den,
            samp_num,
            samp_den: den,
            lat_off: 10.0,
            lat_scale: 0.01,
            lon_off: 20.0,
            lon_scale: 0.02,
            alt_off: 50.0,
            alt_scale: 100.0,
            row_off: 1000.0,
            row_scale: 900.0,
            col_off: 1000.0,
            col_scale: 800.0,
        }
    }

    /// Reference evaluation summing the documented monomial table.
    fn naive_poly(c: &[f64; 20], x: f64, y: f64, z: f64) -> f64 {
        basis(x, y, z).iter().zip(c).map(|(m, k)| m * k).sum()
    }

    #[test]
    fn basis_at_origin() {
        let b = basis(0.0, 0.0, 0.0);
        assert_eq!(b[0], 1.0);
        assert!(b[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nested_matches_monomial_table() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let c: [f64; 20] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (x, y, z) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let a = eval_poly(&c, x, y, z);
            let b = naive_poly(&c, x, y, z);
            let scale: f64 = basis(x, y, z).iter().zip(&c).map(|(m, k)| (m * k).abs()).sum();
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let c: [f64; 20] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let (x, y, z) = (0.3, -0.7, 0.4);
        let g = eval_poly_grad(&c, x, y, z);
        let h = 1e-6;
        let fd = [
            (eval_poly(&c, x + h, y, z) - eval_poly(&c, x - h, y, z)) / (2.0 * h),
            (eval_poly(&c, x, y + h, z) - eval_poly(&c, x, y - h, z)) / (2.0 * h),
            (eval_poly(&c, x, y, z + h) - eval_poly(&c, x, y, z - h)) / (2.0 * h),
        ];
        for k in 0..3 {
            assert!((g[k] - fd[k]).abs() < 1e-8, "{k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn identity_rpc_projection() {
        let cam = identity_rpc();
        let p = GeodeticPoint { lat: cam.lat_off + cam.lat_scale, lon: cam.lon_off, alt: cam.alt_off };
        let pix = cam.project(&p).unwrap();
        assert!((pix.x - (cam.col_off + cam.col_scale)).abs() < 1e-9);
        assert!((pix.y - cam.row_off).abs() < 1e-9);
    }

    #[test]
    fn zero_numerators_project_to_offsets() {
        let mut cam = identity_rpc();
        cam.samp_num = [0.0; 20];
        cam.line_num = [0.0; 20];
        for p in [(10.0, 20.0, 0.0), (10.005, 19.99, 120.0), (9.99, 20.01, -30.0)] {
            let pix = cam.project(&GeodeticPoint { lat: p.0, lon: p.1, alt: p.2 }).unwrap();
            assert_eq!((pix.x, pix.y), (cam.col_off, cam.row_off));
        }
    }

    #[test]
    fn vanishing_denominator_is_an_error() {
        let mut cam = identity_rpc();
        cam.samp_den[1] = -1.0; // den = 1 - x̂
        let p = GeodeticPoint { lat: cam.lat_off + cam.lat_scale, lon: cam.lon_off, alt: 0.0 };
        assert!(matches!(cam.project(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn inverse_matches_closed_form_for_identity_rpc() {
        let cam = identity_rpc();
        for (u, v) in [(1000.0, 1000.0), (1234.5, 321.25), (10.0, 1990.0)] {
            let g = rpc_inverse_project(&cam, &PixelPoint::new(u, v), 77.0).unwrap();
            let lat = cam.lat_off + cam.lat_scale * (u - cam.col_off) / cam.col_scale;
            let lon = cam.lon_off + cam.lon_scale * (v - cam.row_off) / cam.row_scale;
            assert!((g.lat - lat).abs() < 1e-12, "{} vs {lat}", g.lat);
            assert!((g.lon - lon).abs() < 1e-12);
            assert_eq!(g.alt, 77.0);
        }
    }

    #[test]
    fn inverse_rejects_out_of_image_pixels() {
        let cam = identity_rpc();
        let r = rpc_inverse_project(&cam, &PixelPoint::new(-1.0, 10.0), 0.0);
        assert!(matches!(r, Err(Error::OutOfBounds(_))));
        let r = rpc_inverse_project(&cam, &PixelPoint::new(10.0, 2000.0), 0.0);
        assert!(matches!(r, Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn sidecar_json_field_names() {
        let cam = identity_rpc();
        let v = serde_json::to_value(&cam).unwrap();
        for key in [
            "rows",
            "cols",
            "line_num",
            "line_den",
            "samp_num",
            "samp_den",
            "lat_off",
            "lat_scale",
            "lon_off",
            "lon_scale",
            "alt_off",
            "alt_scale",
            "row_off",
            "row_scale",
            "col_off",
            "col_scale",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["samp_num"].as_array().unwrap().len(), 20);
        let back = RpcCamera::from_json_str(&v.to_string()).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn validation_rejects_bad_sidecars() {
        let mut cam = identity_rpc();
        cam.alt_scale = 0.0;
        assert!(cam.validate().is_err());
        let mut cam = identity_rpc();
        cam.line_den[0] = 2.0;
        assert!(cam.validate().is_err());
        let short = r#"{"rows": 1, "cols": 1, "line_num": [1.0]}"#;
        assert!(RpcCamera::from_json_str(short).is_err());
    }

    #[test]
    fn triangulation_needs_two_views() {
        let cam = identity_rpc();
        let r = rpc_triangulate(&[&cam], &[PixelPoint::new(1.0, 1.0)], &cam.denormalize(&Vector3::zeros()));
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }
}
