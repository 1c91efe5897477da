use rayon::prelude::*;

use super::CostVolume;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Summed-area table with an extra leading row and column of zeros.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += f(y * width + x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Integral { width, sums }
    }

    /// Sum over the inclusive box `[x0, x1] x [y0, y1]`.
    #[inline]
    fn boxed(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[(y1 + 1) * s + x1 + 1] - self.sums[y0 * s + x1 + 1] - self.sums[(y1 + 1) * s + x0] + self.sums[y0 * s + x0]
    }
}

/// Guided filter of one slice restricted to valid cells.
///
/// Window statistics use only cells where both the slice and the guide are
/// finite; windows are clipped at the image border. Each valid cell gets
/// `mean(a) I + mean(b)` averaged over the windows covering it that contain
/// at least one valid cell. Invalid cells stay NaN.
pub fn guided_filter_slice(slice: &[f32], guide: &Raster<f32>, radius: usize, eps: f64) -> Vec<f32> {
    let (w, h) = (guide.width(), guide.height());
    let g = guide.data();
    let valid = |i: usize| slice[i].is_finite() && g[i].is_finite();
    let mask = |i: usize| if valid(i) { 1.0 } else { 0.0 };
    let ii = |i: usize| if valid(i) { g[i] as f64 } else { 0.0 };
    let pp = |i: usize| if valid(i) { slice[i] as f64 } else { 0.0 };

    let s_n = Integral::new(w, h, mask);
    let s_i = Integral::new(w, h, ii);
    let s_p = Integral::new(w, h, pp);
    let s_ip = Integral::new(w, h, |i| ii(i) * pp(i));
    let s_ii = Integral::new(w, h, |i| ii(i) * ii(i));

    let bounds =
        |x: usize, y: usize| (x.saturating_sub(radius), y.saturating_sub(radius), (x + radius).min(w - 1), (y + radius).min(h - 1));
    let mut a = vec![0.0f64; w * h];
    let mut b = vec![0.0f64; w * h];
    let mut has = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, y0, x1, y1) = bounds(x, y);
            let n = s_n.boxed(x0, y0, x1, y1);
            if n == 0.0 {
                continue;
            }
            let mean_i = s_i.boxed(x0, y0, x1, y1) / n;
            let mean_p = s_p.boxed(x0, y0, x1, y1) / n;
            let cov = s_ip.boxed(x0, y0, x1, y1) / n - mean_i * mean_p;
            let var = s_ii.boxed(x0, y0, x1, y1) / n - mean_i * mean_i;
            let ak = cov / (var + eps);
            let i = y * w + x;
            a[i] = ak;
            b[i] = mean_p - ak * mean_i;
            has[i] = 1.0;
        }
    }
    let s_a = Integral::new(w, h, |i| a[i]);
    let s_b = Integral::new(w, h, |i| b[i]);
    let s_has = Integral::new(w, h, |i| has[i]);

    let mut out = vec![f32::NAN; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid(i) {
                continue;
            }
            let (x0, y0, x1, y1) = bounds(x, y);
            let n = s_has.boxed(x0, y0, x1, y1);
            let q = (s_a.boxed(x0, y0, x1, y1) * g[i] as f64 + s_b.boxed(x0, y0, x1, y1)) / n;
            out[i] = q as f32;
        }
    }
    out
}

/// Guided-filters every slice of the volume with the reference image as
/// guide, clamping results to the cost range `[0, 1]`.
pub fn filter_cost_volume(cv: &CostVolume, guide: &Raster<f32>, radius: usize, eps: f64) -> Result<CostVolume> {
    if radius < 1 {
        return Err(Error::invalid("guided filter radius must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("guided filter eps must be positive"));
    }
    if guide.width() != cv.width() || guide.height() != cv.height() {
        return Err(Error::invalid("guide and cost volume sizes differ"));
    }
    let mut out = cv.clone();
    out.slices_mut().for_each(|(slice, counts)| {
        let filtered = guided_filter_slice(slice, guide, radius, eps);
        for ((dst, src), &c) in slice.iter_mut().zip(filtered).zip(counts) {
            if c > 0 {
                *dst = if src.is_finite() { src.clamp(0.0, 1.0) } else { *dst };
            }
        }
    });
    Ok(out)
}
