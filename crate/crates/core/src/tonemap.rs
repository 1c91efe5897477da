//! Gamma tonemapping of high-dynamic-range satellite images to 8 bits.

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const GAMMA: f64 = 2.2;
pub const DEFAULT_PERCENTILE: f64 = 99.5;

/// `out = clamp(round(255 s (I / nominal_max)^(1/2.2)))`, where `s` maps the
/// given percentile of the gamma-corrected intensities to 1. Images whose
/// percentile is zero fall back to their maximum; all-zero images map to
/// zero. Non-finite pixels map to zero.
pub fn tonemap(img: &Raster<f32>, nominal_max: f32, percentile: f64) -> Result<Raster<u8>> {
    if !(nominal_max > 0.0) {
        return Err(Error::invalid("nominal maximum must be positive"));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::invalid("percentile must lie in (0, 100]"));
    }
    if img.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("tonemapping needs non-negative intensities"));
    }
    let inv = 1.0 / GAMMA;
    let nominal = nominal_max as f64;
    let corrected: Vec<f64> = img.data().iter().map(|&v| if v.is_finite() { (v as f64 / nominal).powf(inv) } else { f64::NAN }).collect();
    let mut sorted: Vec<f64> = corrected.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let reference = match sorted.len() {
        0 => 0.0,
        n => {
            let rank = ((percentile / 100.0) * n as f64).ceil().max(1.0) as usize;
            let p = sorted[rank.min(n) - 1];
            if p > 0.0 {
                p
            } else {
                sorted[n - 1]
            }
        }
    };
    let out = corrected
        .iter()
        .map(|&g| if reference > 0.0 && g.is_finite() { (255.0 * g / reference).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    Raster::from_vec(img.width(), img.height(), out)
}

/// Linear scaling by the nominal maximum, for comparison.
pub fn linear_scale(img: &Raster<f32>, nominal_max: f32) -> Raster<u8> {
    img.map(|v| if v.is_finite() { (255.0 * v / nominal_max).round().clamp(0.0, 255.0) as u8 } else { 0 })
}
