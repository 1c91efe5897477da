use crate::error::{Error, Result};
use crate::raster::Raster;

/// Census signatures: bit `b` is set when the `b`-th window neighbor (row
/// major, center skipped) is darker than the center. Pixels whose window
/// leaves the image or touches no-data are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusImage {
    width: usize,
    height: usize,
    bits: Vec<u64>,
    valid: Vec<bool>,
    num_bits: u32,
}

impl CensusImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_bits(&self) -> u32 {
        self.num_bits
    }

    pub fn get(&self, x: usize, y: usize) -> Option<u64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.bits[i])
    }

    /// Normalized Hamming distance to another signature image, or `None`
    /// where either side is invalid.
    #[inline]
    pub fn cost(&self, other: &CensusImage, i: usize) -> Option<f32> {
        (self.valid[i] && other.valid[i]).then(|| (self.bits[i] ^ other.bits[i]).count_ones() as f32 / self.num_bits as f32)
    }
}

pub(crate) fn check_window(window: (usize, usize)) -> Result<()> {
    let (w, h) = window;
    if w % 2 == 0 || h % 2 == 0 || w == 0 || h == 0 {
        return Err(Error::invalid(format!("census window {w}x{h} must have odd dimensions")));
    }
    if w * h - 1 > 64 || w * h < 2 {
        return Err(Error::invalid(format!("census window {w}x{h} must have between 1 and 64 neighbors")));
    }
    Ok(())
}

pub fn census_transform(img: &Raster<f32>, window: (usize, usize)) -> Result<CensusImage> {
    check_window(window)?;
    let (w, h) = window;
    if w > img.width() || h > img.height() {
        return Err(Error::invalid(format!("census window {w}x{h} larger than image {}x{}", img.width(), img.height())));
    }
    let (rx, ry) = (w / 2, h / 2);
    let (width, height) = (img.width(), img.height());
    let mut bits = vec![0u64; width * height];
    let mut valid = vec![false; width * height];
    let data = img.data();
    for y in ry..height - ry {
        'pixel: for x in rx..width - rx {
            let center = data[y * width + x];
            if !center.is_finite() {
                continue;
            }
            let mut sig = 0u64;
            for wy in y - ry..=y + ry {
                let row = &data[wy * width..(wy + 1) * width];
                for (wx, &n) in row.iter().enumerate().take(x + rx + 1).skip(x - rx) {
                    if wx == x && wy == y {
                        continue;
                    }
                    if !n.is_finite() {
                        continue 'pixel;
                    }
                    sig = (sig << 1) | u64::from(n < center);
                }
            }
            bits[y * width + x] = sig;
            valid[y * width + x] = true;
        }
    }
    Ok(CensusImage { width, height, bits, valid, num_bits: (w * h - 1) as u32 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_bits() {
        let c = census_transform(&Raster::filled(9, 9, 3.0f32), (3, 3)).unwrap();
        assert_eq!(c.get(4, 4), Some(0));
        assert_eq!(c.get(0, 4), None);
    }

    #[test]
    fn affine_invariance() {
        let img = Raster::from_fn(20, 15, |x, y| ((x * 7 + y * 13) % 11) as f32);
        let other = img.map(|v| 2.0 * v + 3.0);
        assert_eq!(census_transform(&img, (5, 5)).unwrap(), census_transform(&other, (5, 5)).unwrap());
    }

    #[test]
    fn hand_enumerated_ramp() {
        // 5x5 image with value x + 10 y; at (2, 2) center = 22.
        let img = Raster::from_fn(5, 5, |x, y| (x + 10 * y) as f32);
        let c = census_transform(&img, (3, 3)).unwrap();
        // neighbors row-major: 11 12 13 | 21 . 23 | 31 32 33
        // darker than 22:        1  1  1 |  1    0 |  0  0  0
        assert_eq!(c.get(2, 2), Some(0b1111_0000));
        assert_eq!(c.get(1, 1), Some(0b1111_0000));
        assert_eq!(c.num_bits(), 8);
    }

    #[test]
    fn no_data_invalidates_window() {
        let mut img = Raster::from_fn(7, 7, |x, y| (x * y) as f32);
        img.set(3, 3, f32::NAN);
        let c = census_transform(&img, (3, 3)).unwrap();
        assert_eq!(c.get(2, 2), None);
        assert_eq!(c.get(4, 4), None);
        assert!(c.get(5, 5).is_some());
    }

    #[test]
    fn bad_windows() {
        let img = Raster::filled(5, 5, 0.0f32);
        assert!(census_transform(&img, (4, 3)).is_err());
        assert!(census_transform(&img, (7, 7)).is_err());
        assert!(census_transform(&Raster::filled(20, 20, 0.0f32), (9, 9)).is_err());
    }
}
