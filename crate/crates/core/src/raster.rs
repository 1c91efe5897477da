//! Single-channel rasters and the PGM/PFM formats used for images, height
//! maps and cost slices.
//!
//! PFM files are little-endian float32 with rows stored bottom-to-top, as
//! the format requires; in memory row 0 is always the top row. No-data is NaN.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T = f32> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!("raster data length {} does not match {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_size<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Raster<f32> {
    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integers). Neighbors with zero weight are not read, so sampling exactly
    /// on a pixel returns that pixel bit-for-bit. `None` when outside the
    /// image or when a contributing neighbor is no-data.
    #[inline]
    pub fn bilinear(&self, u: f32, v: f32) -> Option<f32> {
        self.bilinear64(u as f64, v as f64)
    }

    /// Bilinear sample at `(u, v)` given in double precision. Neighbors with
    /// zero weight are not read, so samples on integer coordinates and
    /// constant regions are exact.
    pub fn bilinear64(&self, u: f64, v: f64) -> Option<f32> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        if u > (self.width - 1) as f64 || v > (self.height - 1) as f64 {
            return None;
        }
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let fx = (u - x0 as f64) as f32;
        let fy = (v - y0 as f64) as f32;
        let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
        let row = |y: usize| {
            let a = self.get(x0, y);
            if fx > 0.0 {
                lerp(a, self.get(x0 + 1, y), fx)
            } else {
                a
            }
        };
        let top = row(y0);
        let out = if fy > 0.0 { lerp(top, row(y0 + 1), fy) } else { top };
        out.is_finite().then_some(out)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_finite()).count()
    }
}

fn read_header_token<R: BufRead>(r: &mut R) -> std::io::Result<String> {
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    Ok(String::from_utf8_lossy(&token).into_owned())
}

/// Image read from disk along with the nominal maximum of its encoding.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub raster: Raster<f32>,
    /// 255 or 65535 for PGM; the largest finite value for PFM.
    pub nominal_max: f32,
}

/// Reads a binary PGM (8- or 16-bit) or a grayscale PFM.
pub fn read_image(path: &Path) -> Result<LoadedImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = read_header_token(&mut r)?;
    match magic.as_str() {
        "P5" => read_pgm_body(&mut r, path),
        "Pf" => {
            let raster = read_pfm_body(&mut r, path)?;
            let nominal_max = raster.data().iter().copied().filter(|v| v.is_finite()).fold(0.0_f32, f32::max);
            Ok(LoadedImage { raster, nominal_max })
        }
        other => Err(Error::format("image", path, format!("unsupported magic `{other}`"))),
    }
}

fn parse_dims<R: BufRead>(r: &mut R, path: &Path, kind: &'static str) -> Result<(usize, usize)> {
    let w = read_header_token(r)?;
    let h = read_header_token(r)?;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(kind, path, format!("bad dimension `{s}`")));
    let (w, h) = (parse(&w)?, parse(&h)?);
    if w == 0 || h == 0 {
        return Err(Error::format(kind, path, "zero-sized image"));
    }
    Ok((w, h))
}

fn read_pgm_body<R: BufRead>(r: &mut R, path: &Path) -> Result<LoadedImage> {
    let (w, h) = parse_dims(r, path, "PGM")?;
    let maxval: u32 = read_header_token(r)?.parse().map_err(|_| Error::format("PGM", path, "bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PGM", path, format!("maxval {maxval} out of range")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let mut buf = vec![0u8; w * h * bytes_per];
    r.read_exact(&mut buf).map_err(|_| Error::format("PGM", path, "truncated pixel data"))?;
    let data = if bytes_per == 1 {
        buf.iter().map(|&b| b as f32).collect()
    } else {
        buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32).collect()
    };
    Ok(LoadedImage { raster: Raster::from_vec(w, h, data)?, nominal_max: maxval as f32 })
}

fn read_pfm_body<R: BufRead>(r: &mut R, path: &Path) -> Result<Raster<f32>> {
    let (w, h) = parse_dims(r, path, "PFM")?;
    let scale: f32 = read_header_token(r)?.parse().map_err(|_| Error::format("PFM", path, "bad scale"))?;
    let mut buf = vec![0u8; w * h * 4];
    r.read_exact(&mut buf).map_err(|_| Error::format("PFM", path, "truncated pixel data"))?;
    let little = scale < 0.0;
    let mut data = vec![0.0f32; w * h];
    for (i, c) in buf.chunks_exact(4).enumerate() {
        let v = if little { f32::from_le_bytes([c[0], c[1], c[2], c[3]]) } else { f32::from_be_bytes([c[0], c[1], c[2], c[3]]) };
        let (file_row, x) = (i / w, i % w);
        data[(h - 1 - file_row) * w + x] = v;
    }
    Raster::from_vec(w, h, data)
}

pub fn read_pfm(path: &Path) -> Result<Raster<f32>> {
    let img = read_image(path)?;
    Ok(img.raster)
}

pub fn write_pfm(path: &Path, raster: &Raster<f32>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "Pf\n{} {}\n-1.0\n", raster.width(), raster.height())?;
    for y in (0..raster.height()).rev() {
        for &v in raster.row(y) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_pgm8(path: &Path, raster: &Raster<u8>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", raster.width(), raster.height())?;
    out.write_all(raster.data())?;
    out.flush()?;
    Ok(())
}

pub fn write_pgm16(path: &Path, raster: &Raster<u16>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", raster.width(), raster.height())?;
    for &v in raster.data() {
        out.write_all(&v.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_on_grid_is_exact() {
        let r = Raster::from_fn(4, 3, |x, y| (x * 10 + y) as f32 + 0.125);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(r.bilinear(x as f32, y as f32), Some(r.get(x, y)));
            }
        }
        assert_eq!(r.bilinear(0.5, 0.0), Some(5.125));
        assert_eq!(r.bilinear(3.01, 0.0), None);
        assert_eq!(r.bilinear(-0.01, 0.0), None);
    }

    #[test]
    fn bilinear_ignores_zero_weight_nodata() {
        let mut r = Raster::filled(3, 3, 1.0f32);
        r.set(2, 1, f32::NAN);
        assert_eq!(r.bilinear(1.0, 1.0), Some(1.0));
        assert_eq!(r.bilinear(1.5, 1.0), None);
    }

    #[test]
    fn pfm_round_trip_preserves_orientation_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pfm");
        let mut r = Raster::from_fn(5, 3, |x, y| (y * 5 + x) as f32 * 0.5);
        r.set(1, 2, f32::NAN);
        write_pfm(&path, &r).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"Pf\n5 3\n-1.0\n"));
        // first stored row is the bottom one
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, r.get(0, 2));
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.width(), 5);
        for (a, b) in back.data().iter().zip(r.data()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn pgm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.pgm");
        let r = Raster::from_fn(4, 2, |x, y| (x * 1000 + y * 30000) as u16);
        write_pgm16(&path, &r).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.nominal_max, 65535.0);
        assert_eq!(img.raster.get(3, 1), 33000.0);
    }

    #[test]
    fn pgm_header_comments_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# made by hand\n2 1\n255\n\x01\x02").unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.raster.data(), &[1.0, 2.0]);
        std::fs::write(&path, b"P5\n2 2\n255\n\x01").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format { .. })));
        assert!(matches!(read_image(&dir.path().join("nope.pgm")), Err(Error::MissingFile(_))));
    }
}
