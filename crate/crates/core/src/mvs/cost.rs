use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::census::{census_transform, check_window, CensusImage};
use super::homography::homography_from_p44;
use super::PlaneSet;
use crate::error::{Error, Result};
use crate::pinhole::ReparamProjection44;
use crate::raster::Raster;

/// Plane-sweep matching costs, stored slice by slice (`[plane][row][col]`).
/// Cells no source could score are NaN with a zero count.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    num_planes: usize,
    costs: Vec<f32>,
    counts: Vec<u8>,
}

impl CostVolume {
    /// Volume from raw costs; cells with a zero count must be NaN and
    /// others must be finite.
    pub fn from_parts(width: usize, height: usize, num_planes: usize, costs: Vec<f32>, counts: Vec<u8>) -> Result<Self> {
        let n = width * height * num_planes;
        if costs.len() != n || counts.len() != n {
            return Err(Error::invalid("cost volume buffers do not match dimensions"));
        }
        if costs.iter().zip(&counts).any(|(c, &k)| (k == 0) != c.is_nan()) {
            return Err(Error::invalid("cost volume validity counts disagree with costs"));
        }
        Ok(CostVolume { width, height, num_planes, costs, counts })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    pub fn slice(&self, k: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.costs[k * n..(k + 1) * n]
    }

    pub fn slice_counts(&self, k: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.counts[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, k: usize) -> f32 {
        self.costs[(k * self.height + y) * self.width + x]
    }

    /// Number of sources that scored the cell.
    #[inline]
    pub fn count(&self, x: usize, y: usize, k: usize) -> u8 {
        self.counts[(k * self.height + y) * self.width + x]
    }

    /// Largest per-plane source count at a pixel.
    pub fn pixel_count(&self, x: usize, y: usize) -> u8 {
        (0..self.num_planes).map(|k| self.count(x, y, k)).max().unwrap_or(0)
    }

    pub fn costs(&self) -> &[f32] {
        &self.costs
    }

    /// Cost slice as a raster (NaN where invalid).
    pub fn slice_raster(&self, k: usize) -> Raster<f32> {
        Raster::from_vec(self.width, self.height, self.slice(k).to_vec()).expect("slice size")
    }

    pub(crate) fn slices_mut(&mut self) -> impl IndexedParallelIterator<Item = (&mut [f32], &[u8])> {
        let n = self.width * self.height;
        self.costs.par_chunks_mut(n).zip(self.counts.par_chunks(n))
    }
}

/// Resamples `src` onto the reference grid through `h` (reference pixel to
/// source pixel), in single precision.
fn back_warp(src: &Raster<f32>, h: &Matrix3<f32>, width: usize, height: usize) -> Raster<f32> {
    Raster::from_fn(width, height, |x, y| {
        let p = h * Vector3::new(x as f32, y as f32, 1.0);
        if p.z == 0.0 {
            return f32::NAN;
        }
        src.bilinear64((p.x / p.z) as f64, (p.y / p.z) as f64).unwrap_or(f32::NAN)
    })
}

/// Single-precision homographies from the reference to one source for
/// every plane.
pub(crate) fn plane_homographies(
    ref_cam: &ReparamProjection44,
    src_cam: &ReparamProjection44,
    planes: &PlaneSet,
) -> Result<Vec<Matrix3<f32>>> {
    planes
        .levels()
        .iter()
        .map(|&z| homography_from_p44(ref_cam.matrix(), src_cam.matrix(), &Vector3::z(), z).map(|h| (h / h.amax()).cast::<f32>()))
        .collect()
}

/// Census plane-sweep cost volume.
///
/// For every plane each source is warped to the reference grid by the
/// plane homography, census-transformed, and compared with the reference
/// census. A cell's cost is the mean normalized Hamming distance over the
/// sources that produced a valid signature there.
pub fn build_cost_volume(
    reference: &Raster<f32>,
    sources: &[Raster<f32>],
    ref_cam: &ReparamProjection44,
    src_cams: &[ReparamProjection44],
    planes: &PlaneSet,
    window: (usize, usize),
) -> Result<CostVolume> {
    if sources.is_empty() {
        return Err(Error::InsufficientData("plane sweep needs at least one source image".into()));
    }
    if sources.len() != src_cams.len() {
        return Err(Error::invalid("source images and cameras differ in number"));
    }
    if sources.len() > u8::MAX as usize {
        return Err(Error::invalid("at most 255 source images are supported"));
    }
    check_window(window)?;
    let (width, height) = (reference.width(), reference.height());
    let ref_census = census_transform(reference, window)?;
    let homographies = src_cams.iter().map(|c| plane_homographies(ref_cam, c, planes)).collect::<Result<Vec<_>>>()?;

    let n = width * height;
    let slices: Vec<Result<(Vec<f32>, Vec<u8>)>> = (0..planes.len())
        .into_par_iter()
        .map(|k| {
            let mut sum = vec![0.0f32; n];
            let mut count = vec![0u8; n];
            for (src, hs) in sources.iter().zip(&homographies) {
                let warped = back_warp(src, &hs[k], width, height);
                let census: CensusImage = census_transform(&warped, window)?;
                for i in 0..n {
                    if let Some(c) = ref_census.cost(&census, i) {
                        sum[i] += c;
                        count[i] += 1;
                    }
                }
            }
            for (s, &c) in sum.iter_mut().zip(&count) {
                *s = if c == 0 { f32::NAN } else { *s / c as f32 };
            }
            Ok((sum, count))
        })
        .collect();

    let mut costs = Vec::with_capacity(n * planes.len());
    let mut counts = Vec::with_capacity(n * planes.len());
    for slice in slices {
        let (c, k) = slice?;
        costs.extend_from_slice(&c);
        counts.extend_from_slice(&k);
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InsufficientData("no source overlaps the reference view on any plane".into()));
    }
    Ok(CostVolume { width, height, num_planes: planes.len(), costs, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinhole::build_reparam_projection;
    use crate::pinhole::tests::satellite_camera;

    fn texture(w: usize, h: usize) -> Raster<f32> {
        Raster::from_fn(w, h, |x, y| {
            let v = ((x as u64 * 2654435761 + y as u64 * 40503) >> 7) % 97;
            v as f32 / 97.0
        })
    }

    #[test]
    fn identical_views_cost_zero() {
        let cam = satellite_camera();
        let p = build_reparam_projection(&cam, -30.0, 650_000.0, 0.0).unwrap();
        let img = texture(40, 30);
        let planes = PlaneSet::uniform(0.0, 100.0, 5).unwrap();
        let cv = build_cost_volume(&img, std::slice::from_ref(&img), &p, &[p], &planes, (5, 5)).unwrap();
        for k in 0..5 {
            for (&c, &n) in cv.slice(k).iter().zip(cv.slice_counts(k)) {
                assert!(n == 0 || c == 0.0);
            }
        }
        assert_eq!(cv.pixel_count(20, 15), 1);
        assert_eq!(cv.pixel_count(0, 0), 0);
        assert!(cv.cost(0, 0, 0).is_nan());
    }

    #[test]
    fn source_out_of_view_is_an_error() {
        let cam = satellite_camera();
        let mut far = satellite_camera();
        far.cx += 1e6;
        let p = build_reparam_projection(&cam, -30.0, 650_000.0, 0.0).unwrap();
        let q = build_reparam_projection(&far, -30.0, 650_000.0, 0.0).unwrap();
        let img = texture(40, 30);
        let planes = PlaneSet::uniform(0.0, 100.0, 3).unwrap();
        let res = build_cost_volume(&img, std::slice::from_ref(&img), &p, &[q], &planes, (5, 5));
        assert!(matches!(res, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn from_parts_checks_consistency() {
        assert!(CostVolume::from_parts(1, 1, 2, vec![0.5, f32::NAN], vec![1, 0]).is_ok());
        assert!(CostVolume::from_parts(1, 1, 2, vec![0.5, 0.0], vec![1, 0]).is_err());
    }
}
