use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::HeightMap;
use crate::error::Result;
use crate::geodesy::{EnuFrame, EnuPoint, GeodeticPoint};
use crate::pinhole::ReparamProjection44;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub enu: EnuPoint,
    pub geodetic: Option<GeodeticPoint>,
    /// Reference-image pixel the point came from.
    pub pixel: (usize, usize),
}

/// Lifts every valid height-map pixel to the ENU point on its viewing ray
/// at that height. Geodetic coordinates are filled in when a frame is given.
pub fn heightmap_to_cloud(hm: &HeightMap, refcam: &ReparamProjection44, frame: Option<&EnuFrame>) -> Result<Vec<CloudPoint>> {
    let (w, h) = (hm.heights.width(), hm.heights.height());
    let rows: Vec<Result<Vec<CloudPoint>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in 0..w {
                let z = hm.heights.get(x, y);
                if !z.is_finite() {
                    continue;
                }
                let enu = refcam.unproject_to_height(x as f64, y as f64, z as f64)?;
                let geodetic = frame.map(|f| f.enu_to_geodetic(&enu));
                out.push(CloudPoint { enu, geodetic, pixel: (x, y) });
            }
            Ok(out)
        })
        .collect();
    let mut cloud = Vec::new();
    for r in rows {
        cloud.extend(r?);
    }
    Ok(cloud)
}

/// ASCII PLY with `x y z` in ENU meters. The frame origin, when known, is
/// recorded in the header comments.
pub fn write_ply(path: &Path, cloud: &[CloudPoint], frame: Option<&EnuFrame>) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str("comment coordinates: local ENU meters\n");
    if let Some(f) = frame {
        let o = f.observer();
        let _ = writeln!(out, "comment origin_lat {:.12}\ncomment origin_lon {:.12}\ncomment origin_alt {:.6}", o.lat, o.lon, o.alt);
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud {
        let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.enu.x, p.enu.y, p.enu.z);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the vertices of an ASCII PLY written by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<Vec<EnuPoint>> {
    Ok(read_ply_with_frame(path)?.0)
}

/// Vertices plus the ENU frame recorded in the header, if any.
pub fn read_ply_with_frame(path: &Path) -> Result<(Vec<EnuPoint>, Option<EnuFrame>)> {
    use crate::error::Error;
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let bad = |reason: &str| Error::format("PLY", path, reason);
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing magic"));
    }
    let mut count = None;
    let mut origin = [None; 3];
    for line in lines.by_ref() {
        for (i, key) in ["comment origin_lat ", "comment origin_lon ", "comment origin_alt "].iter().enumerate() {
            if let Some(v) = line.strip_prefix(key) {
                origin[i] = Some(v.trim().parse::<f64>().map_err(|_| bad("bad origin comment"))?);
            }
        }
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|_| bad("bad vertex count"))?);
        }
        if line == "end_header" {
            break;
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let v: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad vertex"))?;
        if v.len() != 3 {
            return Err(bad("vertex needs three coordinates"));
        }
        points.push(EnuPoint::new(v[0], v[1], v[2]));
    }
    if points.len() != count {
        return Err(bad("truncated vertex list"));
    }
    let frame = match origin {
        [Some(lat), Some(lon), Some(alt)] => Some(EnuFrame::new(GeodeticPoint::new(lat, lon, alt)?)),
        _ => None,
    };
    Ok((points, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvs::NO_LABEL;
    use crate::pinhole::build_reparam_projection;
    use crate::pinhole::tests::satellite_camera;
    use crate::raster::Raster;

    fn flat(z: f32) -> HeightMap {
        HeightMap { heights: Raster::filled(20, 10, z), labels: Raster::filled(20, 10, 0) }
    }

    #[test]
    fn points_reproject_to_their_pixel() {
        let cam = satellite_camera();
        let p = build_reparam_projection(&cam, -30.0, 650_000.0, 0.0).unwrap();
        let cloud = heightmap_to_cloud(&flat(37.5), &p, None).unwrap();
        assert_eq!(cloud.len(), 200);
        for pt in &cloud {
            let pix = cam.project(&pt.enu);
            assert!((pix.x - pt.pixel.0 as f64).abs() < 1e-3 && (pix.y - pt.pixel.1 as f64).abs() < 1e-3);
            assert!((pt.enu.z - 37.5).abs() < 1e-6);
        }
    }

    #[test]
    fn ply_round_trip_keeps_frame() {
        let frame = EnuFrame::new(GeodeticPoint::new(-34.49, -58.59, 12.5).unwrap());
        let p = build_reparam_projection(&satellite_camera(), -30.0, 650_000.0, 0.0).unwrap();
        let cloud = heightmap_to_cloud(&flat(4.25), &p, Some(&frame)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_ply(&path, &cloud, Some(&frame)).unwrap();
        let (pts, f) = read_ply_with_frame(&path).unwrap();
        assert_eq!(pts.len(), cloud.len());
        assert!((pts[7] - cloud[7].enu).norm() < 1e-5);
        let o = f.unwrap().observer();
        assert!((o.lat + 34.49).abs() < 1e-12 && (o.alt - 12.5).abs() < 1e-6);
    }

    #[test]
    fn empty_mask_gives_empty_cloud() {
        let p = build_reparam_projection(&satellite_camera(), -30.0, 650_000.0, 0.0).unwrap();
        let hm = HeightMap { heights: Raster::filled(5, 5, f32::NAN), labels: Raster::filled(5, 5, NO_LABEL) };
        assert!(heightmap_to_cloud(&hm, &p, None).unwrap().is_empty());
    }

    #[test]
    fn ply_round_trip() {
        let p = build_reparam_projection(&satellite_camera(), -30.0, 650_000.0, 0.0).unwrap();
        let frame = EnuFrame::new(GeodeticPoint::new(35.0, 139.0, 10.0).unwrap());
        let cloud = heightmap_to_cloud(&flat(5.0), &p, Some(&frame)).unwrap();
        assert!(cloud[0].geodetic.is_some());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_ply(&path, &cloud, Some(&frame)).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.len(), cloud.len());
        assert!((back[7] - cloud[7].enu).norm() < 1e-5);
        assert!(std::fs::read_to_string(&path).unwrap().contains("comment origin_lat 35"));
    }
}
