//! WGS84 geodetic coordinates, Earth-centered Cartesian coordinates and the
//! local East-North-Up frame that every later stage works in.
//!
//! Conversions always go through ECEF exactly; nothing here uses a
//! small-angle or flat-earth shortcut, so round trips are limited only by
//! floating point.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS84 semi-minor axis (m).
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Second eccentricity squared.
const WGS84_EP2: f64 = WGS84_E2 / (1.0 - WGS84_E2);

/// A point in a local ENU frame, meters.
pub type EnuPoint = Vector3<f64>;

/// Latitude/longitude in degrees, altitude in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeodeticPoint {
    /// Validates latitude and wraps longitude into [-180, 180).
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        if !(lat.is_finite() && lon.is_finite() && alt.is_finite()) {
            return Err(Error::invalid("geodetic coordinates must be finite"));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(Self { lat, lon: normalize_lon(lon), alt })
    }

    pub fn to_ecef(&self) -> Vector3<f64> {
        geodetic_to_ecef(self.lat, self.lon, self.alt)
    }
}

/// Wraps a longitude in degrees into [-180, 180).
pub fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, alt: f64) -> Vector3<f64> {
    let (slat, clat) = lat_deg.to_radians().sin_cos();
    let (slon, clon) = lon_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
    Vector3::new((n + alt) * clat * clon, (n + alt) * clat * slon, (n * (1.0 - WGS84_E2) + alt) * slat)
}

/// ECEF to geodetic with Bowring's iteration on the parametric latitude,
/// run until the latitude update drops below 1e-12 rad.
pub fn ecef_to_geodetic(ecef: &Vector3<f64>) -> GeodeticPoint {
    let (x, y, z) = (ecef.x, ecef.y, ecef.z);
    let p = x.hypot(y);
    let lon = y.atan2(x);

    let mut beta = (WGS84_A * z).atan2(WGS84_B * p);
    let mut lat = 0.0_f64;
    for _ in 0..16 {
        let (sb, cb) = beta.sin_cos();
        let next = (z + WGS84_EP2 * WGS84_B * sb.powi(3)).atan2(p - WGS84_E2 * WGS84_A * cb.powi(3));
        let delta = (next - lat).abs();
        lat = next;
        beta = ((1.0 - WGS84_F) * lat.sin()).atan2(lat.cos());
        if delta < 1e-12 {
            break;
        }
    }
    let (slat, clat) = lat.sin_cos();
    // valid at any latitude, including the poles
    let alt = p * clat + z * slat - WGS84_A * (1.0 - WGS84_E2 * slat * slat).sqrt();
    GeodeticPoint { lat: lat.to_degrees(), lon: normalize_lon(lon.to_degrees()), alt }
}

/// Local East-North-Up frame anchored at an observer point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnuFrame {
    observer: GeodeticPoint,
    origin_ecef: Vector3<f64>,
    /// Rows are the east, north and up unit vectors in ECEF.
    ecef_to_enu: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(observer: GeodeticPoint) -> Self {
        let (slat, clat) = observer.lat.to_radians().sin_cos();
        let (slon, clon) = observer.lon.to_radians().sin_cos();
        #[rustfmt::skip]
        let ecef_to_enu = Matrix3::new(
            -slon,         clon,        0.0,
            -slat * clon, -slat * slon, clat,
             clat * clon,  clat * slon, slat,
        );
        Self { observer, origin_ecef: observer.to_ecef(), ecef_to_enu }
    }

    pub fn observer(&self) -> GeodeticPoint {
        self.observer
    }

    /// Rotation taking ECEF axes onto east/north/up.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.ecef_to_enu
    }

    pub fn origin_ecef(&self) -> &Vector3<f64> {
        &self.origin_ecef
    }

    pub fn ecef_to_enu(&self, ecef: &Vector3<f64>) -> EnuPoint {
        self.ecef_to_enu * (ecef - self.origin_ecef)
    }

    pub fn enu_to_ecef(&self, enu: &EnuPoint) -> Vector3<f64> {
        self.ecef_to_enu.transpose() * enu + self.origin_ecef
    }

    pub fn geodetic_to_enu(&self, p: &GeodeticPoint) -> EnuPoint {
        self.ecef_to_enu(&p.to_ecef())
    }

    pub fn enu_to_geodetic(&self, p: &EnuPoint) -> GeodeticPoint {
        ecef_to_geodetic(&self.enu_to_ecef(p))
    }
}

pub fn geodetic_to_enu(p: &GeodeticPoint, frame: &EnuFrame) -> EnuPoint {
    frame.geodetic_to_enu(p)
}

pub fn enu_to_geodetic(p: &EnuPoint, frame: &EnuFrame) -> GeodeticPoint {
    frame.enu_to_geodetic(p)
}

#[derive(Serialize, Deserialize)]
struct ObserverJson {
    lat: f64,
    lon: f64,
    alt: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    observer: ObserverJson,
}

impl Serialize for EnuFrame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FrameJson { observer: ObserverJson { lat: self.observer.lat, lon: self.observer.lon, alt: self.observer.alt } }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EnuFrame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = FrameJson::deserialize(d)?;
        let o = json.observer;
        let observer = GeodeticPoint::new(o.lat, o.lon, o.alt).map_err(serde::de::Error::custom)?;
        Ok(EnuFrame::new(observer))
    }
}

/// Latitude/longitude rectangle describing an area of interest, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRect {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoRect {
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.lat_min + self.lat_max), 0.5 * (self.lon_min + self.lon_max))
    }

    /// Rectangle covering `half_x` meters east/west and `half_y` north/south
    /// of `center`, measured in the tangent frame at the center.
    pub fn around(center: &GeodeticPoint, half_x: f64, half_y: f64) -> GeoRect {
        let frame = EnuFrame::new(*center);
        let ne = frame.enu_to_geodetic(&EnuPoint::new(half_x, half_y, 0.0));
        let sw = frame.enu_to_geodetic(&EnuPoint::new(-half_x, -half_y, 0.0));
        GeoRect { lat_min: sw.lat, lat_max: ne.lat, lon_min: sw.lon, lon_max: ne.lon }
    }
}

/// Default observer: center of the AOI at the low end of the altitude range.
pub fn default_observer(aoi: &GeoRect, alt_range: [f64; 2]) -> Result<GeodeticPoint> {
    let (lat, lon) = aoi.center();
    GeodeticPoint::new(lat, lon, alt_range[0])
}

/// Axis-aligned box in ENU meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingCube {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingCube {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for axis in 0..3 {
            if !(min[axis].is_finite() && max[axis].is_finite()) || min[axis] >= max[axis] {
                return Err(Error::invalid(format!("bounding cube axis {axis} has empty range [{}, {}]", min[axis], max[axis])));
            }
        }
        if max[2] - min[2] > 10_000.0 {
            return Err(Error::invalid("bounding cube z range exceeds 10 km"));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &EnuPoint) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn center(&self) -> EnuPoint {
        EnuPoint::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]), 0.5 * (self.min[2] + self.max[2]))
    }

    /// The eight corners, x varying fastest.
    pub fn corners(&self) -> [EnuPoint; 8] {
        std::array::from_fn(|i| {
            EnuPoint::new(
                if i & 1 == 0 { self.min[0] } else { self.max[0] },
                if i & 2 == 0 { self.min[1] } else { self.max[1] },
                if i & 4 == 0 { self.min[2] } else { self.max[2] },
            )
        })
    }
}

pub const DEFAULT_CUBE_MARGIN: f64 = 0.05;

/// ENU box containing the geodetic AOI rectangle times the altitude range.
///
/// The boundary of the geodetic box is sampled (not just its corners, since
/// parallels and the ellipsoid both curve in ENU) and every side is then
/// pushed out by `margin` times the axis extent.
pub fn make_bounding_cube(aoi: &GeoRect, alt_range: [f64; 2], frame: &EnuFrame, margin: f64) -> Result<BoundingCube> {
    let [z_lo, z_hi] = alt_range;
    if !(z_lo < z_hi) {
        return Err(Error::invalid(format!("altitude range [{z_lo}, {z_hi}] is empty")));
    }
    if !(aoi.lat_min < aoi.lat_max) || !(aoi.lon_min < aoi.lon_max) {
        return Err(Error::invalid("AOI rectangle has zero extent"));
    }
    if !(margin >= 0.0) {
        return Err(Error::invalid("margin must be non-negative"));
    }

    const STEPS: usize = 8;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut include = |p: EnuPoint| {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    };
    for &alt in &[z_lo, z_hi] {
        for i in 0..=STEPS {
            let s = i as f64 / STEPS as f64;
            let lat = aoi.lat_min + s * (aoi.lat_max - aoi.lat_min);
            let lon = aoi.lon_min + s * (aoi.lon_max - aoi.lon_min);
            for p in [
                GeodeticPoint { lat, lon: aoi.lon_min, alt },
                GeodeticPoint { lat, lon: aoi.lon_max, alt },
                GeodeticPoint { lat: aoi.lat_min, lon, alt },
                GeodeticPoint { lat: aoi.lat_max, lon, alt },
            ] {
                include(frame.geodetic_to_enu(&p));
            }
        }
        let (clat, clon) = aoi.center();
        include(frame.geodetic_to_enu(&GeodeticPoint { lat: clat, lon: clon, alt }));
    }

    for i in 0..3 {
        let pad = margin * (hi[i] - lo[i]);
        lo[i] -= pad;
        hi[i] += pad;
    }
    BoundingCube::new(lo, hi)
}
