//! C interface to the satstereo library.
//!
//! Every function returns an [`SsStatus`]. On failure the message is kept per
//! thread and can be read with [`ss_last_error`]. Handles are opaque and must
//! be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use satstereo::geodesy::{default_observer, make_bounding_cube, EnuFrame, EnuPoint, GeoRect, GeodeticPoint, DEFAULT_CUBE_MARGIN};
use satstereo::pinhole::{approximate_rpc, CameraFile, PinholeCamera};
use satstereo::pipeline::{run_pipeline, PipelineConfig};
use satstereo::rpc::{rpc_inverse_project, PixelPoint, RpcCamera};
use satstereo::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Degenerate = 3,
    NoConvergence = 4,
    OutOfBounds = 5,
    InsufficientData = 6,
    Format = 7,
    MissingFile = 8,
    Io = 9,
    Panic = 10,
}

impl From<&Error> for SsStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::InvalidInput(_) => SsStatus::InvalidInput,
            Error::Degenerate(_) => SsStatus::Degenerate,
            Error::NoConvergence { .. } | Error::Diverged(_) => SsStatus::NoConvergence,
            Error::OutOfBounds(_) => SsStatus::OutOfBounds,
            Error::InsufficientData(_) => SsStatus::InsufficientData,
            Error::Format { .. } | Error::Json(_) => SsStatus::Format,
            Error::MissingFile(_) => SsStatus::MissingFile,
            Error::Io(_) => SsStatus::Io,
            Error::Stage { .. } => SsStatus::InvalidInput,
        }
    }
}

/// RPC camera.
pub struct SsRpc(RpcCamera);

/// Pinhole camera in an ENU frame.
pub struct SsPinhole {
    camera: PinholeCamera,
    frame: EnuFrame,
}

/// Loaded pipeline configuration.
pub struct SsPipeline(PipelineConfig);

/// Outcome of a pipeline run. Metric fields are NaN when no ground truth was
/// configured.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsPipelineResult {
    pub valid_fraction: f64,
    pub completeness_pct: f64,
    pub median_error_m: f64,
    pub seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SsStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(SsStatus::InvalidInput, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an RPC JSON sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_rpc_load(path: *const c_char, out: *mut *mut SsRpc) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rpc = RpcCamera::load(&path_arg(path)?)?;
        out.write(Box::into_raw(Box::new(SsRpc(rpc))));
        Ok(())
    })
}

/// Projects a geodetic point (degrees, meters) to pixel `(u, v)`.
///
/// # Safety
/// `rpc` must come from [`ss_rpc_load`]; `u` and `v` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_rpc_project(rpc: *const SsRpc, lat: f64, lon: f64, alt: f64, u: *mut f64, v: *mut f64) -> SsStatus {
    guard(|| {
        let rpc = handle(rpc, "rpc")?;
        let p = rpc.0.project(&GeodeticPoint::new(lat, lon, alt)?)?;
        write_out(u, p.x, "u")?;
        write_out(v, p.y, "v")
    })
}

/// Geodetic position of pixel `(u, v)` at altitude `alt`.
///
/// # Safety
/// `rpc` must come from [`ss_rpc_load`]; `lat` and `lon` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_rpc_localize(rpc: *const SsRpc, u: f64, v: f64, alt: f64, lat: *mut f64, lon: *mut f64) -> SsStatus {
    guard(|| {
        let rpc = handle(rpc, "rpc")?;
        let g = rpc_inverse_project(&rpc.0, &PixelPoint::new(u, v), alt)?;
        write_out(lat, g.lat, "lat")?;
        write_out(lon, g.lon, "lon")
    })
}

/// # Safety
/// `rpc` must come from [`ss_rpc_load`] or be null, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_rpc_free(rpc: *mut SsRpc) {
    if !rpc.is_null() {
        drop(Box::from_raw(rpc));
    }
}

/// Fits a pinhole camera to `rpc` over the AOI `[lat_min, lat_max, lon_min,
/// lon_max]` and altitudes `[alt_min, alt_max]`, sampled on a `samples^3`
/// grid. `observer` is `[lat, lon, alt]` of the ENU origin, or null for the
/// AOI center at the lower altitude. `max_error_px` may be null.
///
/// # Safety
/// `aoi` must point to 4 doubles, `alt` to 2, `observer` to 3 or be null;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_approximate(
    rpc: *const SsRpc,
    aoi: *const f64,
    alt: *const f64,
    observer: *const f64,
    samples: usize,
    out: *mut *mut SsPinhole,
    max_error_px: *mut f64,
) -> SsStatus {
    guard(|| {
        let rpc = handle(rpc, "rpc")?;
        if aoi.is_null() || alt.is_null() || out.is_null() {
            return Err(null("aoi, alt or out"));
        }
        let a = std::slice::from_raw_parts(aoi, 4);
        let rect = GeoRect { lat_min: a[0], lat_max: a[1], lon_min: a[2], lon_max: a[3] };
        let range = [*alt, *alt.add(1)];
        let obs = if observer.is_null() {
            default_observer(&rect, range)?
        } else {
            GeodeticPoint::new(*observer, *observer.add(1), *observer.add(2))?
        };
        let frame = EnuFrame::new(obs);
        let cube = make_bounding_cube(&rect, range, &frame, DEFAULT_CUBE_MARGIN)?;
        let approx = approximate_rpc(&rpc.0, &cube, &frame, samples)?;
        if !max_error_px.is_null() {
            max_error_px.write(approx.max_error_px);
        }
        out.write(Box::into_raw(Box::new(SsPinhole { camera: approx.camera, frame })));
        Ok(())
    })
}

/// Projects an ENU point to pixel `(u, v)`.
///
/// # Safety
/// `cam` must be a live pinhole handle; `u` and `v` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_project(cam: *const SsPinhole, x: f64, y: f64, z: f64, u: *mut f64, v: *mut f64) -> SsStatus {
    guard(|| {
        let cam = handle(cam, "camera")?;
        let p = cam.camera.project(&EnuPoint::new(x, y, z));
        write_out(u, p.x, "u")?;
        write_out(v, p.y, "v")
    })
}

/// Converts a geodetic point to the camera's ENU frame.
///
/// # Safety
/// `cam` must be a live pinhole handle; `enu` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_geodetic_to_enu(cam: *const SsPinhole, lat: f64, lon: f64, alt: f64, enu: *mut f64) -> SsStatus {
    guard(|| {
        let cam = handle(cam, "camera")?;
        if enu.is_null() {
            return Err(null("enu"));
        }
        let p = cam.frame.geodetic_to_enu(&GeodeticPoint::new(lat, lon, alt)?);
        std::slice::from_raw_parts_mut(enu, 3).copy_from_slice(p.as_slice());
        Ok(())
    })
}

/// Row-major 3x4 projection matrix.
///
/// # Safety
/// `cam` must be a live pinhole handle; `out` must point to 12 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_matrix(cam: *const SsPinhole, out: *mut f64) -> SsStatus {
    guard(|| {
        let cam = handle(cam, "camera")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = cam.camera.projection();
        let dst = std::slice::from_raw_parts_mut(out, 12);
        for r in 0..3 {
            for c in 0..4 {
                dst[4 * r + c] = p[(r, c)];
            }
        }
        Ok(())
    })
}

/// Writes the camera as JSON.
///
/// # Safety
/// `cam` must be a live pinhole handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_save(cam: *const SsPinhole, path: *const c_char) -> SsStatus {
    guard(|| {
        let cam = handle(cam, "camera")?;
        CameraFile::new(&cam.camera, None).save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `cam` must be a pinhole handle or null, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_pinhole_free(cam: *mut SsPinhole) {
    if !cam.is_null() {
        drop(Box::from_raw(cam));
    }
}

/// Loads and validates a pipeline configuration.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_pipeline_load(path: *const c_char, out: *mut *mut SsPipeline) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = PipelineConfig::load(&path_arg(path)?)?;
        out.write(Box::into_raw(Box::new(SsPipeline(cfg))));
        Ok(())
    })
}

/// Runs every stage, writing artifacts to the configured output directory.
///
/// # Safety
/// `pipeline` must come from [`ss_pipeline_load`]; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_pipeline_run(pipeline: *const SsPipeline, result: *mut SsPipelineResult) -> SsStatus {
    guard(|| {
        let cfg = handle(pipeline, "pipeline")?;
        if result.is_null() {
            return Err(null("result"));
        }
        let out = run_pipeline(&cfg.0)?;
        let (cp, me) = out.report.metrics.as_ref().map_or((f64::NAN, f64::NAN), |m| (m.completeness_pct, m.median_error_m));
        result.write(SsPipelineResult {
            valid_fraction: out.report.valid_fraction,
            completeness_pct: cp,
            median_error_m: me,
            seconds: out.total_seconds(),
        });
        Ok(())
    })
}

/// # Safety
/// `pipeline` must come from [`ss_pipeline_load`] or be null, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_pipeline_free(pipeline: *mut SsPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
