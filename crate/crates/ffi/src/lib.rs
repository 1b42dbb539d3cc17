//! C interface to the voxelctx codec.
//!
//! Every function returns a [`VcnStatus`]; on failure a message is kept per
//! thread and read with [`vcn_last_error`]. Objects are opaque handles
//! released with their `_free` function. Points cross the boundary as
//! interleaved `x, y, z` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use voxelctx::coder::{decode_cloud, encode_cloud};
use voxelctx::entropy::EntropyModel;
use voxelctx::pointcloud::PointCloud;
use voxelctx::refine::RefineParams;
use voxelctx::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ModelMismatch = 5,
    Truncated = 6,
    EmptyCloud = 7,
    Panic = 8,
}

/// Entropy model handle.
pub struct VcnModel {
    inner: EntropyModel,
}

/// Refinement model handle.
pub struct VcnRefiner {
    inner: RefineParams,
}

/// Owned byte buffer.
pub struct VcnBuffer {
    bytes: Vec<u8>,
}

/// Owned decoded cloud.
pub struct VcnCloud {
    xyz: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VcnStatus {
    match e {
        Error::Io(_) => VcnStatus::Io,
        Error::Parse { .. } | Error::Format(_) | Error::MissingPose => VcnStatus::Format,
        Error::ModelMismatch(_) => VcnStatus::ModelMismatch,
        Error::Truncated => VcnStatus::Truncated,
        Error::EmptyCloud | Error::EmptyDataset => VcnStatus::EmptyCloud,
        _ => VcnStatus::InvalidArgument,
    }
}

struct Fail(VcnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VcnStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VcnStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            VcnStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vcn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_uniform(out: *mut *mut VcnModel) -> VcnStatus {
    guard(|| {
        put(
            out,
            VcnModel {
                inner: EntropyModel::Uniform,
            },
        )
    })
}

/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_adaptive(
    context_bits: u8,
    out: *mut *mut VcnModel,
) -> VcnStatus {
    guard(|| {
        let inner = EntropyModel::adaptive(context_bits)?;
        put(out, VcnModel { inner })
    })
}

/// Parses a model file image.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut VcnModel,
) -> VcnStatus {
    guard(|| {
        let bytes = slice(data, len, "data")?;
        let inner = EntropyModel::from_bytes(bytes)?;
        put(out, VcnModel { inner })
    })
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VcnStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_load(file: *const c_char, out: *mut *mut VcnModel) -> VcnStatus {
    guard(|| {
        let p = path(file)?;
        let inner = EntropyModel::load(p).map_err(|e| {
            let f = Fail::from(e);
            Fail(f.0, format!("{}: {}", p.display(), f.1))
        })?;
        put(out, VcnModel { inner })
    })
}

/// Model kind tag: 0 uniform, 1 adaptive, 2 static, 3 dynamic.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_kind(model: *const VcnModel, out: *mut u8) -> VcnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let o = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *o = m.inner.kind() as u8;
        Ok(())
    })
}

/// Hash that bitstreams record to bind themselves to a model.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_fingerprint(model: *const VcnModel, out: *mut u64) -> VcnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let o = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *o = m.inner.fingerprint();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcn_model_free(model: *mut VcnModel) {
    free(model)
}

/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_refiner_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut VcnRefiner,
) -> VcnStatus {
    guard(|| {
        let bytes = slice(data, len, "data")?;
        let inner = RefineParams::from_bytes(bytes)?;
        put(out, VcnRefiner { inner })
    })
}

/// # Safety
/// `refiner` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcn_refiner_free(refiner: *mut VcnRefiner) {
    free(refiner)
}

/// Encodes `count` points (`3 * count` doubles) at depth `trunc` of a
/// `depth`-level octree.
///
/// # Safety
/// `xyz` must point to `3 * count` doubles; `model` must be a live handle;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_encode(
    xyz: *const f64,
    count: usize,
    depth: u8,
    trunc: u8,
    model: *const VcnModel,
    out: *mut *mut VcnBuffer,
) -> VcnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let n = count
            .checked_mul(3)
            .ok_or_else(|| Fail(VcnStatus::InvalidArgument, "point count overflows".into()))?;
        let flat = slice(xyz, n, "xyz")?;
        let cloud = PointCloud::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
        let bytes = encode_cloud(&cloud, depth, trunc, &m.inner)?;
        put(out, VcnBuffer { bytes })
    })
}

/// Decodes a static bitstream; `refiner` may be null.
///
/// # Safety
/// `data` must point to `len` readable bytes; `model` must be a live handle;
/// `refiner` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcn_decode(
    data: *const u8,
    len: usize,
    model: *const VcnModel,
    refiner: *const VcnRefiner,
    out: *mut *mut VcnCloud,
) -> VcnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let bytes = slice(data, len, "data")?;
        let r = refiner.as_ref().map(|r| &r.inner);
        let cloud = decode_cloud(bytes, &m.inner, r)?;
        let xyz = cloud.points.iter().flatten().copied().collect();
        put(out, VcnCloud { xyz })
    })
}

/// # Safety
/// `buffer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vcn_buffer_data(buffer: *const VcnBuffer) -> *const u8 {
    buffer.as_ref().map_or(ptr::null(), |b| b.bytes.as_ptr())
}

/// # Safety
/// `buffer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vcn_buffer_len(buffer: *const VcnBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.bytes.len())
}

/// # Safety
/// `buffer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcn_buffer_free(buffer: *mut VcnBuffer) {
    free(buffer)
}

/// Number of points.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vcn_cloud_len(cloud: *const VcnCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.xyz.len() / 3)
}

/// Interleaved coordinates, `3 * vcn_cloud_len` doubles.
///
/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vcn_cloud_points(cloud: *const VcnCloud) -> *const f64 {
    cloud.as_ref().map_or(ptr::null(), |c| c.xyz.as_ptr())
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcn_cloud_free(cloud: *mut VcnCloud) {
    free(cloud)
}
