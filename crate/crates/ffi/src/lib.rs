//! C ABI over `rho_raw`: RAW mosaics, the lossless codec and a few
//! statistics helpers.
//!
//! Every fallible call returns a [`RhoStatus`]; on failure the message is
//! kept per thread and readable through [`rho_last_error`]. Objects are
//! opaque handles owned by the caller and released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rho_raw::raw::{BayerRaw, Pattern, PlaneStack, RawMeta};
use rho_raw::ric::{self, Decoded, EncodeOptions, Profile};
use rho_raw::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptInput = 4,
    Truncated = 5,
    ChecksumMismatch = 6,
    Unsupported = 7,
    Numerical = 8,
    Panic = 99,
}

impl From<&Error> for RhoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidMetadata(_)
            | Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::DegeneratePair { .. }
            | Error::OrderingViolation { .. } => RhoStatus::InvalidArgument,
            Error::SingularMatrix { .. } => RhoStatus::Numerical,
            Error::CorruptInput(_) | Error::BadMagic { .. } | Error::Parse(_) | Error::Json(_) => {
                RhoStatus::CorruptInput
            }
            Error::UnsupportedVersion(_) => RhoStatus::Unsupported,
            Error::Truncated { .. } => RhoStatus::Truncated,
            Error::ChecksumMismatch { .. } => RhoStatus::ChecksumMismatch,
            Error::Io(_) => RhoStatus::Io,
        }
    }
}

/// Colour filter layouts, matching the `.braw` pattern codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoPattern {
    Rggb = 0,
    Bggr = 1,
    Grbg = 2,
    Gbrg = 3,
    Ryyb = 4,
}

impl From<RhoPattern> for Pattern {
    fn from(p: RhoPattern) -> Self {
        match p {
            RhoPattern::Rggb => Pattern::Rggb,
            RhoPattern::Bggr => Pattern::Bggr,
            RhoPattern::Grbg => Pattern::Grbg,
            RhoPattern::Gbrg => Pattern::Gbrg,
            RhoPattern::Ryyb => Pattern::Ryyb,
        }
    }
}

impl From<Pattern> for RhoPattern {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Rggb => RhoPattern::Rggb,
            Pattern::Bggr => RhoPattern::Bggr,
            Pattern::Grbg => RhoPattern::Grbg,
            Pattern::Gbrg => RhoPattern::Gbrg,
            Pattern::Ryyb => RhoPattern::Ryyb,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoProfile {
    Static = 0,
    Fitted = 1,
}

/// Sensor metadata of a mosaic.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhoMeta {
    pub pattern: RhoPattern,
    pub bit_depth: u8,
    pub black_level: u16,
    pub saturation_level: u16,
}

impl RhoMeta {
    fn to_meta(self) -> Result<RawMeta, Error> {
        RawMeta::new(
            self.pattern.into(),
            self.bit_depth,
            self.black_level,
            self.saturation_level,
        )
    }
}

impl From<RawMeta> for RhoMeta {
    fn from(m: RawMeta) -> Self {
        RhoMeta {
            pattern: m.pattern.into(),
            bit_depth: m.bit_depth,
            black_level: m.black_lev,
            saturation_level: m.saturation_lev,
        }
    }
}

/// A Bayer mosaic.
pub struct RhoRaw(BayerRaw);

/// An owned byte buffer (encoded streams).
pub struct RhoBuffer(Vec<u8>);

/// Four half-resolution planes (R, Gr, Gb, B) of a preview.
pub struct RhoPlanes(PlaneStack<u16>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording failures and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (RhoStatus, String)>) -> RhoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RhoStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RhoStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RhoStatus, String) {
    (RhoStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (RhoStatus, String) {
    (RhoStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (RhoStatus, String) {
    (RhoStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (RhoStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not UTF-8"))
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], (RhoStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_arg<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, (RhoStatus, String)> {
    match out.as_mut() {
        Some(o) => {
            *o = ptr::null_mut();
            Ok(o)
        }
        None => Err(null("out")),
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rho_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rho_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a mosaic from `width * height` row-major samples.
///
/// # Safety
/// `samples` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_new(
    width: usize,
    height: usize,
    meta: RhoMeta,
    samples: *const u16,
    len: usize,
    out: *mut *mut RhoRaw,
) -> RhoStatus {
    guard(|| {
        let out = out_arg(out)?;
        if samples.is_null() {
            return Err(null("samples"));
        }
        let s = std::slice::from_raw_parts(samples, len).to_vec();
        let raw = BayerRaw::new(width, height, meta.to_meta().map_err(lib)?, s).map_err(lib)?;
        *out = Box::into_raw(Box::new(RhoRaw(raw)));
        Ok(())
    })
}

/// Reads a `.braw` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_load(path: *const c_char, out: *mut *mut RhoRaw) -> RhoStatus {
    guard(|| {
        let out = out_arg(out)?;
        let raw = BayerRaw::load(path_arg(path)?).map_err(lib)?;
        *out = Box::into_raw(Box::new(RhoRaw(raw)));
        Ok(())
    })
}

/// Writes a `.braw` file.
///
/// # Safety
/// `raw` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_save(raw: *const RhoRaw, path: *const c_char) -> RhoStatus {
    guard(|| {
        let raw = raw.as_ref().ok_or_else(|| null("raw"))?;
        raw.0.save(path_arg(path)?).map_err(lib)
    })
}

/// # Safety
/// `raw` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_width(raw: *const RhoRaw) -> usize {
    raw.as_ref().map_or(0, |r| r.0.width)
}

/// # Safety
/// `raw` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_height(raw: *const RhoRaw) -> usize {
    raw.as_ref().map_or(0, |r| r.0.height)
}

/// # Safety
/// `raw` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_meta(raw: *const RhoRaw, out: *mut RhoMeta) -> RhoStatus {
    guard(|| {
        let raw = raw.as_ref().ok_or_else(|| null("raw"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = raw.0.meta.into();
        Ok(())
    })
}

/// Borrowed view of the samples; valid while `raw` lives. Writes the count
/// to `len` (if non-NULL). NULL for a NULL handle.
///
/// # Safety
/// `raw` must be a live handle or NULL; `len` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_samples(raw: *const RhoRaw, len: *mut usize) -> *const u16 {
    let Some(raw) = raw.as_ref() else {
        return ptr::null();
    };
    if let Some(l) = len.as_mut() {
        *l = raw.0.samples.len();
    }
    raw.0.samples.as_ptr()
}

/// # Safety
/// `raw` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rho_raw_free(raw: *mut RhoRaw) {
    if !raw.is_null() {
        drop(Box::from_raw(raw));
    }
}

/// Losslessly compresses `raw`.
///
/// # Safety
/// `raw` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_encode(
    raw: *const RhoRaw,
    profile: RhoProfile,
    cross_channel: bool,
    out: *mut *mut RhoBuffer,
) -> RhoStatus {
    guard(|| {
        let out = out_arg(out)?;
        let raw = raw.as_ref().ok_or_else(|| null("raw"))?;
        let opts = EncodeOptions {
            profile: match profile {
                RhoProfile::Static => Profile::Static,
                RhoProfile::Fitted => Profile::Fitted,
            },
            cross_channel,
        };
        let enc = ric::encode_with(&raw.0, opts).map_err(lib)?;
        *out = Box::into_raw(Box::new(RhoBuffer(enc.bytes)));
        Ok(())
    })
}

/// # Safety
/// `buf` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_buffer_data(buf: *const RhoBuffer) -> *const u8 {
    buf.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `buf` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_buffer_len(buf: *const RhoBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buf` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rho_buffer_free(buf: *mut RhoBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// Decodes a complete stream back to the exact mosaic.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_decode(data: *const u8, len: usize, out: *mut *mut RhoRaw) -> RhoStatus {
    guard(|| {
        let out = out_arg(out)?;
        let bytes = bytes_arg(data, len)?;
        match ric::decode(bytes, 4).map_err(lib)? {
            Decoded::Full(raw) => {
                *out = Box::into_raw(Box::new(RhoRaw(raw)));
                Ok(())
            }
            Decoded::Preview { .. } => Err(invalid("full decode produced a preview")),
        }
    })
}

/// Decodes scales `0..=scale` (0..3) and returns that pyramid level, in
/// sample units.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_decode_preview(
    data: *const u8,
    len: usize,
    scale: usize,
    out: *mut *mut RhoPlanes,
) -> RhoStatus {
    guard(|| {
        let out = out_arg(out)?;
        if scale > 3 {
            return Err(invalid(format!("preview scale {scale} outside 0..3")));
        }
        let bytes = bytes_arg(data, len)?;
        match ric::decode(bytes, scale).map_err(lib)? {
            Decoded::Preview { stack, .. } => {
                *out = Box::into_raw(Box::new(RhoPlanes(stack)));
                Ok(())
            }
            Decoded::Full(_) => Err(invalid("preview decode produced a full mosaic")),
        }
    })
}

/// Number of complete scales recoverable from a possibly truncated stream.
///
/// # Safety
/// `data` must point to `len` readable bytes; `scales` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_complete_scales(data: *const u8, len: usize, scales: *mut usize) -> RhoStatus {
    guard(|| {
        let scales = scales.as_mut().ok_or_else(|| null("scales"))?;
        let p = ric::decode_progressive(bytes_arg(data, len)?).map_err(lib)?;
        *scales = p.levels.len();
        Ok(())
    })
}

/// # Safety
/// `planes` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_planes_width(planes: *const RhoPlanes) -> usize {
    planes.as_ref().map_or(0, |p| p.0.width)
}

/// # Safety
/// `planes` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_planes_height(planes: *const RhoPlanes) -> usize {
    planes.as_ref().map_or(0, |p| p.0.height)
}

/// Borrowed plane `channel` (0 R, 1 Gr, 2 Gb, 3 B) of `width * height`
/// values; NULL for a bad handle or channel.
///
/// # Safety
/// `planes` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rho_planes_channel(planes: *const RhoPlanes, channel: usize) -> *const u16 {
    match planes.as_ref() {
        Some(p) if channel < 4 => p.0.planes[channel].as_ptr(),
        _ => ptr::null(),
    }
}

/// # Safety
/// `planes` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rho_planes_free(planes: *mut RhoPlanes) {
    if !planes.is_null() {
        drop(Box::from_raw(planes));
    }
}

/// Fits the patch-mean curvature `k` to `n` values in `[0, 1]`
/// (clamped to `[-6, 12]`).
///
/// # Safety
/// `means` must point to `n` readable values; `k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_fit_k(means: *const f64, n: usize, k: *mut f64) -> RhoStatus {
    guard(|| {
        let k = k.as_mut().ok_or_else(|| null("k"))?;
        if means.is_null() {
            return Err(null("means"));
        }
        let xs = std::slice::from_raw_parts(means, n);
        *k = rho_raw::stats::fit_k(xs).map_err(lib)?.k;
        Ok(())
    })
}

/// Runs the embedded property checks; `passed` receives the verdict.
///
/// # Safety
/// `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rho_selftest(seed: u64, passed: *mut bool) -> RhoStatus {
    guard(|| {
        let passed = passed.as_mut().ok_or_else(|| null("passed"))?;
        *passed = rho_raw::selftest::selftest(seed).all_passed;
        Ok(())
    })
}
