//! C ABI over `gw-core`.
//!
//! Every fallible call returns a [`GwStatus`]; on failure the message is kept
//! per thread and read back with [`gw_last_error`]. Handles are opaque and
//! owned by the caller, who releases them with the matching `*_free`.
//! Panics never cross the boundary; they surface as `GW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gw_core::constants::ConstantsReport;
use gw_core::harness::{self, RunConfig};
use gw_core::{GwError, LatticeSpec, Weight};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GwStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Validation = 3,
    Parse = 4,
    Refused = 5,
    Usage = 6,
    Io = 7,
    Json = 8,
    Utf8 = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Finite dyadic lattice.
pub struct GwLattice(LatticeSpec);

/// Nonnegative weight on a lattice.
pub struct GwWeight(Weight);

/// Constants of one weight pair, with its JSON serialization.
pub struct GwReport {
    report: ConstantsReport,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(GwStatus, String);

impl From<GwError> for Fail {
    fn from(e: GwError) -> Self {
        let status = match &e {
            GwError::Domain(_) => GwStatus::Domain,
            GwError::Validation(_) => GwStatus::Validation,
            GwError::Parse { .. } => GwStatus::Parse,
            GwError::Refused(_) => GwStatus::Refused,
            GwError::Usage(_) => GwStatus::Usage,
            GwError::Io { .. } => GwStatus::Io,
            GwError::Json(_) => GwStatus::Json,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GwStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GwStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            GwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(GwStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gw_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Lattice of `2^(dim·depth)` cells on the cube `corner + [0, side)^dim`.
///
/// # Safety
/// `corner` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gw_lattice_new(
    dim: usize,
    corner: *const f64,
    side: f64,
    depth: u32,
    out: *mut *mut GwLattice,
) -> GwStatus {
    guard(|| {
        if corner.is_null() {
            return Err(null("corner"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if !(1..=2).contains(&dim) {
            return Err(GwError::Validation(format!("dimension {dim} not in 1..=2")).into());
        }
        let corner = std::slice::from_raw_parts(corner, dim);
        put(out, GwLattice(LatticeSpec::new(dim, corner, side, depth)?));
        Ok(())
    })
}

/// Number of cells of the lattice.
///
/// # Safety
/// `lattice` must be a live handle or null (gives 0).
#[no_mangle]
pub unsafe extern "C" fn gw_lattice_cells(lattice: *const GwLattice) -> usize {
    lattice.as_ref().map_or(0, |l| 1usize << (l.0.dim() as u32 * l.0.depth()))
}

/// # Safety
/// `lattice` must come from [`gw_lattice_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gw_lattice_free(lattice: *mut GwLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Weight from one mass per cell, in row-major cell order.
///
/// # Safety
/// `masses` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gw_weight_from_masses(
    lattice: *const GwLattice,
    masses: *const f64,
    len: usize,
    out: *mut *mut GwWeight,
) -> GwStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        if masses.is_null() && len > 0 {
            return Err(null("masses"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let m = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(masses, len).to_vec() };
        put(out, GwWeight(Weight::new(l.0, m)?));
        Ok(())
    })
}

/// Weight read from a CSV file `x1[,x2],mass`; atoms snap to cells.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gw_weight_from_csv(
    lattice: *const GwLattice,
    path: *const c_char,
    out: *mut *mut GwWeight,
) -> GwStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null("lattice"))?;
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, GwWeight(Weight::from_csv_path(l.0, Path::new(path))?));
        Ok(())
    })
}

/// Total mass, or NaN for a null handle.
///
/// # Safety
/// `weight` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gw_weight_total(weight: *const GwWeight) -> f64 {
    weight.as_ref().map_or(f64::NAN, |w| w.0.total())
}

/// # Safety
/// `weight` must come from a `gw_weight_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gw_weight_free(weight: *mut GwWeight) {
    if !weight.is_null() {
        drop(Box::from_raw(weight));
    }
}

/// All constants of the pair `(sigma, w)`. `config_json` may be null for
/// defaults; its `dim` and `depth` are taken from the weights' lattice.
///
/// # Safety
/// Handles must be live; `config_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gw_constants(
    config_json: *const c_char,
    sigma: *const GwWeight,
    w: *const GwWeight,
    out: *mut *mut GwReport,
) -> GwStatus {
    guard(|| {
        let sigma = sigma.as_ref().ok_or_else(|| null("sigma"))?;
        let w = w.as_ref().ok_or_else(|| null("w"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg: RunConfig = if config_json.is_null() {
            RunConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(GwError::from)?
        };
        let l = sigma.0.lattice();
        cfg.dim = l.dim();
        cfg.depth = l.depth();
        let report = harness::run_constants(&cfg, &sigma.0, &w.0)?;
        let json = harness::to_json(&report)?;
        put(out, GwReport { report, json });
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GwConstants {
    pub a2: f64,
    pub testing: f64,
    pub pivotal: f64,
    pub n_const: f64,
    pub g_norm: f64,
    pub half_poisson: f64,
}

/// Headline numbers of a report.
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gw_report_constants(report: *const GwReport, out: *mut GwConstants) -> GwStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.report;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = GwConstants {
            a2: r.a2,
            testing: r.testing,
            pivotal: r.pivotal.value,
            n_const: r.n_const,
            g_norm: r.g_norm,
            half_poisson: r.half_poisson,
        };
        Ok(())
    })
}

/// Copies the JSON report into `buf`. `*needed` receives the length
/// including the NUL; a short buffer gives `GW_STATUS_BUFFER_TOO_SMALL`
/// and writes nothing.
///
/// # Safety
/// `buf` null or valid for `len` bytes; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn gw_report_json(
    report: *const GwReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> GwStatus {
    guard(|| {
        let json = &report.as_ref().ok_or_else(|| null("report"))?.json;
        let needed = needed.as_mut().ok_or_else(|| null("needed"))?;
        *needed = json.len() + 1;
        if buf.is_null() || len < json.len() + 1 {
            return Err(Fail(GwStatus::BufferTooSmall, format!("need {} bytes", json.len() + 1)));
        }
        std::ptr::copy_nonoverlapping(json.as_ptr(), buf as *mut u8, json.len());
        *buf.add(json.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`gw_constants`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gw_report_free(report: *mut GwReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
