//! C ABI for the `fphybrid` library.
//!
//! Densities cross the boundary as opaque [`FphDensity`] handles that the
//! caller releases with [`fph_density_free`]. Every fallible function returns
//! an [`FphStatus`]; on failure the message is available through
//! [`fph_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fphybrid::config::parse_config;
use fphybrid::experiments::{l2_error, run_hybrid, MassMode};
use fphybrid::model::double_well_density;
use fphybrid::{io, FpError, GridDensity};

/// Status codes. Library failures use the same numbers as the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FphStatus {
    Ok = 0,
    /// A Rust panic was caught at the boundary.
    Internal = 1,
    /// Null pointer, non-UTF-8 string or undersized output buffer.
    InvalidArgument = 2,
    Parameter = 3,
    Diverged = 4,
    EmptyHistogram = 5,
    SpecMismatch = 6,
    DegenerateGrid = 7,
    RankDeficient = 8,
    NonConvergence = 9,
    EmptyDensity = 10,
    Overlap = 11,
    Config = 12,
    Format = 13,
    NotTwoDimensional = 14,
    MemoryGuard = 15,
    Io = 16,
}

impl From<&FpError> for FphStatus {
    fn from(e: &FpError) -> Self {
        match e {
            FpError::Parameter(_) => FphStatus::Parameter,
            FpError::Diverged { .. } => FphStatus::Diverged,
            FpError::EmptyHistogram => FphStatus::EmptyHistogram,
            FpError::SpecMismatch(_) => FphStatus::SpecMismatch,
            FpError::DegenerateGrid { .. } => FphStatus::DegenerateGrid,
            FpError::RankDeficient { .. } => FphStatus::RankDeficient,
            FpError::NonConvergence { .. } => FphStatus::NonConvergence,
            FpError::EmptyDensity => FphStatus::EmptyDensity,
            FpError::Overlap { .. } => FphStatus::Overlap,
            FpError::Config { .. } => FphStatus::Config,
            FpError::Format(_) => FphStatus::Format,
            FpError::NotTwoDimensional(_) => FphStatus::NotTwoDimensional,
            FpError::MemoryGuard { .. } => FphStatus::MemoryGuard,
            FpError::Io { .. } => FphStatus::Io,
        }
    }
}

/// Opaque grid density handle.
pub struct FphDensity {
    inner: GridDensity,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(FphStatus, String);

impl From<FpError> for Failure {
    fn from(e: FpError) -> Self {
        Failure(FphStatus::from(&e), format!("{}: {e}", e.class()))
    }
}

fn invalid(message: &str) -> Failure {
    Failure(FphStatus::InvalidArgument, message.to_string())
}

/// Runs `f`, converting errors and panics into a status plus a thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FphStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FphStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            FphStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn density_arg<'a>(p: *const FphDensity) -> Result<&'a GridDensity, Failure> {
    p.as_ref()
        .map(|d| &d.inner)
        .ok_or_else(|| invalid("density handle is null"))
}

unsafe fn emit<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn boxed(inner: GridDensity) -> *mut FphDensity {
    Box::into_raw(Box::new(FphDensity { inner }))
}

/// Message of the last failure on this thread, or null if none occurred.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fph_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Reads a binary grid file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_density_read(
    path: *const c_char,
    out: *mut *mut FphDensity,
) -> FphStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let d = io::read_grid(Path::new(path))?;
        emit(out, boxed(d))
    })
}

/// Writes `density` to `path` in the binary grid format (atomically).
///
/// # Safety
/// `density` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fph_density_write(
    density: *const FphDensity,
    path: *const c_char,
) -> FphStatus {
    guard(|| {
        let d = density_arg(density)?;
        let path = str_arg(path, "path")?;
        io::write_grid(Path::new(path), d)?;
        Ok(())
    })
}

/// Releases a handle. Passing null is a no-op.
///
/// # Safety
/// `density` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fph_density_free(density: *mut FphDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Spatial dimension of the grid, or 0 for a null handle.
///
/// # Safety
/// `density` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fph_density_dim(density: *const FphDensity) -> usize {
    density.as_ref().map_or(0, |d| d.inner.spec.dim())
}

/// Total number of nodes, or 0 for a null handle.
///
/// # Safety
/// `density` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fph_density_len(density: *const FphDensity) -> usize {
    density.as_ref().map_or(0, |d| d.inner.values.len())
}

/// Grid spacing `r`.
///
/// # Safety
/// `density` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_density_spacing(
    density: *const FphDensity,
    out: *mut f64,
) -> FphStatus {
    guard(|| emit(out, density_arg(density)?.spec.spacing()))
}

/// Probability mass the density was normalized to.
///
/// # Safety
/// `density` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_density_mass(density: *const FphDensity, out: *mut f64) -> FphStatus {
    guard(|| emit(out, density_arg(density)?.mass))
}

/// Copies per-axis node counts and lower corner into caller buffers of length `len >= dim`.
///
/// # Safety
/// `counts` and `lower` must each point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn fph_density_shape(
    density: *const FphDensity,
    counts: *mut usize,
    lower: *mut f64,
    len: usize,
) -> FphStatus {
    guard(|| {
        let d = density_arg(density)?;
        let dim = d.spec.dim();
        if counts.is_null() || lower.is_null() || len < dim {
            return Err(invalid(
                "shape buffers are null or shorter than the dimension",
            ));
        }
        std::slice::from_raw_parts_mut(counts, dim).copy_from_slice(d.spec.counts());
        std::slice::from_raw_parts_mut(lower, dim).copy_from_slice(d.spec.lower());
        Ok(())
    })
}

/// Borrowed pointer to the `fph_density_len` node values (row-major, last axis fastest),
/// valid while the handle lives. Null for a null handle.
///
/// # Safety
/// `density` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fph_density_values(density: *const FphDensity) -> *const f64 {
    density
        .as_ref()
        .map_or(std::ptr::null(), |d| d.inner.values.as_ptr())
}

/// Runs the full hybrid pipeline for the INI configuration text `config`
/// (fixed domain only) and stores the corrected density in `*out`.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_run_hybrid_config(
    config: *const c_char,
    out: *mut *mut FphDensity,
) -> FphStatus {
    guard(|| {
        let text = str_arg(config, "config")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let cfg = parse_config(text)?;
        let model = cfg.model.build()?;
        let spec = cfg.domain.fixed_spec()?;
        let mode = if cfg.output.full_mass {
            MassMode::Full
        } else {
            MassMode::MonteCarlo
        };
        let run = run_hybrid(&model, &spec, &cfg.sampler, &cfg.solver, mode)?;
        emit(out, boxed(run.density))
    })
}

/// Closed-form double-well stationary density on the half-line `x >= 0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_double_well_density(x: f64, sigma: f64, out: *mut f64) -> FphStatus {
    guard(|| emit(out, double_well_density(x, sigma)?))
}

/// Discrete L2 distance `sqrt(r^d * sum (a - b)^2)` between two densities on the same grid.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fph_l2_error(
    a: *const FphDensity,
    b: *const FphDensity,
    out: *mut f64,
) -> FphStatus {
    guard(|| emit(out, l2_error(density_arg(a)?, density_arg(b)?)?))
}
