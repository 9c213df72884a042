//! C interface. Objects cross the boundary as opaque handles owned by the
//! caller and released with the matching `hw_*_free`. Every fallible call
//! returns an [`HwStatus`]; the message of the last failure on the calling
//! thread is available from [`hw_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hartree_wkb::cli::config::{parse_config, ExperimentConfig, Subcommand};
use hartree_wkb::direct::evolve_direct;
use hartree_wkb::physics::{PhysicsParams, WkbData};
use hartree_wkb::spectral::riesz_potential;
use hartree_wkb::{Error, Field, Grid};
use num_complex::Complex64;

/// Status codes; the nonzero solver codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwStatus {
    Ok = 0,
    Failure = 1,
    Config = 2,
    GuardTrip = 3,
    Resolution = 4,
    BlowUp = 5,
    NullPointer = 6,
    InvalidUtf8 = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

pub struct HwGrid(Grid);
pub struct HwField(Field);
pub struct HwConfig(ExperimentConfig);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HwStatus {
    match e.exit_code() {
        2 => HwStatus::Config,
        3 => HwStatus::GuardTrip,
        4 => HwStatus::Resolution,
        5 => HwStatus::BlowUp,
        _ => HwStatus::Failure,
    }
}

enum Fail {
    Solver(Error),
    Status(HwStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail::Solver(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HwStatus::Ok,
        Ok(Err(Fail::Solver(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            HwStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail::Status(HwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Status(HwStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Status(HwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(HwStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Copies `s` with a trailing NUL into `buf` when it fits; `*needed`
/// receives the full size including the NUL.
unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || cap < n {
        return Err(Fail::Status(
            HwStatus::BufferTooSmall,
            format!("buffer of {cap} bytes, {n} needed"),
        ));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the last error message of this thread; returns the size needed
/// including the NUL, and writes nothing when `cap` is too small.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hw_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len() + 1;
        if !buf.is_null() && cap >= n {
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
            *buf.add(msg.len()) = 0;
        }
        n
    })
}

/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn hw_grid_new(
    dim: usize,
    points: usize,
    box_length: f64,
    out: *mut *mut HwGrid,
) -> HwStatus {
    guard(|| put(out, HwGrid(Grid::new(dim, points, box_length)?)))
}

/// # Safety
/// `grid` must be null or a handle from `hw_grid_new`.
#[no_mangle]
pub unsafe extern "C" fn hw_grid_free(grid: *mut HwGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of grid points `M^n`.
///
/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hw_grid_len(grid: *const HwGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Builds a field from `len = 2·M^n` interleaved `(re, im)` values in
/// row-major order.
///
/// # Safety
/// `values` must be valid for `len` reads; `out` for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn hw_field_from_values(
    grid: *const HwGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut HwField,
) -> HwStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        if len != 2 * g.len() {
            return Err(Fail::Status(
                HwStatus::Failure,
                format!("expected {} values, got {len}", 2 * g.len()),
            ));
        }
        let raw = std::slice::from_raw_parts(deref(values, "values")?, len);
        let z = raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        put(out, HwField(Field::from_values(g, z)?))
    })
}

/// Copies the field into `len = 2·M^n` interleaved `(re, im)` values.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hw_field_values(field: *const HwField, buf: *mut f64, len: usize) -> HwStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        if buf.is_null() {
            return Err(Fail::Status(HwStatus::NullPointer, "buffer is null".into()));
        }
        if len < 2 * f.len() {
            return Err(Fail::Status(
                HwStatus::BufferTooSmall,
                format!("buffer of {len} values, {} needed", 2 * f.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (pair, z) in out.chunks_exact_mut(2).zip(f.values()) {
            pair[0] = z.re;
            pair[1] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hw_field_free(field: *mut HwField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// `|x|^{-γ} ∗ f` on the periodic box.
///
/// # Safety
/// `field` must be a live handle; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn hw_riesz_potential(
    field: *const HwField,
    gamma: f64,
    out: *mut *mut HwField,
) -> HwStatus {
    guard(|| {
        let f = &deref(field, "field")?.0;
        put(out, HwField(riesz_potential(f, gamma)?))
    })
}

/// Evolves `a₀ e^{iφ₀/ε}` with the split-step solver to `t_final` using step
/// `dt`, which must divide `t_final`.
///
/// # Safety
/// Handles must be live; `out` valid for one pointer write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hw_direct_evolve(
    amplitude: *const HwField,
    phase: *const HwField,
    epsilon: f64,
    lambda: f64,
    gamma: f64,
    t_final: f64,
    dt: f64,
    out: *mut *mut HwField,
) -> HwStatus {
    guard(|| {
        let a = &deref(amplitude, "amplitude")?.0;
        let phi = &deref(phase, "phase")?.0;
        let params = PhysicsParams::new(epsilon, lambda, gamma, a.grid().dim())?;
        let data = WkbData::new(vec![a.clone()], phi.clone(), None)?;
        let run = evolve_direct(&data, &params, t_final, dt, &[t_final])?;
        put(out, HwField(run.last().clone()))
    })
}

/// Parses configuration text; on `HW_STATUS_CONFIG` the message lists
/// every violation, one per line.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn hw_config_parse(text: *const c_char, out: *mut *mut HwConfig) -> HwStatus {
    guard(|| {
        let t = self::text(text, "text")?;
        put(out, HwConfig(parse_config(t)?))
    })
}

/// Canonical text of a configuration; see [`hw_last_error_message`] for the
/// buffer convention.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn hw_config_canonical(
    config: *const HwConfig,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> HwStatus {
    guard(|| copy_out(&deref(config, "config")?.0.to_canonical(), buf, cap, needed))
}

/// Runs `subcommand` (as spelled on the command line) and writes outputs to
/// `out_dir`. `*exit_code` receives the CLI exit code of the run.
///
/// # Safety
/// Strings must be NUL-terminated; `exit_code` null or writable.
#[no_mangle]
pub unsafe extern "C" fn hw_run(
    config: *const HwConfig,
    subcommand: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut i32,
) -> HwStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        let name = text(subcommand, "subcommand")?;
        let sub = Subcommand::parse(name).ok_or_else(|| {
            Fail::Status(HwStatus::Config, format!("unknown subcommand {name:?}"))
        })?;
        if let Some(s) = cfg.subcommand {
            if s != sub {
                return Err(Fail::Status(
                    HwStatus::Config,
                    format!("config is for `{}` but `{name}` was requested", s.as_str()),
                ));
            }
        }
        let dir = text(out_dir, "out_dir")?;
        let report = hartree_wkb::cli::run(cfg, sub, Path::new(dir))?;
        if !exit_code.is_null() {
            *exit_code = report.exit_code;
        }
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from `hw_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn hw_config_free(config: *mut HwConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}
