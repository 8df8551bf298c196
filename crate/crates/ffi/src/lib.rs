//! C ABI over `hjhomog`.
//!
//! Objects cross the boundary as opaque handles, created by `hj_*_new`-style
//! constructors and released with the matching `hj_*_free`. Every fallible
//! call returns an [`HjStatus`]; on failure the message is kept per thread and
//! can be copied out with [`hj_last_error`]. Panics never unwind into C: they
//! are caught and reported as `HJ_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hjhomog::config::ExperimentConfig;
use hjhomog::effective::{effective_hamiltonian, effective_lagrangian_table, EffectiveTable};
use hjhomog::media::{eval_l, sample_environment, EnvironmentSample, Medium};
use hjhomog::runner::{run, Command, RunOptions};
use hjhomog::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Resonant = 4,
    Numeric = 5,
    Io = 6,
    AuditFailed = 7,
    Panic = 8,
}

/// Parsed and validated experiment configuration.
pub struct HjConfig(ExperimentConfig);

/// A medium built from a config's `[medium]` block.
pub struct HjMedium(Medium);

/// One sampled environment of a medium.
pub struct HjEnvironment(EnvironmentSample);

/// Effective Lagrangian table with `H_bar` attached.
pub struct HjEffectiveTable(EffectiveTable);

/// Which experiment [`hj_run`] performs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjCommand {
    Audit = 0,
    Effective = 1,
    Converge = 2,
    StableNorm = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HjStatus {
    match e {
        Error::Config(_) => HjStatus::Config,
        Error::Resonant { .. } => HjStatus::Resonant,
        Error::Io(_) | Error::Json(_) | Error::Cache(_) => HjStatus::Io,
        Error::Dimension { .. } | Error::MediumMismatch { .. } | Error::InvalidMedium(_) => {
            HjStatus::InvalidArgument
        }
        _ => HjStatus::Numeric,
    }
}

/// Runs `f`, recording any error or panic in the thread-local slot.
fn guard(f: impl FnOnce() -> Result<(), (HjStatus, String)>) -> HjStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HjStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HjStatus::Panic
        }
    }
}

fn lib(e: Error) -> (HjStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HjStatus, String) {
    (HjStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HjStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HjStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (HjStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (HjStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn boxed<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in bytes,
/// excluding the terminator; 0 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hj_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses a TOML experiment config from a string.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_config_parse(toml: *const c_char, out: *mut *mut HjConfig) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(toml, "toml")?;
        let cfg = ExperimentConfig::from_toml(text).map_err(lib)?;
        boxed(out, HjConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`hj_config_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hj_config_free(cfg: *mut HjConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the medium described by the config. A resonant quasi-periodic
/// frequency vector yields `HJ_STATUS_RESONANT`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_medium_build(cfg: *const HjConfig, out: *mut *mut HjMedium) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ref_arg(cfg, "cfg")?;
        let m = cfg.0.medium.build().map_err(lib)?;
        boxed(out, HjMedium(m));
        Ok(())
    })
}

/// Spatial dimension of the medium, or 0 for a null handle.
///
/// # Safety
/// `medium` must be null or a live medium handle.
#[no_mangle]
pub unsafe extern "C" fn hj_medium_dim(medium: *const HjMedium) -> usize {
    medium.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `medium` must be null or a live medium handle.
#[no_mangle]
pub unsafe extern "C" fn hj_medium_free(medium: *mut HjMedium) {
    if !medium.is_null() {
        drop(Box::from_raw(medium));
    }
}

/// Deterministically samples the environment with the given seed.
///
/// # Safety
/// `medium` must be a live medium handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_environment_sample(
    medium: *const HjMedium,
    seed: u64,
    out: *mut *mut HjEnvironment,
) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = ref_arg(medium, "medium")?;
        boxed(out, HjEnvironment(sample_environment(&m.0, seed)));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a live environment handle.
#[no_mangle]
pub unsafe extern "C" fn hj_environment_free(env: *mut HjEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

type PointArgs<'a> = (&'a Medium, &'a EnvironmentSample, &'a [f64], &'a [f64]);

unsafe fn point_args<'a>(
    medium: *const HjMedium,
    env: *const HjEnvironment,
    x: *const f64,
    v: *const f64,
    dim: usize,
    out: *mut f64,
) -> Result<PointArgs<'a>, (HjStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let m = ref_arg(medium, "medium")?;
    let w = ref_arg(env, "env")?;
    if dim != m.0.dim() {
        return Err(lib(Error::Dimension { expected: m.0.dim(), found: dim }));
    }
    m.0.check_sample(&w.0).map_err(lib)?;
    Ok((&m.0, &w.0, slice_arg(x, dim, "x")?, slice_arg(v, dim, "vector")?))
}

/// `H(x, p, omega)`; `x` and `p` hold `dim` values each.
///
/// # Safety
/// Handles must be live; `x`, `p` valid for `dim` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_hamiltonian(
    medium: *const HjMedium,
    env: *const HjEnvironment,
    x: *const f64,
    p: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjStatus {
    guard(|| {
        let (m, w, x, p) = point_args(medium, env, x, p, dim, out)?;
        *out = m.hamiltonian(x, p, w);
        Ok(())
    })
}

/// `L(x, q, omega)`, closed form where available, numeric conjugate otherwise.
///
/// # Safety
/// Handles must be live; `x`, `q` valid for `dim` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_lagrangian(
    medium: *const HjMedium,
    env: *const HjEnvironment,
    x: *const f64,
    q: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjStatus {
    guard(|| {
        let (m, w, x, q) = point_args(medium, env, x, q, dim, out)?;
        *out = eval_l(m, x, q, w).map_err(lib)?;
        Ok(())
    })
}

/// Estimates `L_bar` on the config's direction grid and `H_bar` on its
/// momentum grid, using the config's lattice, horizons and seeds.
///
/// # Safety
/// `cfg` and `medium` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_compute(
    cfg: *const HjConfig,
    medium: *const HjMedium,
    out: *mut *mut HjEffectiveTable,
) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let m = &ref_arg(medium, "medium")?.0;
        let table = (|| {
            let grids = cfg.grids()?;
            let sched = cfg.schedule()?;
            let t = effective_lagrangian_table(
                m,
                &grids.directions(m.dim())?,
                &sched.seeds,
                &sched.horizons,
                &cfg.lattice()?,
                &cfg.estimate_options()?,
            )?;
            effective_hamiltonian(&t, &grids.momenta(m.dim())?)
        })()
        .map_err(lib)?;
        boxed(out, HjEffectiveTable(table));
        Ok(())
    })
}

/// Number of direction grid points in the table, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live table handle.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_len(table: *const HjEffectiveTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.grid.len())
}

/// Copies grid point `k` (`dim` values) and its convexified `L_bar` value.
///
/// # Safety
/// `table` must be live; `h` valid for `dim` writes; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_point(
    table: *const HjEffectiveTable,
    k: usize,
    h: *mut f64,
    dim: usize,
    value: *mut f64,
) -> HjStatus {
    guard(|| {
        let t = &ref_arg(table, "table")?.0;
        if h.is_null() || value.is_null() {
            return Err(null("h/value"));
        }
        if dim != t.dim() {
            return Err(lib(Error::Dimension { expected: t.dim(), found: dim }));
        }
        if k >= t.grid.len() {
            return Err((HjStatus::InvalidArgument, format!("index {k} out of range")));
        }
        let p = t.grid.point(k);
        ptr::copy_nonoverlapping(p.as_ptr(), h, dim);
        *value = t.convexified[k];
        Ok(())
    })
}

/// Interpolated `L_bar(h)`; `HJ_STATUS_INVALID_ARGUMENT` outside the grid.
///
/// # Safety
/// `table` must be live; `h` valid for `dim` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_lagrangian(
    table: *const HjEffectiveTable,
    h: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjStatus {
    guard(|| lookup(table, h, dim, out, |t, h| t.interpolate(h), "direction"))
}

/// `H_bar(p)` at a momentum grid point; `HJ_STATUS_INVALID_ARGUMENT` elsewhere.
///
/// # Safety
/// `table` must be live; `p` valid for `dim` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_hamiltonian(
    table: *const HjEffectiveTable,
    p: *const f64,
    dim: usize,
    out: *mut f64,
) -> HjStatus {
    guard(|| lookup(table, p, dim, out, |t, p| t.hbar_at(p), "momentum"))
}

unsafe fn lookup(
    table: *const HjEffectiveTable,
    v: *const f64,
    dim: usize,
    out: *mut f64,
    f: impl Fn(&EffectiveTable, &[f64]) -> Option<f64>,
    what: &str,
) -> Result<(), (HjStatus, String)> {
    let t = &ref_arg(table, "table")?.0;
    if out.is_null() {
        return Err(null("out"));
    }
    if dim != t.dim() {
        return Err(lib(Error::Dimension { expected: t.dim(), found: dim }));
    }
    let v = slice_arg(v, dim, what)?;
    *out = f(t, v).ok_or_else(|| (HjStatus::InvalidArgument, format!("{what} {v:?} is off the grid")))?;
    Ok(())
}

/// # Safety
/// `table` must be null or a live table handle.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_free(table: *mut HjEffectiveTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Runs a full experiment as the CLI would, writing artifacts to `out_dir`.
/// `cache_dir` may be null; `workers` 0 means all cores. Returns
/// `HJ_STATUS_AUDIT_FAILED` when the run completes but an audit fails.
///
/// # Safety
/// `cfg` must be live; `out_dir` a NUL-terminated path; `cache_dir` null or
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hj_run(
    command: HjCommand,
    cfg: *const HjConfig,
    out_dir: *const c_char,
    cache_dir: *const c_char,
    workers: usize,
    strict: bool,
) -> HjStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let cache = if cache_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(cache_dir, "cache_dir")?))
        };
        let command = match command {
            HjCommand::Audit => Command::Audit,
            HjCommand::Effective => Command::Effective,
            HjCommand::Converge => Command::Converge,
            HjCommand::StableNorm => Command::StableNorm,
        };
        let opts = RunOptions {
            out: Some(out),
            cache,
            workers: (workers > 0).then_some(workers),
            strict,
            seed_override: None,
            export_fields: false,
        };
        let outcome = run(command, cfg, &opts).map_err(lib)?;
        if outcome.exit_code() != 0 {
            let failed: Vec<_> = outcome
                .manifest
                .audits
                .iter()
                .filter(|a| !a.passed)
                .map(|a| a.name.clone())
                .collect();
            return Err((HjStatus::AuditFailed, format!("audits failed: {failed:?}")));
        }
        Ok(())
    })
}
