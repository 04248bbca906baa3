//! C ABI over `slowfast_nse`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_from_*` function and released by the matching `*_free`.
//! Functions return an [`NseStatus`]; on failure the message is available
//! from [`nse_last_error`] until the next failing call on the same thread.
//! Panics are caught at the boundary and reported as `NSE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slowfast_nse::harness::{run_convergence_study, ExperimentConfig, HarnessError};
use slowfast_nse::spectral::snapshot::{read_snapshot, write_snapshot};
use slowfast_nse::spectral::{
    leray_project, nonlinear_b, norm, random_field, taylor_green, trilinear_b, NormKind, SpectralField, SpectralSpace,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigParse = 3,
    Inadmissible = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

/// Truncated Fourier space for an `N × N` grid.
pub struct NseSpace(Arc<SpectralSpace>);

/// Divergence-free, Hermitian spectral field.
pub struct NseField(SpectralField);

/// Parsed experiment config.
pub struct NseConfig(ExperimentConfig);

/// `Sobolev`: `‖u‖_s = |(-A)^{s/2} u|`. `Lebesgue`: `L^p` norm on the
/// physical grid.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NseNormKind {
    Sobolev = 0,
    Lebesgue = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("no interior nul"));
}

fn guard(f: impl FnOnce() -> Result<(), (NseStatus, String)>) -> NseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NseStatus::Ok,
        Ok(Err((status, msg))) => {
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
            NseStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (NseStatus, String)>;

fn invalid(msg: impl std::fmt::Display) -> (NseStatus, String) {
    (NseStatus::InvalidArgument, msg.to_string())
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| (NseStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| (NseStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((NseStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

fn harness_status(e: HarnessError) -> (NseStatus, String) {
    let status = match e {
        HarnessError::Parse { .. } | HarnessError::Config(_) => NseStatus::ConfigParse,
        HarnessError::Inadmissible { .. } => NseStatus::Inadmissible,
        HarnessError::Io { .. } => NseStatus::Io,
        _ => NseStatus::Runtime,
    };
    (status, e.to_string())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failing call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nse_space_new(n: usize, out: *mut *mut NseSpace) -> NseStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let space = SpectralSpace::new(n).map_err(invalid)?;
        *out = boxed(NseSpace(space));
        Ok(())
    })
}

/// # Safety
/// `space` must come from `nse_space_new` (or be null) and not be used after.
#[no_mangle]
pub unsafe extern "C" fn nse_space_free(space: *mut NseSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of retained wavenumbers in the space.
///
/// # Safety
/// `space` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_space_retained(space: *const NseSpace, out: *mut usize) -> NseStatus {
    guard(|| {
        *out_ptr(out, "out")? = deref(space, "space")?.0.retained_indices().len();
        Ok(())
    })
}

/// # Safety
/// `space` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_zeros(space: *const NseSpace, out: *mut *mut NseField) -> NseStatus {
    guard(|| {
        let s = deref(space, "space")?;
        *out_ptr(out, "out")? = boxed(NseField(SpectralField::zeros(&s.0)));
        Ok(())
    })
}

/// Random field with `|k|^{-decay}` coefficient decay, normalised to
/// `|u| = norm` (unnormalised when `norm <= 0`).
///
/// # Safety
/// `space` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_random(
    space: *const NseSpace,
    seed: u64,
    decay: f64,
    target_norm: f64,
    out: *mut *mut NseField,
) -> NseStatus {
    guard(|| {
        let s = deref(space, "space")?;
        if !decay.is_finite() || !target_norm.is_finite() {
            return Err(invalid("decay and norm must be finite"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        *out_ptr(out, "out")? = boxed(NseField(random_field(&s.0, &mut rng, decay, target_norm)));
        Ok(())
    })
}

/// Taylor–Green vortex scaled by `amplitude`.
///
/// # Safety
/// `space` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_taylor_green(
    space: *const NseSpace,
    amplitude: f64,
    out: *mut *mut NseField,
) -> NseStatus {
    guard(|| {
        let s = deref(space, "space")?;
        *out_ptr(out, "out")? = boxed(NseField(taylor_green(&s.0, amplitude)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library (or be null) and not be used after.
#[no_mangle]
pub unsafe extern "C" fn nse_field_free(field: *mut NseField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Coefficient `û(k)` as `[re₁, im₁, re₂, im₂]`; `InvalidArgument` for a
/// wavenumber outside the grid.
///
/// # Safety
/// `field` must be valid and `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nse_field_coefficient(field: *const NseField, k1: i64, k2: i64, out: *mut f64) -> NseStatus {
    guard(|| {
        let f = deref(field, "field")?;
        if out.is_null() {
            return Err((NseStatus::NullPointer, "`out` is null".into()));
        }
        let c = f.0.coefficient(k1, k2).ok_or_else(|| invalid(format!("wavenumber ({k1}, {k2}) is off the grid")))?;
        let vals = [c[0].re, c[0].im, c[1].re, c[1].im];
        std::ptr::copy_nonoverlapping(vals.as_ptr(), out, 4);
        Ok(())
    })
}

/// `‖u‖_s` (`kind = Sobolev`, `param = s`) or `|u|_{L^p}` (`kind = Lebesgue`,
/// `param = p`).
///
/// # Safety
/// `field` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_norm(field: *const NseField, kind: NseNormKind, param: f64, out: *mut f64) -> NseStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let k = match kind {
            NseNormKind::Sobolev => NormKind::Sobolev(param),
            NseNormKind::Lebesgue => NormKind::Lebesgue(param),
        };
        *out_ptr(out, "out")? = norm(&f.0, k).map_err(invalid)?;
        Ok(())
    })
}

/// Largest `|k·û(k)|` over retained modes.
///
/// # Safety
/// `field` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_divergence(field: *const NseField, out: *mut f64) -> NseStatus {
    guard(|| {
        *out_ptr(out, "out")? = deref(field, "field")?.0.divergence_residual();
        Ok(())
    })
}

/// Leray projection of an existing field (idempotent on valid fields).
///
/// # Safety
/// `field` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_project(field: *const NseField, out: *mut *mut NseField) -> NseStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let raw = f.0.clone().into_raw();
        let p = leray_project(f.0.space(), &raw).map_err(invalid)?;
        *out_ptr(out, "out")? = boxed(NseField(p));
        Ok(())
    })
}

/// `B(u, v)`.
///
/// # Safety
/// `u`, `v` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_nonlinear(
    u: *const NseField,
    v: *const NseField,
    out: *mut *mut NseField,
) -> NseStatus {
    guard(|| {
        let b = nonlinear_b(&deref(u, "u")?.0, &deref(v, "v")?.0).map_err(invalid)?;
        *out_ptr(out, "out")? = boxed(NseField(b));
        Ok(())
    })
}

/// `b(u, v, w)`.
///
/// # Safety
/// `u`, `v`, `w` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_field_trilinear(
    u: *const NseField,
    v: *const NseField,
    w: *const NseField,
    out: *mut f64,
) -> NseStatus {
    guard(|| {
        let r = trilinear_b(&deref(u, "u")?.0, &deref(v, "v")?.0, &deref(w, "w")?.0).map_err(invalid)?;
        *out_ptr(out, "out")? = r;
        Ok(())
    })
}

/// Writes `count` fields to an NSEF snapshot at `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `fields` an array of `count`
/// valid field pointers.
#[no_mangle]
pub unsafe extern "C" fn nse_snapshot_write(
    path: *const c_char,
    fields: *const *const NseField,
    count: usize,
) -> NseStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        if fields.is_null() && count > 0 {
            return Err((NseStatus::NullPointer, "`fields` is null".into()));
        }
        let mut list = Vec::with_capacity(count);
        for i in 0..count {
            list.push(deref(*fields.add(i), "fields[i]")?.0.clone());
        }
        let file = File::create(path).map_err(|e| (NseStatus::Io, format!("{path}: {e}")))?;
        write_snapshot(BufWriter::new(file), &list).map_err(|e| (NseStatus::Io, e.to_string()))
    })
}

/// Reads an NSEF snapshot into `out[0..capacity]`; `*count` receives the
/// number of fields in the file. Fails with `InvalidArgument` when the file
/// holds more than `capacity` fields or its N differs from `space`.
///
/// # Safety
/// `path` must be NUL-terminated, `space` valid, `out` an array of
/// `capacity` writable pointers and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn nse_snapshot_read(
    path: *const c_char,
    space: *const NseSpace,
    out: *mut *mut NseField,
    capacity: usize,
    count: *mut usize,
) -> NseStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let s = deref(space, "space")?;
        let count = out_ptr(count, "count")?;
        let file = File::open(path).map_err(|e| (NseStatus::Io, format!("{path}: {e}")))?;
        let fields = read_snapshot(BufReader::new(file), &s.0).map_err(|e| invalid(e.to_string()))?;
        *count = fields.len();
        if fields.len() > capacity {
            return Err(invalid(format!("snapshot holds {} fields, capacity is {capacity}", fields.len())));
        }
        if out.is_null() && !fields.is_empty() {
            return Err((NseStatus::NullPointer, "`out` is null".into()));
        }
        for (i, f) in fields.into_iter().enumerate() {
            *out.add(i) = boxed(NseField(f));
        }
        Ok(())
    })
}

/// Parses a JSON experiment config.
///
/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nse_config_from_json(json: *const c_char, out: *mut *mut NseConfig) -> NseStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let cfg = ExperimentConfig::from_json_str(text).map_err(harness_status)?;
        cfg.validate().map_err(harness_status)?;
        *out_ptr(out, "out")? = boxed(NseConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `config` must come from `nse_config_from_json` (or be null).
#[no_mangle]
pub unsafe extern "C" fn nse_config_free(config: *mut NseConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Dissipativity margin `2λ₁ - 2L_g - L_{σ₂}²` of the configured set. Does
/// not fail on a non-positive margin.
///
/// # Safety
/// `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_config_margin(config: *const NseConfig, out: *mut f64) -> NseStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        let out = out_ptr(out, "out")?;
        *out = match cfg.model() {
            Ok(m) => m.margin(),
            Err(HarnessError::Inadmissible { margin, .. }) => margin,
            Err(e) => return Err(harness_status(e)),
        };
        Ok(())
    })
}

/// Runs the convergence study and returns its report as a JSON string,
/// released with `nse_string_free`.
///
/// # Safety
/// `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nse_run_convergence(config: *const NseConfig, out: *mut *mut c_char) -> NseStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        let out = out_ptr(out, "out")?;
        let report = run_convergence_study(cfg).map_err(harness_status)?;
        let json = serde_json::to_string(&report).map_err(|e| (NseStatus::Runtime, e.to_string()))?;
        *out = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library (or be null).
#[no_mangle]
pub unsafe extern "C" fn nse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
