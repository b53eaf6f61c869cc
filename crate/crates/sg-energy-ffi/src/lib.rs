//! C ABI over the core library. Handles are opaque pointers created and
//! destroyed here; every call reports an `SgeStatus` and writes results
//! through caller-owned buffers. Panics are caught at the boundary and
//! surfaced as `SGE_STATUS_PANIC` rather than unwinding into C.
//!
//! Words cross the boundary as arrays of 1-based `uint16_t` cell numbers,
//! the same convention the command line uses; a null word pointer with
//! length zero is the empty word.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sg_energy::distribution::{collect_distribution, EnumerationPlan, WordMeasure};
use sg_energy::energy::polar;
use sg_energy::{EnergyModel, SgError, Word};

/// Opaque model handle. Create with `sge_model_new`, destroy with
/// `sge_model_free`; safe to share across threads for reads.
pub struct SgeModel {
    inner: EnergyModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgeStatus {
    SgeStatusOk = 0,
    /// Null pointer, zero-sized buffer, or an otherwise malformed argument.
    SgeStatusArgument = 1,
    /// Level outside the range the requested backend supports.
    SgeStatusLevel = 2,
    /// A word symbol outside 1..=cell-count for the model's level.
    SgeStatusWord = 3,
    /// Enumeration would exceed the configured leaf cap.
    SgeStatusDepth = 4,
    /// Domain error: degenerate input vector, unsupported level, and so on.
    SgeStatusDomain = 5,
    /// A panic was caught at the language boundary.
    SgeStatusPanic = 6,
}

fn status_of(e: &SgError) -> SgeStatus {
    match e {
        SgError::LevelTooSmall(_) | SgError::LevelOverCap(..) => SgeStatus::SgeStatusLevel,
        SgError::SymbolOutOfRange { .. } | SgError::CornerOutOfRange(_) => SgeStatus::SgeStatusWord,
        SgError::DepthOverCap { .. } => SgeStatus::SgeStatusDepth,
        SgError::InvalidArgument(_) => SgeStatus::SgeStatusArgument,
        _ => SgeStatus::SgeStatusDomain,
    }
}

fn guarded<F: FnOnce() -> SgeStatus>(f: F) -> SgeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => SgeStatus::SgeStatusPanic,
    }
}

/// Builds the word from 1-based FFI symbols.
fn word_from_raw(model: &EnergyModel, word: *const u16, len: usize) -> Result<Word, SgeStatus> {
    if len == 0 {
        return Ok(Word::empty());
    }
    if word.is_null() {
        return Err(SgeStatus::SgeStatusArgument);
    }
    let raw = unsafe { std::slice::from_raw_parts(word, len) };
    let count = model.num_symbols() as u16;
    let mut symbols = Vec::with_capacity(len);
    for &s in raw {
        if s == 0 || s > count {
            return Err(SgeStatus::SgeStatusWord);
        }
        symbols.push(s - 1);
    }
    Ok(Word(symbols))
}

/// Creates a model for the given level, exact arithmetic up to the exact
/// cap and floating point beyond it. Writes the handle to `out`.
///
/// # Safety
/// `out` must be a valid pointer to an `SgeModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn sge_model_new(level: u32, out: *mut *mut SgeModel) -> SgeStatus {
    guarded(|| {
        if out.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        unsafe { *out = ptr::null_mut() };
        match EnergyModel::build(level) {
            Ok(m) => {
                let handle = Box::new(SgeModel { inner: m });
                unsafe { *out = Box::into_raw(handle) };
                SgeStatus::SgeStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Creates a model on the float backend regardless of level.
///
/// # Safety
/// `out` must be a valid pointer to an `SgeModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn sge_model_new_float(level: u32, out: *mut *mut SgeModel) -> SgeStatus {
    guarded(|| {
        if out.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        unsafe { *out = ptr::null_mut() };
        match EnergyModel::build_float(level) {
            Ok(m) => {
                let handle = Box::new(SgeModel { inner: m });
                unsafe { *out = Box::into_raw(handle) };
                SgeStatus::SgeStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Destroys a handle; a null pointer is a no-op.
///
/// # Safety
/// `model` must be null or a pointer returned by a constructor and not
/// already freed.
#[no_mangle]
pub unsafe extern "C" fn sge_model_free(model: *mut SgeModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sge_level(model: *const SgeModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.level()
}

/// Number of cells, which is also the number of word symbols.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sge_num_symbols(model: *const SgeModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.num_symbols() as u32
}

/// Energy renormalization factor r.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sge_renormalization_factor(model: *const SgeModel) -> f64 {
    if model.is_null() {
        return f64::NAN;
    }
    unsafe { &*model }.inner.r
}

/// 1 when the model was built with exact arithmetic, 0 otherwise.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sge_backend_is_exact(model: *const SgeModel) -> i32 {
    if model.is_null() {
        return 0;
    }
    i32::from(unsafe { &*model }.inner.exact.is_some())
}

/// Coefficient readout for one word: writes a_j into `out_a` and the
/// normalized b_j into `out_b`. Either output may be null to skip it.
///
/// # Safety
/// `model` must be a live handle, `word` valid for `len` entries (or null
/// with `len == 0`), and the non-null outputs valid for three doubles.
#[no_mangle]
pub unsafe extern "C" fn sge_coeffs(
    model: *const SgeModel,
    word: *const u16,
    len: usize,
    out_a: *mut f64,
    out_b: *mut f64,
) -> SgeStatus {
    guarded(|| {
        if model.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        let m = unsafe { &*model };
        let w = match word_from_raw(&m.inner, word, len) {
            Ok(w) => w,
            Err(s) => return s,
        };
        let a = match m.inner.a_coeffs(&w) {
            Ok(a) => a,
            Err(e) => return status_of(&e),
        };
        let b = match m.inner.b_coeffs(&w) {
            Ok(b) => b,
            Err(e) => return status_of(&e),
        };
        if !out_a.is_null() {
            unsafe { std::slice::from_raw_parts_mut(out_a, 3) }.copy_from_slice(&a);
        }
        if !out_b.is_null() {
            unsafe { std::slice::from_raw_parts_mut(out_b, 3) }.copy_from_slice(&b.b);
        }
        SgeStatus::SgeStatusOk
    })
}

/// Polar position of the word's coefficient vector: distance from the
/// barycenter and angle in (-pi, pi].
///
/// # Safety
/// `model` must be a live handle, `word` valid for `len` entries (or null
/// with `len == 0`), and non-null outputs valid for one double each.
#[no_mangle]
pub unsafe extern "C" fn sge_polar(
    model: *const SgeModel,
    word: *const u16,
    len: usize,
    out_radius: *mut f64,
    out_theta: *mut f64,
) -> SgeStatus {
    guarded(|| {
        if model.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        let m = unsafe { &*model };
        let w = match word_from_raw(&m.inner, word, len) {
            Ok(w) => w,
            Err(s) => return s,
        };
        let bv = match m.inner.b_coeffs(&w) {
            Ok(b) => b,
            Err(e) => return status_of(&e),
        };
        let p = polar(&bv);
        if !out_radius.is_null() {
            unsafe { *out_radius = p.radius };
        }
        if !out_theta.is_null() {
            unsafe { *out_theta = p.theta };
        }
        SgeStatus::SgeStatusOk
    })
}

/// Energy of the harmonic function with boundary values `f` on the cell of
/// the given word.
///
/// # Safety
/// `model` must be a live handle, `word` valid for `len` entries (or null
/// with `len == 0`), `f` valid for three doubles, `out` for one.
#[no_mangle]
pub unsafe extern "C" fn sge_cell_energy(
    model: *const SgeModel,
    word: *const u16,
    len: usize,
    f: *const f64,
    out: *mut f64,
) -> SgeStatus {
    guarded(|| {
        if model.is_null() || f.is_null() || out.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        let m = unsafe { &*model };
        let w = match word_from_raw(&m.inner, word, len) {
            Ok(w) => w,
            Err(s) => return s,
        };
        let fv = unsafe { std::slice::from_raw_parts(f, 3) };
        match m.inner.cell_energy(&[fv[0], fv[1], fv[2]], &w) {
            Ok(v) => {
                unsafe { *out = v };
                SgeStatus::SgeStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Weight nu(K_w) of the word's cell under the reference energy measure.
///
/// # Safety
/// `model` must be a live handle, `word` valid for `len` entries (or null
/// with `len == 0`), `out` for one double.
#[no_mangle]
pub unsafe extern "C" fn sge_nu(
    model: *const SgeModel,
    word: *const u16,
    len: usize,
    out: *mut f64,
) -> SgeStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        let m = unsafe { &*model };
        let w = match word_from_raw(&m.inner, word, len) {
            Ok(w) => w,
            Err(s) => return s,
        };
        match m.inner.nu(&w) {
            Ok(v) => {
                unsafe { *out = v };
                SgeStatus::SgeStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Sum of squared b-coefficients via the elimination closed form.
///
/// # Safety
/// `model` must be a live handle, `word` valid for `len` entries (or null
/// with `len == 0`), `out` for one double.
#[no_mangle]
pub unsafe extern "C" fn sge_sum_b_squared(
    model: *const SgeModel,
    word: *const u16,
    len: usize,
    out: *mut f64,
) -> SgeStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return SgeStatus::SgeStatusArgument;
        }
        let m = unsafe { &*model };
        let w = match word_from_raw(&m.inner, word, len) {
            Ok(w) => w,
            Err(s) => return s,
        };
        match m.inner.sum_b_squared_formula(&w, 0) {
            Ok(v) => {
                unsafe { *out = v };
                SgeStatus::SgeStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

fn histogram_common(
    model: *const SgeModel,
    depth: u32,
    nu_weighted: i32,
    bins: usize,
    mass: *mut f64,
    radial: bool,
) -> SgeStatus {
    if model.is_null() || mass.is_null() || bins == 0 {
        return SgeStatus::SgeStatusArgument;
    }
    let m = unsafe { &*model };
    let measure = if nu_weighted != 0 {
        WordMeasure::NuWeighted
    } else {
        WordMeasure::Uniform
    };
    let mut plan = EnumerationPlan::summary_only(depth, measure);
    if radial {
        plan.radius_bins = Some(bins);
    } else {
        plan.theta_bins = Some(bins);
    }
    let summary = match collect_distribution(&m.inner, &plan) {
        Ok(s) => s,
        Err(e) => return status_of(&e),
    };
    let h = if radial {
        summary.radius
    } else {
        summary.theta
    };
    let h = h.expect("planned histogram");
    unsafe { std::slice::from_raw_parts_mut(mass, bins) }.copy_from_slice(&h.mass);
    SgeStatus::SgeStatusOk
}

/// Angular distribution over all depth-m words: fills `mass` with per-bin
/// masses on (-pi, pi] split into `bins` equal bins. Total mass is 1.
///
/// # Safety
/// `model` must be a live handle and `mass` valid for `bins` doubles.
#[no_mangle]
pub unsafe extern "C" fn sge_theta_histogram(
    model: *const SgeModel,
    depth: u32,
    nu_weighted: i32,
    bins: usize,
    mass: *mut f64,
) -> SgeStatus {
    guarded(|| histogram_common(model, depth, nu_weighted, bins, mass, false))
}

/// Radial distribution over all depth-m words on [0, 1/sqrt(6)].
///
/// # Safety
/// `model` must be a live handle and `mass` valid for `bins` doubles.
#[no_mangle]
pub unsafe extern "C" fn sge_radius_histogram(
    model: *const SgeModel,
    depth: u32,
    nu_weighted: i32,
    bins: usize,
    mass: *mut f64,
) -> SgeStatus {
    guarded(|| histogram_common(model, depth, nu_weighted, bins, mass, true))
}

/// Static name for a status code.
#[no_mangle]
pub extern "C" fn sge_status_name(status: SgeStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        SgeStatus::SgeStatusOk => b"ok\0",
        SgeStatus::SgeStatusArgument => b"argument\0",
        SgeStatus::SgeStatusLevel => b"level\0",
        SgeStatus::SgeStatusWord => b"word\0",
        SgeStatus::SgeStatusDepth => b"depth\0",
        SgeStatus::SgeStatusDomain => b"domain\0",
        SgeStatus::SgeStatusPanic => b"panic\0",
    };
    s.as_ptr().cast()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
