//! C ABI over `sparsecap`.
//!
//! Every function returns an `SPC_*` status code; values come back through
//! out-pointers. On failure a description is available from
//! `spc_last_error_message` on the same thread. Transforms are opaque
//! handles created by `spc_transform_new` and released with
//! `spc_transform_free`. Panics never cross the boundary; they are reported
//! as `SPC_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparsecap::bounds::{det_lower_threshold, entry_moments, jl_success_bound, BoundSpec};
use sparsecap::{Error, Transform, TransformConfig};

pub const SPC_OK: i32 = 0;
pub const SPC_NULL_POINTER: i32 = 1;
pub const SPC_INVALID_ARGUMENT: i32 = 2;
pub const SPC_DIMENSION_MISMATCH: i32 = 3;
pub const SPC_NON_FINITE: i32 = 4;
pub const SPC_INTERNAL: i32 = 5;

/// Opaque transform handle.
pub struct SpcTransform {
    inner: Transform,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Self {
            code: SPC_NULL_POINTER,
            message: format!("{what} is null"),
        }
    }

    fn mismatch(what: &str, expected: usize, actual: usize) -> Self {
        Self {
            code: SPC_DIMENSION_MISMATCH,
            message: format!("{what}: expected length {expected}, got {actual}"),
        }
    }
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::DimensionMismatch { .. } => SPC_DIMENSION_MISMATCH,
        Error::NonFinite(_) => SPC_NON_FINITE,
        Error::Context { source, .. } => code_of(source),
        Error::Io { .. } | Error::Json(_) => SPC_INTERNAL,
        _ => SPC_INVALID_ARGUMENT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}

fn set_last_error(message: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure {
            code: SPC_INTERNAL,
            message: format!("internal error: {message}"),
        })
    });
    match outcome {
        Ok(()) => {
            set_last_error(None);
            SPC_OK
        }
        Err(f) => {
            set_last_error(Some(f.message));
            f.code
        }
    }
}

/// Borrow `len` values at `data`; a null pointer is accepted only for
/// `len == 0`.
unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a>(t: *const SpcTransform) -> Result<&'a SpcTransform, Failure> {
    t.as_ref().ok_or_else(|| Failure::null("transform"))
}

/// Description of the last failed call on this thread, or null if the last
/// call succeeded. Valid until the next `spc_*` call on this thread.
#[no_mangle]
pub extern "C" fn spc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn spc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a transform `R^input_dim -> R^output_dim`; `cap_k == output_dim`
/// disables the cap.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_new(
    input_dim: usize,
    output_dim: usize,
    bernoulli_p: f64,
    cap_k: usize,
    seed: u64,
    out: *mut *mut SpcTransform,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let inner = Transform::build(TransformConfig {
            input_dim,
            output_dim,
            bernoulli_p,
            cap_k,
            seed,
        })?;
        out.write(Box::into_raw(Box::new(SpcTransform { inner })));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `t` must be null or a handle from `spc_transform_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_free(t: *mut SpcTransform) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_input_dim(t: *const SpcTransform) -> usize {
    t.as_ref().map_or(0, |t| t.inner.config().input_dim)
}

/// Output dimension, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_output_dim(t: *const SpcTransform) -> usize {
    t.as_ref().map_or(0, |t| t.inner.config().output_dim)
}

unsafe fn apply(
    t: *const SpcTransform,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
    capped: bool,
) -> i32 {
    guard(|| {
        let t = handle(t)?;
        let cfg = t.inner.config();
        if input_len != cfg.input_dim {
            return Err(Failure::mismatch("input", cfg.input_dim, input_len));
        }
        if output_len != cfg.output_dim {
            return Err(Failure::mismatch("output", cfg.output_dim, output_len));
        }
        let x = slice(input, input_len, "input")?;
        let out = slice_mut(output, output_len, "output")?;
        let y = if capped {
            t.inner.forward(x)?
        } else {
            t.inner.project(x)?
        };
        out.copy_from_slice(&y);
        Ok(())
    })
}

/// `output = c_k(M input)`.
///
/// # Safety
/// `input` must point to `input_len` readable doubles and `output` to
/// `output_len` writable doubles; the two must not overlap.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_forward(
    t: *const SpcTransform,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> i32 {
    apply(t, input, input_len, output, output_len, true)
}

/// `output = M input`, without the cap.
///
/// # Safety
/// As for `spc_transform_forward`.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_project(
    t: *const SpcTransform,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> i32 {
    apply(t, input, input_len, output, output_len, false)
}

/// Row-wise forward of `rows` row-major inputs of length `input_dim` into
/// `rows` outputs of length `output_dim`.
///
/// # Safety
/// `input` must hold `rows * input_dim` doubles and `output`
/// `rows * output_dim`; they must not overlap.
#[no_mangle]
pub unsafe extern "C" fn spc_transform_forward_batch(
    t: *const SpcTransform,
    input: *const f64,
    rows: usize,
    output: *mut f64,
) -> i32 {
    guard(|| {
        let t = handle(t)?;
        let cfg = t.inner.config();
        let input_len = rows
            .checked_mul(cfg.input_dim)
            .ok_or_else(|| Failure::mismatch("input", usize::MAX, rows))?;
        let output_len = rows
            .checked_mul(cfg.output_dim)
            .ok_or_else(|| Failure::mismatch("output", usize::MAX, rows))?;
        let x = slice(input, input_len, "input")?;
        let out = slice_mut(output, output_len, "output")?;
        let batch: Vec<Vec<f64>> = x.chunks(cfg.input_dim).map(<[f64]>::to_vec).collect();
        let y = t.inner.forward_batch(&batch)?;
        for (dst, src) in out.chunks_mut(cfg.output_dim).zip(&y) {
            dst.copy_from_slice(src);
        }
        Ok(())
    })
}

/// Keep the `k` largest-magnitude entries of `x` (ties to the lower index)
/// and zero the rest; `k >= len` copies `x`. `out` has the same length as
/// `x`.
///
/// # Safety
/// `x` and `out` must each point to `len` doubles (`out` writable).
#[no_mangle]
pub unsafe extern "C" fn spc_cap(x: *const f64, len: usize, k: usize, out: *mut f64) -> i32 {
    guard(|| {
        let x = slice(x, len, "x")?;
        let out = slice_mut(out, len, "out")?;
        let capped = sparsecap::cap(x, k)?;
        out.copy_from_slice(&capped.vector);
        Ok(())
    })
}

/// `norm (k+1)^(1/2 - 1/p_norm)`, the bound on `||x - c_k(x)||_2` given
/// `norm = ||x||_{p_norm}` with `p_norm` in (0, 2).
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn spc_cap_error_bound(
    norm: f64,
    k: usize,
    p_norm: f64,
    out: *mut f64,
) -> i32 {
    guard(|| write_out(out, sparsecap::cap_error_bound(norm, k, p_norm)?, "out"))
}

/// Lower bound on the probability that one pair's squared distance is
/// preserved within a factor `1 +- epsilon`.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn spc_jl_success_bound(
    epsilon: f64,
    n: usize,
    p: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let spec = BoundSpec::new(epsilon, n, p)?;
        write_out(out, jl_success_bound(&spec)?, "out")
    })
}

/// Natural log of the determinant lower threshold for an `m x m` sample.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn spc_det_lower_threshold(
    m: usize,
    p: f64,
    epsilon: f64,
    out: *mut f64,
) -> i32 {
    guard(|| write_out(out, det_lower_threshold(m, p, epsilon)?, "out"))
}

/// Zero probability, mean and variance of one matrix entry.
///
/// # Safety
/// Each out-pointer must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn spc_entry_moments(
    p: f64,
    zero_prob: *mut f64,
    mean: *mut f64,
    variance: *mut f64,
) -> i32 {
    guard(|| {
        if zero_prob.is_null() || mean.is_null() || variance.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let m = entry_moments(p)?;
        write_out(zero_prob, m.zero_prob, "zero_prob")?;
        write_out(mean, m.mean, "mean")?;
        write_out(variance, m.variance, "variance")
    })
}
