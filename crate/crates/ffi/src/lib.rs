//! C ABI over `duet-core`.
//!
//! Every fallible function returns a [`DuetStatus`]. On failure the message
//! is kept per thread and can be read with [`duet_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use duet_core::acquire::{propose_ratio, AcquireConfig};
use duet_core::cli::{cmd_run, RunArgs};
use duet_core::estimator::{order_stat_cdf, order_stat_pdf, TruncExpParams};
use duet_core::gp::{default_lengthscale_grid, fit_lengthscale, GpState, KernelParams};
use duet_core::ifweights::{default_shift_epsilon, normalize_weights};
use duet_core::regret::{average_regret_bound, bound_constant};
use duet_core::types::validate_ratio;
use duet_core::{DataPoint, DomainDataset, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    EvaluatorFailure = 5,
    Io = 6,
    InvalidLog = 7,
    Panic = 8,
}

impl From<&Error> for DuetStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => DuetStatus::DimensionMismatch,
            Error::NumericalBreakdown(_) | Error::SingularHessian | Error::InvalidKernel(_) => {
                DuetStatus::Numerical
            }
            Error::EvaluatorFailure { .. } => DuetStatus::EvaluatorFailure,
            Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } => DuetStatus::Io,
            Error::InvalidLog(_) => DuetStatus::InvalidLog,
            _ => DuetStatus::InvalidArgument,
        }
    }
}

/// Opaque Gaussian-process state over mixing ratios.
pub struct DuetGp {
    state: GpState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: DuetStatus, msg: impl Into<String>) -> DuetStatus {
    set_error(msg);
    status
}

fn from_core(e: Error) -> DuetStatus {
    let status = DuetStatus::from(&e);
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(&e);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    fail(status, msg)
}

/// Run `f`, turning panics into [`DuetStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), DuetStatus>) -> DuetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DuetStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(DuetStatus::Panic, "internal panic"),
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], DuetStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(DuetStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, DuetStatus> {
    p.as_mut()
        .ok_or_else(|| fail(DuetStatus::NullPointer, format!("{what} is null")))
}

unsafe fn gp_ref<'a>(gp: *const DuetGp) -> Result<&'a DuetGp, DuetStatus> {
    gp.as_ref()
        .ok_or_else(|| fail(DuetStatus::NullPointer, "gp handle is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, DuetStatus> {
    if p.is_null() {
        return Err(fail(DuetStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        fail(
            DuetStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn duet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn duet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create an empty GP over `dim` domains with a unit-variance squared
/// exponential kernel. Targets are used as given (no standardization).
///
/// # Safety
/// `out_gp` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_new(
    dim: usize,
    lengthscale: f64,
    zeta: f64,
    out_gp: *mut *mut DuetGp,
) -> DuetStatus {
    guard(|| {
        let slot = out(out_gp, "out_gp")?;
        *slot = ptr::null_mut();
        let kernel = KernelParams::with_lengthscale(lengthscale).map_err(from_core)?;
        let state = GpState::new(dim, kernel, zeta).map_err(from_core)?;
        *slot = Box::into_raw(Box::new(DuetGp { state }));
        Ok(())
    })
}

/// Release a GP handle. Null is ignored.
///
/// # Safety
/// `gp` must come from [`duet_gp_new`] and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_free(gp: *mut DuetGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// Number of observations held by the GP; 0 for a null handle.
///
/// # Safety
/// `gp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_len(gp: *const DuetGp) -> usize {
    gp.as_ref().map_or(0, |g| g.state.len())
}

/// Add the observation `(ratio, target)`. The ratio is normalized to sum to
/// one. On failure the handle is unchanged.
///
/// # Safety
/// `gp` must be a live handle and `ratio` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_append(
    gp: *mut DuetGp,
    ratio: *const f64,
    dim: usize,
    target: f64,
) -> DuetStatus {
    guard(|| {
        let g = gp
            .as_mut()
            .ok_or_else(|| fail(DuetStatus::NullPointer, "gp handle is null"))?;
        let r = validate_ratio(slice(ratio, dim, "ratio")?).map_err(from_core)?;
        if !target.is_finite() {
            return Err(fail(DuetStatus::InvalidArgument, "target must be finite"));
        }
        g.state = g.state.append(r, target).map_err(from_core)?;
        Ok(())
    })
}

/// Posterior mean and variance at `query`.
///
/// # Safety
/// `gp` must be a live handle, `query` must point to `dim` doubles and the
/// output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_posterior(
    gp: *const DuetGp,
    query: *const f64,
    dim: usize,
    out_mean: *mut f64,
    out_variance: *mut f64,
) -> DuetStatus {
    guard(|| {
        let g = gp_ref(gp)?;
        let (m, v) = (
            out(out_mean, "out_mean")?,
            out(out_variance, "out_variance")?,
        );
        let q = validate_ratio(slice(query, dim, "query")?).map_err(from_core)?;
        let p = g.state.posterior(&q).map_err(from_core)?;
        *m = p.mean;
        *v = p.variance;
        Ok(())
    })
}

/// Refit the lengthscale by maximum marginal likelihood over the default
/// grid and store it in the handle. Needs at least two observations.
///
/// # Safety
/// `gp` must be a live handle; `out_lengthscale` may be null.
#[no_mangle]
pub unsafe extern "C" fn duet_gp_fit_lengthscale(
    gp: *mut DuetGp,
    out_lengthscale: *mut f64,
) -> DuetStatus {
    guard(|| {
        let g = gp
            .as_mut()
            .ok_or_else(|| fail(DuetStatus::NullPointer, "gp handle is null"))?;
        let s = &g.state;
        let kernel = fit_lengthscale(
            s.inputs(),
            &s.standardized_targets(),
            s.zeta(),
            &default_lengthscale_grid(),
        )
        .map_err(from_core)?;
        g.state = s.with_kernel(kernel).map_err(from_core)?;
        if let Some(o) = out_lengthscale.as_mut() {
            *o = kernel.lengthscale;
        }
        Ok(())
    })
}

/// Minimize `μ − β·σ` over the simplex and write the proposed ratio to
/// `out_ratio` (length `dim`). `n_candidates == 0` selects the default.
///
/// # Safety
/// `gp` must be a live handle and `out_ratio` must point to `dim` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn duet_propose_ratio(
    gp: *const DuetGp,
    beta: f64,
    n_candidates: usize,
    seed: u64,
    out_ratio: *mut f64,
    dim: usize,
) -> DuetStatus {
    guard(|| {
        let g = gp_ref(gp)?;
        if dim != g.state.dim() {
            return Err(from_core(Error::DimensionMismatch {
                expected: g.state.dim(),
                got: dim,
            }));
        }
        if out_ratio.is_null() {
            return Err(fail(DuetStatus::NullPointer, "out_ratio is null"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(fail(
                DuetStatus::InvalidArgument,
                "beta must be a non-negative finite number",
            ));
        }
        let mut cfg = AcquireConfig {
            beta,
            ..AcquireConfig::default()
        };
        if n_candidates > 0 {
            cfg.n_candidates = n_candidates;
        }
        let r = propose_ratio(&g.state, &cfg, seed).map_err(from_core)?;
        std::slice::from_raw_parts_mut(out_ratio, dim).copy_from_slice(r.weights());
        Ok(())
    })
}

fn truncexp(rate: f64, cutoff: f64, k: usize) -> Result<TruncExpParams, DuetStatus> {
    TruncExpParams::new(rate, cutoff, k).map_err(from_core)
}

/// Density of the minimum of `k` truncated-exponential draws at `u`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn duet_order_stat_pdf(
    u: f64,
    rate: f64,
    cutoff: f64,
    k: usize,
    out_value: *mut f64,
) -> DuetStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = order_stat_pdf(u, &truncexp(rate, cutoff, k)?);
        Ok(())
    })
}

/// CDF of the minimum of `k` truncated-exponential draws at `u`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn duet_order_stat_cdf(
    u: f64,
    rate: f64,
    cutoff: f64,
    k: usize,
    out_value: *mut f64,
) -> DuetStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = order_stat_cdf(u, &truncexp(rate, cutoff, k)?);
        Ok(())
    })
}

/// Constant `A_{c,k}` of the average-regret bound.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn duet_bound_constant(c: f64, k: usize, out_value: *mut f64) -> DuetStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = bound_constant(c, k).map_err(from_core)?;
        Ok(())
    })
}

/// High-probability bound on the average regret.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn duet_average_regret_bound(
    c: f64,
    k: usize,
    delta: f64,
    out_value: *mut f64,
) -> DuetStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = average_regret_bound(c, k, delta).map_err(from_core)?;
        Ok(())
    })
}

/// Map `n` influence values to sampling probabilities. A non-positive
/// `shift_epsilon` selects the relative default.
///
/// # Safety
/// `influences` must point to `n` doubles and `out_probs` to `n` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn duet_normalize_influences(
    influences: *const f64,
    n: usize,
    shift_epsilon: f64,
    out_probs: *mut f64,
) -> DuetStatus {
    guard(|| {
        let values = slice(influences, n, "influences")?;
        if out_probs.is_null() && n > 0 {
            return Err(fail(DuetStatus::NullPointer, "out_probs is null"));
        }
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &v)| DataPoint::new(i.to_string(), v))
            .collect();
        let domain = DomainDataset::new("ffi", points).map_err(from_core)?;
        let eps = if shift_epsilon > 0.0 {
            shift_epsilon
        } else {
            default_shift_epsilon(&domain)
        };
        let w = normalize_weights(&domain, eps).map_err(from_core)?;
        std::slice::from_raw_parts_mut(out_probs, n).copy_from_slice(&w.probs);
        Ok(())
    })
}

/// Run the optimizer from a JSON configuration file, writing the run
/// directory to `output_dir` (or the directory named in the file when null).
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `output_dir` may be null.
#[no_mangle]
pub unsafe extern "C" fn duet_run_from_config(
    config_path: *const c_char,
    output_dir: *const c_char,
) -> DuetStatus {
    guard(|| {
        let config = path_arg(config_path, "config_path")?;
        let output_dir = if output_dir.is_null() {
            None
        } else {
            Some(path_arg(output_dir, "output_dir")?)
        };
        let args = RunArgs {
            config,
            seed_override: None,
            output_dir,
            estimator: None,
            k: None,
            iterations: None,
            beta: None,
            quiet: true,
        };
        cmd_run(&args).map(|_| ()).map_err(from_core)
    })
}
