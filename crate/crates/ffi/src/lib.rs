//! C ABI for the `oneshot` library.
//!
//! Every entry point returns an [`OsStatus`] code. On failure a human-readable message is
//! kept per thread and can be copied out with [`os_last_error_message`]. Datasets are
//! opaque handles created by `os_dataset_new` or `os_dataset_from_csv` and released with
//! `os_dataset_free`. Parameter vectors are flat arrays `(a_1..a_J, b_1..b_J)`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use oneshot::asymptotics::sandwich_covariance;
use oneshot::cli::io::read_dataset;
use oneshot::design::{design_cost, DesignCostConfig};
use oneshot::error::Error;
use oneshot::hypothesis::wdpd_test;
use oneshot::{fit, Dataset, FitOptions, FitStatus, GroupRecord, Theta};

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Invalid input: domain, dimension, data or configuration error.
    Invalid = 2,
    /// Numerical failure: overflow, singular matrix, non-convergence, infeasible design.
    Numeric = 3,
    Io = 4,
    /// A caller buffer is too small.
    BufferTooSmall = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Fit outcome codes written by [`os_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsFitStatus {
    Converged = 0,
    MaxIterations = 1,
    Diverged = 2,
    NonFinite = 3,
}

impl From<FitStatus> for OsFitStatus {
    fn from(s: FitStatus) -> Self {
        match s {
            FitStatus::Converged => OsFitStatus::Converged,
            FitStatus::MaxIterations => OsFitStatus::MaxIterations,
            FitStatus::Diverged => OsFitStatus::Diverged,
            FitStatus::NonFinite => OsFitStatus::NonFinite,
        }
    }
}

/// Opaque grouped data set.
pub struct OsDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Buffer(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> OsStatus {
    match e {
        Error::Io(_) => OsStatus::Io,
        e if e.is_validation() => OsStatus::Invalid,
        _ => OsStatus::Numeric,
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard<F>(body: F) -> OsStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            OsStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            OsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Buffer(needed))) => {
            set_error(format!("buffer too small: {needed} elements needed"));
            OsStatus::BufferTooSmall
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            OsStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn data_ref<'a>(d: *const OsDataset) -> Result<&'a Dataset, Failure> {
    d.as_ref().map(|d| &d.inner).ok_or(Failure::Null("dataset"))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn theta_in(p: *const f64, len: usize) -> Result<Theta, Failure> {
    Ok(Theta::from_flat(slice_in(p, len, "theta")?)?)
}

/// Builds a data set from `n_groups` rows. `x` holds `n_groups * dim` covariates row by row.
///
/// # Safety
/// `tau`, `k`, `n` must point to `n_groups` values, `x` to `n_groups * dim` values, and
/// `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn os_dataset_new(
    n_groups: usize,
    dim: usize,
    tau: *const f64,
    k: *const u32,
    n: *const u32,
    x: *const f64,
    out_dataset: *mut *mut OsDataset,
) -> OsStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        let tau = slice_in(tau, n_groups, "tau")?;
        let k = slice_in(k, n_groups, "k")?;
        let n = slice_in(n, n_groups, "n")?;
        let x = slice_in(x, n_groups * dim, "x")?;
        let mut groups = Vec::with_capacity(n_groups);
        for i in 0..n_groups {
            groups.push(GroupRecord::new(tau[i], k[i], n[i], x[i * dim..(i + 1) * dim].to_vec())?);
        }
        *out_dataset = Box::into_raw(Box::new(OsDataset { inner: Dataset::new(groups)? }));
        Ok(())
    })
}

/// Reads a data set from a CSV file with header `group,tau,k,n,x1,...,xJ`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn os_dataset_from_csv(path: *const c_char, out_dataset: *mut *mut OsDataset) -> OsStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| Error::Config(format!("path is not UTF-8: {e}")))?;
        *out_dataset = Box::into_raw(Box::new(OsDataset { inner: read_dataset(Path::new(path))? }));
        Ok(())
    })
}

/// Releases a data set; null is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn os_dataset_free(dataset: *mut OsDataset) {
    if !dataset.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(dataset))));
    }
}

/// Number of groups and covariates of a data set.
///
/// # Safety
/// `dataset` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn os_dataset_shape(dataset: *const OsDataset, out_groups: *mut usize, out_dim: *mut usize) -> OsStatus {
    guard(|| {
        let d = data_ref(dataset)?;
        *out(out_groups, "out_groups")? = d.len();
        *out(out_dim, "out_dim")? = d.covariate_dim();
        Ok(())
    })
}

/// Fits the model (`beta = 0` for maximum likelihood) by coordinate descent from `theta0`.
/// The estimate is written to `out_theta` (`len` values).
///
/// # Safety
/// `theta0` and `out_theta` must hold `len` values; the scalar outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn os_fit(
    dataset: *const OsDataset,
    beta: f64,
    theta0: *const f64,
    len: usize,
    h: f64,
    tol: f64,
    max_iter: usize,
    out_theta: *mut f64,
    out_status: *mut OsFitStatus,
    out_iterations: *mut usize,
) -> OsStatus {
    guard(|| {
        let d = data_ref(dataset)?;
        let opts = FitOptions::new(theta_in(theta0, len)?).with_h(h).with_tol(tol).with_max_iter(max_iter);
        if out_theta.is_null() {
            return Err(Failure::Null("out_theta"));
        }
        let r = fit(d, beta, &opts)?;
        let est = r.theta_hat.to_flat();
        slice::from_raw_parts_mut(out_theta, len).copy_from_slice(&est);
        *out(out_status, "out_status")? = r.status.into();
        *out(out_iterations, "out_iterations")? = r.iterations;
        Ok(())
    })
}

/// Failure probability `F(τ)` of a group with covariates `x` (`dim` values).
///
/// # Safety
/// `theta` must hold `2 * dim` values and `x` `dim` values.
#[no_mangle]
pub unsafe extern "C" fn os_group_prob(theta: *const f64, tau: f64, x: *const f64, dim: usize, out_p: *mut f64) -> OsStatus {
    guard(|| {
        let theta = theta_in(theta, 2 * dim)?;
        let g = GroupRecord::new(tau, 0, 0, slice_in(x, dim, "x")?.to_vec())?;
        *out(out_p, "out_p")? = oneshot::regression::group_prob(&theta, &g)?.p;
        Ok(())
    })
}

/// Sandwich covariance `Σ_β` of `√K (θ̂_β - θ)` at `theta`, written row-major into
/// `out_sigma`, which must hold `cap >= len * len` values.
///
/// # Safety
/// `theta` must hold `len` values and `out_sigma` `cap` values.
#[no_mangle]
pub unsafe extern "C" fn os_sandwich_covariance(
    dataset: *const OsDataset,
    theta: *const f64,
    len: usize,
    beta: f64,
    out_sigma: *mut f64,
    cap: usize,
) -> OsStatus {
    guard(|| {
        let d = data_ref(dataset)?;
        let theta = theta_in(theta, len)?;
        if cap < len * len {
            return Err(Failure::Buffer(len * len));
        }
        if out_sigma.is_null() {
            return Err(Failure::Null("out_sigma"));
        }
        let cov = sandwich_covariance(&theta, d, beta)?;
        let dst = slice::from_raw_parts_mut(out_sigma, len * len);
        for i in 0..len {
            for j in 0..len {
                dst[i * len + j] = cov.sigma[(i, j)];
            }
        }
        Ok(())
    })
}

/// Summary of a robust test of `θ = θ₀`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OsTestResult {
    pub lambda_stat: f64,
    pub lambda_star: f64,
    pub critical: f64,
    pub rank: usize,
    pub reject: bool,
    pub fit_converged: bool,
}

/// Divergence-based test of `θ = θ₀` at level `alpha_level`, estimator fitted from `θ₀`
/// with default descent settings and the chi-square bound as critical value.
///
/// # Safety
/// `theta0` must hold `len` values and `out_result` be writable.
#[no_mangle]
pub unsafe extern "C" fn os_wdpd_test(
    dataset: *const OsDataset,
    theta0: *const f64,
    len: usize,
    beta: f64,
    alpha_level: f64,
    out_result: *mut OsTestResult,
) -> OsStatus {
    guard(|| {
        let d = data_ref(dataset)?;
        let theta0 = theta_in(theta0, len)?;
        let result = out(out_result, "out_result")?;
        let r = wdpd_test(d, &theta0, beta, alpha_level, &FitOptions::new(theta0.clone()))?;
        *result = OsTestResult {
            lambda_stat: r.lambda_stat,
            lambda_star: r.lambda_star,
            critical: r.critical,
            rank: r.r,
            reject: r.reject,
            fit_converged: r.fit_status == FitStatus::Converged,
        };
        Ok(())
    })
}

/// Design cost `c1 |Σ_β| + c2 Σ k_i F_i(τ_i)` of inspection times `tau` (one per group of
/// `layout`). Infeasible designs give `+∞` with status `Ok`.
///
/// # Safety
/// `theta` must hold `len` values and `tau` one value per group.
#[no_mangle]
pub unsafe extern "C" fn os_design_cost(
    layout: *const OsDataset,
    theta: *const f64,
    len: usize,
    beta: f64,
    c1: f64,
    c2: f64,
    tau: *const f64,
    out_cost: *mut f64,
) -> OsStatus {
    guard(|| {
        let d = data_ref(layout)?;
        let cfg = DesignCostConfig { c1, c2, theta: theta_in(theta, len)?, layout: d.clone(), beta };
        let tau = slice_in(tau, d.len(), "tau")?;
        *out(out_cost, "out_cost")? = design_cost(tau, &cfg)?;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
/// to `cap - 1` bytes) and returns its full length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be writable for `cap` bytes, or null when `cap` is 0.
#[no_mangle]
pub unsafe extern "C" fn os_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn os_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
