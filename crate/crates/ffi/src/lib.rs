//! C ABI over `ntk_lens`.
//!
//! Every function returns an [`NtkStatus`]; on failure the message is
//! available from [`ntk_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_fit` style calls and released with
//! the matching `*_free`. Matrices are dense, row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ntk_lens::continual::{AccuracyMatrix, ContinualMetrics};
use ntk_lens::harness::{run_experiment, ExperimentConfig};
use ntk_lens::kernel::{entk, gp_posterior, AnalyticNtk, EntkStrategy, GpPosterior};
use ntk_lens::linalg::{JitterPolicy, Matrix};
use ntk_lens::nn::{forward, init_params, InitConfig, NetworkSpec, ParameterVector, Parametrization};
use ntk_lens::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtkStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Shape = 3,
    Input = 4,
    Numeric = 5,
    Conditioning = 6,
    Capacity = 7,
    Divergence = 8,
    ConditionViolated = 9,
    Metric = 10,
    Io = 11,
    Parse = 12,
    Internal = 13,
    Panic = 14,
}

impl From<&Error> for NtkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => NtkStatus::Config,
            Error::Shape(_) => NtkStatus::Shape,
            Error::Input(_) | Error::Degenerate(_) | Error::Selection(_) => NtkStatus::Input,
            Error::Numeric(_) | Error::Convergence { .. } | Error::Unstable { .. } | Error::Calibration(_) => NtkStatus::Numeric,
            Error::Conditioning { .. } => NtkStatus::Conditioning,
            Error::Capacity { .. } => NtkStatus::Capacity,
            Error::Divergence { .. } => NtkStatus::Divergence,
            Error::ConditionViolated(_) => NtkStatus::ConditionViolated,
            Error::UndefinedMetric(_) | Error::IncompleteMatrix(_) => NtkStatus::Metric,
            Error::Io(_) => NtkStatus::Io,
            Error::Parse { .. } | Error::Format(_) | Error::Serde(_) => NtkStatus::Parse,
            Error::Internal(_) => NtkStatus::Internal,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtkParametrization {
    Ntp = 0,
    Sp = 1,
}

/// Forgetting and accuracy summaries of one accuracy matrix.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NtkContinualMetrics {
    pub average_forgetting: f64,
    pub average_forgetting_inclusive: f64,
    pub average_accuracy: f64,
    pub learning_accuracy: f64,
    pub param_distance: f64,
}

/// MLP architecture with its parameters.
pub struct NtkNetwork {
    spec: NetworkSpec,
    params: ParameterVector,
}

/// Kernel regression posterior with zero prior mean.
pub struct NtkGp {
    post: GpPosterior,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(NtkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(NtkStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NtkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NtkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NtkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            NtkStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(NtkStatus::Input, format!("{what} is not UTF-8")))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if src.len() != dst.len() {
        return Err(Failure(
            NtkStatus::Shape,
            format!("output buffer holds {} values, {} required", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn input_matrix(x: &[f64], rows: usize, cols: usize) -> Result<Matrix, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(NtkStatus::Shape, "input size overflows".into()))?;
    if x.len() != len {
        return Err(Failure(NtkStatus::Shape, format!("input has {} values, {rows} x {cols} required", x.len())));
    }
    Ok(Matrix::from_vec(rows, cols, x.to_vec())?)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ntk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ntk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an MLP with layer widths `widths[0..n_widths]` (input first,
/// output last), ReLU hidden layers and Gaussian initialization from `seed`.
///
/// # Safety
/// `widths` must point to `n_widths` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_new(
    widths: *const usize,
    n_widths: usize,
    parametrization: NtkParametrization,
    bias: bool,
    seed: u64,
    out: *mut *mut NtkNetwork,
) -> NtkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let widths = slice(widths, n_widths, "widths")?;
        let p = match parametrization {
            NtkParametrization::Ntp => Parametrization::Ntp,
            NtkParametrization::Sp => Parametrization::Sp,
        };
        let spec = NetworkSpec::mlp(widths, p, bias)?;
        let params = init_params(&spec, &InitConfig::gaussian(seed))?;
        *out = Box::into_raw(Box::new(NtkNetwork { spec, params }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`ntk_network_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_free(net: *mut NtkNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input dimension, output dimension and parameter count; any output
/// pointer may be null.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_shape(
    net: *const NtkNetwork,
    input_dim: *mut usize,
    output_dim: *mut usize,
    num_params: *mut usize,
) -> NtkStatus {
    guard(|| {
        let net = handle(net, "net")?;
        if let Some(d) = input_dim.as_mut() {
            *d = net.spec.input_dim();
        }
        if let Some(d) = output_dim.as_mut() {
            *d = net.spec.output_dim();
        }
        if let Some(d) = num_params.as_mut() {
            *d = net.spec.num_params();
        }
        Ok(())
    })
}

/// Copies the flattened parameters into `out[0..len]`.
///
/// # Safety
/// `net` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_params(net: *const NtkNetwork, out: *mut f64, len: usize) -> NtkStatus {
    guard(|| {
        let net = handle(net, "net")?;
        copy_out(net.params.values(), slice_mut(out, len, "out")?)
    })
}

/// Network outputs for `n` inputs: `x` is `n x input_dim`, `out` is
/// `n x output_dim`.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_forward(
    net: *const NtkNetwork,
    x: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> NtkStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let x = input_matrix(slice(x, n * net.spec.input_dim(), "x")?, n, net.spec.input_dim())?;
        let y = forward(&net.spec, &net.params, &x)?;
        copy_out(y.data(), slice_mut(out, out_len, "out")?)
    })
}

/// Empirical NTK Gram matrix at the network's parameters,
/// `(n * output_dim) x (n * output_dim)` with sample-major rows.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_entk(
    net: *const NtkNetwork,
    x: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> NtkStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let x = input_matrix(slice(x, n * net.spec.input_dim(), "x")?, n, net.spec.input_dim())?;
        let k = entk(&net.spec, &net.params, &x, None, EntkStrategy::Auto)?;
        copy_out(k.matrix.data(), slice_mut(out, out_len, "out")?)
    })
}

/// Infinite-width NTK Gram matrix of a depth-`depth` ReLU MLP with bias
/// variance `beta2` between `x1` (`n1 x d`) and `x2` (`n2 x d`).
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn ntk_analytic_gram(
    depth: usize,
    beta2: f64,
    x1: *const f64,
    n1: usize,
    x2: *const f64,
    n2: usize,
    d: usize,
    out: *mut f64,
    out_len: usize,
) -> NtkStatus {
    guard(|| {
        let a = input_matrix(slice(x1, n1 * d, "x1")?, n1, d)?;
        let b = input_matrix(slice(x2, n2 * d, "x2")?, n2, d)?;
        let k = AnalyticNtk::new(depth, beta2).gram(&a, &b)?;
        copy_out(k.data(), slice_mut(out, out_len, "out")?)
    })
}

/// Conditions a zero-mean kernel regression on the `n x n` kernel `k` and
/// targets `y` with observation noise `noise` (zero allowed).
///
/// # Safety
/// Buffers must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ntk_gp_fit(k: *const f64, n: usize, y: *const f64, noise: f64, out: *mut *mut NtkGp) -> NtkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let k = input_matrix(slice(k, n * n, "k")?, n, n)?;
        let y = slice(y, n, "y")?;
        let post = gp_posterior(&k, y, &vec![0.0; n], noise, &JitterPolicy::default())?;
        *out = Box::into_raw(Box::new(NtkGp { post }));
        Ok(())
    })
}

/// Posterior means and variances at `m` test points from `K(X*, X)`
/// (`m x n`) and the prior variances `K(x*, x*)`. `var_out` may be null,
/// in which case `k_test_diag` is ignored.
///
/// # Safety
/// `gp` must be a live handle and buffers must hold the stated values.
#[no_mangle]
pub unsafe extern "C" fn ntk_gp_predict(
    gp: *const NtkGp,
    k_test_train: *const f64,
    m: usize,
    k_test_diag: *const f64,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> NtkStatus {
    guard(|| {
        let gp = &handle(gp, "gp")?.post;
        let n = gp.num_train();
        let k = input_matrix(slice(k_test_train, m * n, "k_test_train")?, m, n)?;
        copy_out(&gp.mean(&k, &vec![0.0; m])?, slice_mut(mean_out, m, "mean_out")?)?;
        if !var_out.is_null() {
            let diag = slice(k_test_diag, m, "k_test_diag")?;
            copy_out(&gp.variance(&k, diag)?, slice_mut(var_out, m, "var_out")?)?;
        }
        Ok(())
    })
}

/// # Safety
/// `gp` must come from [`ntk_gp_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ntk_gp_free(gp: *mut NtkGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// Continual-learning summaries. `accuracy` is `tasks x tasks` row-major;
/// only the lower triangle (stage `t` >= task `i`) is read. `w0` and `wt`
/// are the parameters before and after training, `p` values each.
///
/// # Safety
/// Buffers must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ntk_continual_metrics(
    accuracy: *const f64,
    tasks: usize,
    w0: *const f64,
    wt: *const f64,
    p: usize,
    out: *mut NtkContinualMetrics,
) -> NtkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = slice(accuracy, tasks * tasks, "accuracy")?;
        let rows: Vec<Vec<f64>> = (0..tasks).map(|t| a[t * tasks..t * tasks + t + 1].to_vec()).collect();
        let m = ContinualMetrics::compute(&AccuracyMatrix::from_rows(&rows)?, slice(w0, p, "w0")?, slice(wt, p, "wt")?)?;
        *out = NtkContinualMetrics {
            average_forgetting: m.average_forgetting,
            average_forgetting_inclusive: m.average_forgetting_inclusive,
            average_accuracy: m.average_accuracy,
            learning_accuracy: m.learning_accuracy,
            param_distance: m.param_distance,
        };
        Ok(())
    })
}

/// Runs the experiment described by a TOML file, writing into `out_dir`.
/// `partial` (nullable) is set when some cells failed; the status is still
/// `NTK_STATUS_OK` in that case.
///
/// # Safety
/// Strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ntk_run_experiment(config_path: *const c_char, out_dir: *const c_char, partial: *mut bool) -> NtkStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(path(config_path, "config_path")?)?;
        let outcome = run_experiment(&cfg, path(out_dir, "out_dir")?)?;
        if let Some(p) = partial.as_mut() {
            *p = outcome.partial;
        }
        Ok(())
    })
}
