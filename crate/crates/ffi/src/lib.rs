//! C ABI for min-opt.
//!
//! Every fallible call returns a [`MinStatus`]; on failure the message is kept
//! per thread and read with [`min_last_error`]. Objects are opaque handles
//! created by `*_new`/`*_load`/`*_generate` and released by the matching
//! `*_free`. Panics never cross the boundary; they surface as
//! `MIN_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use min_opt::data::{generate_static_dataset, load_dataset, save_dataset, Dataset, Input, SamplingPolicy};
use min_opt::forward::ForwardModel;
use min_opt::infer::{approx_infer, InferenceConfig};
use min_opt::invmap::InverseMap;
use min_opt::oracles::{from_name, Oracle};
use min_opt::reweight::{importance_weights, renyi_d2, ReweightConfig, ReweightingScheme};
use min_opt::rng::component_rng;
use min_opt::MinError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfSpace = 3,
    Oracle = 4,
    Io = 5,
    Malformed = 6,
    ModelMismatch = 7,
    Numeric = 8,
    Internal = 9,
}

impl From<&MinError> for MinStatus {
    fn from(e: &MinError) -> Self {
        match e {
            MinError::InvalidArgument(_) | MinError::Config(_) | MinError::ShapeMismatch { .. } => MinStatus::InvalidArgument,
            MinError::OutOfSpace(_) => MinStatus::OutOfSpace,
            MinError::Oracle(_) => MinStatus::Oracle,
            MinError::Io(_) => MinStatus::Io,
            MinError::Malformed { .. } | MinError::Version { .. } | MinError::Json(_) => MinStatus::Malformed,
            MinError::ModelMismatch(_) => MinStatus::ModelMismatch,
            MinError::NonFinite { .. } | MinError::Diverged { .. } => MinStatus::Numeric,
            MinError::InvalidNode(_) => MinStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Status(MinStatus, String),
    Min(MinError),
}

impl From<MinError> for Failure {
    fn from(e: MinError) -> Self {
        Failure::Min(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(MinStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::Status(MinStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MinStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return MinStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => (s, m),
        Ok(Err(Failure::Min(e))) => (MinStatus::from(&e), e.to_string()),
        Err(p) => {
            let m = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            (MinStatus::Internal, format!("panic: {}", m.unwrap_or_default()))
        }
    };
    set_error(msg);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn context_arg<'a>(p: *const f64, len: usize) -> Result<Option<&'a [f64]>, Failure> {
    Ok(if len == 0 { None } else { Some(slice_arg(p, len, "context")?) })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn min_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn min_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

pub struct MinOracle(Box<dyn Oracle>);
pub struct MinDataset(Dataset);
pub struct MinInverseMap(InverseMap);
pub struct MinForwardModel(ForwardModel);

fn input_from(o: &dyn Oracle, x: &[f64]) -> Result<Input, Failure> {
    let space = o.space();
    if x.len() != space.dim() {
        return Err(bad(format!("input has {} values, expected {}", x.len(), space.dim())));
    }
    if !space.is_categorical() {
        return Ok(Input::Continuous(x.to_vec()));
    }
    x.iter()
        .map(|&v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(bad(format!("symbol {v} is not a non-negative integer"))) })
        .collect::<Result<Vec<_>, _>>()
        .map(Input::Categorical)
}

fn input_values(x: &Input) -> Vec<f64> {
    match x {
        Input::Continuous(v) => v.clone(),
        Input::Categorical(s) => s.iter().map(|&a| a as f64).collect(),
    }
}

/// Builds an oracle from a registry name such as `branin` or `seq:L8A4:seed3`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_new(name: *const c_char, out: *mut *mut MinOracle) -> MinStatus {
    guard(|| {
        let o = from_name(str_arg(name, "name")?)?;
        write(out, Box::into_raw(Box::new(MinOracle(o))), "out")
    })
}

/// # Safety
/// `o` must be null or a handle from `min_oracle_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_free(o: *mut MinOracle) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Number of values in one input (coordinates, or sequence positions).
///
/// # Safety
/// `o` must be a live oracle handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_input_dim(o: *const MinOracle, dim: *mut usize) -> MinStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        write(dim, o.0.space().dim(), "dim")
    })
}

/// Context length; 0 for non-contextual oracles.
///
/// # Safety
/// `o` must be a live oracle handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_context_dim(o: *const MinOracle, dim: *mut usize) -> MinStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        write(dim, o.0.context_dim().unwrap_or(0), "dim")
    })
}

/// Scores `x` in the maximization convention. Categorical inputs are passed
/// as integral symbol values. Pass `context_len = 0` for non-contextual oracles.
///
/// # Safety
/// `x` must hold `len` values, `context` `context_len` values; `y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_evaluate(
    o: *const MinOracle,
    x: *const f64,
    len: usize,
    context: *const f64,
    context_len: usize,
    y: *mut f64,
) -> MinStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let input = input_from(o.0.as_ref(), slice_arg(x, len, "x")?)?;
        let v = o.0.evaluate(&input, context_arg(context, context_len)?)?;
        write(y, v, "y")
    })
}

/// Known optimum in the maximization convention; `*has` is false when unknown.
///
/// # Safety
/// `o` must be a live oracle handle; `value` and `has` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_oracle_known_optimum(o: *const MinOracle, value: *mut f64, has: *mut bool) -> MinStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let k = o.0.known_optimum();
        write(has, k.is_some(), "has")?;
        write(value, k.map_or(f64::NAN, |k| k.value), "value")
    })
}

/// Samples `n` uniform records from the oracle, seeded by `seed`.
///
/// # Safety
/// `o` must be a live oracle handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_generate(o: *const MinOracle, n: usize, seed: u64, out: *mut *mut MinDataset) -> MinStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let ds = generate_static_dataset(o.0.as_ref(), n, SamplingPolicy::Uniform, &mut component_rng(seed, "data"))?;
        write(out, Box::into_raw(Box::new(MinDataset(ds))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_load(path: *const c_char, out: *mut *mut MinDataset) -> MinStatus {
    guard(|| {
        let ds = load_dataset(&PathBuf::from(str_arg(path, "path")?))?;
        write(out, Box::into_raw(Box::new(MinDataset(ds))), "out")
    })
}

/// # Safety
/// `d` must be a live dataset handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_save(d: *const MinDataset, path: *const c_char) -> MinStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        Ok(save_dataset(&d.0, &PathBuf::from(str_arg(path, "path")?))?)
    })
}

/// # Safety
/// `d` must be null or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_free(d: *mut MinDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live dataset handle; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_len(d: *const MinDataset, len: *mut usize) -> MinStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        write(len, d.0.len(), "len")
    })
}

/// Copies the scores into `ys`, which must hold exactly the dataset length.
///
/// # Safety
/// `d` must be a live dataset handle; `ys` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn min_dataset_scores(d: *const MinDataset, ys: *mut f64, len: usize) -> MinStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        if len != d.0.len() {
            return Err(bad(format!("buffer holds {len} values, dataset has {}", d.0.len())));
        }
        slice_out(ys, len, "ys")?.copy_from_slice(&d.0.ys());
        Ok(())
    })
}

/// Per-record importance weights `p(y_i) / p_D(y_i)` for scores `ys`.
/// `tau` NaN selects the adaptive temperature.
///
/// # Safety
/// `ys` and `weights` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn min_reweight(
    ys: *const f64,
    n: usize,
    bins: usize,
    lambda: f64,
    tau: f64,
    weights: *mut f64,
) -> MinStatus {
    guard(|| {
        let ys = slice_arg(ys, n, "ys")?;
        let cfg = ReweightConfig { bins, lambda, tau: (!tau.is_nan()).then_some(tau) };
        let w = importance_weights(&ReweightingScheme::build(ys, &cfg)?, ys)?;
        slice_out(weights, n, "weights")?.copy_from_slice(&w);
        Ok(())
    })
}

/// Exponentiated Rényi divergence `d2(p || q) = Σ p² / q`.
///
/// # Safety
/// `p` and `q` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_renyi_d2(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> MinStatus {
    guard(|| {
        let v = renyi_d2(slice_arg(p, n, "p")?, slice_arg(q, n, "q")?)?;
        write(out, v, "out")
    })
}

/// Loads an inverse map checkpoint written by the CLI or library.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_inverse_map_load(path: *const c_char, out: *mut *mut MinInverseMap) -> MinStatus {
    guard(|| {
        let (m, _) = InverseMap::load(&PathBuf::from(str_arg(path, "path")?))?;
        write(out, Box::into_raw(Box::new(MinInverseMap(m))), "out")
    })
}

/// # Safety
/// `m` must be null or an inverse map handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn min_inverse_map_free(m: *mut MinInverseMap) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Draws `n` inputs conditioned on score `y`, written row-major into `out`
/// (`n * input_dim` values; categorical symbols as integral values).
///
/// # Safety
/// `m` must be a live handle; `context` must hold `context_len` values and
/// `out` `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn min_inverse_map_sample(
    m: *const MinInverseMap,
    y: f64,
    context: *const f64,
    context_len: usize,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> MinStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("inverse map"))?;
        let dim = m.0.space().dim();
        if out_len != n * dim {
            return Err(bad(format!("output holds {out_len} values, need {}", n * dim)));
        }
        let s = m.0.sample(y, context_arg(context, context_len)?, n, &mut component_rng(seed, "ffi-sample"))?;
        let dst = slice_out(out, out_len, "out")?;
        for (row, x) in dst.chunks_mut(dim.max(1)).zip(&s.inputs) {
            row.copy_from_slice(&input_values(x));
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_forward_load(path: *const c_char, out: *mut *mut MinForwardModel) -> MinStatus {
    guard(|| {
        let m = ForwardModel::load(&PathBuf::from(str_arg(path, "path")?))?;
        write(out, Box::into_raw(Box::new(MinForwardModel(m))), "out")
    })
}

/// # Safety
/// `m` must be null or a forward model handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn min_forward_free(m: *mut MinForwardModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Forward-model prediction at `x` in raw score units.
///
/// # Safety
/// `x` must hold `len` values, `context` `context_len` values; `y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn min_forward_predict(
    m: *const MinForwardModel,
    x: *const f64,
    len: usize,
    context: *const f64,
    context_len: usize,
    y: *mut f64,
) -> MinStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("forward model"))?;
        let x = slice_arg(x, len, "x")?;
        let input = if m.0.space().is_categorical() {
            Input::Categorical(x.iter().map(|&v| v as usize).collect())
        } else {
            Input::Continuous(x.to_vec())
        };
        m.0.space().contains(&input)?;
        write(y, m.0.predict(&input, context_arg(context, context_len)?)?, "y")
    })
}

/// Runs Approx-Infer with default settings. Writes the chosen input to `x`
/// (`x_len` must equal the input dimension), the forward prediction to
/// `prediction` and the feasibility flag to `feasible`.
///
/// # Safety
/// All handles must be live; buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn min_approx_infer(
    inv: *const MinInverseMap,
    fwd: *const MinForwardModel,
    data: *const MinDataset,
    context: *const f64,
    context_len: usize,
    seed: u64,
    x: *mut f64,
    x_len: usize,
    prediction: *mut f64,
    feasible: *mut bool,
) -> MinStatus {
    guard(|| {
        let inv = inv.as_ref().ok_or_else(|| null("inverse map"))?;
        let fwd = fwd.as_ref().ok_or_else(|| null("forward model"))?;
        let data = data.as_ref().ok_or_else(|| null("dataset"))?;
        if x_len != inv.0.space().dim() {
            return Err(bad(format!("x holds {x_len} values, need {}", inv.0.space().dim())));
        }
        let r = approx_infer(
            &inv.0,
            &fwd.0,
            &data.0.ys(),
            &InferenceConfig::default(),
            context_arg(context, context_len)?,
            &mut component_rng(seed, "infer"),
        )?;
        slice_out(x, x_len, "x")?.copy_from_slice(&input_values(&r.x_star));
        write(prediction, r.prediction, "prediction")?;
        write(feasible, r.feasible, "feasible")
    })
}
