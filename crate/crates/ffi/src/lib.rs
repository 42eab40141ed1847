//! C interface to `probstack`.
//!
//! Every fallible call returns a [`PsStatus`]; on failure the message is
//! kept per thread and read with [`ps_last_error_message`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Quantile outputs are always the 99-level grid
//! 0.01, ..., 0.99 written into a caller-provided buffer of 99 doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use probstack::dataio::{load_panel, synth_panel, SynthConfig};
use probstack::evaluation::{evaluate_method, select_test_hours, EvaluationResult};
use probstack::metrics::ProbMetricsReport;
use probstack::qlr::qlr_quantiles;
use probstack::qrf::qrf_quantiles;
use probstack::{
    fit_forest, Error, Forest, ForecastPanel, ForestParams, Method, MethodConfig, Mode,
    QuantileGrid, TrainingSet,
};

/// Number of levels in every quantile output.
pub const PS_GRID_LEN: usize = 99;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    InsufficientData = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsMethod {
    Qrs = 0,
    Qlr = 1,
    Qrf = 2,
}

impl From<PsMethod> for Method {
    fn from(m: PsMethod) -> Self {
        match m {
            PsMethod::Qrs => Method::Qrs,
            PsMethod::Qlr => Method::Qlr,
            PsMethod::Qrf => Method::Qrf,
        }
    }
}

/// Evaluation settings. `k == 0` selects global mode; `min_leaf == 0` keeps
/// the method default (10 for QRF, 1 for QRS).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsEvalOptions {
    pub method: PsMethod,
    pub k: usize,
    pub horizon: usize,
    pub test_hours: usize,
    pub trees: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

pub struct PsPanel(ForecastPanel);
pub struct PsResult(EvaluationResult);
pub struct PsQrfModel(Forest);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PsStatus {
    match err {
        Error::Io { .. } => PsStatus::Io,
        Error::Parse { .. } | Error::Csv { .. } | Error::Json { .. } => PsStatus::Parse,
        Error::SolverFailed { .. }
        | Error::NonFinite(_)
        | Error::DegenerateDifferential { .. }
        | Error::Crossing { .. } => PsStatus::Numerical,
        Error::InsufficientHistory { .. }
        | Error::KExceedsPatterns { .. }
        | Error::Empty(_)
        | Error::TestHour { .. } => PsStatus::InsufficientData,
        _ => PsStatus::InvalidArgument,
    }
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            PsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_grid(out: *mut f64, values: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("quantile output buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn training_set(
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    y: *const f64,
) -> Result<TrainingSet, Failure> {
    let cells = n_rows
        .checked_mul(n_features)
        .ok_or_else(|| invalid("n_rows * n_features overflows"))?;
    let inputs = slice(x, cells, "x")?.to_vec();
    let targets = slice(y, n_rows, "y")?.to_vec();
    Ok(TrainingSet::new(n_features, inputs, targets, (0..n_rows).collect())?)
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a panel CSV (`timestamp,actual,<model>...`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_panel_load(path: *const c_char, out: *mut *mut PsPanel) -> PsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let panel = load_panel(path)?;
        write_out(out, Box::into_raw(Box::new(PsPanel(panel))), "out")
    })
}

/// Generates series `index` (0-based, < 10) of the seeded synthetic benchmark.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_panel_benchmark(
    seed: u64,
    index: usize,
    out: *mut *mut PsPanel,
) -> PsStatus {
    guard(|| {
        let suite = SynthConfig::benchmark_suite(seed);
        let config: &SynthConfig = suite
            .get(index)
            .ok_or_else(|| invalid(format!("benchmark index {index} out of range 0..{}", suite.len())))?;
        let panel = synth_panel(config)?;
        write_out(out, Box::into_raw(Box::new(PsPanel(panel))), "out")
    })
}

/// Number of hours in the panel; 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_panel_len(panel: *const PsPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.len())
}

/// Number of base models in the panel; 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_panel_n_models(panel: *const PsPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.n_models())
}

/// # Safety
/// `panel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_panel_free(panel: *mut PsPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Backtests one method on evenly spaced hours of the panel's final year.
///
/// # Safety
/// `panel` must be a live handle, `options` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ps_evaluate(
    panel: *const PsPanel,
    options: *const PsEvalOptions,
    out: *mut *mut PsResult,
) -> PsStatus {
    guard(|| {
        let panel = &deref(panel, "panel")?.0;
        let o = *deref(options, "options")?;
        let mode = if o.k == 0 { Mode::Global } else { Mode::Local { k: o.k } };
        let mut config = MethodConfig::new(o.method.into(), mode)
            .with_horizon(o.horizon)
            .with_seed(o.seed)
            .with_trees(o.trees);
        if o.min_leaf > 0 {
            config = config.with_min_leaf(o.min_leaf);
        }
        let hours = select_test_hours(panel, o.test_hours)?;
        let result = evaluate_method(panel, &config, &hours)?;
        write_out(out, Box::into_raw(Box::new(PsResult(result))), "out")
    })
}

/// Number of evaluated test hours; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_result_n_hours(result: *const PsResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.records.len())
}

/// Reads one aggregate metric by its report name (`MPQRE`, `MARFE`, `MPWS`,
/// `inPI`, ...).
///
/// # Safety
/// `result` must be a live handle, `name` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_result_metric(
    result: *const PsResult,
    name: *const c_char,
    out: *mut f64,
) -> PsStatus {
    guard(|| {
        let result = &deref(result, "result")?.0;
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name).to_string_lossy();
        let pos = ProbMetricsReport::FIELDS
            .iter()
            .position(|f| f.eq_ignore_ascii_case(&name))
            .ok_or_else(|| invalid(format!("unknown metric {name:?}")))?;
        write_out(out, result.report.values()[pos], "out")
    })
}

/// Test-hour index, actual load and 99 quantiles of record `i`.
///
/// # Safety
/// `result` must be a live handle; `hour` and `actual` valid pointers;
/// `quantiles` must hold 99 doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_result_record(
    result: *const PsResult,
    i: usize,
    hour: *mut usize,
    actual: *mut f64,
    quantiles: *mut f64,
) -> PsStatus {
    guard(|| {
        let result = &deref(result, "result")?.0;
        let record = result.records.get(i).ok_or_else(|| {
            invalid(format!("record {i} out of range 0..{}", result.records.len()))
        })?;
        write_out(hour, record.hour, "hour")?;
        write_out(actual, record.actual, "actual")?;
        write_grid(quantiles, record.forecast.values())
    })
}

/// Writes the aggregate report as JSON into `buf` (NUL-terminated) and its
/// length without the terminator into `len`. With a too-small or null
/// buffer only `len` is set and the call fails with `InvalidArgument`.
///
/// # Safety
/// `result` must be a live handle, `len` a valid pointer and `buf` null or
/// valid for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn ps_result_report_json(
    result: *const PsResult,
    buf: *mut c_char,
    capacity: usize,
    len: *mut usize,
) -> PsStatus {
    guard(|| {
        let result = &deref(result, "result")?.0;
        let json = serde_json::to_string(&result.report)
            .map_err(|e| Failure(PsStatus::Parse, e.to_string()))?;
        write_out(len, json.len(), "len")?;
        if buf.is_null() || capacity <= json.len() {
            return Err(invalid(format!("buffer needs {} bytes", json.len() + 1)));
        }
        ptr::copy_nonoverlapping(json.as_ptr().cast::<c_char>(), buf, json.len());
        buf.add(json.len()).write(0);
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_result_free(result: *mut PsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Fits a quantile regression forest on row-major `x` (`n_rows` by
/// `n_features`) and targets `y`.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles, `y` `n_rows` doubles and
/// `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_qrf_fit(
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    y: *const f64,
    trees: usize,
    min_leaf: usize,
    seed: u64,
    out: *mut *mut PsQrfModel,
) -> PsStatus {
    guard(|| {
        let train = training_set(x, n_rows, n_features, y)?;
        let params = ForestParams {
            trees,
            min_leaf,
            features_per_split: None,
            seed,
            bootstrap: true,
        };
        let forest = fit_forest(&train, &params)?;
        write_out(out, Box::into_raw(Box::new(PsQrfModel(forest))), "out")
    })
}

/// Conditional quantiles of a fitted forest at one query point.
///
/// # Safety
/// `model` must be a live handle, `query` hold `n_features` doubles and
/// `quantiles` hold 99 doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_qrf_predict(
    model: *const PsQrfModel,
    query: *const f64,
    n_features: usize,
    quantiles: *mut f64,
) -> PsStatus {
    guard(|| {
        let forest = &deref(model, "model")?.0;
        let query = slice(query, n_features, "query")?;
        let grid = Arc::new(QuantileGrid::standard());
        let qf = qrf_quantiles(forest, query, &grid)?;
        write_grid(quantiles, qf.values())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_qrf_free(model: *mut PsQrfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fits linear quantile regressions for all 99 levels and evaluates them
/// at `query`, sorting the result when `rearrange` is non-zero.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles, `y` `n_rows`, `query`
/// `n_features` and `quantiles` 99.
#[no_mangle]
pub unsafe extern "C" fn ps_qlr_quantiles(
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    y: *const f64,
    query: *const f64,
    rearrange: i32,
    quantiles: *mut f64,
) -> PsStatus {
    guard(|| {
        let train = training_set(x, n_rows, n_features, y)?;
        let query = slice(query, n_features, "query")?;
        let grid = Arc::new(QuantileGrid::standard());
        let qf = qlr_quantiles(&train, query, &grid, rearrange != 0)?;
        write_grid(quantiles, qf.values())
    })
}
