//! C ABI over `srlp`.
//!
//! Every fallible call returns an [`SrlpStatus`]. On failure the message is
//! kept per thread and read with [`srlp_last_error`]. Handles are opaque and
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use srlp::backtest::{self, BacktestError};
use srlp::event_data::{assign_labels, parse_events, Corpus, DataError, LabelThresholds};
use srlp::model::{Checkpoint, ModelError};
use srlp::train::{self, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrlpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 4,
    Data = 5,
    Model = 6,
    Train = 7,
    Backtest = 8,
    /// The event has no complete SRL frame and cannot be scored.
    NoFrames = 9,
    OutOfRange = 10,
    Panic = 99,
}

/// Parsed events with their embeddings.
pub struct SrlpCorpus(Corpus);

/// A loaded checkpoint.
pub struct SrlpModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SrlpStatus, String);

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = if matches!(e, DataError::Io { .. }) { SrlpStatus::Io } else { SrlpStatus::Data };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure(SrlpStatus::Model, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        Failure(SrlpStatus::Train, e.to_string())
    }
}

impl From<BacktestError> for Failure {
    fn from(e: BacktestError) -> Self {
        Failure(SrlpStatus::Backtest, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrlpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrlpStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SrlpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SrlpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(SrlpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn srlp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn srlp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an events file and an optional embeddings file (`embeddings_path`
/// may be null).
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srlp_corpus_load(
    events_path: *const c_char,
    embeddings_path: *const c_char,
    out: *mut *mut SrlpCorpus,
) -> SrlpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let events = path_arg(events_path, "events_path")?;
        let embeddings = if embeddings_path.is_null() { None } else { Some(path_arg(embeddings_path, "embeddings_path")?) };
        let corpus = parse_events(&events, embeddings.as_deref())?;
        corpus.validate()?;
        *out = Box::into_raw(Box::new(SrlpCorpus(corpus)));
        Ok(())
    })
}

/// Number of events, 0 for null.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn srlp_corpus_len(corpus: *const SrlpCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be null or a handle from [`srlp_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srlp_corpus_free(corpus: *mut SrlpCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srlp_model_load(path: *const c_char, out: *mut *mut SrlpModel) -> SrlpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SrlpModel(checkpoint)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`srlp_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srlp_model_free(model: *mut SrlpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Class probabilities (outperforming, neutral, underperforming) of event
/// `index`, written to `probabilities[0..3]`.
///
/// # Safety
/// Handles must be live; `probabilities` must hold 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn srlp_model_predict(
    model: *const SrlpModel,
    corpus: *const SrlpCorpus,
    index: usize,
    probabilities: *mut f64,
) -> SrlpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if probabilities.is_null() {
            return Err(null("probabilities"));
        }
        let event = corpus.0.events.get(index).ok_or_else(|| {
            Failure(SrlpStatus::OutOfRange, format!("index {index} out of range for {} events", corpus.0.len()))
        })?;
        let out = train::predict(&model.0, std::slice::from_ref(event))?;
        let p = out.predictions.first().ok_or_else(|| {
            Failure(SrlpStatus::NoFrames, format!("event {} has no complete SRL frame", event.event_id))
        })?;
        std::ptr::copy_nonoverlapping(p.probabilities.as_ptr(), probabilities, 3);
        Ok(())
    })
}

/// Predicts every event and writes the predictions CSV to `path`.
///
/// # Safety
/// Handles must be live; `path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn srlp_model_predict_file(
    model: *const SrlpModel,
    corpus: *const SrlpCorpus,
    path: *const c_char,
) -> SrlpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let path = path_arg(path, "path")?;
        let out = train::predict(&model.0, &corpus.0.events)?;
        train::write_predictions(&path, &out.predictions)?;
        Ok(())
    })
}

/// Quantile labels of `n` return rates: 0 outperforming, 1 neutral,
/// 2 underperforming, -1 excluded. Ties rank by input position.
///
/// # Safety
/// `returns` and `labels` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn srlp_assign_labels(
    returns: *const f64,
    n: usize,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    labels: *mut i32,
) -> SrlpStatus {
    guard(|| {
        let returns = slice_arg(returns, n, "returns")?;
        if n > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        let width = n.to_string().len();
        let items: Vec<(String, f64)> = returns.iter().enumerate().map(|(i, &r)| (format!("{i:0width$}"), r)).collect();
        let assigned = assign_labels(&items, &LabelThresholds { a, b, c, d })?;
        for (i, l) in assigned.into_iter().enumerate() {
            *labels.add(i) = l.map_or(-1, |l| l.index() as i32);
        }
        Ok(())
    })
}

unsafe fn metric(
    values: *const f64,
    n: usize,
    out: *mut f64,
    f: impl FnOnce(&[f64]) -> Result<f64, BacktestError>,
) -> SrlpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f(slice_arg(values, n, "values")?)?;
        Ok(())
    })
}

/// Maximum drawdown of an equity curve, as a non-positive fraction.
///
/// # Safety
/// `equity` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srlp_max_drawdown(equity: *const f64, n: usize, out: *mut f64) -> SrlpStatus {
    metric(equity, n, out, backtest::max_drawdown)
}

/// Annualized return of a daily equity curve over a 252-day year.
///
/// # Safety
/// `equity` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srlp_annualized_return(equity: *const f64, n: usize, out: *mut f64) -> SrlpStatus {
    metric(equity, n, out, |e| backtest::annualized_return(e, backtest::TRADING_DAYS_PER_YEAR))
}

/// Annualized Sharpe ratio of daily returns.
///
/// # Safety
/// `returns` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srlp_sharpe(returns: *const f64, n: usize, risk_free_daily: f64, out: *mut f64) -> SrlpStatus {
    metric(returns, n, out, |r| backtest::sharpe(r, risk_free_daily))
}
