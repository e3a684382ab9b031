//! C ABI over `debias-core`.
//!
//! Every function returns a [`DebiasStatus`]; outputs go through pointer
//! arguments. Handles are opaque and must be released with their `_free`
//! function. After a non-`Ok` status, [`debias_last_error`] holds a message
//! for the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use debias_core::app::{cmd_run, cmd_stats, RunConfig, Stage};
use debias_core::nn::{predict_proba, ModelParams};
use debias_core::stats::{binomial_ci, welch_t_proportions, FairnessReport, Group};
use debias_core::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DebiasStatus {
    DebiasOk = 0,
    DebiasErrNullPointer = 1,
    DebiasErrUtf8 = 2,
    DebiasErrInvalidArgument = 3,
    DebiasErrConfig = 4,
    DebiasErrMissingDependency = 5,
    DebiasErrIntegrity = 6,
    DebiasErrSchema = 7,
    DebiasErrNumeric = 8,
    DebiasErrUndefined = 9,
    DebiasErrInsufficientStarters = 10,
    DebiasErrIo = 11,
    DebiasErrPanic = 12,
}

/// Appearance group selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DebiasGroup {
    DebiasLighter = 0,
    DebiasDarker = 1,
}

impl From<DebiasGroup> for Group {
    fn from(g: DebiasGroup) -> Self {
        match g {
            DebiasGroup::DebiasLighter => Group::Lighter,
            DebiasGroup::DebiasDarker => Group::Darker,
        }
    }
}

/// Opaque run configuration.
pub struct DebiasConfig(RunConfig);
/// Opaque fairness report.
pub struct DebiasReport(FairnessReport);
/// Opaque trained classifier.
pub struct DebiasModel(ModelParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DebiasStatus {
    match e {
        Error::InvalidArgument(_) | Error::Specification(_) | Error::DegenerateInput(_) => {
            DebiasStatus::DebiasErrInvalidArgument
        }
        Error::Config(_) => DebiasStatus::DebiasErrConfig,
        Error::MissingDependency { .. } => DebiasStatus::DebiasErrMissingDependency,
        Error::Integrity(_) | Error::Checkpoint(_) => DebiasStatus::DebiasErrIntegrity,
        Error::Schema { .. } => DebiasStatus::DebiasErrSchema,
        Error::Numeric { .. } => DebiasStatus::DebiasErrNumeric,
        Error::UndefinedCell(_) | Error::UndefinedAuc(_) => DebiasStatus::DebiasErrUndefined,
        Error::InsufficientStarters { .. } => DebiasStatus::DebiasErrInsufficientStarters,
        Error::Io { .. } => DebiasStatus::DebiasErrIo,
    }
}

struct Fail(DebiasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DebiasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DebiasStatus::DebiasOk
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside debias-ffi");
            DebiasStatus::DebiasErrPanic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DebiasStatus::DebiasErrNullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DebiasStatus::DebiasErrUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn debias_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn debias_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// 95% normal-approximation half-width of a proportion `p` over `n` trials.
#[no_mangle]
pub unsafe extern "C" fn debias_binomial_ci(p: f64, n: usize, half_width: *mut f64) -> DebiasStatus {
    guard(|| {
        let slot = out(half_width, "half_width")?;
        *slot = binomial_ci(p, n)?.half_width;
        Ok(())
    })
}

/// Welch t statistic and two-sided p-value for two accuracies.
#[no_mangle]
pub unsafe extern "C" fn debias_welch_t(
    p1: f64,
    n1: usize,
    p2: f64,
    n2: usize,
    t: *mut f64,
    p_value: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let t = out(t, "t")?;
        let p_value = out(p_value, "p_value")?;
        let w = welch_t_proportions(p1, n1, p2, n2)?;
        *t = w.t;
        *p_value = w.p_two_sided;
        Ok(())
    })
}

/// Default configuration.
#[no_mangle]
pub unsafe extern "C" fn debias_config_default(config: *mut *mut DebiasConfig) -> DebiasStatus {
    guard(|| {
        let slot = out(config, "config")?;
        *slot = Box::into_raw(Box::new(DebiasConfig(RunConfig::default())));
        Ok(())
    })
}

/// Parses the flat `key = value` config format.
#[no_mangle]
pub unsafe extern "C" fn debias_config_parse(text_utf8: *const c_char, config: *mut *mut DebiasConfig) -> DebiasStatus {
    guard(|| {
        let slot = out(config, "config")?;
        *slot = ptr::null_mut();
        let cfg = RunConfig::parse(text(text_utf8, "text")?)?;
        *slot = Box::into_raw(Box::new(DebiasConfig(cfg)));
        Ok(())
    })
}

/// Sets one config key. The config is left unchanged when validation fails.
#[no_mangle]
pub unsafe extern "C" fn debias_config_set(
    config: *mut DebiasConfig,
    key: *const c_char,
    value: *const c_char,
) -> DebiasStatus {
    guard(|| {
        let cfg = out(config, "config")?;
        let mut next = cfg.0.clone();
        next.set(0, text(key, "key")?, text(value, "value")?)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// The config rendered as `key = value` lines. Free with [`debias_string_free`].
#[no_mangle]
pub unsafe extern "C" fn debias_config_to_text(
    config: *const DebiasConfig,
    text_out: *mut *mut c_char,
) -> DebiasStatus {
    guard(|| {
        let slot = out(text_out, "text_out")?;
        let cfg = handle(config, "config")?;
        *slot = CString::new(cfg.0.to_text())
            .map_err(|e| Fail(DebiasStatus::DebiasErrUtf8, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_config_free(config: *mut DebiasConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs comma-separated `stages` (or `all`) in `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn debias_run(
    config: *const DebiasConfig,
    out_dir: *const c_char,
    stages: *const c_char,
) -> DebiasStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let dir = text(out_dir, "out_dir")?;
        let stages = Stage::parse_list(text(stages, "stages")?)?;
        cmd_run(&cfg.0, Path::new(dir), &stages)?;
        Ok(())
    })
}

/// Builds a fairness report from prediction CSV text (`id,group,actual,score,predicted`).
#[no_mangle]
pub unsafe extern "C" fn debias_report_from_csv(
    csv_utf8: *const c_char,
    system: *const c_char,
    report: *mut *mut DebiasReport,
) -> DebiasStatus {
    guard(|| {
        let slot = out(report, "report")?;
        *slot = ptr::null_mut();
        let r = cmd_stats(text(csv_utf8, "csv")?, text(system, "system")?, None)?;
        *slot = Box::into_raw(Box::new(DebiasReport(r)));
        Ok(())
    })
}

/// Report as JSON. Free with [`debias_string_free`].
#[no_mangle]
pub unsafe extern "C" fn debias_report_to_json(report: *const DebiasReport, json: *mut *mut c_char) -> DebiasStatus {
    guard(|| {
        let slot = out(json, "json")?;
        let r = handle(report, "report")?;
        *slot = CString::new(r.0.to_json())
            .map_err(|e| Fail(DebiasStatus::DebiasErrUtf8, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Signed accuracy difference, lighter minus darker, as a fraction.
#[no_mangle]
pub unsafe extern "C" fn debias_report_delta(report: *const DebiasReport, delta: *mut f64) -> DebiasStatus {
    guard(|| {
        let slot = out(delta, "delta")?;
        *slot = handle(report, "report")?.0.delta.value;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_report_accuracy(
    report: *const DebiasReport,
    group: DebiasGroup,
    value: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = handle(report, "report")?.0.accuracy(group.into()).value;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_report_sensitivity(
    report: *const DebiasReport,
    group: DebiasGroup,
    value: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = handle(report, "report")?.0.sensitivity(group.into()).value;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_report_auc(
    report: *const DebiasReport,
    group: DebiasGroup,
    value: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = handle(report, "report")?.0.auc(group.into());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_report_free(report: *mut DebiasReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Loads a classifier checkpoint written by a run.
#[no_mangle]
pub unsafe extern "C" fn debias_model_load(path: *const c_char, model: *mut *mut DebiasModel) -> DebiasStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let m = ModelParams::load(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(DebiasModel(m)));
        Ok(())
    })
}

/// Number of inputs (pixels) the model expects.
#[no_mangle]
pub unsafe extern "C" fn debias_model_input_dim(model: *const DebiasModel, dim: *mut usize) -> DebiasStatus {
    guard(|| {
        let slot = out(dim, "dim")?;
        *slot = handle(model, "model")?.0.input_dim();
        Ok(())
    })
}

/// Class-1 probability for one flattened input of `len` values.
#[no_mangle]
pub unsafe extern "C" fn debias_model_predict(
    model: *const DebiasModel,
    input: *const f64,
    len: usize,
    probability: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let slot = out(probability, "probability")?;
        let m = handle(model, "model")?;
        if input.is_null() {
            return Err(null("input"));
        }
        let x = std::slice::from_raw_parts(input, len);
        let p = predict_proba(&m.0, x)?;
        *slot = *p
            .get(1)
            .ok_or_else(|| Fail(DebiasStatus::DebiasErrInvalidArgument, "model has one output".into()))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn debias_model_free(model: *mut DebiasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
