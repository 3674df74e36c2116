//! C ABI over the relcap statistics, metrics and tri-state protocol.
//!
//! Every fallible function returns a [`RelcapStatus`]; on failure the
//! message is available from [`relcap_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use relcap::data::{invert_target, make_target, InstanceKey};
use relcap::eval::{self, TriState};
use relcap::prediction::{PredictionRow, PredictionSet, RegressorKind};
use relcap::profile;
use relcap::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelcapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Numeric = 4,
    Eval = 5,
    Other = 6,
    Panic = 7,
}

/// Tri-state outcome of one instance.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelcapTriState {
    Rescue = 0,
    Neutral = 1,
    Misguidance = 2,
}

impl From<TriState> for RelcapTriState {
    fn from(s: TriState) -> Self {
        match s {
            TriState::Rescue => RelcapTriState::Rescue,
            TriState::Neutral => RelcapTriState::Neutral,
            TriState::Misguidance => RelcapTriState::Misguidance,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelcapMetrics {
    pub n: usize,
    pub rmse: f64,
    /// NaN when undefined (constant truth).
    pub r2: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RelcapTriStateCounts {
    pub eligible: usize,
    pub rescue: usize,
    pub neutral: usize,
    pub misguidance: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelcapUTest {
    pub u: f64,
    pub p: f64,
    /// 1 for the exact null distribution, 0 for the normal approximation.
    pub exact: i32,
}

/// Opaque set of test predictions.
pub struct RelcapPredictionSet(PredictionSet);

/// Opaque tri-state report.
pub struct RelcapTriStateReport(eval::TriStateReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RelcapStatus {
    match e.root() {
        Error::InvalidInput(_) | Error::Schema { .. } => RelcapStatus::InvalidInput,
        Error::Config(_) => RelcapStatus::Config,
        Error::Numeric(_) => RelcapStatus::Numeric,
        Error::Eval(_) => RelcapStatus::Eval,
        _ => RelcapStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RelcapStatus>) -> RelcapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RelcapStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside relcap");
            RelcapStatus::Panic
        }
    }
}

fn fail(e: Error) -> RelcapStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> RelcapStatus {
    set_error(&format!("null pointer: {what}"));
    RelcapStatus::NullPointer
}

/// # Safety
/// `ptr` must be null or point to `n` readable values.
unsafe fn slice<'a, T>(ptr: *const T, n: usize, what: &str) -> Result<&'a [T], RelcapStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, RelcapStatus> {
    // SAFETY: callers pass a valid, writable pointer or null.
    unsafe { ptr.as_mut() }.ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn relcap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next relcap call on the same thread.
#[no_mangle]
pub extern "C" fn relcap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// ln(1 + salary).
#[no_mangle]
pub extern "C" fn relcap_make_target(salary_usd: f64, out_log: *mut f64) -> RelcapStatus {
    guard(|| {
        *out(out_log, "out_log")? = make_target(salary_usd).map_err(fail)?;
        Ok(())
    })
}

/// exp(y) − 1.
#[no_mangle]
pub extern "C" fn relcap_invert_target(log_target: f64, out_usd: *mut f64) -> RelcapStatus {
    guard(|| {
        *out(out_usd, "out_usd")? = invert_target(log_target).map_err(fail)?;
        Ok(())
    })
}

/// Cliff's δ of cohort `r` against cohort `m`.
///
/// # Safety
/// `r` and `m` must point to `n_r` and `n_m` values.
#[no_mangle]
pub unsafe extern "C" fn relcap_cliffs_delta(r: *const f64, n_r: usize, m: *const f64, n_m: usize, out_delta: *mut f64) -> RelcapStatus {
    guard(|| {
        let (r, m) = (slice(r, n_r, "r")?, slice(m, n_m, "m")?);
        *out(out_delta, "out_delta")? = profile::cliffs_delta(r, m).map_err(fail)?;
        Ok(())
    })
}

/// Two-sided Mann-Whitney U test of cohort `r` against cohort `m`.
///
/// # Safety
/// `r` and `m` must point to `n_r` and `n_m` values.
#[no_mangle]
pub unsafe extern "C" fn relcap_mann_whitney_u(r: *const f64, n_r: usize, m: *const f64, n_m: usize, out_test: *mut RelcapUTest) -> RelcapStatus {
    guard(|| {
        let (r, m) = (slice(r, n_r, "r")?, slice(m, n_m, "m")?);
        let t = profile::mann_whitney_u(r, m).map_err(fail)?;
        *out(out_test, "out_test")? = RelcapUTest { u: t.u, p: t.p, exact: (t.method == profile::PMethod::Exact) as i32 };
        Ok(())
    })
}

/// Classifies ΔE against `margin`; the boundary is Neutral.
#[no_mangle]
pub extern "C" fn relcap_tri_state(delta_e: f64, margin: f64) -> RelcapTriState {
    eval::tri_state(delta_e, margin).into()
}

/// |y − base| − |y − graph| in dollars.
#[no_mangle]
pub extern "C" fn relcap_delta_e(y: f64, base: f64, graph: f64) -> f64 {
    eval::delta_e(y, base, graph)
}

/// Builds a prediction set from log-space truths and predictions keyed by
/// (player id, season).
///
/// # Safety
/// `player_ids` must hold `n` NUL-terminated strings; `seasons`, `y_true_log`
/// and `y_pred_log` must hold `n` values; `model` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn relcap_prediction_set_new(
    model: *const c_char,
    player_ids: *const *const c_char,
    seasons: *const i32,
    y_true_log: *const f64,
    y_pred_log: *const f64,
    n: usize,
    out_set: *mut *mut RelcapPredictionSet,
) -> RelcapStatus {
    guard(|| {
        let slot = out(out_set, "out_set")?;
        if model.is_null() {
            return Err(null("model"));
        }
        let model = CStr::from_ptr(model).to_string_lossy().into_owned();
        let ids = slice(player_ids, n, "player_ids")?;
        let seasons = slice(seasons, n, "seasons")?;
        let yt = slice(y_true_log, n, "y_true_log")?;
        let yp = slice(y_pred_log, n, "y_pred_log")?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            if ids[i].is_null() {
                return Err(null("player_ids[i]"));
            }
            let id = CStr::from_ptr(ids[i]).to_string_lossy().into_owned();
            rows.push(PredictionRow::new(InstanceKey::new(id, seasons[i]), yt[i], yp[i]).map_err(fail)?);
        }
        let set = PredictionSet::new(model, RegressorKind::Forest, 0, rows);
        *slot = Box::into_raw(Box::new(RelcapPredictionSet(set)));
        Ok(())
    })
}

/// Number of rows in `set` (0 for null).
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn relcap_prediction_set_len(set: *const RelcapPredictionSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.rows.len())
}

/// # Safety
/// `set` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn relcap_prediction_set_free(set: *mut RelcapPredictionSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Log-space RMSE and R² of `set`.
///
/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn relcap_metrics(set: *const RelcapPredictionSet, out_metrics: *mut RelcapMetrics) -> RelcapStatus {
    guard(|| {
        let s = set.as_ref().ok_or_else(|| null("set"))?;
        let m = eval::metrics(&s.0, None).map_err(fail)?;
        *out(out_metrics, "out_metrics")? = RelcapMetrics { n: m.n, rmse: m.rmse, r2: m.r2.unwrap_or(f64::NAN) };
        Ok(())
    })
}

/// Tri-state report of `graph` against `base` on their shared keys.
///
/// # Safety
/// `base` and `graph` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn relcap_tri_state_report_new(
    base: *const RelcapPredictionSet,
    graph: *const RelcapPredictionSet,
    tau: f64,
    margin: f64,
    out_report: *mut *mut RelcapTriStateReport,
) -> RelcapStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        let b = base.as_ref().ok_or_else(|| null("base"))?;
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let r = eval::tri_state_report(&b.0, &g.0, tau, margin, None).map_err(fail)?;
        *slot = Box::into_raw(Box::new(RelcapTriStateReport(r)));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn relcap_tri_state_report_counts(report: *const RelcapTriStateReport, out_counts: *mut RelcapTriStateCounts) -> RelcapStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        *out(out_counts, "out_counts")? = RelcapTriStateCounts {
            eligible: r.eligible,
            rescue: r.count(TriState::Rescue),
            neutral: r.count(TriState::Neutral),
            misguidance: r.count(TriState::Misguidance),
        };
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn relcap_tri_state_report_free(report: *mut RelcapTriStateReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
