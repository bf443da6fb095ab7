//! C ABI for svcrank.
//!
//! Every fallible function returns a [`SvcrankStatus`]; on failure a
//! human-readable message is available from [`svcrank_last_error`] on the
//! same thread. Objects are handed out as opaque pointers and must be
//! released with the matching `*_free` function. Strings returned through
//! `char **` out-parameters are owned by the caller and released with
//! [`svcrank_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use svcrank::dataio::{self, DataError, Dataset};
use svcrank::ranking::{correspondence_value, predict, ConsumerId, ObservationSet, PriorityVector, RankedList, RankingContext, ServiceId};
use svcrank::sim::{self, SimConfig, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvcrankStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    UnknownConsumer = 4,
    OutOfRange = 5,
    /// The requested value does not exist (e.g. an unscored service's priority).
    NoValue = 6,
    Internal = 7,
    Panic = 8,
}

/// A loaded observation dataset.
pub struct SvcrankDataset {
    inner: Dataset,
}

/// A predicted ranking.
pub struct SvcrankRanking {
    ranking: RankedList,
    priorities: PriorityVector,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (SvcrankStatus, String);

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SvcrankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SvcrankStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside svcrank");
            SvcrankStatus::Panic
        }
    }
}

fn data_failure(e: DataError) -> Failure {
    (SvcrankStatus::DataError, e.to_string())
}

fn null(what: &str) -> Failure {
    (SvcrankStatus::NullPointer, format!("{what} is NULL"))
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| (SvcrankStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| (SvcrankStatus::Internal, "string contains NUL".into()))
}

/// Message describing the last failed call on this thread, or an empty
/// string. Valid until the next svcrank call on the same thread.
#[no_mangle]
pub extern "C" fn svcrank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn svcrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from an svcrank `char **`
/// out-parameter that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn svcrank_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an observation CSV (and its ground-truth sidecar, when present).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_dataset_load(path: *const c_char, out: *mut *mut SvcrankDataset) -> SvcrankStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_str(path, "path")?;
        let inner = dataio::load_dataset(path).map_err(data_failure)?;
        *out = Box::into_raw(Box::new(SvcrankDataset { inner }));
        Ok(())
    })
}

/// Parses observation CSV text held in memory.
///
/// # Safety
/// `csv` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_dataset_parse(csv: *const c_char, out: *mut *mut SvcrankDataset) -> SvcrankStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(csv, "csv")?;
        let inner = dataio::parse_observations(text.as_bytes()).map_err(data_failure)?;
        *out = Box::into_raw(Box::new(SvcrankDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from `svcrank_dataset_load`/`_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svcrank_dataset_free(dataset: *mut SvcrankDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of consumers, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn svcrank_dataset_consumer_count(dataset: *const SvcrankDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.consumers().len())
}

/// Number of services, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn svcrank_dataset_service_count(dataset: *const SvcrankDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.services().len())
}

/// Predicts `consumer`'s ranking over every service in the dataset, using
/// all other consumers as history. `implicit` lists `n_implicit` services the
/// consumer already uses and may be NULL when `n_implicit` is 0.
///
/// # Safety
/// `dataset` must be a live dataset handle, `consumer` a valid string,
/// `implicit` an array of `n_implicit` valid strings, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_predict(
    dataset: *const SvcrankDataset,
    consumer: *const c_char,
    implicit: *const *const c_char,
    n_implicit: usize,
    out: *mut *mut SvcrankRanking,
) -> SvcrankStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dataset = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let consumer_id = ConsumerId::new(read_str(consumer, "consumer")?)
            .map_err(|e| (SvcrankStatus::InvalidArgument, e.to_string()))?;
        let mut implicit_set = BTreeSet::new();
        if n_implicit > 0 {
            if implicit.is_null() {
                return Err(null("implicit"));
            }
            for &s in std::slice::from_raw_parts(implicit, n_implicit) {
                let id = ServiceId::new(read_str(s, "implicit service")?)
                    .map_err(|e| (SvcrankStatus::InvalidArgument, e.to_string()))?;
                implicit_set.insert(id);
            }
        }
        let active = dataset
            .consumer(&consumer_id)
            .ok_or_else(|| (SvcrankStatus::UnknownConsumer, format!("unknown consumer {consumer_id}")))?
            .clone();
        let history = dataset.consumers().iter().filter(|c| c.consumer() != &consumer_id).cloned().collect();
        let ctx = RankingContext::new(active, history, implicit_set)
            .map_err(|e| (SvcrankStatus::InvalidArgument, e.to_string()))?;
        let prediction = predict(&ctx, dataset.services()).map_err(|e| (SvcrankStatus::DataError, e.to_string()))?;
        let ids = prediction
            .ranking
            .iter()
            .map(|s| CString::new(s.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| (SvcrankStatus::Internal, "service id contains NUL".to_string()))?;
        *out = Box::into_raw(Box::new(SvcrankRanking { ranking: prediction.ranking, priorities: prediction.priorities, ids }));
        Ok(())
    })
}

/// # Safety
/// `ranking` must be NULL or a live ranking handle.
#[no_mangle]
pub unsafe extern "C" fn svcrank_ranking_len(ranking: *const SvcrankRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.ids.len())
}

/// Service at 0-based position `index` (rank `index + 1`), or NULL when out of
/// range. The string lives as long as the ranking handle.
///
/// # Safety
/// `ranking` must be NULL or a live ranking handle.
#[no_mangle]
pub unsafe extern "C" fn svcrank_ranking_service(ranking: *const SvcrankRanking, index: usize) -> *const c_char {
    ranking.as_ref().and_then(|r| r.ids.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// Priority value of the service at `index`. Returns
/// `SVCRANK_STATUS_NO_VALUE` for services ranked without evidence.
///
/// # Safety
/// `ranking` must be a live ranking handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_ranking_priority(ranking: *const SvcrankRanking, index: usize, out: *mut f64) -> SvcrankStatus {
    guard(|| {
        let r = ranking.as_ref().ok_or_else(|| null("ranking"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let service = r
            .ranking
            .ordering()
            .get(index)
            .ok_or_else(|| (SvcrankStatus::OutOfRange, format!("index {index} >= {}", r.ids.len())))?;
        let value = r.priorities.get(service).ok_or_else(|| (SvcrankStatus::NoValue, format!("{service} has no priority value")))?;
        *out = value;
        Ok(())
    })
}

/// Renders the ranking in the ranking JSON format.
///
/// # Safety
/// `ranking` must be a live ranking handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_ranking_to_json(ranking: *const SvcrankRanking, out: *mut *mut c_char) -> SvcrankStatus {
    guard(|| {
        let r = ranking.as_ref().ok_or_else(|| null("ranking"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = dataio::render_ranking(&r.ranking, &r.priorities).map_err(data_failure)?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `ranking` must be NULL or a handle from `svcrank_predict` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svcrank_ranking_free(ranking: *mut SvcrankRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

/// Correspondence value between two consumers given index-aligned response
/// times for `n` services. Entries that are not positive and finite mean
/// "not observed". Fewer than 2 commonly observed services give 0.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn svcrank_correspondence(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SvcrankStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n > 0 && (x.is_null() || y.is_null()) {
            return Err(null("response time array"));
        }
        let as_obs = |name: &str, values: &[f64]| {
            let samples = values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite() && **v > 0.0)
                .map(|(i, v)| (ServiceId::new(format!("{i:020}")).expect("non-empty"), *v));
            ObservationSet::with_samples(ConsumerId::new(name).expect("non-empty"), samples).expect("filtered samples")
        };
        let (xs, ys) = if n == 0 { (&[][..], &[][..]) } else { (std::slice::from_raw_parts(x, n), std::slice::from_raw_parts(y, n)) };
        *out = correspondence_value(&as_obs("x", xs), &as_obs("y", ys)).cv;
        Ok(())
    })
}

/// Runs a simulation described by config JSON and returns the trace JSON.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svcrank_simulate(config_json: *const c_char, out: *mut *mut c_char) -> SvcrankStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let raw = read_str(config_json, "config_json")?;
        let config: SimConfig = serde_json::from_str(raw).map_err(|e| (SvcrankStatus::DataError, e.to_string()))?;
        let trace = sim::run(&config).map_err(|e| match e {
            SimError::InvariantViolation(_) => (SvcrankStatus::Internal, e.to_string()),
            _ => (SvcrankStatus::DataError, e.to_string()),
        })?;
        let json = serde_json::to_string_pretty(&trace).map_err(|e| (SvcrankStatus::Internal, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}
