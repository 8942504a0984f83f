//! C ABI over the detection pipeline, geodesy and pseudonymization.
//!
//! Every fallible function returns an [`MsStatus`]; on failure the message
//! is available from [`ms_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`ms_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chrono::NaiveDate;
use mobiliscope::config::Settings;
use mobiliscope::model::{haversine_distance, LatLon};
use mobiliscope::pipeline::Pipeline;
use mobiliscope::privacy::{parse_client_trace, pseudonymize, PseudonymKey};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Config = 5,
    Internal = 6,
}

/// Loaded pipeline. Immutable after creation; safe to share across threads.
pub struct MsPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn err(status: MsStatus, msg: impl Into<String>) -> MsStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `Internal`.
fn guard(f: impl FnOnce() -> MsStatus) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == MsStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => err(MsStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `s` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, MsStatus> {
    if s.is_null() {
        return Err(err(MsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| err(MsStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> MsStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            MsStatus::Ok
        }
        Err(_) => err(MsStatus::Internal, "output contains NUL"),
    }
}

/// Message for the last failure on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Great-circle distance in metres between two WGS84 points in degrees.
///
/// # Safety
/// `out_m` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn ms_haversine_m(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out_m: *mut f64,
) -> MsStatus {
    guard(|| {
        if out_m.is_null() {
            return err(MsStatus::NullArgument, "out_m is null");
        }
        let a = LatLon { lat: lat1, lon: lon1 };
        let b = LatLon { lat: lat2, lon: lon2 };
        match haversine_distance(a, b) {
            Ok(d) => {
                *out_m = d;
                MsStatus::Ok
            }
            Err(e) => err(MsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Creates a pipeline. `config_path` may be null for the bundled defaults.
///
/// # Safety
/// `config_path` is null or a NUL-terminated path; `out` must be valid for
/// one pointer write. Release the result with [`ms_pipeline_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_pipeline_new(config_path: *const c_char, out: *mut *mut MsPipeline) -> MsStatus {
    guard(|| {
        if out.is_null() {
            return err(MsStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let settings = if config_path.is_null() {
            Settings::default()
        } else {
            let path = match str_arg(config_path, "config_path") {
                Ok(p) => p,
                Err(s) => return s,
            };
            match Settings::load(Path::new(path)) {
                Ok(s) => s,
                Err(e) => return err(MsStatus::Config, e.to_string()),
            }
        };
        match Pipeline::from_settings(settings) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MsPipeline { inner }));
                MsStatus::Ok
            }
            Err(e) => err(MsStatus::Config, e.to_string()),
        }
    })
}

/// # Safety
/// `pipeline` is null or was returned by [`ms_pipeline_new`] and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ms_pipeline_free(pipeline: *mut MsPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs detection on a trace in the line format and writes the JSON report
/// to `out_json`.
///
/// # Safety
/// `pipeline` is a live handle; `trace_text` is NUL-terminated; `out_json`
/// must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ms_pipeline_detect_json(
    pipeline: *const MsPipeline,
    trace_text: *const c_char,
    out_json: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        if pipeline.is_null() || out_json.is_null() {
            return err(MsStatus::NullArgument, "pipeline or out_json is null");
        }
        *out_json = ptr::null_mut();
        let text = match str_arg(trace_text, "trace_text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let client = match parse_client_trace(text) {
            Ok(c) => c,
            Err(e) => return err(MsStatus::Parse, e.to_string()),
        };
        let report = (*pipeline).inner.report(&client.trace);
        match serde_json::to_string(&report) {
            Ok(json) => put_string(out_json, json),
            Err(e) => err(MsStatus::Internal, e.to_string()),
        }
    })
}

/// Daily pseudonym for `device_id` on `date` (`YYYY-MM-DD`) under a 32-byte
/// secret given as 64 hex characters, with a one-day rotation period.
///
/// # Safety
/// String arguments are NUL-terminated; `out` must be valid for one pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn ms_pseudonymize(
    device_id: *const c_char,
    date: *const c_char,
    secret_hex: *const c_char,
    out: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        if out.is_null() {
            return err(MsStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let (id, date, secret) = match (
            str_arg(device_id, "device_id"),
            str_arg(date, "date"),
            str_arg(secret_hex, "secret_hex"),
        ) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let Ok(date) = NaiveDate::parse_from_str(date, "%Y-%m-%d") else {
            return err(MsStatus::InvalidArgument, "date must be YYYY-MM-DD");
        };
        let mut bytes = [0u8; 32];
        if hex::decode_to_slice(secret, &mut bytes).is_err() {
            return err(MsStatus::InvalidArgument, "secret must be 64 hex characters");
        }
        match pseudonymize(id, date, &PseudonymKey::new(bytes)) {
            Ok(p) => put_string(out, p),
            Err(e) => err(MsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
