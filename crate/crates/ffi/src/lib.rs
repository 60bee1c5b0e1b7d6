//! C interface to the `sgs` library.
//!
//! Networks live behind an opaque `SgsNetwork` handle. Every fallible call
//! returns an `SgsStatus`; on failure a description is kept per thread and
//! can be read with `sgs_last_error_message`. Strings handed out by the
//! library must be released with `sgs_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sgs::approx::SamplerConfig;
use sgs::engine::{self, SgsConfig, DEFAULT_N_MAX};
use sgs::error::InferenceError;
use sgs::io;
use sgs::model::{CategoricalBN, ModelError};

/// Opaque handle to a parsed network.
pub struct SgsNetwork {
    bn: CategoricalBN,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidEvidence = 4,
    InvalidArgument = 5,
    Capacity = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgsMethod {
    Sgs = 0,
    JunctionTree = 1,
    LbpIs = 2,
    Gibbs = 3,
    Enumeration = 4,
}

impl From<SgsMethod> for engine::Method {
    fn from(m: SgsMethod) -> Self {
        match m {
            SgsMethod::Sgs => engine::Method::Sgs,
            SgsMethod::JunctionTree => engine::Method::JtFull,
            SgsMethod::LbpIs => engine::Method::LbpIs,
            SgsMethod::Gibbs => engine::Method::Gs,
            SgsMethod::Enumeration => engine::Method::Enum,
        }
    }
}

/// Inference settings. `n_max` of `SIZE_MAX` solves every subset exactly.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SgsOptions {
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Result of a marginal computation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SgsMarginal {
    pub log_probability: f64,
    pub probability: f64,
    /// Estimated relative standard error; 0 for exact answers.
    pub relative_std_error: f64,
    pub subsets: usize,
    pub sampled_variables: usize,
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

fn fail(status: SgsStatus, msg: impl Into<String>) -> SgsStatus {
    set_error(msg);
    status
}

fn inference_status(e: &InferenceError) -> SgsStatus {
    match e {
        _ if e.is_capacity() => SgsStatus::Capacity,
        InferenceError::Model(ModelError::EvidenceNode(_) | ModelError::EvidenceState { .. }) => {
            SgsStatus::InvalidEvidence
        }
        InferenceError::Argument(_) => SgsStatus::InvalidArgument,
        _ => SgsStatus::Internal,
    }
}

fn guarded(f: impl FnOnce() -> SgsStatus) -> SgsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SgsStatus::Panic, "panic inside sgs"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SgsStatus> {
    if p.is_null() {
        return Err(fail(SgsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SgsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Default settings: n_max 15, 1000 samples, seed 0.
#[no_mangle]
pub extern "C" fn sgs_options_default() -> SgsOptions {
    let s = SamplerConfig::default();
    SgsOptions {
        n_max: DEFAULT_N_MAX,
        samples: s.samples,
        seed: s.seed,
    }
}

/// Parses a network from TOML text. On success `*out` owns a new handle that
/// must be released with `sgs_network_free`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgs_network_parse(text: *const c_char, out: *mut *mut SgsNetwork) -> SgsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SgsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match io::parse_network(text) {
            Ok(bn) => {
                *out = Box::into_raw(Box::new(SgsNetwork { bn }));
                SgsStatus::Ok
            }
            Err(e) => fail(SgsStatus::ParseError, e.to_json()),
        }
    })
}

/// # Safety
/// `net` must be null or a handle from `sgs_network_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgs_network_free(net: *mut SgsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgs_network_len(net: *const SgsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.bn.len())
}

/// Writes the canonical text form of the network to `*out`.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgs_network_serialize(net: *const SgsNetwork, out: *mut *mut c_char) -> SgsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SgsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(net) = net.as_ref() else {
            return fail(SgsStatus::NullPointer, "network is null");
        };
        match CString::new(io::serialize_network(&net.bn)) {
            Ok(s) => {
                *out = s.into_raw();
                SgsStatus::Ok
            }
            Err(_) => fail(SgsStatus::Internal, "serialized text contains NUL"),
        }
    })
}

/// Computes P(X_e) for `evidence` given as `name=state` pairs separated by
/// commas (empty or null for none). `options` may be null for defaults.
///
/// # Safety
/// `net` must be a live handle, `evidence` null or NUL-terminated, `options`
/// null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgs_marginal(
    net: *const SgsNetwork,
    evidence: *const c_char,
    method: SgsMethod,
    options: *const SgsOptions,
    out: *mut SgsMarginal,
) -> SgsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SgsStatus::NullPointer, "out is null");
        }
        *out = SgsMarginal::default();
        let Some(net) = net.as_ref() else {
            return fail(SgsStatus::NullPointer, "network is null");
        };
        let text = if evidence.is_null() {
            ""
        } else {
            match str_arg(evidence, "evidence") {
                Ok(t) => t,
                Err(s) => return s,
            }
        };
        let e = match io::parse_evidence(&net.bn, text) {
            Ok(e) => e,
            Err(err) => return fail(SgsStatus::InvalidEvidence, err.to_json()),
        };
        let opts = options.as_ref().copied().unwrap_or_else(|| sgs_options_default());
        let cfg = SgsConfig {
            n_max: opts.n_max,
            sampler: SamplerConfig {
                samples: opts.samples,
                seed: opts.seed,
                ..Default::default()
            },
            ..Default::default()
        };
        match engine::marginal(&net.bn, &e, method.into(), &cfg) {
            Ok(est) => {
                *out = SgsMarginal {
                    log_probability: est.log_value,
                    probability: est.value(),
                    relative_std_error: est.relative_variance().max(0.0).sqrt(),
                    subsets: est.per_subset.len(),
                    sampled_variables: est.sampled_variables,
                };
                SgsStatus::Ok
            }
            Err(err) => fail(inference_status(&err), err.to_string()),
        }
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn sgs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn sgs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sgs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
