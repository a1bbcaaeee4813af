//! C interface to the construe interpretation engine.
//!
//! Knowledge bases live behind an opaque handle. Problems, reports and
//! pattern listings cross the boundary as UTF-8 JSON strings; strings
//! returned by the library must be released with [`construe_string_free`].
//! The message of the last failure on the calling thread is available
//! through [`construe_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use construe::grammar::{enumerate_states, KnowledgeBase};
use construe::interp::{Problem, ProblemOptions};
use construe::io;
use construe::oracle;
use construe::procedures::Registry;
use construe::report::Report;
use construe::search::{self, SearchConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstrueStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    KbError = 3,
    InputError = 4,
    /// The search budget ran out; the report is still written.
    Truncated = 5,
    OracleError = 6,
    Panic = 7,
}

/// A parsed knowledge base with the built-in procedures.
pub struct ConstrueKb {
    kb: Arc<KnowledgeBase>,
    registry: Arc<Registry>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ConstrueStatus, msg: impl std::fmt::Display) -> ConstrueStatus {
    set_error(msg.to_string());
    status
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, ConstrueStatus> {
    if p.is_null() {
        return Err(fail(ConstrueStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(ConstrueStatus::InvalidUtf8, e))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> ConstrueStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            ConstrueStatus::Ok
        }
        Err(e) => fail(ConstrueStatus::Panic, e),
    }
}

fn guard(f: impl FnOnce() -> ConstrueStatus) -> ConstrueStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ConstrueStatus::Panic, "internal panic"),
    }
}

/// Parses knowledge-base text into a new handle written to `out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn construe_kb_parse(
    text: *const c_char,
    out: *mut *mut ConstrueKb,
) -> ConstrueStatus {
    guard(|| {
        if out.is_null() {
            return fail(ConstrueStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let registry = Registry::with_builtins();
        match KnowledgeBase::parse(text, &registry) {
            Ok(kb) => {
                *out = Box::into_raw(Box::new(ConstrueKb {
                    kb: Arc::new(kb),
                    registry: Arc::new(registry),
                }));
                ConstrueStatus::Ok
            }
            Err(e) => fail(ConstrueStatus::KbError, e),
        }
    })
}

/// Loads one of the shipped knowledge bases (`sinus`, `ecg_waves`,
/// `ecg_rhythms`); several names may be joined with commas.
///
/// # Safety
/// As [`construe_kb_parse`].
#[no_mangle]
pub unsafe extern "C" fn construe_kb_builtin(
    names: *const c_char,
    out: *mut *mut ConstrueKb,
) -> ConstrueStatus {
    guard(|| {
        if out.is_null() {
            return fail(ConstrueStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let names = match str_arg(names) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let mut text = String::new();
        for n in names.split(',').map(str::trim) {
            match io::builtin_kb(n) {
                Some(t) => text.push_str(t),
                None => {
                    return fail(
                        ConstrueStatus::KbError,
                        format!("no built-in knowledge base `{n}`"),
                    )
                }
            }
        }
        let c = CString::new(text).expect("built-in text has no NUL");
        construe_kb_parse(c.as_ptr(), out)
    })
}

/// # Safety
/// `kb` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn construe_kb_free(kb: *mut ConstrueKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Nodes expanded per search iteration when none is given; 0 for a null handle.
///
/// # Safety
/// `kb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn construe_kb_default_k(kb: *const ConstrueKb) -> usize {
    kb.as_ref().map_or(0, |k| k.kb.default_k())
}

/// Interprets the observations in `input_json` and writes the report JSON
/// to `out_json`. `k` of 0 uses the knowledge-base default; `max_nodes`
/// of 0 uses the library default.
///
/// # Safety
/// `kb` must be a live handle, `input_json` NUL-terminated, `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn construe_interpret(
    kb: *const ConstrueKb,
    input_json: *const c_char,
    k: usize,
    max_nodes: usize,
    out_json: *mut *mut c_char,
) -> ConstrueStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(ConstrueStatus::NullArgument, "null output pointer");
        }
        *out_json = ptr::null_mut();
        let Some(h) = kb.as_ref() else {
            return fail(ConstrueStatus::NullArgument, "null knowledge base");
        };
        let text = match str_arg(input_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let input = match io::parse_json_input(text) {
            Ok(i) => i,
            Err(e) => return fail(ConstrueStatus::InputError, e),
        };
        let opts = ProblemOptions {
            abstracts: input.abstracts,
            series: input.series,
            salient: false,
        };
        let p = match Problem::new(h.kb.clone(), h.registry.clone(), input.observations, opts) {
            Ok(p) => p,
            Err(e) => return fail(ConstrueStatus::InputError, e),
        };
        let mut cfg = SearchConfig {
            k: (k > 0).then_some(k),
            record_rejections: false,
            ..SearchConfig::default()
        };
        if max_nodes > 0 {
            cfg.max_nodes = max_nodes;
        }
        let r = search::construe(&p, &cfg);
        let json = serde_json::to_string(&Report::from_result(&p, &r)).expect("reports serialize");
        match put_string(out_json, json) {
            ConstrueStatus::Ok if r.truncated => {
                fail(ConstrueStatus::Truncated, "search budget exhausted")
            }
            s => s,
        }
    })
}

/// Lists the abstraction patterns of a grammar (all grammars when
/// `grammar` is null) with up to `max_findings` findings, as JSON.
///
/// # Safety
/// `kb` must be a live handle, `grammar` null or NUL-terminated, `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn construe_patterns(
    kb: *const ConstrueKb,
    grammar: *const c_char,
    max_findings: usize,
    out_json: *mut *mut c_char,
) -> ConstrueStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(ConstrueStatus::NullArgument, "null output pointer");
        }
        *out_json = ptr::null_mut();
        let Some(h) = kb.as_ref() else {
            return fail(ConstrueStatus::NullArgument, "null knowledge base");
        };
        let wanted = if grammar.is_null() {
            None
        } else {
            match str_arg(grammar) {
                Ok(g) => Some(g),
                Err(s) => return s,
            }
        };
        if let Some(w) = wanted {
            if !h.kb.grammars.iter().any(|g| g.name == w) {
                return fail(ConstrueStatus::KbError, format!("no grammar `{w}`"));
            }
        }
        let mut out = Vec::new();
        for (gi, g) in h.kb.grammars.iter().enumerate() {
            if wanted.is_some_and(|w| w != g.name) {
                continue;
            }
            for s in enumerate_states(&h.kb, gi, max_findings) {
                let constraints: Vec<_> = s
                    .canonical_constraints()
                    .into_iter()
                    .map(|(x, y, lo, hi, label)| serde_json::json!({"x": x, "y": y, "lo": lo, "hi": hi, "label": label}))
                    .collect();
                out.push(serde_json::json!({
                    "grammar": g.name,
                    "hypothesis": g.hypothesis,
                    "findings": s.word(),
                    "constraints": constraints,
                }));
            }
        }
        put_string(out_json, serde_json::Value::Array(out).to_string())
    })
}

/// Solves `{"universe": [..], "sets": [[..], ..]}` three ways and writes
/// `{"set_cover", "exclusive_cover", "construe"}` sizes (null when no
/// cover exists) as JSON.
///
/// # Safety
/// `instance_json` must be NUL-terminated and `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn construe_setcover(
    instance_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ConstrueStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(ConstrueStatus::NullArgument, "null output pointer");
        }
        *out_json = ptr::null_mut();
        let text = match str_arg(instance_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        #[derive(serde::Deserialize)]
        struct Instance {
            universe: Vec<u32>,
            sets: Vec<Vec<u32>>,
        }
        let inst: Instance = match serde_json::from_str(text) {
            Ok(i) => i,
            Err(e) => return fail(ConstrueStatus::InputError, e),
        };
        if inst.sets.len() >= 32 || inst.universe.len() > oracle::MAX_ORACLE_OBSERVATIONS {
            return fail(
                ConstrueStatus::OracleError,
                "instance too large for the exhaustive solvers",
            );
        }
        let p = match oracle::phi_reduction(&inst.universe, &inst.sets) {
            Ok(p) => p,
            Err(e) => return fail(ConstrueStatus::OracleError, e),
        };
        let exclusive = match oracle::brute_force_solution(&p, inst.universe.len(), inst.sets.len())
        {
            Ok(s) => s.minimum_size,
            Err(e) => return fail(ConstrueStatus::OracleError, e),
        };
        let r = search::construe(&p, &SearchConfig::default());
        let found = (r.best.covering_ratio(&p) == 1.0).then_some(r.best.hypotheses.len());
        let json = serde_json::json!({
            "set_cover": oracle::min_set_cover(&inst.universe, &inst.sets),
            "exclusive_cover": exclusive,
            "construe": found,
        });
        put_string(out_json, json.to_string())
    })
}

/// Message of the last failure on this thread, or null. Owned by the
/// library and valid until the next call that fails.
#[no_mangle]
pub extern "C" fn construe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn construe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn construe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
