use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use construe_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { construe_string_free(s) };
    out
}

fn last_error() -> String {
    let e = construe_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_string_lossy().into_owned()
}

fn builtin(names: &str) -> *mut ConstrueKb {
    let mut kb = ptr::null_mut();
    let n = CString::new(names).unwrap();
    assert_eq!(
        unsafe { construe_kb_builtin(n.as_ptr(), &mut kb) },
        ConstrueStatus::Ok
    );
    kb
}

#[test]
fn interprets_beats_through_the_c_interface() {
    let kb = builtin("ecg_waves,ecg_rhythms");
    assert!(unsafe { construe_kb_default_k(kb) } >= 1);
    let obs: Vec<String> = (0..6)
        .map(|i| {
            let q = if i % 2 == 0 { "Nb" } else { "Vb" };
            let t = [0, 400, 1200, 1600, 2400, 2800][i];
            format!(r#"{{"id":"b{i}","observable":"{q}","t":{t}}}"#)
        })
        .collect();
    let input = CString::new(format!(r#"{{"observations":[{}]}}"#, obs.join(","))).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { construe_interpret(kb, input.as_ptr(), 0, 0, &mut out) };
    assert_eq!(st, ConstrueStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(report["covering_ratio"], 1.0);
    let hyps = report["hypotheses"].as_array().unwrap();
    assert_eq!(hyps.len(), 1);
    assert_eq!(hyps[0]["observable"], "VB");
    unsafe { construe_kb_free(kb) };
}

#[test]
fn truncation_still_returns_a_report() {
    let kb = builtin("sinus");
    let obs: Vec<String> = [(1, 3.4), (4, 17.6), (8, 12.9), (10, 2.6), (14, -17.5)]
        .iter()
        .map(|(t, v)| format!(r#"{{"observable":"p","t":{t},"values":{{"V":{v}}}}}"#))
        .collect();
    let input = CString::new(format!(r#"{{"observations":[{}]}}"#, obs.join(","))).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { construe_interpret(kb, input.as_ptr(), 1, 2, &mut out) };
    assert_eq!(st, ConstrueStatus::Truncated);
    let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(report["truncated"], true);
    unsafe { construe_kb_free(kb) };
}

#[test]
fn malformed_kb_reports_location() {
    let text = CString::new("observable x { process y }").unwrap();
    let mut kb = ptr::null_mut();
    assert_eq!(
        unsafe { construe_kb_parse(text.as_ptr(), &mut kb) },
        ConstrueStatus::KbError
    );
    assert!(kb.is_null());
    assert!(last_error().contains("1:"), "{}", last_error());
}

#[test]
fn null_and_bad_arguments() {
    let mut kb = ptr::null_mut();
    assert_eq!(
        unsafe { construe_kb_parse(ptr::null(), &mut kb) },
        ConstrueStatus::NullArgument
    );
    let mut out = ptr::null_mut();
    let input = CString::new("{}").unwrap();
    assert_eq!(
        unsafe { construe_interpret(ptr::null(), input.as_ptr(), 0, 0, &mut out) },
        ConstrueStatus::NullArgument
    );
    assert_eq!(unsafe { construe_kb_default_k(ptr::null()) }, 0);
    let kb = builtin("sinus");
    let bad = CString::new("{\"observations\": 3}").unwrap();
    assert_eq!(
        unsafe { construe_interpret(kb, bad.as_ptr(), 0, 0, &mut out) },
        ConstrueStatus::InputError
    );
    assert!(out.is_null());
    let unknown = CString::new("nope").unwrap();
    let mut k2 = ptr::null_mut();
    assert_eq!(
        unsafe { construe_kb_builtin(unknown.as_ptr(), &mut k2) },
        ConstrueStatus::KbError
    );
    unsafe {
        construe_kb_free(kb);
        construe_kb_free(ptr::null_mut());
        construe_string_free(ptr::null_mut());
    }
}

#[test]
fn patterns_as_json() {
    let kb = builtin("ecg_waves,ecg_rhythms");
    let g = CString::new("G_VB").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { construe_patterns(kb, g.as_ptr(), 6, &mut out) },
        ConstrueStatus::Ok
    );
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    let words: Vec<usize> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["findings"].as_array().unwrap().len())
        .collect();
    assert_eq!(words, vec![4, 6]);
    let g = CString::new("G_nothing").unwrap();
    assert_eq!(
        unsafe { construe_patterns(kb, g.as_ptr(), 6, &mut out) },
        ConstrueStatus::KbError
    );
    unsafe { construe_kb_free(kb) };
}

#[test]
fn setcover_sizes_agree() {
    let inst = CString::new(r#"{"universe":[1,2,3,4],"sets":[[1,2],[3],[2,4],[1,3]]}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { construe_setcover(inst.as_ptr(), &mut out) },
        ConstrueStatus::Ok
    );
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["set_cover"], 2);
    assert_eq!(v["exclusive_cover"], 2);
    // the search is greedy, so it may settle for a larger cover
    assert!(v["construe"].as_u64().is_some_and(|k| k >= 2), "{v}");
    let none = CString::new(r#"{"universe":[1],"sets":[]}"#).unwrap();
    assert_eq!(
        unsafe { construe_setcover(none.as_ptr(), &mut out) },
        ConstrueStatus::Ok
    );
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert!(v["set_cover"].is_null() && v["exclusive_cover"].is_null() && v["construe"].is_null());
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(construe_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/construe.h");
    assert!(header.exists(), "header not generated");
    let exe = std::env::current_exe().unwrap();
    let lib = exe
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("libconstrue_ffi.a");
    let dir = std::env::temp_dir().join(format!("construe-capi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "construe.h"
int main(void) {
    ConstrueKb *kb = NULL;
    if (construe_kb_builtin("ecg_waves,ecg_rhythms", &kb) != CONSTRUE_STATUS_OK) return 1;
    const char *in = "{\"observations\":[{\"observable\":\"Nb\",\"t\":400},{\"observable\":\"Nb\",\"t\":1200},"
                     "{\"observable\":\"Nb\",\"t\":2000},{\"observable\":\"Nb\",\"t\":2800}]}";
    char *out = NULL;
    if (construe_interpret(kb, in, 0, 0, &out) != CONSTRUE_STATUS_OK) return 2;
    int ok = strstr(out, "\"covering_ratio\":1.0") != NULL;
    construe_string_free(out);
    construe_kb_free(kb);
    if (construe_kb_parse("grammar", &kb) != CONSTRUE_STATUS_KB_ERROR || construe_last_error() == NULL) return 3;
    printf("%s\n", construe_version());
    return ok ? 0 : 4;
}
"#,
    )
    .unwrap();
    let bin = dir.join("main");
    let st = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is on PATH");
    assert!(
        st.success(),
        "C program failed to build against {}",
        lib.display()
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(
        String::from_utf8_lossy(&run.stdout).trim(),
        env!("CARGO_PKG_VERSION")
    );
    std::fs::remove_dir_all(&dir).ok();
}
