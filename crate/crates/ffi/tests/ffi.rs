use std::ffi::{CStr, CString};
use std::ptr;
use tep_jcc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tj_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn case_round_trip_and_ptdf() {
    unsafe {
        let mut case = ptr::null_mut();
        assert_eq!(tj_case_garver(1, 2, &mut case), TjStatus::Ok);
        let (mut nb, mut nl, mut nc) = (0, 0, 0);
        assert_eq!(tj_case_dims(case, &mut nb, &mut nl, &mut nc), TjStatus::Ok);
        assert_eq!((nb, nl), (6, 8));
        assert!(nc > 1);

        let mut json = ptr::null_mut();
        assert_eq!(tj_case_to_json(case, &mut json), TjStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(tj_case_from_json(json, &mut again), TjStatus::Ok);
        let mut json2 = ptr::null_mut();
        assert_eq!(tj_case_to_json(again, &mut json2), TjStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(json2));
        tj_string_free(json);
        tj_string_free(json2);

        let mut needed = 0;
        let mut short = [0.0; 4];
        assert_eq!(tj_case_ptdf(case, 0, short.as_mut_ptr(), short.len(), &mut needed), TjStatus::BufferTooSmall);
        assert_eq!(needed, 48);
        let mut buf = vec![0.0; needed];
        // find a configuration with every bus connected: columns at non-slack buses are nonzero
        let mut found = false;
        for c in 0..nc {
            if tj_case_ptdf(case, c, buf.as_mut_ptr(), buf.len(), &mut needed) != TjStatus::Ok {
                continue;
            }
            if (1..nb).all(|b| (0..nl).any(|l| buf[l * nb + b] != 0.0)) {
                found = true;
                // slack column is zero
                assert!((0..nl).all(|l| buf[l * nb].abs() < 1e-12));
                break;
            }
        }
        assert!(found);
        assert_eq!(tj_case_ptdf(case, nc, buf.as_mut_ptr(), buf.len(), &mut needed), TjStatus::InvalidInput);
        assert!(last_error().contains("out of range"));
        tj_case_free(case);
        tj_case_free(again);
    }
}

#[test]
fn bad_inputs_report_status() {
    unsafe {
        let mut case = ptr::null_mut();
        let bad = CString::new("{not json").unwrap();
        assert_eq!(tj_case_from_json(bad.as_ptr(), &mut case), TjStatus::InvalidInput);
        assert!(!last_error().is_empty());
        assert_eq!(tj_case_from_json(ptr::null(), &mut case), TjStatus::NullPointer);
        assert_eq!(tj_case_garver(1, 0, &mut case), TjStatus::InvalidInput);
        let mut q = 0.0;
        assert_eq!(tj_compute_q(ptr::null(), 0, 0.1, &mut q), TjStatus::InvalidInput);
        tj_case_free(ptr::null_mut());
        tj_jcc_free(ptr::null_mut());
    }
}

#[test]
fn quantile_matches_library() {
    let v = [3.0, -1.0, 7.0, 2.0, 5.0, 0.5, -4.0, 6.0, 1.0, 4.0];
    let mut q = 0.0;
    assert_eq!(unsafe { tj_compute_q(v.as_ptr(), v.len(), 0.2, &mut q) }, TjStatus::Ok);
    assert_eq!(q, tep_jcc::uncertainty::compute_q(&v, 0.2));
    assert_eq!(tj_last_error_is_empty(), true);
}

fn tj_last_error_is_empty() -> bool {
    last_error().is_empty()
}

const TINY: &str = r#"{
  "instance": {
    "rows": [{"a": [-1.0], "b": [-1.0], "d": 0.0}],
    "samples": [[0.0], [1.0], [0.5], [2.0]],
    "eps": 0.25,
    "theta": 0.1
  },
  "cost": [1.0],
  "lower": [-10.0],
  "upper": [10.0]
}"#;

#[test]
fn jcc_schemes_agree_when_exact() {
    // eps * N = 1: the strengthened approximation is exact
    let json = CString::new(TINY).unwrap();
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(tj_jcc_from_json(json.as_ptr(), &mut p), TjStatus::Ok, "{}", last_error());
        let mut dim = 0;
        assert_eq!(tj_jcc_dim(p, &mut dim), TjStatus::Ok);
        assert_eq!(dim, 1);
        let mut objs = Vec::new();
        for s in [TjScheme::Sla, TjScheme::La, TjScheme::Wcvar, TjScheme::Exact] {
            let (mut obj, mut x) = (0.0, [0.0]);
            assert_eq!(tj_jcc_solve(p, s, 100.0, &mut obj, x.as_mut_ptr(), 1), TjStatus::Ok, "{s:?}: {}", last_error());
            assert!((obj - x[0]).abs() < 1e-9);
            objs.push(obj);
        }
        for o in &objs[1..] {
            assert!((o - objs[0]).abs() < 1e-6, "{objs:?}");
        }
        let mut obj = 0.0;
        assert_eq!(tj_jcc_solve(p, TjScheme::Exact, 0.0, &mut obj, [0.0].as_mut_ptr(), 1), TjStatus::InvalidInput);
        assert_eq!(tj_jcc_solve(p, TjScheme::Sla, 0.0, &mut obj, ptr::null_mut(), 0), TjStatus::BufferTooSmall);
        tj_jcc_free(p);
    }
}

#[test]
fn infeasible_box_is_reported() {
    let text = TINY.replace("\"upper\": [10.0]", "\"upper\": [0.0]");
    let json = CString::new(text).unwrap();
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(tj_jcc_from_json(json.as_ptr(), &mut p), TjStatus::Ok);
        let (mut obj, mut x) = (0.0, [0.0]);
        assert_eq!(tj_jcc_solve(p, TjScheme::Sla, 0.0, &mut obj, x.as_mut_ptr(), 1), TjStatus::Infeasible);
        tj_jcc_free(p);
    }
}

#[test]
fn header_declares_entry_points() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tep_jcc.h")).unwrap();
    for f in ["tj_case_garver", "tj_case_ptdf", "tj_compute_q", "tj_jcc_solve", "tj_last_error", "TJ_STATUS_BUFFER_TOO_SMALL"] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
