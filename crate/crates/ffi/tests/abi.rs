use std::ffi::{CStr, CString};
use std::ptr;

use chainport_ffi::*;

fn spec(n: usize, family: CpFamily, end: CpEndLink, mode: CpMode) -> *mut CpSpec {
    let mut out = ptr::null_mut();
    let status = unsafe { cp_spec_new(n, family, end, mode, &mut out) };
    assert_eq!(status, CpStatus::Ok);
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let p = cp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn invalid_spec_reports_status_and_message() {
    let mut out = ptr::null_mut();
    let status = unsafe { cp_spec_new(3, CpFamily::TwoWayVaa, CpEndLink::Z, CpMode::Full, &mut out) };
    assert_eq!(status, CpStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("n"));

    let status = unsafe { cp_spec_new(5, CpFamily::Chain, CpEndLink::Z, CpMode::Full, ptr::null_mut()) };
    assert_eq!(status, CpStatus::NullPointer);
}

#[test]
fn two_way_table_round_trip_and_lookup() {
    let s = spec(2, CpFamily::TwoWayVaa, CpEndLink::Auto, CpMode::Full);
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { cp_table_derive(s, &mut table) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_table_len(table) }, 4);

    let mut labels = [0u8; 2];
    assert_eq!(unsafe { cp_table_lookup(table, [0u8, 0].as_ptr(), 2, labels.as_mut_ptr()) }, CpStatus::Ok);
    assert_eq!(&labels, b"II");
    assert_eq!(unsafe { cp_table_lookup(table, [1u8, 0].as_ptr(), 2, labels.as_mut_ptr()) }, CpStatus::InvalidArgument);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { cp_table_to_json(table, &mut json) }, CpStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { cp_table_from_json(json, &mut again) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_table_len(again) }, 4);

    let bad = CString::new("{\"format\": 1}").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { cp_table_from_json(bad.as_ptr(), &mut none) }, CpStatus::Parse);

    unsafe {
        cp_string_free(json);
        cp_table_free(again);
        cp_table_free(table);
        cp_spec_free(s);
    }
}

#[test]
fn corrected_trial_reaches_unit_fidelity() {
    let s = spec(2, CpFamily::Chain, CpEndLink::Z, CpMode::Full);
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { cp_table_derive(s, &mut table) }, CpStatus::Ok);
    let amps = [0.6, 0.0, 0.0, 0.8, 1.0, 1.0, 1.0, -1.0];
    for seed in 0..8 {
        let mut d = [9u8; 2];
        let mut summary = CpTrialSummary::default();
        let status = unsafe { cp_run_trial(s, table, amps.as_ptr(), seed, d.as_mut_ptr(), &mut summary) };
        assert_eq!(status, CpStatus::Ok);
        assert_eq!(summary.corrected, 1);
        assert!((summary.fidelity_after - 1.0).abs() < 1e-9, "{summary:?}");
        assert!(d.iter().all(|&v| v == 0 || v == 2));
        assert!(summary.prob > 0.0 && summary.prob <= 1.0);
    }
    unsafe {
        cp_table_free(table);
        cp_spec_free(s);
    }
}

#[test]
fn zero_branch_fidelity_and_support() {
    let two = spec(2, CpFamily::Chain, CpEndLink::Z, CpMode::Compact);
    let three = spec(3, CpFamily::Chain, CpEndLink::Z, CpMode::Compact);
    let mut f = 0.0;
    assert_eq!(unsafe { cp_zero_branch_fidelity(two, &mut f) }, CpStatus::Ok);
    assert!((f - 1.0).abs() < 1e-9);
    assert_eq!(unsafe { cp_zero_branch_fidelity(three, &mut f) }, CpStatus::Ok);
    assert!((f - 0.5).abs() < 1e-9);

    let amps = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let mut ok = 0u8;
    assert_eq!(unsafe { cp_check_outcome_support(three, amps.as_ptr(), &mut ok) }, CpStatus::Ok);
    assert_eq!(ok, 1);

    let mut table = ptr::null_mut();
    assert_eq!(unsafe { cp_table_derive(three, &mut table) }, CpStatus::NoCorrection);
    assert!(last_error().contains("Pauli"));
    unsafe {
        cp_spec_free(two);
        cp_spec_free(three);
    }
}

#[test]
fn zero_amplitudes_are_rejected() {
    let s = spec(2, CpFamily::Chain, CpEndLink::Z, CpMode::Full);
    let amps = [0.0; 8];
    let mut summary = CpTrialSummary::default();
    let status = unsafe { cp_run_trial(s, ptr::null(), amps.as_ptr(), 0, ptr::null_mut(), &mut summary) };
    assert_eq!(status, CpStatus::InvalidArgument);
    unsafe { cp_spec_free(s) };
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/chainport.h")).unwrap();
    for name in ["cp_spec_new", "cp_table_derive", "cp_run_trial", "cp_last_error", "CpTrialSummary", "CP_STATUS_OK"] {
        assert!(header.contains(name), "missing {name}");
    }
}
