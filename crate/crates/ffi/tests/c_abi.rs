use std::ffi::{CStr, CString};
use std::ptr;

use oneshot_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        os_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn four_groups() -> *mut OsDataset {
    let tau = [1.0, 1.5, 2.0, 2.5];
    let k = [15u32, 20, 25, 20];
    let n = [8u32, 12, 15, 11];
    let x = [0.2, 0.4, 0.4, 0.3, 0.6, 0.2, 0.8, 0.5];
    let mut d = ptr::null_mut();
    let s = unsafe { os_dataset_new(4, 2, tau.as_ptr(), k.as_ptr(), n.as_ptr(), x.as_ptr(), &mut d) };
    assert_eq!(s, OsStatus::Ok);
    d
}

#[test]
fn dataset_lifecycle_and_shape() {
    let d = four_groups();
    let (mut g, mut j) = (0, 0);
    assert_eq!(unsafe { os_dataset_shape(d, &mut g, &mut j) }, OsStatus::Ok);
    assert_eq!((g, j), (4, 2));
    unsafe { os_dataset_free(d) };
    unsafe { os_dataset_free(ptr::null_mut()) };
}

#[test]
fn invalid_rows_report_validation_errors() {
    let (tau, k, n, x) = ([1.0], [3u32], [4u32], [0.5]);
    let mut d = ptr::null_mut();
    let s = unsafe { os_dataset_new(1, 1, tau.as_ptr(), k.as_ptr(), n.as_ptr(), x.as_ptr(), &mut d) };
    assert_eq!(s, OsStatus::Invalid);
    assert!(d.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_rejected() {
    let mut p = 0.0;
    let s = unsafe { os_group_prob(ptr::null(), 1.0, [0.1].as_ptr(), 1, &mut p) };
    assert_eq!(s, OsStatus::NullPointer);
    assert!(last_error().contains("theta"));
    let s = unsafe { os_dataset_shape(ptr::null(), &mut 0, &mut 0) };
    assert_eq!(s, OsStatus::NullPointer);
}

#[test]
fn group_probability_matches_closed_form() {
    let theta = [0.0, 0.0];
    let mut p = 0.0;
    let s = unsafe { os_group_prob(theta.as_ptr(), std::f64::consts::LN_2, [1.0].as_ptr(), 1, &mut p) };
    assert_eq!(s, OsStatus::Ok);
    assert!((p - 0.5).abs() < 1e-15);
}

#[test]
fn fit_and_covariance_round_trip() {
    let d = four_groups();
    let theta0 = [0.0; 4];
    let mut est = [0.0; 4];
    let mut status = OsFitStatus::NonFinite;
    let mut iters = 0;
    let s = unsafe { os_fit(d, 0.0, theta0.as_ptr(), 4, 0.01, 1e-6, 100_000, est.as_mut_ptr(), &mut status, &mut iters) };
    assert_eq!(s, OsStatus::Ok, "{}", last_error());
    assert!(iters > 0);
    assert!(est.iter().all(|v| v.is_finite()));

    let mut sigma = [0.0; 16];
    let s = unsafe { os_sandwich_covariance(d, est.as_ptr(), 4, 0.3, sigma.as_mut_ptr(), 16) };
    assert_eq!(s, OsStatus::Ok, "{}", last_error());
    for i in 0..4 {
        assert!(sigma[i * 4 + i] > 0.0);
        for j in 0..4 {
            assert!((sigma[i * 4 + j] - sigma[j * 4 + i]).abs() <= 1e-9 * sigma[i * 4 + i].abs().max(1.0));
        }
    }
    let s = unsafe { os_sandwich_covariance(d, est.as_ptr(), 4, 0.3, sigma.as_mut_ptr(), 15) };
    assert_eq!(s, OsStatus::BufferTooSmall);
    unsafe { os_dataset_free(d) };
}

#[test]
fn test_statistic_is_zero_free_and_non_negative() {
    let d = four_groups();
    let theta0 = [0.3, -0.2, 0.1, 0.2];
    let mut r = OsTestResult::default();
    let s = unsafe { os_wdpd_test(d, theta0.as_ptr(), 4, 0.5, 0.05, &mut r) };
    assert_eq!(s, OsStatus::Ok, "{}", last_error());
    assert!(r.lambda_stat >= 0.0 && r.rank >= 1);
    let s = unsafe { os_wdpd_test(d, theta0.as_ptr(), 4, 1.5, 0.05, &mut r) };
    assert_eq!(s, OsStatus::Invalid);
    unsafe { os_dataset_free(d) };
}

#[test]
fn design_cost_via_handle() {
    let d = four_groups();
    let theta = [0.3, -0.2, 0.1, 0.2];
    let tau = [0.5, 1.0, 2.0, 3.0];
    let mut cost = 0.0;
    let s = unsafe { os_design_cost(d, theta.as_ptr(), 4, 0.1, 0.5, 0.5, tau.as_ptr(), &mut cost) };
    assert_eq!(s, OsStatus::Ok, "{}", last_error());
    assert!(cost.is_finite() && cost > 0.0);
    unsafe { os_dataset_free(d) };
}

#[test]
fn csv_loading_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "group,tau,k,n,x1\n1,1.0,10,3,0.5\n2,2.0,10,6,1.0\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { os_dataset_from_csv(c.as_ptr(), &mut d) }, OsStatus::Ok);
    unsafe { os_dataset_free(d) };

    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { os_dataset_from_csv(missing.as_ptr(), &mut d) }, OsStatus::Io);
}

#[test]
fn error_message_truncates_and_reports_length() {
    let s = unsafe { os_dataset_shape(ptr::null(), &mut 0, &mut 0) };
    assert_eq!(s, OsStatus::NullPointer);
    let mut buf = [1 as std::ffi::c_char; 5];
    let full = unsafe { os_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 4);
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { os_last_error_message(ptr::null_mut(), 0) }, full);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(os_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_generated() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/oneshot.h")).unwrap();
    for name in ["os_dataset_new", "os_fit", "os_last_error_message", "OS_STATUS_OK", "OsTestResult"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
