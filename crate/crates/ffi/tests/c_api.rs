use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use delaymargin_ffi::*;

fn load(json: &str) -> *mut DmSystem {
    let text = CString::new(json).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { dm_system_from_json(text.as_ptr(), &mut sys) }, DmStatus::Ok);
    assert!(!sys.is_null());
    sys
}

fn last_error() -> String {
    let p = dm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_json(p: *mut std::ffi::c_char) -> serde_json::Value {
    let v = serde_json::from_str(unsafe { CStr::from_ptr(p) }.to_str().unwrap()).unwrap();
    unsafe { dm_string_free(p) };
    v
}

const LAMBERT: &str = r#"{"n": 1, "B": [[[0.0, 0.0]]], "feedback": {"C": [[[-1.0, 0.0]]], "tau": 1.0}}"#;

#[test]
fn handle_lifecycle_and_abscissa() {
    let sys = load(LAMBERT);
    let mut n = 0usize;
    assert_eq!(unsafe { dm_system_dim(sys, &mut n) }, DmStatus::Ok);
    assert_eq!(n, 1);
    let mut a = 0.0;
    assert_eq!(unsafe { dm_spectral_abscissa(sys, &mut a) }, DmStatus::Ok);
    assert!((a + 0.318131505204764).abs() < 1e-10);
    let mut s = 1.0;
    let mut inside = true;
    assert_eq!(unsafe { dm_char_matrix_sigma_min(sys, a, 1.337235701430689, &mut s, &mut inside) }, DmStatus::Ok);
    assert!(s < 1e-8 && !inside);
    unsafe { dm_system_free(sys) };
    unsafe { dm_system_free(ptr::null_mut()) };
}

#[test]
fn json_outputs() {
    let sys = load(LAMBERT);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dm_roots_json(sys, &mut out) }, DmStatus::Ok);
    let roots = take_json(out);
    assert!(roots["roots"].as_array().unwrap().len() >= 2);
    assert_eq!(unsafe { dm_robustness_margin_json(sys, DM_MODE_STABLE, &mut out) }, DmStatus::Ok);
    let m = take_json(out);
    assert!(m["kappa"].as_f64().unwrap() <= 0.5);
    let mut tau = 0.0;
    assert_eq!(unsafe { dm_critical_delay(sys, 0.5, 3.0, &mut tau) }, DmStatus::Ok);
    assert!((tau - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    unsafe { dm_system_free(sys) };

    let stable = load(r#"{"n": 1, "B": [[[-1.0, 0.0]]], "delay_ops": [{"h": -1.0, "matrix": [[[0.5, 0.0]]]}]}"#);
    assert_eq!(unsafe { dm_stability_test_json(stable, 0.0, &mut out) }, DmStatus::Ok);
    assert_eq!(take_json(out)["verdict"], "stable");
    assert_eq!(unsafe { dm_hyperbolicity_test_json(stable, &mut out) }, DmStatus::Ok);
    assert_eq!(take_json(out)["verdict"], "hyperbolic");
    unsafe { dm_system_free(stable) };
}

#[test]
fn error_codes_and_messages() {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { dm_system_from_json(ptr::null(), &mut sys) }, DmStatus::NullPointer);
    let bad = CString::new(r#"{"n": 2, "B": [[[1.0, 0.0]]]}"#).unwrap();
    assert_eq!(unsafe { dm_system_from_json(bad.as_ptr(), &mut sys) }, DmStatus::InvalidSpec);
    assert!(last_error().contains("dimension"));
    let not_json = CString::new("{").unwrap();
    assert_eq!(unsafe { dm_system_from_json(not_json.as_ptr(), &mut sys) }, DmStatus::InvalidSpec);
    assert!(sys.is_null());

    let plain = load(r#"{"n": 1, "B": [[[0.0, 1.0]]]}"#);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dm_hyperbolicity_test_json(plain, &mut out) }, DmStatus::ComputationFailed);
    assert!(last_error().contains("eigenvalue"));
    assert_eq!(unsafe { dm_robustness_margin_json(plain, DM_MODE_STABLE, &mut out) }, DmStatus::InvalidSpec);
    assert_eq!(unsafe { dm_stability_test_json(plain, 0.5, &mut out) }, DmStatus::InvalidArgument);
    let mut n = 0usize;
    assert_eq!(unsafe { dm_system_dim(ptr::null(), &mut n) }, DmStatus::NullPointer);
    assert_eq!(unsafe { dm_system_dim(plain, ptr::null_mut()) }, DmStatus::NullPointer);
    unsafe { dm_system_free(plain) };

    let sys = load(LAMBERT);
    assert_eq!(unsafe { dm_robustness_margin_json(sys, 7, &mut out) }, DmStatus::InvalidArgument);
    unsafe { dm_system_free(sys) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/delaymargin.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ DmSystem *s = 0; enum DmStatus st = dm_system_from_json(\"{{}}\", &s); (void)st; return DM_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg(&src).status() {
        Ok(st) => assert!(st.success(), "header failed to compile"),
        Err(e) => eprintln!("skipping header compile: {cc} unavailable ({e})"),
    }
}
