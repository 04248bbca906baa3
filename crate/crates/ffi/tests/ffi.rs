use std::ffi::{CStr, CString};
use std::ptr;

use slowfast_nse_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(nse_last_error()) }.to_string_lossy().into_owned()
}

fn space(n: usize) -> *mut NseSpace {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nse_space_new(n, &mut s) }, NseStatus::Ok);
    s
}

fn random(s: *const NseSpace, seed: u64) -> *mut NseField {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { nse_field_random(s, seed, 2.0, 1.0, &mut f) }, NseStatus::Ok);
    f
}

#[test]
fn null_and_bad_arguments_report_status_and_message() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nse_space_new(15, &mut s) }, NseStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { nse_space_new(16, ptr::null_mut()) }, NseStatus::NullPointer);
    assert!(last_error().contains("out"));
    let mut v = 0.0;
    assert_eq!(unsafe { nse_field_norm(ptr::null(), NseNormKind::Sobolev, 1.0, &mut v) }, NseStatus::NullPointer);
    unsafe {
        nse_space_free(ptr::null_mut());
        nse_field_free(ptr::null_mut());
        nse_string_free(ptr::null_mut());
    }
}

#[test]
fn trilinear_antisymmetry_through_the_abi() {
    let s = space(16);
    let (u, v, w) = (random(s, 1), random(s, 2), random(s, 3));
    let (mut uvv, mut uvw, mut uwv) = (1.0, 0.0, 0.0);
    unsafe {
        assert_eq!(nse_field_trilinear(u, v, v, &mut uvv), NseStatus::Ok);
        assert_eq!(nse_field_trilinear(u, v, w, &mut uvw), NseStatus::Ok);
        assert_eq!(nse_field_trilinear(u, w, v, &mut uwv), NseStatus::Ok);
    }
    assert!(uvv.abs() < 1e-12);
    assert!((uvw + uwv).abs() <= 1e-10 * uvw.abs().max(1e-300));
    let mut b = ptr::null_mut();
    let mut div = 1.0;
    let mut c = [0.0; 4];
    unsafe {
        assert_eq!(nse_field_nonlinear(u, v, &mut b), NseStatus::Ok);
        assert_eq!(nse_field_divergence(b, &mut div), NseStatus::Ok);
        assert_eq!(nse_field_coefficient(u, 1, 2, c.as_mut_ptr()), NseStatus::Ok);
        assert_eq!(nse_field_coefficient(u, 99, 0, c.as_mut_ptr()), NseStatus::InvalidArgument);
        for f in [u, v, w, b] {
            nse_field_free(f);
        }
        nse_space_free(s);
    }
    assert!(div <= 1e-12);
}

#[test]
fn snapshot_round_trip_and_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("f.nsef").to_str().unwrap()).unwrap();
    let s = space(16);
    let (a, b) = (random(s, 4), random(s, 5));
    let fields = [a as *const NseField, b as *const NseField];
    let mut out = [ptr::null_mut(); 2];
    let mut count = 0;
    unsafe {
        assert_eq!(nse_snapshot_write(path.as_ptr(), fields.as_ptr(), 2), NseStatus::Ok);
        assert_eq!(nse_snapshot_read(path.as_ptr(), s, out.as_mut_ptr(), 1, &mut count), NseStatus::InvalidArgument);
        assert_eq!(count, 2);
        assert_eq!(nse_snapshot_read(path.as_ptr(), s, out.as_mut_ptr(), 2, &mut count), NseStatus::Ok);
        for (orig, back) in [a, b].iter().zip(out) {
            for k in [(1, 0), (2, -3), (0, 5)] {
                let (mut x, mut y) = ([0.0; 4], [0.0; 4]);
                nse_field_coefficient(*orig, k.0, k.1, x.as_mut_ptr());
                nse_field_coefficient(back, k.0, k.1, y.as_mut_ptr());
                assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
            }
            nse_field_free(back);
        }
        let other = space(32);
        assert_eq!(nse_snapshot_read(path.as_ptr(), other, out.as_mut_ptr(), 2, &mut count), NseStatus::InvalidArgument);
        nse_field_free(a);
        nse_field_free(b);
        nse_space_free(s);
        nse_space_free(other);
    }
}

#[test]
fn config_margin_and_convergence_json() {
    let bad = CString::new(r#"{"coefficients": {"name": "saturating", "params": {"kappa": 1.0, "sigma2_lip": 1.0}}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    let mut margin = 0.0;
    unsafe {
        assert_eq!(nse_config_from_json(bad.as_ptr(), &mut cfg), NseStatus::Ok);
        assert_eq!(nse_config_margin(cfg, &mut margin), NseStatus::Ok);
        assert_eq!(margin, -1.0);
        let mut json = ptr::null_mut();
        assert_eq!(nse_run_convergence(cfg, &mut json), NseStatus::Inadmissible);
        assert!(last_error().contains("-1"));
        nse_config_free(cfg);
    }
    let broken = CString::new("{\n  \"n\": }").unwrap();
    assert_eq!(unsafe { nse_config_from_json(broken.as_ptr(), &mut cfg) }, NseStatus::ConfigParse);
    assert!(last_error().contains("line 2"));

    let ok = CString::new(r#"{"eps": [0.1], "samples": 2, "t_final": 0.05}"#).unwrap();
    unsafe {
        assert_eq!(nse_config_from_json(ok.as_ptr(), &mut cfg), NseStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(nse_run_convergence(cfg, &mut json), NseStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 1);
        nse_string_free(json);
        nse_config_free(cfg);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/slowfast_nse.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("NSE_STATUS_INADMISSIBLE = 4"));
}

/// Compiles and runs a small C program against the generated header and the
/// static library, when a C compiler is available.
#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = which_cc() else { return };
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.join("../../target/debug");
    let lib = target.join("libslowfast_nse_ffi.a");
    if !lib.exists() {
        panic!("static library missing at {}", lib.display());
    }
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("t.c");
    std::fs::write(
        &c,
        r#"#include "slowfast_nse.h"
#include <stdio.h>
int main(void) {
    NseSpace *s = NULL; NseField *u = NULL; double n = 0.0;
    if (nse_space_new(16, &s) != NSE_STATUS_OK) return 1;
    if (nse_field_taylor_green(s, 1.0, &u) != NSE_STATUS_OK) return 2;
    if (nse_field_norm(u, NSE_NORM_KIND_SOBOLEV, 0.0, &n) != NSE_STATUS_OK) return 3;
    if (nse_space_new(7, &s) != NSE_STATUS_INVALID_ARGUMENT) return 4;
    printf("%.6f\n", n);
    nse_field_free(u);
    nse_space_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("t");
    let status = std::process::Command::new(cc)
        .arg(&c)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    // Spatial mean of |u|² for the unit vortex is 1/4 + 1/4.
    let v: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((v - 0.5f64.sqrt()).abs() < 1e-6, "{v}");
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
