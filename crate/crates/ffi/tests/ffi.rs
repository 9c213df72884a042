use std::ffi::{c_char, CString};
use std::ptr;

use hartree_wkb_ffi::*;

fn last_error() -> String {
    let n = unsafe { hw_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; n];
    unsafe { hw_last_error_message(buf.as_mut_ptr() as *mut c_char, n) };
    String::from_utf8(buf[..n - 1].to_vec()).unwrap()
}

fn grid(dim: usize, points: usize, length: f64) -> *mut HwGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hw_grid_new(dim, points, length, &mut g) }, HwStatus::Ok);
    g
}

#[test]
fn bad_grid_reports_message() {
    let mut g = ptr::null_mut();
    let s = unsafe { hw_grid_new(3, 12, 1.0, &mut g) };
    assert_eq!(s, HwStatus::Failure);
    assert!(g.is_null());
    assert!(last_error().contains("invalid grid"), "{}", last_error());
}

#[test]
fn null_pointers_are_rejected() {
    let s = unsafe { hw_grid_new(3, 8, 1.0, ptr::null_mut()) };
    assert_eq!(s, HwStatus::NullPointer);
    let s = unsafe { hw_riesz_potential(ptr::null(), 1.0, ptr::null_mut()) };
    assert_eq!(s, HwStatus::NullPointer);
}

#[test]
fn field_values_round_trip() {
    let g = grid(2, 8, 3.0);
    let n = unsafe { hw_grid_len(g) };
    let values: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { hw_field_from_values(g, values.as_ptr(), values.len(), &mut f) },
        HwStatus::Ok
    );
    let mut back = vec![0.0; 2 * n];
    assert_eq!(unsafe { hw_field_values(f, back.as_mut_ptr(), back.len()) }, HwStatus::Ok);
    assert_eq!(values, back);
    let mut short = vec![0.0; 3];
    assert_eq!(
        unsafe { hw_field_values(f, short.as_mut_ptr(), short.len()) },
        HwStatus::BufferTooSmall
    );
    unsafe {
        hw_field_free(f);
        hw_grid_free(g);
    }
}

#[test]
fn constant_potential_is_zero_mode_multiple() {
    let g = grid(3, 8, 6.0);
    let n = unsafe { hw_grid_len(g) };
    let values: Vec<f64> = (0..n).flat_map(|_| [1.0, 0.0]).collect();
    let mut f = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(hw_field_from_values(g, values.as_ptr(), values.len(), &mut f), HwStatus::Ok);
        assert_eq!(hw_riesz_potential(f, 1.0, &mut p), HwStatus::Ok);
    }
    let mut out = vec![0.0; 2 * n];
    unsafe { hw_field_values(p, out.as_mut_ptr(), out.len()) };
    let first = out[0];
    assert!(first > 0.0);
    assert!(out.chunks(2).all(|z| (z[0] - first).abs() <= 1e-12 * first && z[1].abs() <= 1e-12 * first));
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { hw_riesz_potential(f, 3.0, &mut bad) }, HwStatus::Failure);
    unsafe {
        hw_field_free(p);
        hw_field_free(f);
        hw_grid_free(g);
    }
}

#[test]
fn direct_evolution_conserves_mass() {
    let g = grid(3, 32, 8.0);
    let n = unsafe { hw_grid_len(g) };
    let h = 8.0 / 32.0;
    let mut amp = Vec::with_capacity(2 * n);
    for i in 0..32 {
        for j in 0..32 {
            for k in 0..32 {
                let r2: f64 = [i, j, k].iter().map(|&m| (m as f64 * h - 4.0).powi(2)).sum();
                amp.extend([(-r2 / 1.5).exp(), 0.0]);
            }
        }
    }
    let zeros = vec![0.0; 2 * n];
    let (mut a, mut phi, mut u) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        hw_field_from_values(g, amp.as_ptr(), amp.len(), &mut a);
        hw_field_from_values(g, zeros.as_ptr(), zeros.len(), &mut phi);
        assert_eq!(hw_direct_evolve(a, phi, 0.5, 1.0, 1.0, 0.1, 0.02, &mut u), HwStatus::Ok, "{}", last_error());
    }
    let mut out = vec![0.0; 2 * n];
    unsafe { hw_field_values(u, out.as_mut_ptr(), out.len()) };
    let m0: f64 = amp.iter().map(|x| x * x).sum();
    let m1: f64 = out.iter().map(|x| x * x).sum();
    assert!(((m1 - m0) / m0).abs() < 1e-12);
    let mut bad = ptr::null_mut();
    let s = unsafe { hw_direct_evolve(a, phi, 2.0, 1.0, 1.0, 0.1, 0.02, &mut bad) };
    assert_ne!(s, HwStatus::Ok);
    unsafe {
        hw_field_free(u);
        hw_field_free(phi);
        hw_field_free(a);
        hw_grid_free(g);
    }
}

const SELFTEST: &str = "format_version = 1
[physics]
dim = 3
gamma = 1.0
lambda = 1.0
[grid]
points = 16
box_length = 8.0
[data]
recipe = \"homogeneous\"
re = 1.0
im = 0.0
";

#[test]
fn config_parse_canonical_and_run() {
    let text = CString::new(SELFTEST).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hw_config_parse(text.as_ptr(), &mut cfg) }, HwStatus::Ok);
    let mut needed = 0usize;
    let s = unsafe { hw_config_canonical(cfg, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(s, HwStatus::BufferTooSmall);
    let mut buf = vec![0u8; needed];
    let s = unsafe { hw_config_canonical(cfg, buf.as_mut_ptr() as *mut c_char, needed, &mut needed) };
    assert_eq!(s, HwStatus::Ok);
    let canonical = std::str::from_utf8(&buf[..needed - 1]).unwrap();
    assert!(canonical.starts_with("format_version = 1\n"));

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let sub = CString::new("selftest").unwrap();
    let mut code = -1;
    assert_eq!(unsafe { hw_run(cfg, sub.as_ptr(), out.as_ptr(), &mut code) }, HwStatus::Ok);
    assert_eq!(code, 0);
    assert!(dir.path().join("selftest.csv").exists());
    let bogus = CString::new("bogus").unwrap();
    assert_eq!(unsafe { hw_run(cfg, bogus.as_ptr(), out.as_ptr(), &mut code) }, HwStatus::Config);
    unsafe { hw_config_free(cfg) };
}

#[test]
fn config_errors_list_every_violation() {
    let text = CString::new("format_version = 2\n[physics]\ndim = 3\ngamma = 2.0\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hw_config_parse(text.as_ptr(), &mut cfg) }, HwStatus::Config);
    let msg = last_error();
    assert!(msg.contains("format_version"), "{msg}");
    assert!(msg.contains("γ ≤ n−2"), "{msg}");
    assert!(msg.contains("missing [grid]"), "{msg}");
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hartree_wkb.h");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
