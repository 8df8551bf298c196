use std::ffi::{c_char, CString};
use std::ptr;

use hjhomog_ffi::*;

const FREE: &str = r#"
[medium]
kind = "periodic"
dim = 1

[lattice]
cells_per_unit = 40
steps_per_unit = 4
speed_cap = 3.0
radius = 4.0

[schedule]
horizons = [2, 4]
seeds = [0]

[grids]
direction_extent = 1.0
direction_step = 0.25
momentum_extent = 0.5
momentum_step = 0.25
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { hj_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn parse(text: &str) -> (HjStatus, *mut HjConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let s = unsafe { hj_config_parse(c.as_ptr(), &mut cfg) };
    (s, cfg)
}

#[test]
fn free_medium_round_trip() {
    let (s, cfg) = parse(FREE);
    assert_eq!(s, HjStatus::Ok);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hj_medium_build(cfg, &mut m), HjStatus::Ok);
        assert_eq!(hj_medium_dim(m), 1);
        let mut w = ptr::null_mut();
        assert_eq!(hj_environment_sample(m, 7, &mut w), HjStatus::Ok);

        let (x, p) = (0.3, 1.5);
        let mut v = f64::NAN;
        assert_eq!(hj_hamiltonian(m, w, &x, &p, 1, &mut v), HjStatus::Ok);
        assert!((v - 1.125).abs() < 1e-12, "{v}");
        assert_eq!(hj_lagrangian(m, w, &x, &p, 1, &mut v), HjStatus::Ok);
        assert!((v - 1.125).abs() < 1e-9, "{v}");

        let mut t = ptr::null_mut();
        assert_eq!(hj_effective_compute(cfg, m, &mut t), HjStatus::Ok, "{}", last_error());
        assert_eq!(hj_effective_len(t), 9);
        let mut h = 0.0;
        assert_eq!(hj_effective_point(t, 0, &mut h, 1, &mut v), HjStatus::Ok);
        assert_eq!(h, -1.0);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(hj_effective_lagrangian(t, &0.5, 1, &mut v), HjStatus::Ok);
        assert!((v - 0.125).abs() < 1e-12, "{v}");
        assert_eq!(hj_effective_hamiltonian(t, &0.5, 1, &mut v), HjStatus::Ok);
        assert!((v - 0.125).abs() < 1e-12, "{v}");

        assert_eq!(hj_effective_lagrangian(t, &5.0, 1, &mut v), HjStatus::InvalidArgument);
        assert!(last_error().contains("off the grid"));
        assert_eq!(hj_effective_point(t, 99, &mut h, 1, &mut v), HjStatus::InvalidArgument);

        hj_effective_free(t);
        hj_environment_free(w);
        hj_medium_free(m);
        hj_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (s, cfg) = parse("[medium]\nkind = \"periodic\"\ndim = 1\nbogus = 3\n");
    assert_eq!(s, HjStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("bogus"));

    let (s, cfg) = parse("[medium]\nkind = \"quasi-periodic\"\ndim = 1\nalpha = [0.5]\n");
    assert_eq!(s, HjStatus::Ok);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hj_medium_build(cfg, &mut m), HjStatus::Resonant);
        assert!(m.is_null());
        assert!(last_error().contains("resonant"));
        hj_config_free(cfg);
    }
}

#[test]
fn null_and_dimension_checks() {
    unsafe {
        assert_eq!(hj_config_parse(ptr::null(), &mut ptr::null_mut()), HjStatus::NullPointer);
        assert_eq!(hj_medium_dim(ptr::null()), 0);
        assert_eq!(hj_effective_len(ptr::null()), 0);
        hj_medium_free(ptr::null_mut());
        hj_config_free(ptr::null_mut());

        let (_, cfg) = parse(FREE);
        let mut m = ptr::null_mut();
        hj_medium_build(cfg, &mut m);
        let mut w = ptr::null_mut();
        hj_environment_sample(m, 0, &mut w);
        let x = [0.0, 0.0];
        let mut v = 0.0;
        assert_eq!(hj_hamiltonian(m, w, x.as_ptr(), x.as_ptr(), 2, &mut v), HjStatus::InvalidArgument);
        assert!(last_error().contains("dimension"));
        assert_eq!(hj_hamiltonian(m, w, x.as_ptr(), x.as_ptr(), 1, ptr::null_mut()), HjStatus::NullPointer);

        // A successful call clears the slot.
        assert_eq!(hj_hamiltonian(m, w, x.as_ptr(), x.as_ptr(), 1, &mut v), HjStatus::Ok);
        assert_eq!(hj_last_error(ptr::null_mut(), 0), 0);

        hj_environment_free(w);
        hj_medium_free(m);
        hj_config_free(cfg);
    }
}

#[test]
fn environment_from_another_medium_is_rejected() {
    let (_, a) = parse(FREE);
    let (_, b) = parse(&FREE.replace("kind = \"periodic\"", "kind = \"periodic\"\npotential = \"cosine\"\namplitude = 1.0"));
    unsafe {
        let (mut ma, mut mb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(hj_medium_build(a, &mut ma), HjStatus::Ok);
        assert_eq!(hj_medium_build(b, &mut mb), HjStatus::Ok, "{}", last_error());
        let mut w = ptr::null_mut();
        hj_environment_sample(mb, 0, &mut w);
        let mut v = 0.0;
        assert_eq!(hj_hamiltonian(ma, w, &0.0, &0.0, 1, &mut v), HjStatus::InvalidArgument);
        hj_environment_free(w);
        hj_medium_free(ma);
        hj_medium_free(mb);
        hj_config_free(a);
        hj_config_free(b);
    }
}

#[test]
fn truncated_error_copy_is_terminated() {
    parse("not toml [");
    let full = unsafe { hj_last_error(ptr::null_mut(), 0) };
    assert!(full > 8);
    let mut buf = [1 as c_char; 8];
    let n = unsafe { hj_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(buf[7], 0);
}

#[test]
fn run_writes_artifacts() {
    let (_, cfg) = parse(FREE);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let s = unsafe { hj_run(HjCommand::Effective, cfg, out.as_ptr(), ptr::null(), 1, false) };
    assert_eq!(s, HjStatus::Ok, "{}", last_error());
    assert!(dir.path().join("effective.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
    unsafe { hj_config_free(cfg) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hjhomog.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
