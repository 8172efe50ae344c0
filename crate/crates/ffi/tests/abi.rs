use std::ffi::{c_char, CString};
use std::ptr;

use gw_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { gw_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    String::from_utf8_lossy(&buf[..n.min(255)]).into_owned()
}

unsafe fn lattice(depth: u32) -> *mut GwLattice {
    let mut l = ptr::null_mut();
    assert_eq!(gw_lattice_new(1, [0.0].as_ptr(), 1.0, depth, &mut l), GwStatus::Ok);
    l
}

#[test]
fn lebesgue_pair_round_trip() {
    unsafe {
        let l = lattice(4);
        let n = gw_lattice_cells(l);
        assert_eq!(n, 16);
        let masses = vec![1.0 / n as f64; n];
        let mut s = ptr::null_mut();
        assert_eq!(gw_weight_from_masses(l, masses.as_ptr(), n, &mut s), GwStatus::Ok);
        assert!((gw_weight_total(s) - 1.0).abs() < 1e-12);

        let mut rep = ptr::null_mut();
        assert_eq!(gw_constants(ptr::null(), s, s, &mut rep), GwStatus::Ok);
        let mut c = GwConstants::default();
        assert_eq!(gw_report_constants(rep, &mut c), GwStatus::Ok);
        assert!((c.a2 - 1.0).abs() < 1e-12);
        assert!(c.g_norm > 0.0 && c.n_const >= c.testing);

        let mut needed = 0usize;
        assert_eq!(gw_report_json(rep, ptr::null_mut(), 0, &mut needed), GwStatus::BufferTooSmall);
        let mut buf = vec![0u8; needed];
        assert_eq!(gw_report_json(rep, buf.as_mut_ptr() as *mut c_char, needed, &mut needed), GwStatus::Ok);
        let v: serde_json::Value = serde_json::from_slice(&buf[..needed - 1]).unwrap();
        assert_eq!(v["a2"].as_f64().unwrap(), c.a2);

        gw_report_free(rep);
        gw_weight_free(s);
        gw_lattice_free(l);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(gw_lattice_new(3, [0.0; 3].as_ptr(), 1.0, 2, &mut l), GwStatus::Validation);
        assert!(l.is_null());
        assert_eq!(gw_lattice_new(1, ptr::null(), 1.0, 2, &mut l), GwStatus::NullPointer);
        assert!(last_error().contains("corner"));

        let l = lattice(2);
        let mut w = ptr::null_mut();
        let bad = [0.25, -0.25, 0.0, 0.0];
        assert_eq!(gw_weight_from_masses(l, bad.as_ptr(), 4, &mut w), GwStatus::Validation);
        assert_eq!(gw_weight_from_masses(l, bad.as_ptr(), 3, &mut w), GwStatus::Validation);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        std::fs::write(&p, "x1,mass\n0.1,1\n0.2,zz\n").unwrap();
        let cp = CString::new(p.to_str().unwrap()).unwrap();
        assert_eq!(gw_weight_from_csv(l, cp.as_ptr(), &mut w), GwStatus::Parse);
        assert!(last_error().contains("line 3"), "{}", last_error());
        let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
        assert_eq!(gw_weight_from_csv(l, missing.as_ptr(), &mut w), GwStatus::Io);

        std::fs::write(&p, "x1,mass\n0.1,1\n").unwrap();
        assert_eq!(gw_weight_from_csv(l, cp.as_ptr(), &mut w), GwStatus::Ok);
        let mut rep = ptr::null_mut();
        let cfg = CString::new(r#"{"bogus": 1}"#).unwrap();
        assert_eq!(gw_constants(cfg.as_ptr(), w, w, &mut rep), GwStatus::Json);
        assert_eq!(gw_constants(ptr::null(), w, ptr::null(), &mut rep), GwStatus::NullPointer);

        let l3 = lattice(3);
        let mut other = ptr::null_mut();
        assert_eq!(gw_weight_from_masses(l3, [0.0; 8].as_ptr(), 8, &mut other), GwStatus::Ok);
        assert_ne!(gw_constants(ptr::null(), w, other, &mut rep), GwStatus::Ok);
        assert!(rep.is_null());

        gw_weight_free(other);
        gw_weight_free(w);
        gw_lattice_free(l3);
        gw_lattice_free(l);
        assert!(gw_weight_total(ptr::null()).is_nan());
        gw_weight_free(ptr::null_mut());
    }
}

#[test]
fn error_message_truncates() {
    unsafe {
        let mut l = ptr::null_mut();
        gw_lattice_new(1, ptr::null(), 1.0, 2, &mut l);
        let mut buf = [0x7fu8; 4];
        let n = gw_last_error(buf.as_mut_ptr() as *mut c_char, 4);
        assert!(n > 3);
        assert_eq!(buf[3], 0);
    }
}
