use std::ffi::{CStr, CString};
use std::ptr;

use fphybrid_ffi::*;

const DW: &str =
    "[model]\nname = double-well\nsigma = 0.6\n\n[domain]\nlower = 0\nupper = 2\nr = 0.04\n\n\
                  [sampler]\nT = 60\nburn_in = 1\nseed = 3\n";

fn last_error() -> String {
    let p = fph_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn hybrid(text: &str) -> (FphStatus, *mut FphDensity) {
    let cfg = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { fph_run_hybrid_config(cfg.as_ptr(), &mut out) };
    (status, out)
}

#[test]
fn hybrid_run_round_trips_through_a_file() {
    let (status, d) = hybrid(DW);
    assert_eq!(status, FphStatus::Ok);
    unsafe {
        assert_eq!(fph_density_dim(d), 1);
        let n = fph_density_len(d);
        assert_eq!(n, 51);
        let (mut counts, mut lower) = ([0usize; 1], [f64::NAN; 1]);
        assert_eq!(
            fph_density_shape(d, counts.as_mut_ptr(), lower.as_mut_ptr(), 1),
            FphStatus::Ok
        );
        assert_eq!((counts[0], lower[0]), (51, 0.0));
        let mut r = 0.0;
        assert_eq!(fph_density_spacing(d, &mut r), FphStatus::Ok);
        let mut mass = 0.0;
        assert_eq!(fph_density_mass(d, &mut mass), FphStatus::Ok);
        let values = std::slice::from_raw_parts(fph_density_values(d), n);
        let integral: f64 = values.iter().sum::<f64>() * r;
        assert!(
            (integral - mass).abs() < 1e-9 * mass.max(1.0),
            "{integral} vs {mass}"
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("u.fpgrid").to_str().unwrap()).unwrap();
        assert_eq!(fph_density_write(d, path.as_ptr()), FphStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fph_density_read(path.as_ptr(), &mut back), FphStatus::Ok);
        let again = std::slice::from_raw_parts(fph_density_values(back), n);
        assert_eq!(values, again);
        let mut err = f64::NAN;
        assert_eq!(fph_l2_error(d, back, &mut err), FphStatus::Ok);
        assert_eq!(err, 0.0);
        fph_density_free(back);
        fph_density_free(d);
    }
}

#[test]
fn config_errors_map_to_config_status() {
    let (status, d) = hybrid(&format!("{DW}stride = 0x\n"));
    assert_eq!(status, FphStatus::Config);
    assert!(d.is_null());
    assert!(last_error().contains("line 14"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { fph_run_hybrid_config(ptr::null(), &mut out) },
        FphStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { fph_double_well_density(0.0, 0.6, ptr::null_mut()) },
        FphStatus::InvalidArgument
    );
    assert_eq!(unsafe { fph_density_dim(ptr::null()) }, 0);
    assert!(unsafe { fph_density_values(ptr::null()) }.is_null());
    unsafe { fph_density_free(ptr::null_mut()) };
}

#[test]
fn missing_file_reports_io() {
    let path = CString::new("/nonexistent/dir/x.fpgrid").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { fph_density_read(path.as_ptr(), &mut out) },
        FphStatus::Io
    );
    assert!(last_error().starts_with("io:"));
}

#[test]
fn double_well_density_value_and_parameter_error() {
    let mut u = 0.0;
    assert_eq!(
        unsafe { fph_double_well_density(0.0, 0.6, &mut u) },
        FphStatus::Ok
    );
    assert!((u - 0.1062).abs() < 5e-4);
    assert_eq!(
        unsafe { fph_double_well_density(0.0, -1.0, &mut u) },
        FphStatus::Parameter
    );
}

#[test]
fn mismatched_grids_report_spec_mismatch() {
    let (_, a) = hybrid(DW);
    let (_, b) = hybrid(&DW.replace("r = 0.04", "r = 0.05"));
    let mut err = 0.0;
    assert_eq!(
        unsafe { fph_l2_error(a, b, &mut err) },
        FphStatus::SpecMismatch
    );
    unsafe {
        fph_density_free(a);
        fph_density_free(b);
    }
}

#[test]
fn header_declares_the_public_surface() {
    let header = include_str!("../include/fphybrid.h");
    for name in [
        "typedef struct FphDensity FphDensity",
        "fph_last_error_message",
        "fph_density_read",
        "fph_density_write",
        "fph_density_free",
        "fph_density_shape",
        "fph_density_values",
        "fph_run_hybrid_config",
        "fph_double_well_density",
        "fph_l2_error",
        "FPH_STATUS_NOT_TWO_DIMENSIONAL = 14",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
