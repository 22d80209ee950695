use lcflow_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

const SMALL: &str = r#"
mode = "zero"
[grid]
m_2d = 32
[bvp1d]
m = 256
[strip2d]
hx = 0.0625
[continuation]
l_schedule = [2.0, 4.0]
tol_cont = 1e-2
common_window = 1.0
end_margin = 1.0
[witness.search]
end_margin = 1.0
"#;

fn last_error() -> String {
    let p = lcflow_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut LcflowConfig {
    let toml = CString::new(SMALL).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { lcflow_config_from_toml(toml.as_ptr(), &mut cfg) }, LcflowStatus::Ok);
    cfg
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(lcflow_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { lcflow_config_default(LcflowMode::Ramp, ptr::null_mut()) }, LcflowStatus::NullPointer);
    assert!(last_error().contains("out_cfg"));
    let mut out = 0.0;
    assert_eq!(unsafe { lcflow_field_eval(ptr::null(), 0.0, 0.5, &mut out) }, LcflowStatus::NullPointer);
    unsafe {
        lcflow_config_free(ptr::null_mut());
        lcflow_pair_free(ptr::null_mut());
        lcflow_field_free(ptr::null_mut());
        lcflow_string_free(ptr::null_mut());
    }
}

#[test]
fn bad_config_maps_to_config_status() {
    let toml = CString::new("mode = \"spiral\"").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { lcflow_config_from_toml(toml.as_ptr(), &mut cfg) }, LcflowStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("spiral"));
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { lcflow_config_default(LcflowMode::Zero, &mut cfg) }, LcflowStatus::Ok);
    assert!(lcflow_last_error().is_null());
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lcflow_config_to_toml(cfg, &mut s) }, LcflowStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { lcflow_config_from_toml(s, &mut back) }, LcflowStatus::Ok);
    unsafe {
        assert!(CStr::from_ptr(s).to_str().unwrap().contains("mode = \"zero\""));
        lcflow_string_free(s);
        lcflow_config_free(cfg);
        lcflow_config_free(back);
    }
}

#[test]
fn small_problem_end_to_end() {
    let cfg = small_config();
    let mut pair = ptr::null_mut();
    assert_eq!(unsafe { lcflow_pair_compute(cfg, &mut pair) }, LcflowStatus::Ok, "{}", last_error());
    let (mut ls, mut lu) = (0.0, 0.0);
    assert_eq!(unsafe { lcflow_pair_lambda(pair, &mut ls, &mut lu) }, LcflowStatus::Ok);
    assert!(lu > 0.0 && lu <= ls);

    let mut n = 0usize;
    assert_eq!(unsafe { lcflow_pair_phibar(pair, ptr::null_mut(), 0, &mut n) }, LcflowStatus::BufferTooSmall);
    assert_eq!(n, 33);
    let mut phibar = vec![0.0; n];
    assert_eq!(unsafe { lcflow_pair_phibar(pair, phibar.as_mut_ptr(), n, &mut n) }, LcflowStatus::Ok);
    assert_eq!(phibar[0], 0.0);
    assert!(phibar.iter().cloned().fold(0.0, f64::max) > 0.1);

    let mut field = ptr::null_mut();
    assert_eq!(unsafe { lcflow_heteroclinic(cfg, pair, &mut field) }, LcflowStatus::Ok, "{}", last_error());
    let (mut nx, mut ny, mut x0, mut hx, mut hy) = (0, 0, 0.0, 0.0, 0.0);
    assert_eq!(unsafe { lcflow_field_grid(field, &mut nx, &mut ny, &mut x0, &mut hx, &mut hy) }, LcflowStatus::Ok);
    assert_eq!(ny, 33);
    let mut vals = vec![0.0; nx * ny];
    let mut w = 0;
    assert_eq!(unsafe { lcflow_field_values(field, vals.as_mut_ptr(), vals.len(), &mut w) }, LcflowStatus::Ok);
    let mut at = 0.0;
    assert_eq!(unsafe { lcflow_field_eval(field, x0, hy, &mut at) }, LcflowStatus::Ok);
    assert_eq!(at, vals[1]);
    assert_eq!(unsafe { lcflow_field_eval(field, f64::NAN, 0.5, &mut at) }, LcflowStatus::InvalidArgument);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { lcflow_flow_report_json(cfg, field, &mut json) }, LcflowStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert!(report["divergence"].as_f64().unwrap() < 1e-10);
    unsafe {
        lcflow_string_free(json);
        lcflow_field_free(field);
        lcflow_pair_free(pair);
        lcflow_config_free(cfg);
    }
}

#[test]
fn run_writes_report() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { lcflow_run(cfg, path.as_ptr(), false, &mut json) }, LcflowStatus::Ok, "{}", last_error());
    let report: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert!(report["error"].is_null());
    assert!(dir.path().join("report.json").exists());
    unsafe {
        lcflow_string_free(json);
        lcflow_config_free(cfg);
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/lcflow.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["lcflow_pair_compute", "lcflow_heteroclinic", "lcflow_last_error", "LCFLOW_STATUS_NUMERICAL"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"lcflow.h\"\nint main(void) { return lcflow_version() == 0; }\n").unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler available; syntax check skipped"),
    }
}
