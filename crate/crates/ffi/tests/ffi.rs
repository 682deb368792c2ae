use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rshe_ffi::*;

const CONFIG: &str = r#"
[grid]
n_points = 16

[step]
dt = 1e-3

[drift]
kind = "linear"
mu = 1.0

[initial]
profile = "cosine"
mean = 0.5
amplitude = 1.0
"#;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { rshe_last_error_message(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn new_sim(config: &str, seed: u64) -> Result<*mut RsheSimulator, RsheStatus> {
    let text = CString::new(config).unwrap();
    let mut sim = ptr::null_mut();
    match unsafe { rshe_simulator_new(text.as_ptr(), seed, &mut sim) } {
        RsheStatus::Ok => Ok(sim),
        s => Err(s),
    }
}

fn field(sim: *const RsheSimulator) -> Vec<f64> {
    let n = unsafe { rshe_simulator_n_points(sim) };
    let mut out = vec![0.0; n];
    assert_eq!(unsafe { rshe_simulator_field(sim, out.as_mut_ptr(), n) }, RsheStatus::Ok);
    out
}

#[test]
fn simulator_lifecycle_is_deterministic() {
    let a = new_sim(CONFIG, 7).unwrap();
    let b = new_sim(CONFIG, 7).unwrap();
    assert_eq!(unsafe { rshe_simulator_n_points(a) }, 16);
    assert_eq!(unsafe { rshe_simulator_time(a) }, 0.0);
    for sim in [a, b] {
        assert_eq!(unsafe { rshe_simulator_step(sim, 250) }, RsheStatus::Ok);
    }
    assert!((unsafe { rshe_simulator_time(a) } - 0.25).abs() < 1e-12);
    assert!(unsafe { rshe_simulator_reflection(a) } >= 0.0);
    assert_eq!(field(a), field(b));

    let mut small = [0.0; 4];
    assert_eq!(unsafe { rshe_simulator_field(a, small.as_mut_ptr(), 4) }, RsheStatus::BufferTooSmall);
    unsafe {
        rshe_simulator_free(a);
        rshe_simulator_free(b);
        rshe_simulator_free(ptr::null_mut());
    }
}

#[test]
fn invalid_configuration_reports_status_and_message() {
    let bad = CONFIG.replace("mu = 1.0", "mu = -1.0");
    assert_eq!(new_sim(&bad, 0).unwrap_err(), RsheStatus::InvalidParameter);
    assert!(last_error().contains("mu"), "{}", last_error());
    assert_eq!(new_sim("[step]\nbogus = 1\n", 0).unwrap_err(), RsheStatus::Config);
    assert!(last_error().contains("bogus"));
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { rshe_simulator_new(ptr::null(), 0, &mut sim) }, RsheStatus::NullPointer);
    assert_eq!(unsafe { rshe_simulator_step(ptr::null_mut(), 1) }, RsheStatus::NullPointer);
    assert!(unsafe { rshe_simulator_time(ptr::null()) }.is_nan());
}

#[test]
fn rearrange_and_w2() {
    let ramp: Vec<f64> = (1..=8).map(f64::from).collect();
    let mut out = vec![0.0; 8];
    assert_eq!(unsafe { rshe_rearrange(ramp.as_ptr(), out.as_mut_ptr(), 8) }, RsheStatus::Ok);
    // Storage order j = -3..4; the maximum sits at j = 0 (index 3).
    assert_eq!(out, vec![2.0, 4.0, 6.0, 8.0, 7.0, 5.0, 3.0, 1.0]);

    let mut in_place = ramp.clone();
    let p = in_place.as_mut_ptr();
    assert_eq!(unsafe { rshe_rearrange(p, p, 8) }, RsheStatus::Ok);
    assert_eq!(in_place, out);

    let shifted: Vec<f64> = ramp.iter().map(|v| v + 3.0).collect();
    let mut d = 0.0;
    assert_eq!(unsafe { rshe_w2(ramp.as_ptr(), shifted.as_ptr(), 8, &mut d) }, RsheStatus::Ok);
    assert!((d - 3.0).abs() < 1e-14);
    assert_eq!(unsafe { rshe_w2(ramp.as_ptr(), shifted.as_ptr(), 7, &mut d) }, RsheStatus::InvalidParameter);
    assert_eq!(unsafe { rshe_rearrange(ptr::null(), out.as_mut_ptr(), 8) }, RsheStatus::NullPointer);
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("rshe.h");
    assert!(header.is_file());
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["rshe_simulator_new", "rshe_simulator_step", "rshe_simulator_free", "rshe_rearrange", "rshe_w2"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(status) = Command::new(compiler)
            .args(["-fsyntax-only", "-x", lang])
            .arg(&header)
            .status()
        else {
            eprintln!("{compiler} not available; skipped");
            continue;
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
