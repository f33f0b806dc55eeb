use std::ffi::{c_char, CStr, CString};
use std::ptr::{null, null_mut};

use gfra_ffi::*;

fn tiny() -> GfraSystemConfig {
    let mut c = GfraSystemConfig {
        n_users: 0,
        n_sequences: 0,
        seq_len: 0,
        guard: 0,
        max_delay: 0,
        n_pilot: 0,
        max_data: 0,
        n_antennas: 0,
        n_active: 0,
        snr_db: 0.0,
        path_loss_default: 0.0,
        modulation_order: 0,
    };
    assert_eq!(unsafe { gfra_system_config_default(&mut c) }, GfraStatus::Ok);
    c.n_users = 100;
    c.n_sequences = 8;
    c.seq_len = 16;
    c.guard = 2;
    c.max_delay = 2;
    c.n_active = 3;
    c.snr_db = f64::INFINITY;
    c
}

fn last_error() -> String {
    let need = unsafe { gfra_last_error_message(null_mut(), 0) };
    let mut buf = vec![0 as c_char; need];
    unsafe { gfra_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn noiseless_round_trip_through_the_c_interface() {
    let cfg = tiny();
    let mut amp = GfraAmpConfig {
        n_iters: 0,
        alpha: 0.0,
        delta_scale: 0.0,
        stop_tol: 0.0,
    };
    assert_eq!(unsafe { gfra_amp_config_default(&mut amp) }, GfraStatus::Ok);
    assert!(amp.n_iters > 0 && amp.alpha > 0.0);

    let mut dict = null_mut();
    assert_eq!(unsafe { gfra_dictionary_new(&cfg, 7, &mut dict) }, GfraStatus::Ok);
    let (mut n_rows, mut n_cols) = (0, 0);
    assert_eq!(unsafe { gfra_dictionary_shape(dict, &mut n_rows, &mut n_cols) }, GfraStatus::Ok);
    assert_eq!((n_rows, n_cols), (16 + 2, 8 * 3));

    let mut trial = null_mut();
    assert_eq!(unsafe { gfra_trial_new(&cfg, dict, 11, 12, &mut trial) }, GfraStatus::Ok);
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(
        unsafe { gfra_trial_observation(trial, null_mut(), 0, &mut rows, &mut cols) },
        GfraStatus::Ok
    );
    let mut y = vec![GfraComplex::default(); rows * cols];
    assert_eq!(
        unsafe { gfra_trial_observation(trial, y.as_mut_ptr(), y.len(), &mut rows, &mut cols) },
        GfraStatus::Ok
    );
    assert!(y.iter().any(|z| z.re != 0.0));

    let mut est = null_mut();
    let status = unsafe { gfra_solve(GfraSolver::AmpBp, &cfg, dict, &amp, null(), y.as_ptr(), rows, cols, &mut est) };
    assert_eq!(status, GfraStatus::Ok, "{}", last_error());
    let mut m = GfraMetrics::default();
    assert_eq!(unsafe { gfra_evaluate(trial, est, &mut m) }, GfraStatus::Ok);
    assert_eq!(m.n_active, 3);
    assert_eq!(m.f1, 1.0);
    assert!(m.nmse_db < -40.0);

    let (mut er, mut ec) = (0, 0);
    let mut small = vec![GfraComplex::default(); 3];
    assert_eq!(
        unsafe { gfra_estimate_copy(est, small.as_mut_ptr(), small.len(), &mut er, &mut ec) },
        GfraStatus::BufferTooSmall
    );
    assert_eq!((er, ec), (n_cols, cols));
    assert!(last_error().contains("needed"));

    unsafe {
        gfra_estimate_free(est);
        gfra_trial_free(trial);
        gfra_dictionary_free(dict);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let cfg = tiny();
    let mut dict = null_mut();
    assert_eq!(unsafe { gfra_dictionary_new(null(), 1, &mut dict) }, GfraStatus::NullPointer);
    assert!(last_error().contains("cfg"));
    assert!(dict.is_null());

    let mut bad = cfg;
    bad.max_delay = bad.guard + 1;
    assert_eq!(unsafe { gfra_dictionary_new(&bad, 1, &mut dict) }, GfraStatus::InvalidConfig);
    assert!(last_error().contains("max_delay"));

    assert_eq!(unsafe { gfra_dictionary_new(&cfg, 1, &mut dict) }, GfraStatus::Ok);
    assert_eq!(last_error(), "");
    let y = [GfraComplex::default(); 5 * 2];
    let mut est = null_mut();
    let status = unsafe { gfra_solve(GfraSolver::LampBp, &cfg, dict, null(), null(), y.as_ptr(), 5, 2, &mut est) };
    assert_eq!(status, GfraStatus::NullPointer);

    let missing = CString::new("/nonexistent/lamp_bp.params").unwrap();
    let mut params = null_mut();
    assert_eq!(unsafe { gfra_lamp_params_load(missing.as_ptr(), &mut params) }, GfraStatus::Io);
    assert!(params.is_null());

    unsafe {
        gfra_dictionary_free(dict);
        gfra_dictionary_free(null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gfra.h")).unwrap();
    for name in [
        "gfra_last_error_message",
        "gfra_version",
        "gfra_system_config_default",
        "gfra_amp_config_default",
        "gfra_dictionary_new",
        "gfra_dictionary_shape",
        "gfra_dictionary_free",
        "gfra_trial_new",
        "gfra_trial_observation",
        "gfra_trial_signal",
        "gfra_trial_free",
        "gfra_lamp_params_load",
        "gfra_lamp_params_free",
        "gfra_solve",
        "gfra_estimate_copy",
        "gfra_estimate_free",
        "gfra_evaluate",
        "typedef struct GfraDictionary GfraDictionary",
    ] {
        assert!(header.contains(name), "{name} missing from gfra.h");
    }
    let v = unsafe { CStr::from_ptr(gfra_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"gfra.h\"\nint main(void) { GfraSystemConfig c; return gfra_system_config_default(&c) == GFRA_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(_) => {
            eprintln!("no C compiler on PATH; skipping");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
