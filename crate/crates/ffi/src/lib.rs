//! C ABI over the `gfra` simulator.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load` and released
//! with the matching `*_free`. Every fallible call returns a [`GfraStatus`];
//! on failure the message is kept per thread and can be copied out with
//! [`gfra_last_error_message`]. Complex matrices cross the boundary as
//! column-major arrays of [`GfraComplex`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gfra::detection::{evaluate, receive, DetectionConfig};
use gfra::experiment::{solve, LampSet, Solver};
use gfra::learned::{load_params, LampParams, Variant};
use gfra::linalg::CMatrix;
use gfra::recovery::{AlphaSchedule, AmpConfig, DeltaRule};
use gfra::system_model::{
    draw_realization, synthesize_observation, ExpandedDictionary, Observation, SpreadingPool, SystemConfig,
    TransmissionRealization,
};
use gfra::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfraSolver {
    Amp = 0,
    AmpBp = 1,
    Lamp = 2,
    LampBp = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GfraComplex {
    pub re: f64,
    pub im: f64,
}

/// Scalar part of the system configuration (per-user path-loss overrides
/// are not exposed).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfraSystemConfig {
    pub n_users: usize,
    pub n_sequences: usize,
    pub seq_len: usize,
    pub guard: usize,
    pub max_delay: usize,
    pub n_pilot: usize,
    pub max_data: usize,
    pub n_antennas: usize,
    pub n_active: usize,
    /// `INFINITY` disables noise.
    pub snr_db: f64,
    pub path_loss_default: f64,
    pub modulation_order: usize,
}

/// AMP settings with a column-scaled threshold `α = alpha·√c` and a support
/// threshold of `delta_scale` times the median pseudo-data row norm.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfraAmpConfig {
    pub n_iters: usize,
    pub alpha: f64,
    pub delta_scale: f64,
    pub stop_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GfraMetrics {
    pub f1: f64,
    pub precision_mu_p: f64,
    pub recall_mu_r: f64,
    /// NaN when the true pilot block is zero.
    pub nmse_db: f64,
    pub mu_data: f64,
    pub n_active: usize,
    pub recovered_users: usize,
    pub collisions: usize,
    pub misdetections: usize,
    pub false_alarms: usize,
}

/// Expanded dictionary drawn from a seeded spreading pool.
pub struct GfraDictionary(ExpandedDictionary);

/// One realization with its noisy observation.
pub struct GfraTrial {
    cfg: SystemConfig,
    real: TransmissionRealization,
    obs: Observation,
}

/// Recovered signal matrix.
pub struct GfraEstimate(CMatrix);

/// Trained LAMP parameters.
pub struct GfraLampParams(LampParams);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> GfraStatus {
    match err {
        Error::InvalidConfig { .. } | Error::EnumerationGuard { .. } | Error::DictionaryHashMismatch { .. } => {
            GfraStatus::InvalidConfig
        }
        Error::DimensionMismatch { .. } => GfraStatus::DimensionMismatch,
        Error::SupportTooLarge { .. } | Error::NonFinite { .. } => GfraStatus::Numerical,
        Error::Io { .. } => GfraStatus::Io,
        _ => GfraStatus::Format,
    }
}

enum Failure {
    Status(GfraStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(GfraStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GfraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GfraStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            GfraStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

fn system_config(c: &GfraSystemConfig) -> SystemConfig {
    SystemConfig {
        n_users: c.n_users,
        n_sequences: c.n_sequences,
        seq_len: c.seq_len,
        guard: c.guard,
        max_delay: c.max_delay,
        n_pilot: c.n_pilot,
        max_data: c.max_data,
        n_antennas: c.n_antennas,
        n_active: c.n_active,
        snr_db: c.snr_db,
        path_loss_default: c.path_loss_default,
        modulation_order: c.modulation_order,
        path_loss_overrides: Vec::new(),
    }
}

fn amp_config(c: &GfraAmpConfig) -> AmpConfig {
    AmpConfig {
        n_iters: c.n_iters,
        alpha: AlphaSchedule::ColumnScaled { column_scaled: c.alpha },
        delta: DeltaRule::NoiseScaled(c.delta_scale),
        stop_tol: c.stop_tol,
        ..Default::default()
    }
}

/// Copies `m` into `buf` when it is large enough; the shape is always
/// reported.
unsafe fn copy_out(
    m: &CMatrix,
    buf: *mut GfraComplex,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> Result<(), Failure> {
    // SAFETY: the caller guarantees the out-pointers are null or writable.
    unsafe {
        if let Some(r) = rows.as_mut() {
            *r = m.nrows();
        }
        if let Some(c) = cols.as_mut() {
            *c = m.ncols();
        }
    }
    if buf.is_null() {
        return Ok(());
    }
    if len < m.len() {
        return Err(Failure::Status(
            GfraStatus::BufferTooSmall,
            format!("buffer holds {len} entries, {} needed", m.len()),
        ));
    }
    // SAFETY: `buf` is valid for `len ≥ m.len()` writes.
    let out = unsafe { std::slice::from_raw_parts_mut(buf, m.len()) };
    for (o, z) in out.iter_mut().zip(m.iter()) {
        *o = GfraComplex { re: z.re, im: z.im };
    }
    Ok(())
}

fn into_handle<T>(value: T, out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: `out` is non-null and, per the caller contract, writable.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `Box::into_raw` in this crate and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length plus one.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gfra_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` holds at least `len > n` bytes.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gfra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_system_config_default(out: *mut GfraSystemConfig) -> GfraStatus {
    guard(|| {
        let d = SystemConfig::default();
        let c = GfraSystemConfig {
            n_users: d.n_users,
            n_sequences: d.n_sequences,
            seq_len: d.seq_len,
            guard: d.guard,
            max_delay: d.max_delay,
            n_pilot: d.n_pilot,
            max_data: d.max_data,
            n_antennas: d.n_antennas,
            n_active: d.n_active,
            snr_db: d.snr_db,
            path_loss_default: d.path_loss_default,
            modulation_order: d.modulation_order,
        };
        // SAFETY: caller contract.
        let o = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *o = c;
        Ok(())
    })
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_amp_config_default(out: *mut GfraAmpConfig) -> GfraStatus {
    guard(|| {
        let d = AmpConfig::default();
        let alpha = match d.alpha {
            AlphaSchedule::ColumnScaled { column_scaled } => column_scaled,
            _ => 1.0,
        };
        let delta_scale = match d.delta {
            DeltaRule::NoiseScaled(k) => k,
            DeltaRule::Absolute(_) => 3.0,
        };
        // SAFETY: caller contract.
        let o = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *o = GfraAmpConfig {
            n_iters: d.n_iters,
            alpha,
            delta_scale,
            stop_tol: d.stop_tol,
        };
        Ok(())
    })
}

/// Draws the spreading pool from `seed` and expands it for the guard time.
///
/// # Safety
/// `cfg` must be null or readable; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_dictionary_new(
    cfg: *const GfraSystemConfig,
    seed: u64,
    out: *mut *mut GfraDictionary,
) -> GfraStatus {
    guard(|| {
        let c = system_config(unsafe { deref(cfg, "cfg") }?);
        c.validate()?;
        let pool = SpreadingPool::generate(&c, seed)?;
        into_handle(GfraDictionary(ExpandedDictionary::expand(&pool, c.guard)), out)
    })
}

/// # Safety
/// `dict` must be null or a live handle; the out-pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_dictionary_shape(
    dict: *const GfraDictionary,
    rows: *mut usize,
    cols: *mut usize,
) -> GfraStatus {
    guard(|| {
        let d = unsafe { deref(dict, "dict") }?;
        unsafe { copy_out(&CMatrix::zeros(d.0.n_rows(), d.0.n_columns()), std::ptr::null_mut(), 0, rows, cols) }
    })
}

/// # Safety
/// `dict` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfra_dictionary_free(dict: *mut GfraDictionary) {
    unsafe { free(dict) }
}

/// Draws a realization and its observation from explicit seeds.
///
/// # Safety
/// Pointers must be null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_trial_new(
    cfg: *const GfraSystemConfig,
    dict: *const GfraDictionary,
    realization_seed: u64,
    noise_seed: u64,
    out: *mut *mut GfraTrial,
) -> GfraStatus {
    guard(|| {
        let c = system_config(unsafe { deref(cfg, "cfg") }?);
        let d = unsafe { deref(dict, "dict") }?;
        let real = draw_realization(&c, realization_seed)?;
        let obs = synthesize_observation(&real, &d.0, c.snr_db, noise_seed)?;
        into_handle(GfraTrial { cfg: c, real, obs }, out)
    })
}

/// Copies the observation `Y` (column-major). With a null `buf` only the
/// shape is written.
///
/// # Safety
/// `buf` must be null or valid for `len` entries; other pointers as usual.
#[no_mangle]
pub unsafe extern "C" fn gfra_trial_observation(
    trial: *const GfraTrial,
    buf: *mut GfraComplex,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> GfraStatus {
    guard(|| {
        let t = unsafe { deref(trial, "trial") }?;
        unsafe { copy_out(&t.obs.y, buf, len, rows, cols) }
    })
}

/// Copies the true signal matrix `X` (column-major).
///
/// # Safety
/// As [`gfra_trial_observation`].
#[no_mangle]
pub unsafe extern "C" fn gfra_trial_signal(
    trial: *const GfraTrial,
    buf: *mut GfraComplex,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> GfraStatus {
    guard(|| {
        let t = unsafe { deref(trial, "trial") }?;
        unsafe { copy_out(t.real.x_true(), buf, len, rows, cols) }
    })
}

/// # Safety
/// `trial` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfra_trial_free(trial: *mut GfraTrial) {
    unsafe { free(trial) }
}

/// Loads a parameter file written by the trainer.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_lamp_params_load(path: *const c_char, out: *mut *mut GfraLampParams) -> GfraStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        // SAFETY: non-null and NUL-terminated per the caller contract.
        let p = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Failure::Status(GfraStatus::InvalidConfig, "path is not UTF-8".into()))?;
        into_handle(GfraLampParams(load_params(Path::new(p))?), out)
    })
}

/// # Safety
/// `params` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfra_lamp_params_free(params: *mut GfraLampParams) {
    unsafe { free(params) }
}

/// Recovers the signal matrix from a column-major observation of
/// `rows × cols` entries. `amp` is read by the model-driven solvers and
/// `params` by the learned ones; either may be null when unused.
///
/// # Safety
/// `y` must be valid for `rows·cols` entries; other pointers null or valid.
#[no_mangle]
pub unsafe extern "C" fn gfra_solve(
    solver: GfraSolver,
    cfg: *const GfraSystemConfig,
    dict: *const GfraDictionary,
    amp: *const GfraAmpConfig,
    params: *const GfraLampParams,
    y: *const GfraComplex,
    rows: usize,
    cols: usize,
    out: *mut *mut GfraEstimate,
) -> GfraStatus {
    guard(|| {
        let c = system_config(unsafe { deref(cfg, "cfg") }?);
        let d = unsafe { deref(dict, "dict") }?;
        if y.is_null() {
            return Err(null("y"));
        }
        // SAFETY: `y` holds `rows·cols` entries per the caller contract.
        let ys = unsafe { std::slice::from_raw_parts(y, rows * cols) };
        let ym = CMatrix::from_iterator(rows, cols, ys.iter().map(|z| Complex64::new(z.re, z.im)));
        let (solver, amp_cfg, lamp) = match solver {
            GfraSolver::Amp | GfraSolver::AmpBp => {
                let a = amp_config(unsafe { deref(amp, "amp") }?);
                let s = if solver == GfraSolver::Amp { Solver::Amp } else { Solver::AmpBp };
                (s, a, LampSet::default())
            }
            GfraSolver::Lamp | GfraSolver::LampBp => {
                let p = unsafe { deref(params, "params") }?.0.clone();
                let (s, set) = match p.variant {
                    Variant::Mmv => (Solver::Lamp, LampSet { mmv: Some(p), bp: None }),
                    Variant::Bp => (Solver::LampBp, LampSet { mmv: None, bp: Some(p) }),
                };
                let wanted = if solver == GfraSolver::Lamp { Solver::Lamp } else { Solver::LampBp };
                if s != wanted {
                    return Err(Failure::Status(
                        GfraStatus::InvalidConfig,
                        format!("parameters are for `{s}`, solver is `{wanted}`"),
                    ));
                }
                (s, AmpConfig::default(), set)
            }
        };
        let result = solve(solver, &ym, &d.0, &c, &amp_cfg, &lamp)?;
        into_handle(GfraEstimate(result.x_hat), out)
    })
}

/// Copies an estimate (column-major).
///
/// # Safety
/// As [`gfra_trial_observation`].
#[no_mangle]
pub unsafe extern "C" fn gfra_estimate_copy(
    est: *const GfraEstimate,
    buf: *mut GfraComplex,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> GfraStatus {
    guard(|| {
        let e = unsafe { deref(est, "est") }?;
        unsafe { copy_out(&e.0, buf, len, rows, cols) }
    })
}

/// # Safety
/// `est` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfra_estimate_free(est: *mut GfraEstimate) {
    unsafe { free(est) }
}

/// Runs detection with default thresholds on an estimate of `trial` and
/// scores it against the realization.
///
/// # Safety
/// Pointers must be null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gfra_evaluate(
    trial: *const GfraTrial,
    est: *const GfraEstimate,
    out: *mut GfraMetrics,
) -> GfraStatus {
    guard(|| {
        let t = unsafe { deref(trial, "trial") }?;
        let e = unsafe { deref(est, "est") }?;
        let o = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let rx = receive(&e.0, &t.cfg, &DetectionConfig::default(), t.obs.noise_var)?;
        let m = evaluate(&t.real, &rx)?;
        *o = GfraMetrics {
            f1: m.f1,
            precision_mu_p: m.precision_mu_p,
            recall_mu_r: m.recall_mu_r,
            nmse_db: m.nmse_db.unwrap_or(f64::NAN),
            mu_data: m.mu_data,
            n_active: m.n_active,
            recovered_users: m.recovered_users,
            collisions: m.collisions,
            misdetections: m.misdetections,
            false_alarms: m.false_alarms,
        };
        Ok(())
    })
}
