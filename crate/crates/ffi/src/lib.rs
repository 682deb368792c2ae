//! C ABI for the `rshe` simulator.
//!
//! Every fallible call returns an [`RsheStatus`]; on failure the message is
//! kept per thread and can be copied out with [`rshe_last_error_message`].
//! Simulators are opaque handles created by [`rshe_simulator_new`] and
//! released with [`rshe_simulator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rshe::config::{parse_config_str, ExperimentKind};
use rshe::integrator::{SimState, Stepper};
use rshe::noise::{replica_rng, ReplicaRng};
use rshe::{Error, GridField, GridSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsheStatus {
    Ok = 0,
    InvalidInput = 1,
    InvalidParameter = 2,
    Config = 3,
    BlowUp = 4,
    Io = 5,
    NullPointer = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Opaque simulator: one replica of the configured `simulate` run.
pub struct RsheSimulator {
    stepper: Stepper,
    state: SimState,
    rng: ReplicaRng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RsheStatus {
    match e {
        Error::InvalidParameter { .. } | Error::StepTooLarge { .. } => RsheStatus::InvalidParameter,
        Error::Config(_) | Error::Dissipativity(_) => RsheStatus::Config,
        Error::BlowUp { .. } => RsheStatus::BlowUp,
        Error::Io { .. } => RsheStatus::Io,
        Error::InvalidInput(_) | Error::SymmetryViolation { .. } | Error::GridMismatch { .. } => {
            RsheStatus::InvalidInput
        }
        _ => RsheStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RsheStatus>) -> RsheStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsheStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RsheStatus::Panic
        }
    }
}

fn fail(e: Error) -> RsheStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> RsheStatus {
    set_error(format!("{what} is null"));
    RsheStatus::NullPointer
}

/// Copies the calling thread's last error message (NUL terminated,
/// truncated to `len - 1` bytes) into `buf`. Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn rshe_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: the caller guarantees `len` writable bytes at `buf`.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Builds a simulator from TOML configuration text (same schema as the
/// command-line tool; relative paths resolve against the working
/// directory) and a base seed. The initial field is rearranged once.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be null
/// or valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut RsheSimulator,
) -> RsheStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let text = unsafe { CStr::from_ptr(config_toml) }
            .to_str()
            .map_err(|_| fail(Error::Config("configuration is not valid UTF-8".into())))?;
        let cfg = parse_config_str(text, &[]).map_err(fail)?;
        let r = cfg.resolve(ExperimentKind::Simulate, Path::new(".")).map_err(fail)?;
        let stepper = Stepper::new(r.step.clone(), r.grid).map_err(fail)?;
        let state = stepper.initial_state(&r.initial, false).map_err(fail)?;
        r.step.check_step_size(&state.field).map_err(fail)?;
        let sim = Box::new(RsheSimulator {
            stepper,
            state,
            rng: replica_rng(seed, 0),
        });
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(sim) };
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`rshe_simulator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_free(sim: *mut RsheSimulator) {
    if !sim.is_null() {
        // SAFETY: the caller hands back ownership of a live handle.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Advances by `n_steps` time steps.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_step(sim: *mut RsheSimulator, n_steps: u64) -> RsheStatus {
    guard(|| {
        // SAFETY: null or a live handle, not aliased during the call.
        let sim = unsafe { sim.as_mut() }.ok_or_else(|| null("sim"))?;
        for _ in 0..n_steps {
            sim.stepper.step(&mut sim.state, &mut sim.rng).map_err(fail)?;
        }
        Ok(())
    })
}

/// Grid size `N`, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_n_points(sim: *const RsheSimulator) -> usize {
    // SAFETY: null or a live handle.
    unsafe { sim.as_ref() }.map_or(0, |s| s.state.field.values().len())
}

/// Current time, or NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_time(sim: *const RsheSimulator) -> f64 {
    // SAFETY: null or a live handle.
    unsafe { sim.as_ref() }.map_or(f64::NAN, |s| s.state.t)
}

/// Cumulative rearrangement displacement, or NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_reflection(sim: *const RsheSimulator) -> f64 {
    // SAFETY: null or a live handle.
    unsafe { sim.as_ref() }.map_or(f64::NAN, |s| s.state.reflection_cum)
}

/// Copies the current field (storage order `j = -N/2+1, ..., N/2`) into
/// `out`, which must hold at least `N` values.
///
/// # Safety
/// `sim` must be null or a live handle; `out` must be null or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rshe_simulator_field(sim: *const RsheSimulator, out: *mut f64, len: usize) -> RsheStatus {
    guard(|| {
        // SAFETY: null or a live handle.
        let sim = unsafe { sim.as_ref() }.ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let values = sim.state.field.values();
        if len < values.len() {
            set_error(format!("buffer holds {len} values, field has {}", values.len()));
            return Err(RsheStatus::BufferTooSmall);
        }
        // SAFETY: `out` is valid for `len >= values.len()` writes.
        unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
        Ok(())
    })
}

/// # Safety
/// `values` must be valid for `n` reads.
unsafe fn field_from_raw(values: *const f64, n: usize, what: &str) -> Result<GridField, RsheStatus> {
    if values.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees `n` readable values.
    let v = unsafe { std::slice::from_raw_parts(values, n) }.to_vec();
    let grid = GridSpec::new(n).map_err(fail)?;
    GridField::new(grid, v).map_err(fail)
}

/// Symmetric non-increasing rearrangement of `n` values in storage order.
/// `values` and `out` may alias.
///
/// # Safety
/// `values` must be valid for `n` reads and `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn rshe_rearrange(values: *const f64, out: *mut f64, n: usize) -> RsheStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let f = unsafe { field_from_raw(values, n, "values") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (r, _) = rshe::rearrange::rearrange(&f).map_err(fail)?;
        // SAFETY: `out` is valid for `n` writes; the input was copied first.
        unsafe { std::ptr::copy_nonoverlapping(r.values().as_ptr(), out, n) };
        Ok(())
    })
}

/// Wasserstein-2 distance between the value laws of two fields of size `n`.
///
/// # Safety
/// `u` and `v` must be valid for `n` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rshe_w2(u: *const f64, v: *const f64, n: usize, out: *mut f64) -> RsheStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let fu = unsafe { field_from_raw(u, n, "u") }?;
        let fv = unsafe { field_from_raw(v, n, "v") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = rshe::measure::w2(&fu, &fv).map_err(fail)?;
        // SAFETY: checked non-null.
        unsafe { *out = d };
        Ok(())
    })
}
