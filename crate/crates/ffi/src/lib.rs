//! C ABI over `mif_core`: a streaming detector handle plus a few
//! stateless helpers.
//!
//! Every fallible call returns a `MifStatus`; on failure the message is
//! available from `mif_last_error_message` on the same thread. Panics are
//! caught at the boundary and reported as `MIF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mif_core::fusion::{multiscale_statistic, DetectorParams};
use mif_core::io::{load_scenario, parse_params, save_telemetry};
use mif_core::localization::{contribution, localize};
use mif_core::pipeline::{EntropyConfig, EntropyPipeline};
use mif_core::sim::{isc_power_density, ocv_of_soc, simulate, CellSpec, FaultSpec, PackLayout};
use mif_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MifStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Data = 5,
    /// Localization requested before a full window of history exists.
    NotReady = 6,
    Panic = 99,
}

/// One frame's detector output. Entropy fields are 0 while `ready` is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MifSample {
    pub ready: bool,
    /// Normalized dissimilarity, spatial and temporal entropy.
    pub h_d: f64,
    pub h_s: f64,
    pub h_t: f64,
    /// Fused statistic H.
    pub h: f64,
    /// Reference signal H_r.
    pub threshold: f64,
    pub alarm: bool,
}

/// Opaque streaming detector.
pub struct MifDetector {
    params: DetectorParams,
    pipe: EntropyPipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MifStatus {
    match e.exit_code() {
        2 => MifStatus::Config,
        3 => MifStatus::Simulation,
        _ => MifStatus::Data,
    }
}

fn guard<F: FnOnce() -> Result<(), (MifStatus, String)>>(f: F) -> MifStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MifStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside mif");
            MifStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (MifStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MifStatus, String) {
    (MifStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MifStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MifStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mif_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mif_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a detector for the 24-cell benchmark pack.
///
/// `params_toml` is the text of a calibrated params file, or NULL for the
/// shipped tuned params.
///
/// # Safety
/// `params_toml` must be NULL or a valid NUL-terminated string; `out` must
/// be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mif_detector_new(
    params_toml: *const c_char,
    out: *mut *mut MifDetector,
) -> MifStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = if params_toml.is_null() {
            DetectorParams::tuned()
        } else {
            parse_params(str_arg(params_toml, "params_toml")?).map_err(core_err)?
        };
        let layout = PackLayout::benchmark(&CellSpec::default()).map_err(core_err)?;
        let pipe = EntropyPipeline::new(
            EntropyConfig::from_params(&params),
            &layout.cell_centers,
            layout.n_groups(),
        )
        .map_err(core_err)?
        .retain_decompositions(params.window);
        *out = Box::into_raw(Box::new(MifDetector { params, pipe }));
        Ok(())
    })
}

/// Feeds one frame: `n_temps` cell temperatures (K, by serial) and
/// `n_volts` group voltages (V).
///
/// # Safety
/// `det` must come from `mif_detector_new`; the arrays must hold the given
/// counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mif_detector_push(
    det: *mut MifDetector,
    temps: *const f64,
    n_temps: usize,
    volts: *const f64,
    n_volts: usize,
    out: *mut MifSample,
) -> MifStatus {
    guard(|| {
        let det = det.as_mut().ok_or_else(|| null("det"))?;
        if temps.is_null() || volts.is_null() || out.is_null() {
            return Err(null("temps, volts or out"));
        }
        let t = std::slice::from_raw_parts(temps, n_temps);
        let v = std::slice::from_raw_parts(volts, n_volts);
        let p = &det.params;
        let sample = det.pipe.push(t, v).map_err(core_err)?;
        *out = match sample {
            None => MifSample {
                threshold: p.threshold,
                ..MifSample::default()
            },
            Some(s) => {
                let norm = p.normalizers();
                let h = multiscale_statistic(s.as_array(), &p.alpha, &norm);
                MifSample {
                    ready: true,
                    h_d: s.h_d / norm[0],
                    h_s: s.h_s / norm[1],
                    h_t: s.h_t / norm[2],
                    h,
                    threshold: p.threshold,
                    alarm: h > p.threshold,
                }
            }
        };
        Ok(())
    })
}

/// Estimated fault cell serial (1-based) from the last W frames.
///
/// # Safety
/// `det` must come from `mif_detector_new`; `cell` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mif_detector_localize(det: *const MifDetector, cell: *mut u32) -> MifStatus {
    guard(|| {
        let det = det.as_ref().ok_or_else(|| null("det"))?;
        if cell.is_null() {
            return Err(null("cell"));
        }
        let Some(initial) = det.pipe.initial() else {
            return Err((MifStatus::NotReady, "no full window pushed yet".into()));
        };
        let decs: Vec<_> = det.pipe.recent_decompositions().cloned().collect();
        let map = contribution(&decs, initial, (0, decs.len().saturating_sub(1))).map_err(core_err)?;
        *cell = localize(&map) as u32;
        Ok(())
    })
}

/// Releases a detector. NULL is ignored.
///
/// # Safety
/// `det` must be NULL or come from `mif_detector_new`, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn mif_detector_free(det: *mut MifDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Open-circuit voltage of one cell at `soc` (clamped to [0, 1]).
#[no_mangle]
pub extern "C" fn mif_ocv_of_soc(soc: f64) -> f64 {
    ocv_of_soc(soc)
}

/// Volumetric ISC heat (W/m³) at terminal voltage `v`; NaN for
/// non-positive resistance or radius.
#[no_mangle]
pub extern "C" fn mif_isc_power_density(v: f64, r_short: f64, r_equiv: f64) -> f64 {
    if !(r_short > 0.0 && r_equiv > 0.0) {
        return f64::NAN;
    }
    let fault = FaultSpec {
        fault_cell: 1,
        r_short,
        r_equiv,
        onset: 0.0,
    };
    isc_power_density(v, &fault)
}

/// Simulates the scenario config at `config_path` and writes the telemetry
/// CSV to `out_path`.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mif_simulate_to_csv(
    config_path: *const c_char,
    out_path: *const c_char,
) -> MifStatus {
    guard(|| {
        let config = str_arg(config_path, "config_path")?;
        let out = str_arg(out_path, "out_path")?;
        let cfg = load_scenario(Path::new(config)).map_err(core_err)?;
        let layout = PackLayout::benchmark(&cfg.cell).map_err(core_err)?;
        let run = simulate(&cfg.sim, &layout, &cfg.cell).map_err(core_err)?;
        save_telemetry(Path::new(out), &run.frames).map_err(core_err)
    })
}
