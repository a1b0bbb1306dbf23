//! C interface to `laddermem`.
//!
//! Every fallible function returns an [`LmStatus`] and writes results through
//! out-pointers. On failure, [`lm_last_error`] describes the most recent error
//! on the calling thread. Handles are opaque and must be released with their
//! matching `*_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access implied by their
//! type and length argument. Handles must come from this library and must not
//! be used after they are freed. Strings are NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use laddermem::benchmark::{self, AcceptanceWindow, SourceBenchmarkScenario};
use laddermem::mc::{self, McConfig, McPoint};
use laddermem::species::SpeciesConstants;
use laddermem::spectral::{self, DetuningGrid, SpectralCurve};
use laddermem::spinwave::{self, HyperfineSplittings, SpinwaveModel, SpinwaveModelParams};
use laddermem::trace::{self, DetectionChain, Histogram, SnrOutcome, TimeWindow, WindowSpec};
use laddermem::vapor::{self, VaporConditions};
use laddermem::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    GridMismatch = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LmStatus {
    match err {
        Error::Parse { .. } => LmStatus::Parse,
        Error::GridMismatch(_) => LmStatus::GridMismatch,
        Error::Numerical(_) => LmStatus::Numerical,
        Error::Io(_) => LmStatus::Io,
        _ => LmStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LmStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            LmStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            LmStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LmStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn input<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- scalars ----

/// One-dimensional RMS thermal velocity, m/s.
#[no_mangle]
pub unsafe extern "C" fn lm_thermal_velocity(temperature_k: f64, atomic_mass_kg: f64, out_m_s: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_m_s, "out_m_s")?;
        let cond = VaporConditions::new(temperature_k, atomic_mass_kg, 0.025, 0.025)?;
        *o = vapor::thermal_velocity(&cond);
        Ok(())
    })
}

/// Cesium number density in a standard cell, m^-3.
#[no_mangle]
pub unsafe extern "C" fn lm_cesium_number_density(temperature_k: f64, out_m3: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_m3, "out_m3")?;
        let species = SpeciesConstants::cesium();
        *o = vapor::number_density(&VaporConditions::cesium_cell(temperature_k)?, &species.vapor_pressure)?;
        Ok(())
    })
}

/// Spinwave wavelength of the cesium counter-propagating ladder, micrometres.
#[no_mangle]
pub unsafe extern "C" fn lm_cesium_spinwave_wavelength_um(out_um: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_um, "out_um")?;
        let geom = SpeciesConstants::cesium().counter_propagating_geometry();
        *o = spinwave::spinwave_wavelength(&geom)?
            .micrometers()
            .unwrap_or(f64::INFINITY);
        Ok(())
    })
}

/// Gaussian transform-limited linewidth, MHz.
#[no_mangle]
pub unsafe extern "C" fn lm_fourier_limited_linewidth(pulse_fwhm_ns: f64, out_mhz: *mut f64) -> LmStatus {
    guard(|| {
        *out(out_mhz, "out_mhz")? = spectral::fourier_limited_linewidth(pulse_fwhm_ns)?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmSpinwaveParams {
    pub eta0: f64,
    pub tau_s_ns: f64,
    pub tau_bar_ns: f64,
    pub t0_ns: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f23_mhz: f64,
    pub f34_mhz: f64,
    pub f45_mhz: f64,
}

/// Reference storage-time parameters with cesium hyperfine splittings.
#[no_mangle]
pub extern "C" fn lm_spinwave_reference_params() -> LmSpinwaveParams {
    let p = SpinwaveModelParams::REFERENCE_FIT;
    let hf = SpeciesConstants::cesium().hyperfine;
    LmSpinwaveParams {
        eta0: p.eta0,
        tau_s_ns: p.tau_s_ns,
        tau_bar_ns: p.tau_bar_ns,
        t0_ns: p.t0_ns,
        a: p.a,
        b: p.b,
        c: p.c,
        d: p.d,
        f23_mhz: hf.f23_mhz,
        f34_mhz: hf.f34_mhz,
        f45_mhz: hf.f45_mhz,
    }
}

fn model_of(p: &LmSpinwaveParams) -> laddermem::Result<SpinwaveModel> {
    SpinwaveModel::new(
        SpinwaveModelParams {
            eta0: p.eta0,
            tau_s_ns: p.tau_s_ns,
            tau_bar_ns: p.tau_bar_ns,
            t0_ns: p.t0_ns,
            a: p.a,
            b: p.b,
            c: p.c,
            d: p.d,
        },
        HyperfineSplittings {
            f23_mhz: p.f23_mhz,
            f34_mhz: p.f34_mhz,
            f45_mhz: p.f45_mhz,
        },
    )
}

/// Evaluates the storage efficiency at `n` times.
#[no_mangle]
pub unsafe extern "C" fn lm_spinwave_efficiency(
    params: *const LmSpinwaveParams,
    times_ns: *const f64,
    n: usize,
    out_eta: *mut f64,
) -> LmStatus {
    guard(|| {
        let model = model_of(input(params, "params")?)?;
        let ts = slice(times_ns, n, "times_ns")?;
        if n > 0 && out_eta.is_null() {
            return Err(Failure::Null("out_eta"));
        }
        for (i, &t) in ts.iter().enumerate() {
            *out_eta.add(i) = model.efficiency(t);
        }
        Ok(())
    })
}

/// 1/e time of the oscillation envelope, ns; NaN when never reached.
#[no_mangle]
pub unsafe extern "C" fn lm_spinwave_one_over_e_time(params: *const LmSpinwaveParams, out_ns: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_ns, "out_ns")?;
        let model = model_of(input(params, "params")?)?;
        *o = spinwave::one_over_e_time(model.params(), model.hyperfine())?
            .ns()
            .unwrap_or(f64::NAN);
        Ok(())
    })
}

// ---- histograms ----

/// Opaque time-binned count trace.
pub struct LmHistogram(Histogram);

/// Parses a histogram CSV document.
#[no_mangle]
pub unsafe extern "C" fn lm_histogram_from_csv(csv: *const c_char, out_handle: *mut *mut LmHistogram) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        *o = boxed(LmHistogram(Histogram::from_csv(text(csv, "csv")?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_histogram_len(h: *const LmHistogram) -> usize {
    h.as_ref().map_or(0, |h| h.0.len())
}

/// Sum of all bins.
#[no_mangle]
pub unsafe extern "C" fn lm_histogram_total(h: *const LmHistogram) -> u64 {
    h.as_ref().map_or(0, |h| h.0.total())
}

#[no_mangle]
pub unsafe extern "C" fn lm_histogram_free(h: *mut LmHistogram) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LmWindows {
    pub read_in_lo_ns: f64,
    pub read_in_hi_ns: f64,
    pub read_out_lo_ns: f64,
    pub read_out_hi_ns: f64,
    pub noise_lo_ns: f64,
    pub noise_hi_ns: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LmAnalysis {
    pub eta_in: f64,
    pub eta_in_err: f64,
    pub eta_out: f64,
    pub eta_out_err: f64,
    pub eta_int: f64,
    pub eta_int_err: f64,
    pub eta_e2e: f64,
    pub eta_e2e_err: f64,
    /// Lower bound when `snr_is_lower_bound` is nonzero; `snr_err` is then NaN.
    pub snr: f64,
    pub snr_err: f64,
    pub snr_is_lower_bound: u8,
}

/// Windows spanning each peak down to `fraction` of its maximum.
#[no_mangle]
pub unsafe extern "C" fn lm_windows_from_threshold(
    signal: *const LmHistogram,
    reference: *const LmHistogram,
    fraction: f64,
    out_windows: *mut LmWindows,
) -> LmStatus {
    guard(|| {
        let o = out(out_windows, "out_windows")?;
        let w = WindowSpec::from_threshold(&input(signal, "signal")?.0, &input(reference, "reference")?.0, fraction)?;
        *o = LmWindows {
            read_in_lo_ns: w.read_in.lo_ns,
            read_in_hi_ns: w.read_in.hi_ns,
            read_out_lo_ns: w.read_out.lo_ns,
            read_out_hi_ns: w.read_out.hi_ns,
            noise_lo_ns: w.noise.lo_ns,
            noise_hi_ns: w.noise.hi_ns,
        };
        Ok(())
    })
}

/// Efficiencies and SNR of a signal/reference/noise trio.
#[no_mangle]
pub unsafe extern "C" fn lm_analyze(
    signal: *const LmHistogram,
    reference: *const LmHistogram,
    noise: *const LmHistogram,
    windows: *const LmWindows,
    setup_transmission: f64,
    detector_efficiency: f64,
    out_analysis: *mut LmAnalysis,
) -> LmStatus {
    guard(|| {
        let o = out(out_analysis, "out_analysis")?;
        let w = input(windows, "windows")?;
        let spec = WindowSpec {
            read_in: TimeWindow::new(w.read_in_lo_ns, w.read_in_hi_ns)?,
            read_out: TimeWindow::new(w.read_out_lo_ns, w.read_out_hi_ns)?,
            noise: TimeWindow::new(w.noise_lo_ns, w.noise_hi_ns)?,
        };
        spec.validate()?;
        let chain = DetectionChain {
            setup_transmission,
            detector_efficiency,
        };
        let r = trace::analyze(
            &input(signal, "signal")?.0,
            &input(reference, "reference")?.0,
            &input(noise, "noise")?.0,
            &spec,
            &chain,
        )?;
        let (snr, snr_err, lower) = match r.snr {
            SnrOutcome::Value { snr, err } => (snr, err, 0),
            SnrOutcome::LowerBound { bound } => (bound, f64::NAN, 1),
        };
        *o = LmAnalysis {
            eta_in: r.eta_in.value,
            eta_in_err: r.eta_in.err,
            eta_out: r.eta_out.value,
            eta_out_err: r.eta_out.err,
            eta_int: r.eta_int.value,
            eta_int_err: r.eta_int.err,
            eta_e2e: r.eta_e2e.value,
            eta_e2e_err: r.eta_e2e.err,
            snr,
            snr_err,
            snr_is_lower_bound: lower,
        };
        Ok(())
    })
}

// ---- spectral curves ----

/// Opaque curve on a uniform detuning grid.
pub struct LmSpectralCurve(SpectralCurve);

/// Gaussian of the given FWHM and peak on `len` points starting at `start_mhz`.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_gaussian(
    start_mhz: f64,
    spacing_mhz: f64,
    len: usize,
    center_mhz: f64,
    fwhm_mhz: f64,
    peak: f64,
    out_handle: *mut *mut LmSpectralCurve,
) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        let grid = DetuningGrid::new(start_mhz, spacing_mhz, len)?;
        *o = boxed(LmSpectralCurve(SpectralCurve::gaussian(
            grid, center_mhz, fwhm_mhz, peak,
        )?));
        Ok(())
    })
}

/// Curve from `len` samples on a uniform grid.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_from_values(
    start_mhz: f64,
    spacing_mhz: f64,
    values: *const f64,
    len: usize,
    out_handle: *mut *mut LmSpectralCurve,
) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        let grid = DetuningGrid::new(start_mhz, spacing_mhz, len)?;
        let v = slice(values, len, "values")?.to_vec();
        *o = boxed(LmSpectralCurve(SpectralCurve::new(grid, v)?));
        Ok(())
    })
}

/// Parses a spectral CSV document.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_from_csv(csv: *const c_char, out_handle: *mut *mut LmSpectralCurve) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        *o = boxed(LmSpectralCurve(SpectralCurve::from_csv(text(csv, "csv")?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_spectral_len(c: *const LmSpectralCurve) -> usize {
    c.as_ref().map_or(0, |c| c.0.len())
}

/// Copies up to `capacity` samples into `buffer`; `out_written` receives the count.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_values(
    c: *const LmSpectralCurve,
    buffer: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> LmStatus {
    guard(|| {
        let c = input(c, "curve")?;
        let o = out(out_written, "out_written")?;
        let n = capacity.min(c.0.len());
        if n > 0 && buffer.is_null() {
            return Err(Failure::Null("buffer"));
        }
        ptr::copy_nonoverlapping(c.0.values.as_ptr(), buffer, n);
        *o = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_spectral_convolve(
    e: *const LmSpectralCurve,
    m: *const LmSpectralCurve,
    out_handle: *mut *mut LmSpectralCurve,
) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        *o = boxed(LmSpectralCurve(spectral::convolve(
            &input(e, "e")?.0,
            &input(m, "m")?.0,
        )?));
        Ok(())
    })
}

/// Regularized deconvolution of `d` by `e`.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_deconvolve(
    d: *const LmSpectralCurve,
    e: *const LmSpectralCurve,
    epsilon: f64,
    out_handle: *mut *mut LmSpectralCurve,
) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        *o = boxed(LmSpectralCurve(spectral::deconvolve(
            &input(d, "d")?.0,
            &input(e, "e")?.0,
            epsilon,
        )?));
        Ok(())
    })
}

/// Overlap of acceptance window `m` with photon spectrum `s`.
#[no_mangle]
pub unsafe extern "C" fn lm_expected_efficiency(
    m: *const LmSpectralCurve,
    s: *const LmSpectralCurve,
    out_eta: *mut f64,
) -> LmStatus {
    guard(|| {
        let o = out(out_eta, "out_eta")?;
        *o = spectral::expected_efficiency(&input(m, "m")?.0, &input(s, "s")?.0)?;
        Ok(())
    })
}

/// Gaussian fit of a curve; writes FWHM and centre.
#[no_mangle]
pub unsafe extern "C" fn lm_spectral_fit_gaussian(
    c: *const LmSpectralCurve,
    out_fwhm_mhz: *mut f64,
    out_center_mhz: *mut f64,
) -> LmStatus {
    guard(|| {
        let fwhm = out(out_fwhm_mhz, "out_fwhm_mhz")?;
        let center = out(out_center_mhz, "out_center_mhz")?;
        let fit = laddermem::fit::fit_gaussian(&input(c, "curve")?.0)?;
        *fwhm = fit.fwhm_mhz;
        *center = fit.center_mhz;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_spectral_free(c: *mut LmSpectralCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ---- Monte-Carlo dephasing ----

/// Opaque Monte-Carlo decay curve.
pub struct LmMcResult(Vec<McPoint>);

/// Single-component decay for the cesium counter-propagating ladder.
/// `workers` 0 uses the global thread pool; results do not depend on it.
#[no_mangle]
pub unsafe extern "C" fn lm_mc_simulate(
    n_atoms: usize,
    seed: u64,
    temperature_k: f64,
    times_ns: *const f64,
    n_times: usize,
    workers: usize,
    out_handle: *mut *mut LmMcResult,
) -> LmStatus {
    guard(|| {
        let o = out(out_handle, "out_handle")?;
        let cfg = McConfig {
            n_atoms,
            seed,
            vapor: VaporConditions::cesium_cell(temperature_k)?,
            geometry: SpeciesConstants::cesium().counter_propagating_geometry(),
            times_ns: slice(times_ns, n_times, "times_ns")?.to_vec(),
            storage_components: None,
        };
        let points = if workers == 0 {
            mc::simulate_decay(&cfg)?
        } else {
            mc::simulate_decay_with_workers(&cfg, workers)?
        };
        *o = boxed(LmMcResult(points));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_mc_len(r: *const LmMcResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn lm_mc_point(
    r: *const LmMcResult,
    index: usize,
    out_t_ns: *mut f64,
    out_efficiency: *mut f64,
    out_stderr: *mut f64,
) -> LmStatus {
    guard(|| {
        let r = input(r, "result")?;
        let p =
            r.0.get(index)
                .ok_or_else(|| Failure::Invalid(format!("index {index} out of range ({} points)", r.0.len())))?;
        *out(out_t_ns, "out_t_ns")? = p.t_ns;
        *out(out_efficiency, "out_efficiency")? = p.efficiency;
        *out(out_stderr, "out_stderr")? = p.stderr;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lm_mc_free(r: *mut LmMcResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

// ---- benchmark ----

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmBenchmark {
    pub eta_src: f64,
    pub eta_t: f64,
    pub eta_p: f64,
    pub eta_qd_mem: f64,
    pub gamma_hom_qd_mhz: f64,
    pub gamma_inhom_mhz: f64,
    pub repetition_rate_hz: f64,
    pub window_fwhm_mhz: f64,
    /// 1 treats the window as a normalized filter (upper bound).
    pub window_peak_efficiency: f64,
    pub setup_transmission: f64,
    pub detector_efficiency: f64,
    pub ref_mean_photons: f64,
    pub ref_eta_int: f64,
    pub ref_snr: f64,
}

/// Expected SNR against noise calibrated from a weak-coherent reference run.
#[no_mangle]
pub unsafe extern "C" fn lm_expected_snr(b: *const LmBenchmark, out_snr: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_snr, "out_snr")?;
        let b = input(b, "benchmark")?;
        let chain = DetectionChain {
            setup_transmission: b.setup_transmission,
            detector_efficiency: b.detector_efficiency,
        };
        let cal = benchmark::calibrate_noise(b.ref_mean_photons, b.ref_eta_int, &chain, b.ref_snr)?;
        let scn = SourceBenchmarkScenario {
            eta_src: b.eta_src,
            eta_t: b.eta_t,
            eta_p: b.eta_p,
            eta_qd_mem: b.eta_qd_mem,
            gamma_hom_qd_mhz: b.gamma_hom_qd_mhz,
            gamma_inhom_mhz: b.gamma_inhom_mhz,
            repetition_rate_hz: b.repetition_rate_hz,
        };
        let window = AcceptanceWindow::Gaussian {
            fwhm_mhz: b.window_fwhm_mhz,
            peak_efficiency: b.window_peak_efficiency,
        };
        window.validate()?;
        *o = benchmark::expected_snr(&scn, &window, &cal, &chain)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Numerical("x".into())), LmStatus::Numerical);
        assert_eq!(status_of(&Error::GridMismatch("x".into())), LmStatus::GridMismatch);
        assert_eq!(status_of(&Error::Domain("x".into())), LmStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), LmStatus::Panic);
        let msg = unsafe { CStr::from_ptr(lm_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
