//! Expected SNR for single-photon sources fed into the memory.
//!
//! Noise is calibrated once from a weak-coherent measurement as counts per
//! pulse in the retrieval window and then held fixed. The source photon
//! spectrum is a Gaussian whose FWHM adds the homogeneous and inhomogeneous
//! linewidths in quadrature, centred on the acceptance window.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{expected_efficiency, DetuningGrid, SpectralCurve};
use crate::trace::DetectionChain;

/// Column label for every SNR emitted here.
pub const SNR_LABEL: &str = "snr_upper_bound";
pub const PHOTON_SPECTRUM_MODEL: &str = "gaussian, fwhm = sqrt(gamma_hom^2 + gamma_inhom^2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBenchmarkScenario {
    pub eta_src: f64,
    pub eta_t: f64,
    pub eta_p: f64,
    pub eta_qd_mem: f64,
    pub gamma_hom_qd_mhz: f64,
    pub gamma_inhom_mhz: f64,
    pub repetition_rate_hz: f64,
}

impl SourceBenchmarkScenario {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_src", self.eta_src),
            ("eta_t", self.eta_t),
            ("eta_p", self.eta_p),
            ("eta_qd_mem", self.eta_qd_mem),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("gamma_hom_qd_mhz", self.gamma_hom_qd_mhz),
            ("gamma_inhom_mhz", self.gamma_inhom_mhz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::invalid("repetition_rate_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn photon_fwhm_mhz(&self) -> f64 {
        self.gamma_hom_qd_mhz.hypot(self.gamma_inhom_mhz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub noise_counts_per_pulse: f64,
    pub mean_photons: f64,
    pub eta_int_ref: f64,
    pub snr_ref: f64,
    pub chain: DetectionChain,
}

fn detected_per_pulse(source_factors: f64, eta_spectral: f64, chain: &DetectionChain) -> f64 {
    source_factors * eta_spectral * chain.setup_transmission * chain.detector_efficiency
}

/// Noise counts per pulse implied by a weak-coherent SNR measurement.
pub fn calibrate_noise(
    mean_photons: f64,
    eta_int_ref: f64,
    chain: &DetectionChain,
    snr_ref: f64,
) -> Result<NoiseCalibration> {
    chain.validate()?;
    if !(snr_ref > 0.0) {
        return Err(Error::invalid("snr_ref", "must be positive"));
    }
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(Error::invalid("mean_photons", "must be non-negative"));
    }
    if !(eta_int_ref >= 0.0 && eta_int_ref.is_finite()) {
        return Err(Error::invalid("eta_int_ref", "must be non-negative"));
    }
    Ok(NoiseCalibration {
        noise_counts_per_pulse: detected_per_pulse(mean_photons, eta_int_ref, chain) / snr_ref,
        mean_photons,
        eta_int_ref,
        snr_ref,
        chain: *chain,
    })
}

/// Memory acceptance window over two-photon detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcceptanceWindow {
    /// `peak_efficiency` 1 treats the window as a normalized spectral filter.
    Gaussian {
        fwhm_mhz: f64,
        peak_efficiency: f64,
    },
    Curve {
        curve: SpectralCurve,
    },
}

impl AcceptanceWindow {
    pub fn gaussian(fwhm_mhz: f64) -> Self {
        AcceptanceWindow::Gaussian {
            fwhm_mhz,
            peak_efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AcceptanceWindow::Gaussian {
                fwhm_mhz,
                peak_efficiency,
            } => {
                if !(*fwhm_mhz > 0.0 && fwhm_mhz.is_finite()) {
                    return Err(Error::invalid("fwhm_mhz", "must be positive"));
                }
                if !(*peak_efficiency >= 0.0 && peak_efficiency.is_finite()) {
                    return Err(Error::invalid("peak_efficiency", "must be non-negative"));
                }
                Ok(())
            }
            AcceptanceWindow::Curve { curve } => {
                curve.validate()?;
                if curve.values.iter().any(|v| *v < 0.0) {
                    return Err(Error::invalid("window", "acceptance curve must be non-negative"));
                }
                Ok(())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AcceptanceWindow::Gaussian {
                fwhm_mhz,
                peak_efficiency,
            } => format!("gaussian fwhm_mhz={fwhm_mhz} peak_efficiency={peak_efficiency}"),
            AcceptanceWindow::Curve { curve } => format!(
                "curve n={} start_mhz={} spacing_mhz={}",
                curve.len(),
                curve.grid.start_mhz,
                curve.grid.spacing_mhz
            ),
        }
    }

    /// Overlap with a centred Gaussian photon spectrum of the given FWHM.
    pub fn spectral_efficiency(&self, photon_fwhm_mhz: f64) -> Result<f64> {
        self.validate()?;
        if !(photon_fwhm_mhz >= 0.0 && photon_fwhm_mhz.is_finite()) {
            return Err(Error::invalid("photon_fwhm_mhz", "must be non-negative"));
        }
        match self {
            AcceptanceWindow::Gaussian {
                fwhm_mhz,
                peak_efficiency,
            } => {
                // Spectra much narrower than the window act as a delta.
                if photon_fwhm_mhz <= 1e-4 * fwhm_mhz {
                    return Ok(*peak_efficiency);
                }
                let spacing = fwhm_mhz.min(photon_fwhm_mhz) / 16.0;
                let half_span = 5.0 * fwhm_mhz.max(photon_fwhm_mhz);
                let half_points = (half_span / spacing).ceil() as usize;
                let grid = DetuningGrid::centered(half_points, spacing)?;
                let m = SpectralCurve::gaussian(grid, 0.0, *fwhm_mhz, *peak_efficiency)?;
                let s = SpectralCurve::gaussian(grid, 0.0, photon_fwhm_mhz, 1.0)?;
                expected_efficiency(&m, &s)
            }
            AcceptanceWindow::Curve { curve } => {
                let spacing = curve.grid.spacing_mhz;
                if photon_fwhm_mhz <= 1e-3 * spacing {
                    let c = curve
                        .centroid()
                        .ok_or_else(|| Error::invalid("window", "acceptance curve has zero area"))?;
                    let probe = DetuningGrid::new(c - 4.0 * spacing, spacing, 9)?;
                    return Ok(curve.resample(&probe)?.values[4]);
                }
                let s = SpectralCurve::gaussian(curve.grid, 0.0, photon_fwhm_mhz, 1.0)?;
                expected_efficiency(curve, &s)
            }
        }
    }
}

/// Signal over calibrated noise; an upper bound given the window convention.
pub fn expected_snr(
    scn: &SourceBenchmarkScenario,
    window: &AcceptanceWindow,
    cal: &NoiseCalibration,
    chain: &DetectionChain,
) -> Result<f64> {
    scn.validate()?;
    let eta_spectral = window.spectral_efficiency(scn.photon_fwhm_mhz())?;
    snr_from_spectral(scn, eta_spectral, cal, chain)
}

fn snr_from_spectral(
    scn: &SourceBenchmarkScenario,
    eta_spectral: f64,
    cal: &NoiseCalibration,
    chain: &DetectionChain,
) -> Result<f64> {
    chain.validate()?;
    if !(cal.noise_counts_per_pulse > 0.0) {
        return Err(Error::invalid("noise_counts_per_pulse", "must be positive"));
    }
    let source = scn.eta_src * scn.eta_t * scn.eta_p * scn.eta_qd_mem;
    Ok(detected_per_pulse(source, eta_spectral, chain) / cal.noise_counts_per_pulse)
}

/// Rows follow `eta_src`, columns follow `gamma_inhom_mhz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid {
    pub eta_src: Vec<f64>,
    pub gamma_inhom_mhz: Vec<f64>,
    pub snr: Vec<Vec<f64>>,
}

pub fn snr_grid(
    eta_src: &[f64],
    gamma_inhom_mhz: &[f64],
    scn: &SourceBenchmarkScenario,
    window: &AcceptanceWindow,
    cal: &NoiseCalibration,
    chain: &DetectionChain,
) -> Result<SnrGrid> {
    if eta_src.is_empty() || gamma_inhom_mhz.is_empty() {
        return Err(Error::invalid("grid", "ranges must be non-empty"));
    }
    window.validate()?;
    // Per-column snr at eta_src = 1; each row scales it.
    let unit: Vec<f64> = gamma_inhom_mhz
        .par_iter()
        .map(|&g| {
            let s = SourceBenchmarkScenario {
                eta_src: 1.0,
                gamma_inhom_mhz: g,
                ..*scn
            };
            s.validate()?;
            let eta_spectral = window.spectral_efficiency(s.photon_fwhm_mhz())?;
            snr_from_spectral(&s, eta_spectral, cal, chain)
        })
        .collect::<Result<_>>()?;
    let snr = eta_src
        .iter()
        .map(|&e| {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid("eta_src", "must lie in [0, 1]"));
            }
            Ok(unit.iter().map(|u| e * u).collect())
        })
        .collect::<Result<_>>()?;
    Ok(SnrGrid {
        eta_src: eta_src.to_vec(),
        gamma_inhom_mhz: gamma_inhom_mhz.to_vec(),
        snr,
    })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl SnrGrid {
    pub fn to_csv(&self, scn: &SourceBenchmarkScenario, window: &AcceptanceWindow, cal: &NoiseCalibration) -> String {
        let mut out = String::new();
        let meta = [
            ("quantity", SNR_LABEL.to_string()),
            ("photon_spectrum", PHOTON_SPECTRUM_MODEL.to_string()),
            ("window", window.describe()),
            ("eta_t", scn.eta_t.to_string()),
            ("eta_p", scn.eta_p.to_string()),
            ("eta_qd_mem", scn.eta_qd_mem.to_string()),
            ("gamma_hom_qd_mhz", scn.gamma_hom_qd_mhz.to_string()),
            ("repetition_rate_hz", scn.repetition_rate_hz.to_string()),
            ("noise_counts_per_pulse", cal.noise_counts_per_pulse.to_string()),
            ("calibration_mean_photons", cal.mean_photons.to_string()),
            ("calibration_eta_int", cal.eta_int_ref.to_string()),
            ("calibration_snr", cal.snr_ref.to_string()),
            ("setup_transmission", cal.chain.setup_transmission.to_string()),
            ("detector_efficiency", cal.chain.detector_efficiency.to_string()),
        ];
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("eta_src\\gamma_inhom_mhz");
        for g in &self.gamma_inhom_mhz {
            let _ = write!(out, ",{g}");
        }
        out.push('\n');
        for (e, row) in self.eta_src.iter().zip(&self.snr) {
            let _ = write!(out, "{e}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
