//! Thermodynamic quantities of an alkali vapor cell.
//!
//! Velocities follow the one-dimensional RMS convention,
//! `v_th = sqrt(k_B T / m)`, which is the standard deviation of the
//! Maxwell–Boltzmann velocity distribution projected on the beam axis.
//! Every downstream quantity (dephasing times, Monte-Carlo sampling)
//! uses this definition.

use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaporConditions {
    pub temperature_k: f64,
    pub atomic_mass_kg: f64,
    pub cell_length_m: f64,
    pub cell_diameter_m: f64,
}

impl VaporConditions {
    pub fn new(temperature_k: f64, atomic_mass_kg: f64, cell_length_m: f64, cell_diameter_m: f64) -> Result<Self> {
        let cond = Self {
            temperature_k,
            atomic_mass_kg,
            cell_length_m,
            cell_diameter_m,
        };
        cond.validate()?;
        Ok(cond)
    }

    /// 25 mm × 25 mm cesium cell at the given temperature.
    pub fn cesium_cell(temperature_k: f64) -> Result<Self> {
        Self::new(temperature_k, crate::constants::CESIUM_MASS, 0.025, 0.025)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(Error::invalid("temperature_k", "must be positive and finite"));
        }
        if !(self.atomic_mass_kg > 0.0 && self.atomic_mass_kg.is_finite()) {
            return Err(Error::invalid("atomic_mass_kg", "must be positive and finite"));
        }
        if !(self.cell_length_m > 0.0) {
            return Err(Error::invalid("cell_length_m", "must be positive"));
        }
        if !(self.cell_diameter_m >= 0.0) {
            return Err(Error::invalid("cell_diameter_m", "must be non-negative"));
        }
        Ok(())
    }

    pub fn with_temperature(&self, temperature_k: f64) -> Result<Self> {
        let mut next = *self;
        next.temperature_k = temperature_k;
        next.validate()?;
        Ok(next)
    }
}

/// Saturated vapor-pressure correlation
///
/// `log10(P / Pa) = log10_offset_pa - inverse_temperature_k / T
///                  + log10_temperature_coefficient * log10(T)
///                  + linear_temperature_per_k * T`
///
/// The values are literature input and are read from the constants file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaporPressureCoefficients {
    pub log10_offset_pa: f64,
    pub inverse_temperature_k: f64,
    #[serde(default)]
    pub log10_temperature_coefficient: f64,
    #[serde(default)]
    pub linear_temperature_per_k: f64,
    pub min_temperature_k: f64,
    pub max_temperature_k: f64,
}

impl VaporPressureCoefficients {
    /// Checks that the correlation is finite and yields a strictly increasing
    /// number density across the whole validity range.
    pub fn validate(&self) -> Result<()> {
        if !(self.min_temperature_k > 0.0 && self.max_temperature_k > self.min_temperature_k) {
            return Err(Error::invalid(
                "min_temperature_k",
                "validity range must satisfy 0 < min < max",
            ));
        }
        const SAMPLES: usize = 256;
        let span = self.max_temperature_k - self.min_temperature_k;
        for i in 0..=SAMPLES {
            let t = self.min_temperature_k + span * i as f64 / SAMPLES as f64;
            let log_p = self.log10_pressure(t);
            if !log_p.is_finite() {
                return Err(Error::invalid(
                    "log10_offset_pa",
                    format!("correlation not finite at {t} K"),
                ));
            }
            // d ln(n)/dT = ln(10) d log10(P)/dT - 1/T
            let dlog10_p = self.inverse_temperature_k / (t * t)
                + self.log10_temperature_coefficient / (t * std::f64::consts::LN_10)
                + self.linear_temperature_per_k;
            if std::f64::consts::LN_10 * dlog10_p - 1.0 / t <= 0.0 {
                return Err(Error::invalid(
                    "inverse_temperature_k",
                    format!("number density not increasing at {t} K"),
                ));
            }
        }
        Ok(())
    }

    fn log10_pressure(&self, temperature_k: f64) -> f64 {
        self.log10_offset_pa - self.inverse_temperature_k / temperature_k
            + self.log10_temperature_coefficient * temperature_k.log10()
            + self.linear_temperature_per_k * temperature_k
    }

    /// Saturated vapor pressure in Pa.
    pub fn pressure_pa(&self, temperature_k: f64) -> Result<f64> {
        if !(self.min_temperature_k..=self.max_temperature_k).contains(&temperature_k) {
            return Err(Error::TemperatureOutOfRange {
                temperature_k,
                min_k: self.min_temperature_k,
                max_k: self.max_temperature_k,
            });
        }
        Ok(10f64.powf(self.log10_pressure(temperature_k)))
    }
}

/// One-dimensional RMS thermal velocity in m/s.
pub fn thermal_velocity(cond: &VaporConditions) -> f64 {
    (BOLTZMANN * cond.temperature_k / cond.atomic_mass_kg).sqrt()
}

/// Atomic number density in m⁻³ from the ideal-gas law.
pub fn number_density(cond: &VaporConditions, coeffs: &VaporPressureCoefficients) -> Result<f64> {
    let pressure = coeffs.pressure_pa(cond.temperature_k)?;
    Ok(pressure / (BOLTZMANN * cond.temperature_k))
}

/// Gaussian Doppler FWHM in MHz for a transition at `wavelength_m`.
pub fn doppler_fwhm(wavelength_m: f64, cond: &VaporConditions) -> Result<f64> {
    if !(wavelength_m > 0.0 && wavelength_m.is_finite()) {
        return Err(Error::invalid("wavelength_m", "must be positive and finite"));
    }
    let spread = (8.0 * std::f64::consts::LN_2 * BOLTZMANN * cond.temperature_k / cond.atomic_mass_kg).sqrt();
    Ok(spread / wavelength_m * 1e-6)
}
