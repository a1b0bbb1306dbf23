//! Literature constants shipped as a config file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinwave::{HyperfineSplittings, Propagation, SpinwaveGeometry};
use crate::vapor::VaporPressureCoefficients;

/// Contents of `configs/cesium.toml`.
pub const CESIUM_TOML: &str = include_str!("../configs/cesium.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomData {
    pub name: String,
    pub atomic_mass_kg: f64,
    pub signal_wavelength_m: f64,
    pub control_wavelength_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConstants {
    pub atom: AtomData,
    pub vapor_pressure: VaporPressureCoefficients,
    pub hyperfine: HyperfineSplittings,
}

impl SpeciesConstants {
    pub fn from_toml(text: &str) -> Result<Self> {
        let constants: SpeciesConstants = toml::from_str(text).map_err(|e| Error::parse(0, e.to_string()))?;
        constants.vapor_pressure.validate()?;
        constants.hyperfine.validate()?;
        Ok(constants)
    }

    pub fn cesium() -> Self {
        Self::from_toml(CESIUM_TOML).expect("shipped cesium constants are valid")
    }

    pub fn counter_propagating_geometry(&self) -> SpinwaveGeometry {
        SpinwaveGeometry {
            signal_wavelength_m: self.atom.signal_wavelength_m,
            control_wavelength_m: self.atom.control_wavelength_m,
            propagation: Propagation::Counter,
        }
    }
}

#[cfg(test)]
pub(crate) fn cesium_vapor_pressure() -> VaporPressureCoefficients {
    SpeciesConstants::cesium().vapor_pressure
}
