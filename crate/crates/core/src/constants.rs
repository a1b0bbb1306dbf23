//! Physical constants (CODATA 2018 exact / recommended values) and
//! cesium reference data.

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of ¹³³Cs, kg.
pub const CESIUM_MASS: f64 = 132.905_451_933 * ATOMIC_MASS_UNIT;

/// Vacuum wavelength of the Cs D1 line (6S₁/₂ → 6P₁/₂), m.
pub const CS_D1_WAVELENGTH: f64 = 894.592_959_8e-9;

/// Vacuum wavelength of the Cs 6P₁/₂ → 6D₃/₂ transition, m.
pub const CS_6P12_6D32_WAVELENGTH: f64 = 876.381_5e-9;

/// Cs–Cs collisional decoherence time scale of the vapor cell, s.
/// Reference only; no model uses it.
pub const CS_COLLISION_DECOHERENCE_TIME: f64 = 150e-6;

pub const ZERO_CELSIUS: f64 = 273.15;

pub fn celsius_to_kelvin(celsius: f64) -> f64 {
    celsius + ZERO_CELSIUS
}
