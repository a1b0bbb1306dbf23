//! Spinwave geometry, motional dephasing time, and the beating retrieval
//! efficiency model
//!
//! ```text
//! η(t) = η₀ · exp(−[(x − τ_s)(x + τ̄)/(τ_s τ̄) + 1])
//!        · |1 + A e^{−iω₂₃x} + B e^{−iω₃₄x} + C e^{−iω₄₅x} + D e^{−i(ω₂₃+ω₃₄)x}|² / (1 + A + B + C + D)²
//! ```
//!
//! with `x = t − t₀`. Times are in ns and hyperfine splittings are ordinary
//! frequencies in MHz; [`RAD_PER_MHZ_NS`] is the only place where the
//! angular factor enters.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase in radians accumulated by 1 MHz over 1 ns (2π · 10⁻³).
pub const RAD_PER_MHZ_NS: f64 = 2.0 * PI * 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propagation {
    Counter,
    Co,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinwaveGeometry {
    pub signal_wavelength_m: f64,
    pub control_wavelength_m: f64,
    pub propagation: Propagation,
}

impl SpinwaveGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("signal_wavelength_m", self.signal_wavelength_m),
            ("control_wavelength_m", self.control_wavelength_m),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// |Δk| in rad/m.
    pub fn wavevector_mismatch(&self) -> f64 {
        let ks = 2.0 * PI / self.signal_wavelength_m;
        let kc = 2.0 * PI / self.control_wavelength_m;
        match self.propagation {
            Propagation::Counter => (ks - kc).abs(),
            Propagation::Co => ks + kc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinwaveWavelength {
    Finite {
        micrometers: f64,
    },
    /// Equal counter-propagating wavevectors: no phase grating, no motional dephasing.
    DopplerFree,
}

impl SpinwaveWavelength {
    pub fn micrometers(&self) -> Option<f64> {
        match *self {
            SpinwaveWavelength::Finite { micrometers } => Some(micrometers),
            SpinwaveWavelength::DopplerFree => None,
        }
    }
}

pub fn spinwave_wavelength(geom: &SpinwaveGeometry) -> Result<SpinwaveWavelength> {
    geom.validate()?;
    let dk = geom.wavevector_mismatch();
    if dk == 0.0 {
        return Ok(SpinwaveWavelength::DopplerFree);
    }
    Ok(SpinwaveWavelength::Finite {
        micrometers: 2.0 * PI / dk * 1e6,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DephasingTime {
    Finite { ns: f64 },
    Infinite,
}

impl DephasingTime {
    pub fn ns(&self) -> Option<f64> {
        match *self {
            DephasingTime::Finite { ns } => Some(ns),
            DephasingTime::Infinite => None,
        }
    }
}

/// `T_inhom = λ_s / (√2 π v_th)`.
pub fn inhomogeneous_dephasing_time(lambda_spin_um: f64, thermal_velocity: f64) -> Result<DephasingTime> {
    if !lambda_spin_um.is_finite() || lambda_spin_um <= 0.0 {
        return Err(Error::Domain(format!(
            "spinwave wavelength must be finite and positive, got {lambda_spin_um} µm"
        )));
    }
    if thermal_velocity.is_nan() || thermal_velocity < 0.0 {
        return Err(Error::invalid("thermal_velocity", "must be non-negative"));
    }
    if thermal_velocity == 0.0 {
        return Ok(DephasingTime::Infinite);
    }
    let seconds = lambda_spin_um * 1e-6 / (2f64.sqrt() * PI * thermal_velocity);
    Ok(DephasingTime::Finite { ns: seconds * 1e9 })
}

/// Hyperfine splittings of the storage manifold, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineSplittings {
    pub f23_mhz: f64,
    pub f34_mhz: f64,
    pub f45_mhz: f64,
}

impl HyperfineSplittings {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("f23_mhz", self.f23_mhz),
            ("f34_mhz", self.f34_mhz),
            ("f45_mhz", self.f45_mhz),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative and finite"));
            }
        }
        Ok(())
    }

    /// Beat frequencies of the five interfering pathways, in the order
    /// (1, A, B, C, D).
    pub fn component_offsets_mhz(&self) -> [f64; 5] {
        [
            0.0,
            self.f23_mhz,
            self.f34_mhz,
            self.f45_mhz,
            self.f23_mhz + self.f34_mhz,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinwaveModelParams {
    pub eta0: f64,
    pub tau_s_ns: f64,
    pub tau_bar_ns: f64,
    pub t0_ns: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SpinwaveModelParams {
    /// Parameters of the published storage-time fit.
    pub const REFERENCE_FIT: SpinwaveModelParams = SpinwaveModelParams {
        eta0: 0.71,
        tau_s_ns: 24.4,
        tau_bar_ns: 24.4,
        t0_ns: -0.02,
        a: 1.14,
        b: 2.79,
        c: -0.12,
        d: 1.45,
    };

    /// Pure Gaussian decay `η₀ exp(−(t−t₀)²/τ²)`.
    pub fn gaussian(eta0: f64, tau_ns: f64, t0_ns: f64) -> Self {
        Self {
            eta0,
            tau_s_ns: tau_ns,
            tau_bar_ns: tau_ns,
            t0_ns,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        }
    }

    pub fn amplitudes(&self) -> [f64; 5] {
        [1.0, self.a, self.b, self.c, self.d]
    }

    pub fn amplitude_sum(&self) -> f64 {
        1.0 + self.a + self.b + self.c + self.d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s_ns > 0.0) {
            return Err(Error::invalid("tau_s_ns", "must be positive"));
        }
        if !(self.tau_bar_ns > 0.0) {
            return Err(Error::invalid("tau_bar_ns", "must be positive"));
        }
        let abs_sum: f64 = self.amplitudes().iter().map(|a| a.abs()).sum();
        let sum = self.amplitude_sum();
        if !sum.is_finite() || sum.abs() <= 1e-12 * abs_sum {
            return Err(Error::invalid("a", "1 + a + b + c + d must be finite and non-zero"));
        }
        if !self.eta0.is_finite() || !self.t0_ns.is_finite() {
            return Err(Error::invalid("eta0", "must be finite"));
        }
        Ok(())
    }

    /// Gaussian envelope prefactor at `t`.
    pub fn envelope(&self, t_ns: f64) -> f64 {
        let x = t_ns - self.t0_ns;
        let exponent = (x - self.tau_s_ns) * (x + self.tau_bar_ns) / (self.tau_s_ns * self.tau_bar_ns) + 1.0;
        self.eta0 * (-exponent).exp()
    }
}

/// Validated model: parameters plus the hyperfine splittings they beat at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinwaveModel {
    params: SpinwaveModelParams,
    hyperfine: HyperfineSplittings,
}

impl SpinwaveModel {
    pub fn new(params: SpinwaveModelParams, hyperfine: HyperfineSplittings) -> Result<Self> {
        params.validate()?;
        hyperfine.validate()?;
        Ok(Self { params, hyperfine })
    }

    pub fn params(&self) -> &SpinwaveModelParams {
        &self.params
    }

    pub fn hyperfine(&self) -> &HyperfineSplittings {
        &self.hyperfine
    }

    pub fn envelope(&self, t_ns: f64) -> f64 {
        self.params.envelope(t_ns)
    }

    /// Normalized interference term, equal to 1 at `t = t₀`.
    pub fn beating_factor(&self, t_ns: f64) -> f64 {
        beating_factor(&self.params, &self.hyperfine, t_ns)
    }

    pub fn efficiency(&self, t_ns: f64) -> f64 {
        self.envelope(t_ns) * self.beating_factor(t_ns)
    }

    /// Supremum of the beating factor over all relative phases,
    /// `(1 + |A| + |B| + |C| + |D|)² / (1 + A + B + C + D)²`.
    ///
    /// For rationally independent splittings the local maxima of the
    /// beating factor approach this value arbitrarily closely.
    pub fn beating_supremum(&self) -> f64 {
        let p = &self.params;
        let abs_sum = 1.0 + p.a.abs() + p.b.abs() + p.c.abs() + p.d.abs();
        (abs_sum / p.amplitude_sum()).powi(2)
    }

    /// Tight upper envelope of the oscillating efficiency.
    pub fn upper_envelope(&self, t_ns: f64) -> f64 {
        self.envelope(t_ns) * self.beating_supremum()
    }

    /// First time after `t₀` at which the upper envelope falls below
    /// `η(t₀)/e`, searched up to `t₀ + horizon_ns`.
    pub fn one_over_e_time(&self, horizon_ns: f64) -> OneOverETime {
        const SAMPLES: usize = 4096;
        let t0 = self.params.t0_ns;
        let threshold = self.efficiency(t0) / std::f64::consts::E;
        let step = horizon_ns / SAMPLES as f64;
        let mut lo = t0;
        for i in 1..=SAMPLES {
            let t = t0 + step * i as f64;
            if self.upper_envelope(t) < threshold {
                let mut hi = t;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.upper_envelope(mid) < threshold {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return OneOverETime::Reached { ns: 0.5 * (lo + hi) };
            }
            lo = t;
        }
        OneOverETime::NotReached
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OneOverETime {
    Reached { ns: f64 },
    NotReached,
}

impl OneOverETime {
    pub fn ns(&self) -> Option<f64> {
        match *self {
            OneOverETime::Reached { ns } => Some(ns),
            OneOverETime::NotReached => None,
        }
    }
}

/// Default search horizon: fifty envelope widths past `t₀`.
pub fn default_horizon_ns(params: &SpinwaveModelParams) -> f64 {
    50.0 * params.tau_s_ns.max(params.tau_bar_ns)
}

pub fn beating_factor(p: &SpinwaveModelParams, hf: &HyperfineSplittings, t_ns: f64) -> f64 {
    let x = t_ns - p.t0_ns;
    let norm = p.amplitude_sum();
    let phase = |f_mhz: f64| Complex64::from_polar(1.0, -RAD_PER_MHZ_NS * f_mhz * x);
    let sum = Complex64::new(1.0, 0.0)
        + p.a * phase(hf.f23_mhz)
        + p.b * phase(hf.f34_mhz)
        + p.c * phase(hf.f45_mhz)
        + p.d * phase(hf.f23_mhz + hf.f34_mhz);
    (sum.re / norm).powi(2) + (sum.im / norm).powi(2)
}

pub fn efficiency_at(t_ns: f64, p: &SpinwaveModelParams, hf: &HyperfineSplittings) -> Result<f64> {
    Ok(SpinwaveModel::new(*p, *hf)?.efficiency(t_ns))
}

pub fn envelope_at(t_ns: f64, p: &SpinwaveModelParams) -> f64 {
    p.envelope(t_ns)
}

pub fn one_over_e_time(p: &SpinwaveModelParams, hf: &HyperfineSplittings) -> Result<OneOverETime> {
    Ok(SpinwaveModel::new(*p, *hf)?.one_over_e_time(default_horizon_ns(p)))
}
