//! Monte-Carlo motional dephasing.
//!
//! Each atom gets a velocity along the beam axis drawn from the
//! Maxwell–Boltzmann distribution and picks up the spinwave phase
//! `Δk·v·t`. The retrieved efficiency is the squared modulus of the
//! ensemble-averaged phasor, optionally summed over several storage
//! components that beat at their hyperfine offsets.
//!
//! Atoms are split into fixed-size chunks. Chunk `i` draws from the ChaCha8
//! stream `i` of the configured seed, and chunk sums are reduced in chunk
//! order, so results do not depend on the number of worker threads.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinwave::{SpinwaveGeometry, SpinwaveModel, RAD_PER_MHZ_NS};
use crate::vapor::{thermal_velocity, VaporConditions};

/// Name of the generator behind every seeded Monte-Carlo run.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3), one stream per chunk";

/// Atoms per independent random stream.
pub const CHUNK_ATOMS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageComponent {
    pub amplitude: f64,
    pub splitting_offset_mhz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_atoms: usize,
    pub seed: u64,
    pub vapor: VaporConditions,
    pub geometry: SpinwaveGeometry,
    pub times_ns: Vec<f64>,
    /// `None` is a single component of unit amplitude.
    pub storage_components: Option<Vec<StorageComponent>>,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        self.vapor.validate()?;
        self.geometry.validate()?;
        if self.times_ns.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("times_ns", "must be finite and non-negative"));
        }
        if self.times_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times_ns", "must be strictly increasing"));
        }
        if let Some(components) = &self.storage_components {
            if components.is_empty() {
                return Err(Error::invalid("storage_components", "must not be empty"));
            }
            let total: f64 = components.iter().map(|c| c.amplitude).sum();
            if total == 0.0 || !total.is_finite() {
                return Err(Error::invalid(
                    "storage_components",
                    "amplitudes must have a finite non-zero sum",
                ));
            }
        }
        Ok(())
    }

    fn components(&self) -> Vec<StorageComponent> {
        self.storage_components.clone().unwrap_or_else(|| {
            vec![StorageComponent {
                amplitude: 1.0,
                splitting_offset_mhz: 0.0,
            }]
        })
    }
}

/// Components (1, A, B, C, D) at the offsets of the beating model.
pub fn components_from_model(model: &SpinwaveModel) -> Vec<StorageComponent> {
    model
        .params()
        .amplitudes()
        .into_iter()
        .zip(model.hyperfine().component_offsets_mhz())
        .map(|(amplitude, splitting_offset_mhz)| StorageComponent {
            amplitude,
            splitting_offset_mhz,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub t_ns: f64,
    pub efficiency: f64,
    pub stderr: f64,
}

// Per-time sums of Re z, Im z, Re² z, Im² z, Re z·Im z.
type Moments = [f64; 5];

pub fn simulate_decay(cfg: &McConfig) -> Result<Vec<McPoint>> {
    cfg.validate()?;
    if cfg.times_ns.is_empty() {
        return Ok(Vec::new());
    }
    let n_chunks = cfg.n_atoms.div_ceil(CHUNK_ATOMS);
    let chunk_sums: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| simulate_chunk(cfg, chunk))
        .collect();

    let n_times = cfg.times_ns.len();
    let mut totals = vec![[0.0; 5]; n_times];
    for sums in &chunk_sums {
        for (total, part) in totals.iter_mut().zip(sums) {
            for k in 0..5 {
                total[k] += part[k];
            }
        }
    }

    let n = cfg.n_atoms as f64;
    Ok(cfg
        .times_ns
        .iter()
        .zip(&totals)
        .map(|(&t_ns, m)| {
            let mean_re = m[0] / n;
            let mean_im = m[1] / n;
            let var_re = (m[2] / n - mean_re * mean_re).max(0.0);
            let var_im = (m[3] / n - mean_im * mean_im).max(0.0);
            let cov = m[4] / n - mean_re * mean_im;
            // delta method for |mean|²
            let var =
                4.0 * (mean_re * mean_re * var_re + mean_im * mean_im * var_im + 2.0 * mean_re * mean_im * cov) / n;
            McPoint {
                t_ns,
                efficiency: mean_re * mean_re + mean_im * mean_im,
                stderr: var.max(0.0).sqrt(),
            }
        })
        .collect())
}

/// Runs [`simulate_decay`] on a dedicated pool of `workers` threads.
pub fn simulate_decay_with_workers(cfg: &McConfig, workers: usize) -> Result<Vec<McPoint>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| simulate_decay(cfg))
}

fn simulate_chunk(cfg: &McConfig, chunk: usize) -> Vec<Moments> {
    let start = chunk * CHUNK_ATOMS;
    let count = CHUNK_ATOMS.min(cfg.n_atoms - start);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chunk as u64);

    let v_th = thermal_velocity(&cfg.vapor);
    let dk = cfg.geometry.wavevector_mismatch();
    let components = cfg.components();
    let norm: f64 = components.iter().map(|c| c.amplitude).sum();

    let mut sums = vec![[0.0; 5]; cfg.times_ns.len()];
    for _ in 0..count {
        let z: f64 = StandardNormal.sample(&mut rng);
        let velocity = v_th * z;
        // rad per ns
        let doppler_rate = dk * velocity * 1e-9;
        for (slot, &t) in sums.iter_mut().zip(&cfg.times_ns) {
            let phasor: Complex64 = components
                .iter()
                .map(|c| {
                    let phase = (doppler_rate + RAD_PER_MHZ_NS * c.splitting_offset_mhz) * t;
                    c.amplitude * Complex64::from_polar(1.0, phase)
                })
                .sum::<Complex64>()
                / norm;
            slot[0] += phasor.re;
            slot[1] += phasor.im;
            slot[2] += phasor.re * phasor.re;
            slot[3] += phasor.im * phasor.im;
            slot[4] += phasor.re * phasor.im;
        }
    }
    sums
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub t_ns: f64,
    pub monte_carlo: f64,
    pub model: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub max_abs_deviation: f64,
    pub rms_deviation: f64,
    pub points: Vec<ComparisonPoint>,
}

/// Pointwise comparison of two normalized curves on the same time grid.
pub fn compare_curves(mc: &[McPoint], model: &[(f64, f64)]) -> Result<ModelComparison> {
    if mc.len() != model.len() {
        return Err(Error::GridMismatch(format!(
            "{} Monte-Carlo points vs {} model points",
            mc.len(),
            model.len()
        )));
    }
    if mc.is_empty() {
        return Err(Error::GridMismatch("empty curves".into()));
    }
    let mut points = Vec::with_capacity(mc.len());
    for (p, &(t, value)) in mc.iter().zip(model) {
        if (p.t_ns - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("time {} ns vs {} ns", p.t_ns, t)));
        }
        points.push(ComparisonPoint {
            t_ns: t,
            monte_carlo: p.efficiency,
            model: value,
            deviation: p.efficiency - value,
        });
    }
    let max_abs_deviation = points.iter().map(|p| p.deviation.abs()).fold(0.0, f64::max);
    let rms_deviation = (points.iter().map(|p| p.deviation * p.deviation).sum::<f64>() / points.len() as f64).sqrt();
    Ok(ModelComparison {
        max_abs_deviation,
        rms_deviation,
        points,
    })
}

/// Decay time `1 / (|Δk| v_th)` of a single component, ns.
pub fn doppler_decay_time_ns(vapor: &VaporConditions, geometry: &SpinwaveGeometry) -> Option<f64> {
    let rate = geometry.wavevector_mismatch() * thermal_velocity(vapor);
    (rate > 0.0).then(|| 1e9 / rate)
}

/// `exp(-(Δk v_th t)²)` on the configured time grid.
pub fn analytic_single_component(cfg: &McConfig) -> Vec<(f64, f64)> {
    let rate = cfg.geometry.wavevector_mismatch() * thermal_velocity(&cfg.vapor) * 1e-9;
    cfg.times_ns.iter().map(|&t| (t, (-(rate * t).powi(2)).exp())).collect()
}

/// Compares a Monte-Carlo curve with the beating model normalized to its
/// value at `t₀`.
pub fn compare_to_model(mc: &[McPoint], model: &SpinwaveModel) -> Result<ModelComparison> {
    let peak = model.efficiency(model.params().t0_ns);
    if peak == 0.0 {
        return Err(Error::Domain("model efficiency vanishes at t0".into()));
    }
    let curve: Vec<(f64, f64)> = mc.iter().map(|p| (p.t_ns, model.efficiency(p.t_ns) / peak)).collect();
    compare_curves(mc, &curve)
}
