//! Synthetic storage traces.
//!
//! The reference trace holds one Gaussian input pulse at the read-in time.
//! The signal trace holds the unstored leak at read-in, the retrieved pulse
//! at `read_in_time + retrieval_time` and a flat noise floor. The noise trace
//! is the floor alone. Every bin is Poisson-sampled around its exact
//! expectation (the Gaussian integrated over the bin).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::analysis::{DetectionChain, WindowSpec};
use super::histogram::{integrate_values, Histogram, HistogramMeta, Role, TimeWindow};
use crate::error::{Error, Result};
use crate::spinwave::{HyperfineSplittings, SpinwaveModel, SpinwaveModelParams};

/// Where the retrieved fraction of the input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EfficiencySource {
    /// Beating model evaluated at the retrieval time.
    Model {
        params: SpinwaveModelParams,
        hyperfine: HyperfineSplittings,
    },
    Fixed {
        internal_efficiency: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSynthesis {
    pub efficiency: EfficiencySource,
    /// Stored fraction of the input; the rest leaks at read-in.
    pub read_in_efficiency: f64,
    pub pulse_fwhm_ns: f64,
    pub read_in_time_ns: f64,
    pub retrieval_time_ns: f64,
    pub mean_photons: f64,
    /// Noise floor, detector counts per second spread evenly over the period.
    pub noise_rate_hz: f64,
    pub chain: DetectionChain,
    pub integration_time_s: f64,
    pub repetition_rate_hz: f64,
    pub bin_width_ns: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTraces {
    pub signal: Histogram,
    pub reference: Histogram,
    pub noise: Histogram,
}

/// Expected (noise-free) counts per bin of each trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedTraces {
    pub bin_width_ns: f64,
    pub signal: Vec<f64>,
    pub reference: Vec<f64>,
    pub noise: Vec<f64>,
}

impl ExpectedTraces {
    pub fn integrate(&self, bins: &[f64], w: &TimeWindow) -> Result<f64> {
        integrate_values(0.0, self.bin_width_ns, bins.len(), |i| bins[i], w)
    }
}

impl TraceSynthesis {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        let positive = [
            ("pulse_fwhm_ns", self.pulse_fwhm_ns),
            ("integration_time_s", self.integration_time_s),
            ("repetition_rate_hz", self.repetition_rate_hz),
            ("bin_width_ns", self.bin_width_ns),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        let non_negative = [
            ("mean_photons", self.mean_photons),
            ("noise_rate_hz", self.noise_rate_hz),
            ("retrieval_time_ns", self.retrieval_time_ns),
            ("read_in_time_ns", self.read_in_time_ns),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.read_in_efficiency) {
            return Err(Error::invalid("read_in_efficiency", "must lie in [0, 1]"));
        }
        if self.read_out_time_ns() >= self.period_ns() {
            return Err(Error::invalid(
                "retrieval_time_ns",
                "retrieved pulse falls outside the repetition period",
            ));
        }
        let eta = self.internal_efficiency()?;
        if !(eta >= 0.0) {
            return Err(Error::invalid("efficiency", "must be non-negative"));
        }
        Ok(())
    }

    pub fn period_ns(&self) -> f64 {
        1e9 / self.repetition_rate_hz
    }

    pub fn read_out_time_ns(&self) -> f64 {
        self.read_in_time_ns + self.retrieval_time_ns
    }

    pub fn n_bins(&self) -> usize {
        (self.period_ns() / self.bin_width_ns).round() as usize
    }

    pub fn internal_efficiency(&self) -> Result<f64> {
        match self.efficiency {
            EfficiencySource::Model { params, hyperfine } => {
                Ok(SpinwaveModel::new(params, hyperfine)?.efficiency(self.retrieval_time_ns))
            }
            EfficiencySource::Fixed { internal_efficiency } => Ok(internal_efficiency),
        }
    }

    /// Detected input photons over the whole integration.
    pub fn input_counts(&self) -> f64 {
        self.mean_photons * self.chain.detected_fraction() * self.repetition_rate_hz * self.integration_time_s
    }

    pub fn noise_per_bin(&self) -> f64 {
        self.noise_rate_hz * self.integration_time_s * self.bin_width_ns * 1e-9 * self.repetition_rate_hz
    }

    pub fn expected(&self) -> Result<ExpectedTraces> {
        self.validate()?;
        let n = self.n_bins();
        let sigma = self.pulse_fwhm_ns / (8.0 * std::f64::consts::LN_2).sqrt();
        let pulse = |center: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let lo = i as f64 * self.bin_width_ns;
                    let hi = lo + self.bin_width_ns;
                    let cdf = |t: f64| 0.5 * (1.0 + erf((t - center) / (sigma * std::f64::consts::SQRT_2)));
                    cdf(hi) - cdf(lo)
                })
                .collect()
        };
        let n_in = self.input_counts();
        let eta = self.internal_efficiency()?;
        let leak = n_in * (1.0 - self.read_in_efficiency);
        let retrieved = n_in * eta;
        let floor = self.noise_per_bin();
        let input_shape = pulse(self.read_in_time_ns);
        let output_shape = pulse(self.read_out_time_ns());
        Ok(ExpectedTraces {
            bin_width_ns: self.bin_width_ns,
            reference: input_shape.iter().map(|g| n_in * g).collect(),
            signal: input_shape
                .iter()
                .zip(&output_shape)
                .map(|(gi, go)| leak * gi + retrieved * go + floor)
                .collect(),
            noise: vec![floor; n],
        })
    }

    /// Windows cut where each Gaussian pulse falls to `fraction` of its peak.
    ///
    /// Read-in and read-out share one width, so the captured pulse fraction
    /// cancels in the efficiency ratio. The noise window ends one window
    /// width before read-in.
    pub fn nominal_windows(&self, fraction: f64) -> Result<WindowSpec> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid("fraction", "must lie in (0, 1)"));
        }
        let half = 0.5 * self.pulse_fwhm_ns * ((1.0 / fraction).ln() / std::f64::consts::LN_2).sqrt();
        let read_in = TimeWindow::centered(self.read_in_time_ns, half)?;
        let read_out = TimeWindow::centered(self.read_out_time_ns(), half)?;
        let noise_hi = read_in.lo_ns - 2.0 * half;
        if noise_hi <= 0.0 {
            return Err(Error::invalid(
                "read_in_time_ns",
                "no room for a noise window before read-in",
            ));
        }
        let spec = WindowSpec {
            read_in,
            read_out,
            noise: TimeWindow::new(0.0, noise_hi)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Noise rate that makes the expected read-out SNR equal `target_snr`.
    pub fn noise_rate_for_snr(&self, read_out: &TimeWindow, target_snr: f64) -> Result<f64> {
        if !(target_snr > 0.0) {
            return Err(Error::invalid("target_snr", "must be positive"));
        }
        let quiet = TraceSynthesis {
            noise_rate_hz: 0.0,
            ..*self
        };
        let expected = quiet.expected()?;
        let signal = expected.integrate(&expected.signal, read_out)?;
        let per_rate = TraceSynthesis {
            noise_rate_hz: 1.0,
            ..*self
        }
        .noise_per_bin()
            * read_out.width()
            / self.bin_width_ns;
        // signal + noise over noise = target
        Ok(signal / (target_snr - 1.0).max(f64::MIN_POSITIVE) / per_rate)
    }

    pub fn synthesize(&self) -> Result<SyntheticTraces> {
        let expected = self.expected()?;
        let meta = HistogramMeta {
            integration_time_s: self.integration_time_s,
            repetition_rate_hz: self.repetition_rate_hz,
            mean_photon_number: Some(self.mean_photons),
        };
        let build = |means: &[f64], role: Role, stream: u64| -> Result<Histogram> {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(stream);
            let counts = means
                .iter()
                .map(|&lambda| {
                    if lambda <= 0.0 {
                        Ok(0)
                    } else {
                        let dist =
                            Poisson::new(lambda).map_err(|e| Error::Numerical(format!("poisson({lambda}): {e}")))?;
                        let k: f64 = dist.sample(&mut rng);
                        Ok(k as u64)
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            Histogram::new(self.bin_width_ns, 0.0, counts, role, meta)
        };
        Ok(SyntheticTraces {
            signal: build(&expected.signal, Role::Signal, 0)?,
            reference: build(&expected.reference, Role::Reference, 1)?,
            noise: build(&expected.noise, Role::Noise, 2)?,
        })
    }
}

/// Synthesizes signal, reference and noise histograms.
pub fn synthesize_trace(cfg: &TraceSynthesis) -> Result<SyntheticTraces> {
    cfg.synthesize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::analysis::{analyze, internal_efficiency, SnrOutcome};

    pub(crate) fn anchor_scenario() -> TraceSynthesis {
        TraceSynthesis {
            efficiency: EfficiencySource::Fixed {
                internal_efficiency: 0.15,
            },
            read_in_efficiency: 0.6,
            pulse_fwhm_ns: 0.8,
            read_in_time_ns: 20.0,
            retrieval_time_ns: 17.4,
            mean_photons: 0.06,
            noise_rate_hz: 20.0,
            chain: DetectionChain {
                setup_transmission: 0.147,
                detector_efficiency: 0.85,
            },
            integration_time_s: 10.0,
            repetition_rate_hz: 1e7,
            bin_width_ns: 0.1,
            seed: 42,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = anchor_scenario().synthesize().unwrap();
        let b = anchor_scenario().synthesize().unwrap();
        assert_eq!(a, b);
        let mut other = anchor_scenario();
        other.seed = 43;
        assert_ne!(a.signal, other.synthesize().unwrap().signal);
    }

    #[test]
    fn layout_covers_one_period() {
        let t = anchor_scenario().synthesize().unwrap();
        assert_eq!(t.signal.len(), 1000);
        assert_eq!(t.signal.end_time_ns(), 100.0);
        assert_eq!(t.reference.role, Role::Reference);
    }

    #[test]
    fn expected_reference_mass_is_input_counts() {
        let cfg = anchor_scenario();
        let e = cfg.expected().unwrap();
        let total: f64 = e.reference.iter().sum();
        assert!((total / cfg.input_counts() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_source_uses_efficiency_at_retrieval_time() {
        let hf = crate::species::SpeciesConstants::cesium().hyperfine;
        let params = SpinwaveModelParams::REFERENCE_FIT;
        let mut cfg = anchor_scenario();
        cfg.efficiency = EfficiencySource::Model { params, hyperfine: hf };
        let expected = crate::spinwave::efficiency_at(17.4, &params, &hf).unwrap();
        assert_eq!(cfg.internal_efficiency().unwrap(), expected);
    }

    #[test]
    fn lossless_limit_returns_all_reference_counts() {
        let mut cfg = anchor_scenario();
        cfg.noise_rate_hz = 0.0;
        cfg.read_in_efficiency = 1.0;
        cfg.efficiency = EfficiencySource::Fixed {
            internal_efficiency: 1.0,
        };
        let t = cfg.synthesize().unwrap();
        let w = WindowSpec {
            read_in: TimeWindow::centered(20.0, 3.0).unwrap(),
            read_out: TimeWindow::centered(37.4, 3.0).unwrap(),
            noise: TimeWindow::new(0.0, 10.0).unwrap(),
        };
        let n_in = t.reference.integrate(&w.read_in).unwrap().counts;
        let n_ret = t.signal.integrate(&w.read_out).unwrap().counts;
        assert!((n_ret - n_in).abs() < 3.0 * (2.0 * n_in).sqrt(), "{n_ret} vs {n_in}");
        let eta = internal_efficiency(&t.signal, &t.reference, &w).unwrap();
        assert!((eta.value - 1.0).abs() < 3.0 * eta.err);
    }

    #[test]
    fn closed_loop_recovers_targets() {
        let mut cfg = anchor_scenario();
        cfg.seed = 7;
        let w = cfg.nominal_windows(0.1).unwrap();
        cfg.noise_rate_hz = cfg.noise_rate_for_snr(&w.read_out, 830.0).unwrap();
        let t = cfg.synthesize().unwrap();
        let r = analyze(&t.signal, &t.reference, &t.noise, &w, &cfg.chain).unwrap();
        assert!((r.eta_int.value - 0.15).abs() < 3.0 * r.eta_int.err, "{:?}", r.eta_int);
        assert!((r.eta_in.value * r.eta_out.value - r.eta_int.value).abs() < 1e-12);
        match r.snr {
            SnrOutcome::Value { snr, err } => assert!((snr - 830.0).abs() < 3.0 * err, "{snr} ± {err}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expected_snr_matches_target() {
        let mut cfg = anchor_scenario();
        let w = cfg.nominal_windows(0.1).unwrap();
        cfg.noise_rate_hz = cfg.noise_rate_for_snr(&w.read_out, 830.0).unwrap();
        let e = cfg.expected().unwrap();
        let s = e.integrate(&e.signal, &w.read_out).unwrap();
        let n = e.integrate(&e.noise, &w.read_out).unwrap();
        assert!((s / n / 830.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_synthesis_rejected() {
        let mut cfg = anchor_scenario();
        cfg.retrieval_time_ns = 90.0;
        assert!(cfg.synthesize().is_err());
        let mut cfg = anchor_scenario();
        cfg.read_in_efficiency = 1.5;
        assert!(cfg.synthesize().is_err());
    }
}
