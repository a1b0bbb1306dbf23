//! Figures of merit from signal / reference / noise traces.
//!
//! Counts are Poisson; ratios carry first-order propagated errors. When the
//! traces were integrated for different times, the other trace is rescaled
//! to the signal's integration time before any ratio is taken.

use serde::{Deserialize, Serialize};

use super::histogram::{Histogram, Role, TimeWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub read_in: TimeWindow,
    pub read_out: TimeWindow,
    /// Region of the signal trace with neither input nor retrieved light.
    pub noise: TimeWindow,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        self.read_in.validate()?;
        self.read_out.validate()?;
        self.noise.validate()?;
        if self.read_in.overlaps(&self.read_out) {
            return Err(Error::invalid("read_out", "read-in and read-out windows overlap"));
        }
        Ok(())
    }

    /// Windows spanning each peak down to `fraction` of its maximum.
    ///
    /// The read-in window comes from the reference trace, the read-out window
    /// from the largest signal peak after the read-in window, and the noise
    /// window covers the signal trace before the read-in window, with a guard
    /// gap of one read-in width.
    pub fn from_threshold(signal: &Histogram, reference: &Histogram, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid("fraction", "must lie in (0, 1)"));
        }
        let read_in = threshold_window(reference, 0, reference.len(), fraction)?;
        let after = ((read_in.hi_ns - signal.start_time_ns) / signal.bin_width_ns)
            .ceil()
            .max(0.0) as usize;
        let read_out = threshold_window(signal, after.min(signal.len()), signal.len(), fraction)?;
        let guard = read_in.width();
        let noise_hi = read_in.lo_ns - guard;
        if noise_hi <= signal.start_time_ns {
            return Err(Error::invalid(
                "noise",
                "no room for a noise window before the read-in peak",
            ));
        }
        let spec = WindowSpec {
            read_in,
            read_out,
            noise: TimeWindow::new(signal.start_time_ns, noise_hi)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn threshold_window(h: &Histogram, from: usize, to: usize, fraction: f64) -> Result<TimeWindow> {
    let (peak, &max) = h.counts[from..to]
        .iter()
        .enumerate()
        .max_by_key(|(i, &c)| (c, std::cmp::Reverse(*i)))
        .ok_or_else(|| Error::invalid("window", "empty search range"))?;
    if max == 0 {
        return Err(Error::invalid("window", "no counts to locate a peak"));
    }
    let peak = from + peak;
    let level = fraction * max as f64;
    let mut lo = peak;
    while lo > from && h.counts[lo - 1] as f64 >= level {
        lo -= 1;
    }
    let mut hi = peak + 1;
    while hi < to && h.counts[hi] as f64 >= level {
        hi += 1;
    }
    TimeWindow::new(h.bin_edge(lo), h.bin_edge(hi))
}

/// A ratio with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    fn checked_fraction(self, what: &str) -> Self {
        if !(0.0..=1.0).contains(&self.value) {
            log::warn!("{what} = {} lies outside [0, 1]", self.value);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    pub setup_transmission: f64,
    pub detector_efficiency: f64,
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("setup_transmission", self.setup_transmission),
            ("detector_efficiency", self.detector_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn detected_fraction(&self) -> f64 {
        self.setup_transmission * self.detector_efficiency
    }
}

fn expect_role(h: &Histogram, role: Role) {
    if h.role != role {
        log::warn!("expected a {} trace, got {}", role.as_str(), h.role.as_str());
    }
}

/// Ratio applied to counts of `other` to express them at `signal`'s integration time.
fn time_scale(signal: &Histogram, other: &Histogram) -> f64 {
    signal.meta.integration_time_s / other.meta.integration_time_s
}

// value and variance of a count estimate
#[derive(Debug, Clone, Copy)]
struct Estimate {
    value: f64,
    var: f64,
}

fn input_counts(signal: &Histogram, reference: &Histogram, w: &WindowSpec) -> Result<Estimate> {
    let raw = reference.integrate(&w.read_in)?.counts;
    let k = time_scale(signal, reference);
    Ok(Estimate {
        value: raw * k,
        var: raw * k * k,
    })
}

fn retrieved_counts(signal: &Histogram, w: &WindowSpec) -> Result<Estimate> {
    let s = signal.integrate(&w.read_out)?.counts;
    let noise = signal.integrate(&w.noise)?.counts;
    let k = w.read_out.width() / w.noise.width();
    Ok(Estimate {
        value: s - k * noise,
        var: s + k * k * noise,
    })
}

/// `η_int = N_ret / N_in`, noise-subtracted with the noise window of the signal trace.
pub fn internal_efficiency(signal: &Histogram, reference: &Histogram, w: &WindowSpec) -> Result<Measured> {
    w.validate()?;
    expect_role(signal, Role::Signal);
    expect_role(reference, Role::Reference);
    let n_in = input_counts(signal, reference, w)?;
    if n_in.value <= 0.0 {
        return Err(Error::UndefinedEfficiency(
            "no reference counts in the read-in window".into(),
        ));
    }
    let n_ret = retrieved_counts(signal, w)?;
    let eta = n_ret.value / n_in.value;
    let var = n_ret.var / (n_in.value * n_in.value) + eta * eta * n_in.var / (n_in.value * n_in.value);
    Ok(Measured {
        value: eta,
        err: var.sqrt(),
    }
    .checked_fraction("internal efficiency"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEfficiencies {
    pub eta_in: Measured,
    pub eta_out: Measured,
    pub eta_int: Measured,
}

/// Read-in `η_in = 1 − N_leak/N_in` and read-out `η_out = N_ret/(N_in − N_leak)`.
pub fn split_efficiencies(signal: &Histogram, reference: &Histogram, w: &WindowSpec) -> Result<SplitEfficiencies> {
    let eta_int = internal_efficiency(signal, reference, w)?;
    let n_in = input_counts(signal, reference, w)?;
    let leak = signal.integrate(&w.read_in)?.counts;
    let n_ret = retrieved_counts(signal, w)?;
    if leak > n_in.value {
        return Err(Error::InconsistentReference {
            leak,
            input: n_in.value,
        });
    }
    let stored = n_in.value - leak;
    if stored <= 0.0 {
        return Err(Error::UndefinedEfficiency(
            "all input counts leaked, read-out efficiency undefined".into(),
        ));
    }
    let n = n_in.value;
    let eta_in = 1.0 - leak / n;
    let eta_in_var = leak / (n * n) + (leak / (n * n)).powi(2) * n_in.var;
    let eta_out = n_ret.value / stored;
    let eta_out_var = n_ret.var / (stored * stored) + (n_ret.value / (stored * stored)).powi(2) * (n_in.var + leak);
    Ok(SplitEfficiencies {
        eta_in: Measured {
            value: eta_in,
            err: eta_in_var.sqrt(),
        }
        .checked_fraction("read-in efficiency"),
        eta_out: Measured {
            value: eta_out,
            err: eta_out_var.sqrt(),
        }
        .checked_fraction("read-out efficiency"),
        eta_int,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrOutcome {
    Value {
        snr: f64,
        err: f64,
    },
    /// No noise counts were observed; one noise count stands in for zero.
    LowerBound {
        bound: f64,
    },
}

impl SnrOutcome {
    pub fn value(&self) -> f64 {
        match *self {
            SnrOutcome::Value { snr, .. } => snr,
            SnrOutcome::LowerBound { bound } => bound,
        }
    }
}

fn snr_from(signal_counts: f64, noise: Estimate, noise_raw: f64, unit_scale: f64) -> SnrOutcome {
    if noise_raw <= 0.0 {
        return SnrOutcome::LowerBound {
            bound: signal_counts / unit_scale,
        };
    }
    let snr = signal_counts / noise.value;
    let var = signal_counts / (noise.value * noise.value) + snr * snr * noise.var / (noise.value * noise.value);
    SnrOutcome::Value { snr, err: var.sqrt() }
}

/// Read-out window counts of the signal trace over those of the noise trace.
pub fn snr(signal: &Histogram, noise: &Histogram, w: &WindowSpec) -> Result<SnrOutcome> {
    w.validate()?;
    expect_role(signal, Role::Signal);
    expect_role(noise, Role::Noise);
    let s = signal.integrate(&w.read_out)?.counts;
    let raw = noise.integrate(&w.read_out)?.counts;
    let k = time_scale(signal, noise);
    Ok(snr_from(
        s,
        Estimate {
            value: raw * k,
            var: raw * k * k,
        },
        raw,
        k,
    ))
}

/// Variant of [`snr`] that estimates the noise from the noise trace's noise
/// window, rescaled to the read-out width.
pub fn snr_noise_window(signal: &Histogram, noise: &Histogram, w: &WindowSpec) -> Result<SnrOutcome> {
    w.validate()?;
    let s = signal.integrate(&w.read_out)?.counts;
    let raw = noise.integrate(&w.noise)?.counts;
    let k = time_scale(signal, noise) * w.read_out.width() / w.noise.width();
    Ok(snr_from(
        s,
        Estimate {
            value: raw * k,
            var: raw * k * k,
        },
        raw,
        k,
    ))
}

/// `η_e2e = η_int · T`.
pub fn end_to_end(eta_int: Measured, chain: &DetectionChain) -> Result<Measured> {
    chain.validate()?;
    Ok(Measured {
        value: eta_int.value * chain.setup_transmission,
        err: eta_int.err * chain.setup_transmission,
    })
}

/// Everything `analyze` reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub windows: WindowSpec,
    pub input_counts: f64,
    pub leak_counts: f64,
    pub retrieved_counts: f64,
    pub eta_in: Measured,
    pub eta_out: Measured,
    pub eta_int: Measured,
    pub eta_e2e: Measured,
    pub snr: SnrOutcome,
    pub snr_noise_window: SnrOutcome,
    pub diagnostics: Vec<String>,
}

pub fn analyze(
    signal: &Histogram,
    reference: &Histogram,
    noise: &Histogram,
    w: &WindowSpec,
    chain: &DetectionChain,
) -> Result<AnalysisReport> {
    let split = split_efficiencies(signal, reference, w)?;
    let mut diagnostics = Vec::new();
    for (name, m) in [
        ("eta_in", split.eta_in),
        ("eta_out", split.eta_out),
        ("eta_int", split.eta_int),
    ] {
        if !(0.0..=1.0).contains(&m.value) {
            diagnostics.push(format!("{name} = {} outside [0, 1]", m.value));
        }
    }
    Ok(AnalysisReport {
        windows: *w,
        input_counts: input_counts(signal, reference, w)?.value,
        leak_counts: signal.integrate(&w.read_in)?.counts,
        retrieved_counts: retrieved_counts(signal, w)?.value,
        eta_in: split.eta_in,
        eta_out: split.eta_out,
        eta_int: split.eta_int,
        eta_e2e: end_to_end(split.eta_int, chain)?,
        snr: snr(signal, noise, w)?,
        snr_noise_window: snr_noise_window(signal, noise, w)?,
        diagnostics,
    })
}
