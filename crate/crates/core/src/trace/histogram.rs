use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Signal,
    Reference,
    Noise,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Signal => "signal",
            Role::Reference => "reference",
            Role::Noise => "noise",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "signal" => Ok(Role::Signal),
            "reference" => Ok(Role::Reference),
            "noise" => Ok(Role::Noise),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub integration_time_s: f64,
    pub repetition_rate_hz: f64,
    pub mean_photon_number: Option<f64>,
}

/// Half-open time interval `[lo_ns, hi_ns)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub lo_ns: f64,
    pub hi_ns: f64,
}

impl TimeWindow {
    pub fn new(lo_ns: f64, hi_ns: f64) -> Result<Self> {
        let w = Self { lo_ns, hi_ns };
        w.validate()?;
        Ok(w)
    }

    pub fn centered(center_ns: f64, half_width_ns: f64) -> Result<Self> {
        Self::new(center_ns - half_width_ns, center_ns + half_width_ns)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_ns.is_finite() && self.hi_ns.is_finite() && self.lo_ns < self.hi_ns) {
            return Err(Error::invalid(
                "window",
                format!("need lo < hi, got [{}, {}]", self.lo_ns, self.hi_ns),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.hi_ns - self.lo_ns
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.lo_ns < other.hi_ns && other.lo_ns < self.hi_ns
    }
}

/// Time-binned photon counts folded over one repetition period.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width_ns: f64,
    pub start_time_ns: f64,
    pub counts: Vec<u64>,
    pub role: Role,
    pub meta: HistogramMeta,
}

/// Integrated counts in a window with their Poisson error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowCounts {
    pub counts: f64,
    pub poisson_err: f64,
}

impl Histogram {
    pub fn new(
        bin_width_ns: f64,
        start_time_ns: f64,
        counts: Vec<u64>,
        role: Role,
        meta: HistogramMeta,
    ) -> Result<Self> {
        let h = Self {
            bin_width_ns,
            start_time_ns,
            counts,
            role,
            meta,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ns > 0.0 && self.bin_width_ns.is_finite()) {
            return Err(Error::invalid("bin_width_ns", "must be positive"));
        }
        if !self.start_time_ns.is_finite() {
            return Err(Error::invalid("start_time_ns", "must be finite"));
        }
        if !(self.meta.integration_time_s > 0.0) {
            return Err(Error::invalid("integration_time_s", "must be positive"));
        }
        if !(self.meta.repetition_rate_hz > 0.0) {
            return Err(Error::invalid("repetition_rate_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end_time_ns(&self) -> f64 {
        self.bin_edge(self.counts.len())
    }

    pub fn bin_edge(&self, i: usize) -> f64 {
        self.start_time_ns + i as f64 * self.bin_width_ns
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.start_time_ns + (i as f64 + 0.5) * self.bin_width_ns
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fractionally weighted sum of the bins overlapping `w`.
    pub fn integrate(&self, w: &TimeWindow) -> Result<WindowCounts> {
        let counts = integrate_values(
            self.start_time_ns,
            self.bin_width_ns,
            self.counts.len(),
            |i| self.counts[i] as f64,
            w,
        )?;
        Ok(WindowCounts {
            counts,
            poisson_err: counts.sqrt(),
        })
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut bin_width = None;
        let mut start = None;
        let mut role = None;
        let mut integration = None;
        let mut repetition = None;
        let mut mean_photons = None;
        let mut counts = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                if !counts.is_empty() {
                    return Err(Error::parse(line_no, "header line after count data"));
                }
                let (key, value) = header
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::parse(line_no, "header must be `# key=value`"))?;
                let value = value.trim();
                let number = || {
                    value
                        .parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("`{key}` is not a number: `{value}`")))
                };
                match key.trim() {
                    "bin_width_ns" => bin_width = Some(number()?),
                    "start_time_ns" => start = Some(number()?),
                    "role" => role = Some(value.parse::<Role>().map_err(|e| Error::parse(line_no, e))?),
                    "integration_time_s" => integration = Some(number()?),
                    "repetition_rate_hz" => repetition = Some(number()?),
                    "mean_photon_number" => mean_photons = Some(number()?),
                    other => return Err(Error::parse(line_no, format!("unknown header key `{other}`"))),
                }
                continue;
            }
            let count = line
                .parse::<u64>()
                .map_err(|_| Error::parse(line_no, format!("count is not a non-negative integer: `{line}`")))?;
            counts.push(count);
        }

        let missing = |key: &str| Error::parse(0, format!("missing header `{key}`"));
        Histogram::new(
            bin_width.ok_or_else(|| missing("bin_width_ns"))?,
            start.ok_or_else(|| missing("start_time_ns"))?,
            counts,
            role.ok_or_else(|| missing("role"))?,
            HistogramMeta {
                integration_time_s: integration.ok_or_else(|| missing("integration_time_s"))?,
                repetition_rate_hz: repetition.ok_or_else(|| missing("repetition_rate_hz"))?,
                mean_photon_number: mean_photons,
            },
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.counts.len() * 4 + 160);
        let _ = writeln!(out, "# bin_width_ns={}", self.bin_width_ns);
        let _ = writeln!(out, "# start_time_ns={}", self.start_time_ns);
        let _ = writeln!(out, "# role={}", self.role.as_str());
        let _ = writeln!(out, "# integration_time_s={}", self.meta.integration_time_s);
        let _ = writeln!(out, "# repetition_rate_hz={}", self.meta.repetition_rate_hz);
        if let Some(mu) = self.meta.mean_photon_number {
            let _ = writeln!(out, "# mean_photon_number={mu}");
        }
        for c in &self.counts {
            let _ = writeln!(out, "{c}");
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv())?)
    }
}

/// Sums `value(i)` weighted by the fraction of bin `i` covered by `w`.
pub(crate) fn integrate_values(
    start_ns: f64,
    bin_width_ns: f64,
    n_bins: usize,
    value: impl Fn(usize) -> f64,
    w: &TimeWindow,
) -> Result<f64> {
    w.validate()?;
    let end_ns = start_ns + n_bins as f64 * bin_width_ns;
    let slack = 1e-9 * bin_width_ns;
    if n_bins == 0 || w.lo_ns < start_ns - slack || w.hi_ns > end_ns + slack {
        return Err(Error::WindowOutside {
            lo: w.lo_ns,
            hi: w.hi_ns,
            start: start_ns,
            end: end_ns,
        });
    }
    let first = (((w.lo_ns - start_ns) / bin_width_ns).floor().max(0.0)) as usize;
    let last = (((w.hi_ns - start_ns) / bin_width_ns).ceil() as usize).min(n_bins);
    let mut sum = 0.0;
    for i in first..last {
        let lo = start_ns + i as f64 * bin_width_ns;
        let hi = start_ns + (i + 1) as f64 * bin_width_ns;
        let overlap = (hi.min(w.hi_ns) - lo.max(w.lo_ns)).max(0.0);
        if overlap <= 0.0 {
            continue;
        }
        let fraction = (overlap / bin_width_ns).min(1.0);
        // exact integer weight for fully covered bins
        let weight = if fraction > 1.0 - 1e-12 { 1.0 } else { fraction };
        sum += weight * value(i);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> HistogramMeta {
        HistogramMeta {
            integration_time_s: 10.0,
            repetition_rate_hz: 1e7,
            mean_photon_number: Some(0.06),
        }
    }

    fn hist(counts: Vec<u64>, bin: f64) -> Histogram {
        Histogram::new(bin, 0.0, counts, Role::Signal, meta()).unwrap()
    }

    #[test]
    fn all_zero_histogram_integrates_to_zero() {
        let h = hist(vec![0; 100], 0.1);
        let w = h.integrate(&TimeWindow::new(1.0, 5.0).unwrap()).unwrap();
        assert_eq!(w.counts, 0.0);
        assert_eq!(w.poisson_err, 0.0);
    }

    #[test]
    fn aligned_window_sums_bins() {
        let counts: Vec<u64> = (0..50).map(|i| (i * 7 % 13) as u64).collect();
        let h = hist(counts.clone(), 1.0);
        let w = h.integrate(&TimeWindow::new(10.0, 20.0).unwrap()).unwrap();
        let expected: u64 = counts[10..20].iter().sum();
        assert_eq!(w.counts, expected as f64);
        assert_eq!(w.poisson_err, (expected as f64).sqrt());
    }

    #[test]
    fn partial_bins_match_finer_rebinned_oracle() {
        // every coarse count is a multiple of ten, spread evenly over ten fine bins
        let coarse: Vec<u64> = (0..40).map(|i| 10 * ((i * 31 % 17) as u64)).collect();
        let fine: Vec<u64> = coarse.iter().flat_map(|&c| std::iter::repeat_n(c / 10, 10)).collect();
        let hc = hist(coarse, 1.0);
        let hf = hist(fine, 0.1);
        for (lo, hi) in [(3.3, 17.6), (0.0, 39.9), (12.1, 12.7), (5.0, 5.4)] {
            let w = TimeWindow::new(lo, hi).unwrap();
            let a = hc.integrate(&w).unwrap().counts;
            let b = hf.integrate(&w).unwrap().counts;
            assert!((a - b).abs() < 1e-9, "[{lo}, {hi}]: {a} vs {b}");
        }
    }

    #[test]
    fn additive_over_disjoint_windows() {
        let counts: Vec<u64> = (0..100).map(|i| (i * i % 29) as u64).collect();
        let h = hist(counts, 0.25);
        let whole = h.integrate(&TimeWindow::new(2.13, 19.77).unwrap()).unwrap().counts;
        let left = h.integrate(&TimeWindow::new(2.13, 8.61).unwrap()).unwrap().counts;
        let right = h.integrate(&TimeWindow::new(8.61, 19.77).unwrap()).unwrap().counts;
        assert!((whole - left - right).abs() < 1e-9);
    }

    #[test]
    fn window_outside_support_rejected() {
        let h = hist(vec![1; 10], 1.0);
        assert!(matches!(
            h.integrate(&TimeWindow::new(20.0, 30.0).unwrap()),
            Err(Error::WindowOutside { .. })
        ));
        assert!(h.integrate(&TimeWindow::new(-1.0, 3.0).unwrap()).is_err());
        assert!(TimeWindow::new(3.0, 3.0).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_everything() {
        let h = hist(vec![0, 5, 17, 3], 0.1);
        let text = h.to_csv();
        assert_eq!(Histogram::from_csv(&text).unwrap(), h);
    }

    #[test]
    fn csv_golden_layout() {
        let mut h = hist(vec![3, 0, 12], 0.1);
        h.role = Role::Noise;
        h.meta.mean_photon_number = None;
        assert_eq!(
            h.to_csv(),
            "# bin_width_ns=0.1\n# start_time_ns=0\n# role=noise\n# integration_time_s=10\n# repetition_rate_hz=10000000\n3\n0\n12\n"
        );
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "# bin_width_ns=0.1\n# start_time_ns=0\n# role=signal\n# integration_time_s=10\n# repetition_rate_hz=1e7\n4\n-2\n";
        match Histogram::from_csv(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let unknown = "# bin_width=0.1\n";
        assert!(matches!(
            Histogram::from_csv(unknown),
            Err(Error::Parse { line: 1, .. })
        ));
        let missing = "# bin_width_ns=0.1\n1\n";
        assert!(Histogram::from_csv(missing).is_err());
    }
}
