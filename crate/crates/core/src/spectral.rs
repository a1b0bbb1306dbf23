//! Spectral acceptance windows on a uniform two-photon-detuning grid.
//!
//! Convolution and deconvolution work on a lattice that contains zero
//! detuning at a node. With `z` that node's index and `h` the spacing,
//! `convolve(e, m)[i] = h * sum_j e[j] * m[i + z - j]`, so a single bin of
//! height `1/h` at zero detuning is the identity kernel. `deconvolve` is the
//! regularized inverse of exactly this map.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;
const GRID_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningGrid {
    pub start_mhz: f64,
    pub spacing_mhz: f64,
    pub len: usize,
}

impl DetuningGrid {
    pub fn new(start_mhz: f64, spacing_mhz: f64, len: usize) -> Result<Self> {
        let g = DetuningGrid {
            start_mhz,
            spacing_mhz,
            len,
        };
        g.validate()?;
        Ok(g)
    }

    /// `2 * half_points + 1` nodes centred on zero detuning.
    pub fn centered(half_points: usize, spacing_mhz: f64) -> Result<Self> {
        Self::new(-(half_points as f64) * spacing_mhz, spacing_mhz, 2 * half_points + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_mhz > 0.0 && self.spacing_mhz.is_finite()) {
            return Err(Error::invalid("spacing_mhz", "must be positive"));
        }
        if !self.start_mhz.is_finite() {
            return Err(Error::invalid("start_mhz", "must be finite"));
        }
        if self.len < 8 {
            return Err(Error::invalid("len", "a spectral curve needs at least 8 points"));
        }
        Ok(())
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start_mhz + i as f64 * self.spacing_mhz
    }

    pub fn end_mhz(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }

    /// Index of the zero-detuning node, if zero lies on the grid.
    pub fn zero_index(&self) -> Option<usize> {
        let k = -self.start_mhz / self.spacing_mhz;
        let r = k.round();
        if (k - r).abs() <= 1e-6 && r >= 0.0 && (r as usize) < self.len {
            Some(r as usize)
        } else {
            None
        }
    }

    pub fn matches(&self, other: &DetuningGrid) -> bool {
        let tol = GRID_RTOL * self.spacing_mhz.max(other.spacing_mhz);
        self.len == other.len
            && (self.spacing_mhz - other.spacing_mhz).abs() <= tol
            && (self.start_mhz - other.start_mhz).abs() <= tol * self.len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub grid: DetuningGrid,
    pub values: Vec<f64>,
    pub single_photon_detuning_mhz: Option<f64>,
}

impl SpectralCurve {
    pub fn new(grid: DetuningGrid, values: Vec<f64>) -> Result<Self> {
        let c = SpectralCurve {
            grid,
            values,
            single_photon_detuning_mhz: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_detuning(mut self, single_photon_detuning_mhz: f64) -> Self {
        self.single_photon_detuning_mhz = Some(single_photon_detuning_mhz);
        self
    }

    /// Builds a curve from explicit detunings, which must be uniformly spaced.
    pub fn from_points(detunings_mhz: &[f64], values: Vec<f64>) -> Result<Self> {
        if detunings_mhz.len() != values.len() {
            return Err(Error::invalid("values", "one value per detuning"));
        }
        if detunings_mhz.len() < 2 {
            return Err(Error::invalid("len", "a spectral curve needs at least 8 points"));
        }
        let n = detunings_mhz.len();
        let h = (detunings_mhz[n - 1] - detunings_mhz[0]) / (n - 1) as f64;
        for (i, x) in detunings_mhz.iter().enumerate() {
            let expected = detunings_mhz[0] + i as f64 * h;
            if (x - expected).abs() > GRID_RTOL * h.abs() * (i as f64).max(1.0) * 10.0 {
                return Err(Error::GridMismatch(format!(
                    "detuning grid is not uniform at row {i}: {x} vs {expected}"
                )));
            }
        }
        Self::new(DetuningGrid::new(detunings_mhz[0], h, n)?, values)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len {
            return Err(Error::invalid("values", "length must match the grid"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(())
    }

    /// Gaussian `peak * exp(-4 ln2 (x - center)^2 / fwhm^2)` sampled on `grid`.
    pub fn gaussian(grid: DetuningGrid, center_mhz: f64, fwhm_mhz: f64, peak: f64) -> Result<Self> {
        if !(fwhm_mhz > 0.0) {
            return Err(Error::invalid("fwhm_mhz", "must be positive"));
        }
        let k = 4.0 * std::f64::consts::LN_2 / (fwhm_mhz * fwhm_mhz);
        let values = grid
            .points()
            .into_iter()
            .map(|x| peak * (-k * (x - center_mhz).powi(2)).exp())
            .collect();
        Self::new(grid, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing_mhz)
    }

    /// First moment over the grid; `None` for zero total mass.
    pub fn centroid(&self) -> Option<f64> {
        let xs = self.grid.points();
        let w: Vec<f64> = self.values.iter().zip(&xs).map(|(v, x)| v * x).collect();
        let mass = self.integral();
        if mass == 0.0 || !mass.is_finite() {
            return None;
        }
        Some(trapezoid(&w, self.grid.spacing_mhz) / mass)
    }

    pub fn scaled(&self, factor: f64) -> SpectralCurve {
        SpectralCurve {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Monotone cubic (Fritsch–Carlson) resampling; zero outside the source range.
    pub fn resample(&self, grid: &DetuningGrid) -> Result<SpectralCurve> {
        grid.validate()?;
        let interp = MonotoneCubic::new(&self.grid, &self.values);
        let values = grid.points().into_iter().map(|x| interp.eval(x)).collect();
        Ok(SpectralCurve {
            grid: *grid,
            values,
            single_photon_detuning_mhz: self.single_photon_detuning_mhz,
        })
    }

    /// Returns `self` on `grid`, resampling (and logging) when the grids differ.
    pub fn on_grid(&self, grid: &DetuningGrid) -> Result<SpectralCurve> {
        if self.grid.matches(grid) {
            Ok(self.clone())
        } else {
            info!(
                "resampling spectral curve from [{}, {}] MHz step {} to [{}, {}] MHz step {}",
                self.grid.start_mhz,
                self.grid.end_mhz(),
                self.grid.spacing_mhz,
                grid.start_mhz,
                grid.end_mhz(),
                grid.spacing_mhz
            );
            self.resample(grid)
        }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut detuning = None;
        let mut header_seen = false;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if header_seen {
                    return Err(Error::parse(line_no, "metadata after the column header"));
                }
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(line_no, "expected `# key=value`"))?;
                match k.trim() {
                    "single_photon_detuning_mhz" => {
                        detuning = Some(
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::parse(line_no, format!("single_photon_detuning_mhz: {e}")))?,
                        )
                    }
                    other => return Err(Error::parse(line_no, format!("unknown key `{other}`"))),
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "delta_mhz,value" {
                    return Err(Error::parse(line_no, "expected column header `delta_mhz,value`"));
                }
                header_seen = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(line_no, "expected `delta_mhz,value`"))?;
            let x: f64 = a
                .trim()
                .parse()
                .map_err(|e| Error::parse(line_no, format!("delta_mhz: {e}")))?;
            let y: f64 = b
                .trim()
                .parse()
                .map_err(|e| Error::parse(line_no, format!("value: {e}")))?;
            xs.push(x);
            ys.push(y);
        }
        if !header_seen {
            return Err(Error::parse(1, "missing column header `delta_mhz,value`"));
        }
        let mut c = Self::from_points(&xs, ys)?;
        c.single_photon_detuning_mhz = detuning;
        Ok(c)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(d) = self.single_photon_detuning_mhz {
            let _ = writeln!(out, "# single_photon_detuning_mhz={d}");
        }
        out.push_str("delta_mhz,value\n");
        for (x, y) in self.grid.points().iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values.iter().sum();
    h * (inner - 0.5 * (values[0] + values[values.len() - 1]))
}

struct MonotoneCubic<'a> {
    grid: &'a DetuningGrid,
    y: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    fn new(grid: &'a DetuningGrid, y: &'a [f64]) -> Self {
        let n = y.len();
        let h = grid.spacing_mhz;
        let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 {
                0.0
            } else {
                0.5 * (d[i - 1] + d[i])
            };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / d[i];
            let b = m[i + 1] / d[i];
            let s = a * a + b * b;
            if !s.is_finite() {
                m[i] = 0.0;
                m[i + 1] = 0.0;
            } else if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[i] = t * a * d[i];
                m[i + 1] = t * b * d[i];
            }
        }
        MonotoneCubic { grid, y, slopes: m }
    }

    fn eval(&self, x: f64) -> f64 {
        let h = self.grid.spacing_mhz;
        let u = (x - self.grid.start_mhz) / h;
        let n = self.y.len();
        let tol = 1e-9;
        if u < -tol || u > (n - 1) as f64 + tol {
            return 0.0;
        }
        let u = u.clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

fn require_same_grid(a: &SpectralCurve, b: &SpectralCurve) -> Result<usize> {
    if !a.grid.matches(&b.grid) {
        return Err(Error::GridMismatch(format!(
            "grids differ: start {} step {} n {} vs start {} step {} n {}",
            a.grid.start_mhz, a.grid.spacing_mhz, a.grid.len, b.grid.start_mhz, b.grid.spacing_mhz, b.grid.len
        )));
    }
    a.grid
        .zero_index()
        .ok_or_else(|| Error::GridMismatch("zero detuning must lie on a grid node".into()))
}

fn fft_len(n: usize) -> usize {
    (2 * n - 1).next_power_of_two()
}

fn forward(values: &[f64], len: usize, offset: usize, scale: f64) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (i, v) in values.iter().enumerate() {
        if i + offset < len {
            buf[i + offset] = Complex64::new(v * scale, 0.0);
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf
}

fn inverse(mut spec: Vec<Complex64>) -> Vec<f64> {
    let len = spec.len();
    FftPlanner::new().plan_fft_inverse(len).process(&mut spec);
    spec.into_iter().map(|c| c.re / len as f64).collect()
}

/// Linear convolution scaled by the grid spacing, on the shared grid.
pub fn convolve(e: &SpectralCurve, m: &SpectralCurve) -> Result<SpectralCurve> {
    e.validate()?;
    m.validate()?;
    let z = require_same_grid(e, m)?;
    let n = e.len();
    let len = fft_len(n);
    let fe = forward(&e.values, len, 0, 1.0);
    let fm = forward(&m.values, len, 0, 1.0);
    let full = inverse(fe.iter().zip(&fm).map(|(a, b)| a * b).collect());
    let h = e.grid.spacing_mhz;
    let values = (0..n).map(|i| h * full[i + z]).collect();
    Ok(SpectralCurve {
        grid: e.grid,
        values,
        single_photon_detuning_mhz: e.single_photon_detuning_mhz.or(m.single_photon_detuning_mhz),
    })
}

/// Regularized spectral division recovering `m` from `d = convolve(e, m)`.
///
/// `epsilon` is relative to the peak spectral power of `e`.
pub fn deconvolve(d: &SpectralCurve, e: &SpectralCurve, epsilon: f64) -> Result<SpectralCurve> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    d.validate()?;
    e.validate()?;
    let z = require_same_grid(d, e)?;
    if e.values.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("e", "laser spectrum must have nonzero mass"));
    }
    let n = d.len();
    let len = fft_len(n);
    let h = d.grid.spacing_mhz;
    let fd = forward(&d.values, len, z, 1.0 / h);
    let fe = forward(&e.values, len, 0, 1.0);
    let peak = fe.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let reg = epsilon * peak;
    let spec = fd
        .iter()
        .zip(&fe)
        .map(|(a, b)| a * b.conj() / (b.norm_sqr() + reg))
        .collect();
    let full = inverse(spec);
    Ok(SpectralCurve {
        grid: d.grid,
        values: full[..n].to_vec(),
        single_photon_detuning_mhz: d.single_photon_detuning_mhz,
    })
}

/// Transform-limited FWHM (MHz) of a Gaussian pulse with temporal FWHM in ns.
pub fn fourier_limited_linewidth(pulse_fwhm_ns: f64) -> Result<f64> {
    if !(pulse_fwhm_ns > 0.0 && pulse_fwhm_ns.is_finite()) {
        return Err(Error::invalid("pulse_fwhm_ns", "must be positive"));
    }
    Ok(2.0 * std::f64::consts::LN_2 / std::f64::consts::PI / pulse_fwhm_ns * 1e3)
}

/// Overlap of the acceptance window `m` with the photon spectrum `s`.
///
/// `s` is shifted so its centroid sits on the centroid of `m` and then
/// normalized to unit area on the grid. Integer-bin shifts are exact,
/// fractional ones use monotone cubic interpolation.
pub fn expected_efficiency(m: &SpectralCurve, s: &SpectralCurve) -> Result<f64> {
    m.validate()?;
    s.validate()?;
    if !m.grid.matches(&s.grid) {
        return Err(Error::GridMismatch(
            "acceptance window and photon spectrum grids differ".into(),
        ));
    }
    if s.values.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("s", "photon spectrum must be non-negative"));
    }
    let mass = s.integral();
    if !(mass > 0.0) {
        return Err(Error::invalid("s", "photon spectrum must have positive area"));
    }
    let cs = s.centroid().expect("positive mass");
    let cm = m
        .centroid()
        .ok_or_else(|| Error::invalid("m", "acceptance window has zero mass"))?;
    let shift = (cm - cs) / s.grid.spacing_mhz;
    let n = s.len();
    let shifted: Vec<f64> = if (shift - shift.round()).abs() < 1e-9 {
        let k = shift.round() as i64;
        (0..n as i64)
            .map(|i| {
                let j = i - k;
                if j >= 0 && (j as usize) < n {
                    s.values[j as usize]
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        let interp = MonotoneCubic::new(&s.grid, &s.values);
        let dx = cm - cs;
        s.grid.points().into_iter().map(|x| interp.eval(x - dx)).collect()
    };
    let shifted_mass = trapezoid(&shifted, s.grid.spacing_mhz);
    if !(shifted_mass > 0.0) {
        return Err(Error::invalid(
            "s",
            "photon spectrum left the grid after centroid alignment",
        ));
    }
    let product: Vec<f64> = m
        .values
        .iter()
        .zip(&shifted)
        .map(|(a, b)| a * b / shifted_mass)
        .collect();
    Ok(trapezoid(&product, m.grid.spacing_mhz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(half: usize, h: f64) -> DetuningGrid {
        DetuningGrid::centered(half, h).unwrap()
    }

    fn sigma(fwhm: f64) -> f64 {
        fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    /// Second moment FWHM of a centred curve.
    fn rms_fwhm(c: &SpectralCurve) -> f64 {
        let xs = c.grid.points();
        let mass = c.integral();
        let mu = c.centroid().unwrap();
        let var: Vec<f64> = c.values.iter().zip(&xs).map(|(v, x)| v * (x - mu).powi(2)).collect();
        (trapezoid(&var, c.grid.spacing_mhz) / mass).sqrt() * (8.0 * std::f64::consts::LN_2).sqrt()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = grid(200, 10.0);
        let e = SpectralCurve::gaussian(g, 130.0, 440.0, 0.7).unwrap();
        let mut d = vec![0.0; g.len];
        d[g.zero_index().unwrap()] = 1.0 / g.spacing_mhz;
        let m = SpectralCurve::new(g, d).unwrap();
        let out = convolve(&e, &m).unwrap();
        for (a, b) in out.values.iter().zip(&e.values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gaussian_widths_add_in_quadrature() {
        let g = grid(800, 5.0);
        let e = SpectralCurve::gaussian(g, 0.0, 440.0, 1.0).unwrap();
        let m = SpectralCurve::gaussian(g, 0.0, 560.0, 1.0).unwrap();
        let d = convolve(&e, &m).unwrap();
        let want = (440.0f64.powi(2) + 560.0f64.powi(2)).sqrt();
        let got = rms_fwhm(&d);
        assert!((got / want - 1.0).abs() < 5e-3, "{got} vs {want}");
        // Closed-form peak: sqrt(2π) σe σm / sqrt(σe² + σm²).
        let (se, sm) = (sigma(440.0), sigma(560.0));
        let peak = (2.0 * std::f64::consts::PI).sqrt() * se * sm / (se * se + sm * sm).sqrt();
        assert!((d.max() / peak - 1.0).abs() < 1e-6);
    }

    #[test]
    fn convolution_commutes() {
        let g = grid(100, 7.0);
        let e = SpectralCurve::gaussian(g, 50.0, 200.0, 1.0).unwrap();
        let m = SpectralCurve::new(g, (0..g.len).map(|i| ((i * 37 % 11) as f64).sqrt()).collect()).unwrap();
        let a = convolve(&e, &m).unwrap();
        let b = convolve(&m, &e).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn convolve_rejects_mismatched_grids() {
        let e = SpectralCurve::gaussian(grid(50, 10.0), 0.0, 100.0, 1.0).unwrap();
        let m = SpectralCurve::gaussian(grid(50, 11.0), 0.0, 100.0, 1.0).unwrap();
        assert!(matches!(convolve(&e, &m), Err(Error::GridMismatch(_))));
        let off = DetuningGrid::new(-502.5, 10.0, 101).unwrap();
        let o = SpectralCurve::gaussian(off, 0.0, 100.0, 1.0).unwrap();
        assert!(matches!(convolve(&o, &o), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn self_deconvolution_is_a_delta() {
        let g = grid(200, 10.0);
        // Resolved at two grid spacings; broader spectra lose the band edge to epsilon.
        let e = SpectralCurve::gaussian(g, 0.0, 20.0, 1.0).unwrap();
        let m = deconvolve(&e, &e, 1e-6).unwrap();
        let z = g.zero_index().unwrap();
        let total: f64 = m.values.iter().map(|v| v.abs()).sum();
        assert!(m.values[z] / total > 0.95, "{}", m.values[z] / total);
    }

    fn smooth_m(g: DetuningGrid) -> SpectralCurve {
        let values = g
            .points()
            .into_iter()
            .map(|x| 0.15 * (-(x / 300.0).powi(2)).exp() + 0.05 * (-((x - 250.0) / 120.0).powi(2)).exp())
            .collect();
        SpectralCurve::new(g, values).unwrap()
    }

    fn rms(a: &SpectralCurve, b: &SpectralCurve) -> f64 {
        let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
        (s / a.len() as f64).sqrt()
    }

    #[test]
    fn deconvolution_round_trip_improves_as_epsilon_shrinks() {
        let g = grid(600, 5.0);
        let e = SpectralCurve::gaussian(g, 0.0, 440.0, 1.0).unwrap();
        let m = smooth_m(g);
        let d = convolve(&e, &m).unwrap();
        let scale = m.max();
        let err4 = rms(&deconvolve(&d, &e, 1e-4).unwrap(), &m) / scale;
        let err6 = rms(&deconvolve(&d, &e, 1e-6).unwrap(), &m) / scale;
        assert!(err6 < 0.01, "{err6}");
        assert!(err6 < err4, "{err6} !< {err4}");
    }

    #[test]
    fn deconvolve_rejects_bad_inputs() {
        let g = grid(50, 10.0);
        let e = SpectralCurve::gaussian(g, 0.0, 100.0, 1.0).unwrap();
        assert!(deconvolve(&e, &e, 0.0).is_err());
        assert!(deconvolve(&e, &e, -1.0).is_err());
        let zero = SpectralCurve::new(g, vec![0.0; g.len]).unwrap();
        assert!(deconvolve(&e, &zero, 1e-6).is_err());
    }

    #[test]
    fn fft_round_trip_preserves_energy() {
        let x: Vec<f64> = (0..257).map(|i| ((i as f64) * 0.37).sin() + 0.1 * i as f64).collect();
        let len = fft_len(x.len());
        let spec = forward(&x, len, 0, 1.0);
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let freq_energy: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / len as f64;
        assert!((time_energy / freq_energy - 1.0).abs() < 1e-10);
        let back = inverse(spec);
        let back_energy: f64 = back.iter().map(|v| v * v).sum();
        assert!((back_energy / time_energy - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fourier_limit_values() {
        assert!((fourier_limited_linewidth(1.0).unwrap() - 441.3).abs() < 0.1);
        assert!((fourier_limited_linewidth(2.0).unwrap() - 220.6).abs() < 0.1);
        assert!((fourier_limited_linewidth(0.8).unwrap() - 551.6).abs() < 0.1);
        assert!(fourier_limited_linewidth(0.0).is_err());
    }

    #[test]
    fn delta_spectrum_samples_window_peak() {
        let g = grid(200, 10.0);
        let m = SpectralCurve::gaussian(g, 0.0, 560.0, 0.15).unwrap();
        let mut s = vec![0.0; g.len];
        s[g.zero_index().unwrap() + 17] = 1.0 / g.spacing_mhz;
        let s = SpectralCurve::new(g, s).unwrap();
        let eta = expected_efficiency(&m, &s).unwrap();
        assert!((eta - 0.15).abs() < 1e-12, "{eta}");
    }

    #[test]
    fn flat_spectrum_gives_window_mean() {
        let g = grid(200, 10.0);
        let m = SpectralCurve::gaussian(g, 0.0, 560.0, 0.15).unwrap();
        let s = SpectralCurve::new(g, vec![1.0; g.len]).unwrap();
        let eta = expected_efficiency(&m, &s).unwrap();
        let mean = m.integral() / (g.end_mhz() - g.start_mhz);
        assert!((eta - mean).abs() < 1e-12);
        assert!(eta < m.max());
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        let g = grid(2000, 5.0);
        let m = SpectralCurve::gaussian(g, 0.0, 560.0, 0.15).unwrap();
        let ws = (440.0f64.powi(2) + 2000.0f64.powi(2)).sqrt();
        let s = SpectralCurve::gaussian(g, 300.0, ws, 2.0).unwrap();
        let (sm, ss) = (sigma(560.0), sigma(ws));
        let want = 0.15 * sm / (sm * sm + ss * ss).sqrt();
        let got = expected_efficiency(&m, &s).unwrap();
        assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn overlap_decreases_with_spectrum_width() {
        let g = grid(2000, 5.0);
        let m = SpectralCurve::gaussian(g, 0.0, 560.0, 0.15).unwrap();
        let mut last = f64::INFINITY;
        for w in [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0] {
            let s = SpectralCurve::gaussian(g, 0.0, w, 1.0).unwrap();
            let eta = expected_efficiency(&m, &s).unwrap();
            assert!(eta <= last + 1e-15, "{eta} after {last}");
            last = eta;
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = DetuningGrid::new(-40.0, 2.5, 33).unwrap();
        let c = SpectralCurve::gaussian(g, 1.0, 20.0, 0.3)
            .unwrap()
            .with_detuning(-500.0);
        let text = c.to_csv();
        assert!(text.starts_with("# single_photon_detuning_mhz=-500\ndelta_mhz,value\n-40,"));
        let back = SpectralCurve::from_csv(&text).unwrap();
        assert_eq!(back.single_photon_detuning_mhz, Some(-500.0));
        assert!(back.grid.matches(&c.grid));
        assert_eq!(back.values, c.values);
    }

    #[test]
    fn csv_errors() {
        assert!(SpectralCurve::from_csv("1,2\n").is_err());
        let mut bad = String::from("delta_mhz,value\n");
        for i in 0..10 {
            let x = if i == 5 { 5.3 } else { i as f64 };
            bad.push_str(&format!("{x},1\n"));
        }
        assert!(matches!(SpectralCurve::from_csv(&bad), Err(Error::GridMismatch(_))));
        let short = "delta_mhz,value\n0,1\n1,1\n2,1\n";
        assert!(SpectralCurve::from_csv(short).is_err());
        match SpectralCurve::from_csv("# colour=red\ndelta_mhz,value\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resample_is_exact_on_nodes_and_monotone() {
        let g = grid(50, 10.0);
        let c = SpectralCurve::gaussian(g, 0.0, 200.0, 1.0).unwrap();
        let same = c.resample(&g).unwrap();
        for (a, b) in same.values.iter().zip(&c.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let fine = c.resample(&DetuningGrid::centered(500, 1.0).unwrap()).unwrap();
        let z = fine.grid.zero_index().unwrap();
        for i in z..fine.len() - 1 {
            assert!(fine.values[i + 1] <= fine.values[i] + 1e-15);
        }
        assert!(fine.values.iter().all(|v| *v >= 0.0));
    }

    proptest! {
        #[test]
        fn overlap_never_exceeds_window_peak(
            peak in 0.01f64..1.0,
            wm in 50.0f64..800.0,
            ws in 5.0f64..3000.0,
            offset in -300.0f64..300.0,
            bumps in proptest::collection::vec(0.0f64..1.0, 4),
        ) {
            let g = DetuningGrid::centered(400, 10.0).unwrap();
            let m = SpectralCurve::gaussian(g, offset, wm, peak).unwrap();
            let mut s = SpectralCurve::gaussian(g, -offset, ws, 1.0).unwrap();
            for (k, b) in bumps.iter().enumerate() {
                let i = 50 + k * 150;
                s.values[i] += b / g.spacing_mhz;
            }
            let eta = expected_efficiency(&m, &s).unwrap();
            prop_assert!(eta <= m.max() * (1.0 + 1e-12));
            prop_assert!(eta >= 0.0);
        }
    }
}
