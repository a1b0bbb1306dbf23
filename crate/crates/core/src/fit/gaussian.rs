//! Gaussian plus constant offset.

use serde::{Deserialize, Serialize};

use super::lm::{self, Bounds, LmOptions, Termination};
use super::standard_errors;
use crate::error::{Error, Result};
use crate::spectral::SpectralCurve;

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Order: center, fwhm, amplitude, offset.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<Option<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl GaussianFit {
    pub fn fwhm_error(&self) -> Option<f64> {
        self.standard_errors[1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        gaussian(&[self.center_mhz, self.fwhm_mhz, self.amplitude, self.offset], x)
    }
}

fn gaussian(p: &[f64], x: f64) -> f64 {
    p[2] * (-FOUR_LN2 * (x - p[0]).powi(2) / (p[1] * p[1])).exp() + p[3]
}

/// Fits a spectral curve with unit weights; covariance scaled by reduced χ².
pub fn fit_gaussian(curve: &SpectralCurve) -> Result<GaussianFit> {
    curve.validate()?;
    fit_gaussian_points(&curve.grid.points(), &curve.values, None)
}

/// Weighted Gaussian fit. Without `sigma` the covariance is scaled by the
/// reduced χ² of the unit-weight fit.
pub fn fit_gaussian_points(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<GaussianFit> {
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
        return Err(Error::invalid("data", "x, y and sigma must have equal length"));
    }
    if x.len() < 5 {
        return Err(Error::invalid("data", "a Gaussian fit needs at least 5 points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data", "must be finite"));
    }
    if let Some(s) = sigma {
        if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
    }
    let weights: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; x.len()],
    };

    let (mut lo, mut hi, mut imax) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (i, v) in y.iter().enumerate() {
        lo = lo.min(*v);
        if *v > hi {
            hi = *v;
            imax = i;
        }
    }
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let step = span / (x.len() - 1) as f64;
    let half = lo + 0.5 * (hi - lo);
    let above = y.iter().filter(|v| **v >= half).count();
    let fwhm0 = if hi > lo {
        (above as f64 * step).max(step)
    } else {
        span / 4.0
    };
    let start = [x[imax], fwhm0, hi - lo, lo];
    let level = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let scales = [step, step, level, level];
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, 1e-9 * step, f64::NEG_INFINITY, f64::NEG_INFINITY],
        upper: vec![f64::INFINITY; 4],
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .zip(&weights)
            .map(|((xi, yi), w)| (yi - gaussian(p, *xi)) * w)
            .collect()
    };
    let out = lm::minimize(residual, &start, &bounds, &scales, &LmOptions::default())?;
    let mut covariance = lm::covariance(&out.jacobian);
    if sigma.is_none() {
        let dof = (x.len() - 4).max(1) as f64;
        let s2 = out.objective / dof;
        for row in covariance.iter_mut() {
            for v in row.iter_mut() {
                if v.is_finite() {
                    *v *= s2;
                }
            }
        }
    }
    Ok(GaussianFit {
        center_mhz: out.params[0],
        fwhm_mhz: out.params[1],
        amplitude: out.params[2],
        offset: out.params[3],
        standard_errors: standard_errors(&covariance),
        covariance,
        residual_norm: out.objective.sqrt(),
        iterations: out.iterations,
        converged: out.termination.converged(),
        termination: out.termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DetuningGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid() -> DetuningGrid {
        DetuningGrid::centered(150, 20.0).unwrap()
    }

    #[test]
    fn exact_gaussian_recovered() {
        let mut c = SpectralCurve::gaussian(grid(), 120.0, 712.0, 0.15).unwrap();
        for v in c.values.iter_mut() {
            *v += 0.01;
        }
        let fit = fit_gaussian(&c).unwrap();
        assert!(fit.converged);
        assert!((fit.center_mhz - 120.0).abs() < 1e-8 * 712.0);
        assert!((fit.fwhm_mhz / 712.0 - 1.0).abs() < 1e-8);
        assert!((fit.amplitude / 0.15 - 1.0).abs() < 1e-8);
        assert!((fit.offset - 0.01).abs() < 1e-8 * 0.15);
    }

    #[test]
    fn noisy_gaussian_within_three_sigma() {
        let mut c = SpectralCurve::gaussian(grid(), 0.0, 712.0, 0.15).unwrap();
        let noise = Normal::new(0.0, 0.01 * 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for v in c.values.iter_mut() {
            *v += noise.sample(&mut rng);
        }
        let fit = fit_gaussian(&c).unwrap();
        assert!(fit.converged);
        let s = fit.fwhm_error().unwrap();
        assert!((fit.fwhm_mhz - 712.0).abs() < 3.0 * s, "{} ± {s}", fit.fwhm_mhz);
    }

    #[test]
    fn flat_curve_is_unconstrained_but_honest() {
        let c = SpectralCurve::new(grid(), vec![0.2; grid().len]).unwrap();
        let fit = fit_gaussian(&c).unwrap();
        assert!(fit.amplitude.abs() < 1e-12);
        assert!((fit.offset - 0.2).abs() < 1e-12);
        assert!(fit.converged);
        assert!(fit.standard_errors[0].is_none() || fit.standard_errors[0].unwrap() > 1e6);
        assert!(fit.standard_errors[1].is_none() || fit.standard_errors[1].unwrap() > 1e6);
    }

    #[test]
    fn weighted_fit_uses_sigma() {
        let xs: Vec<f64> = (0..41).map(|i| -200.0 + 10.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-FOUR_LN2 * (x / 80.0).powi(2)).exp()).collect();
        let sig = vec![0.05; xs.len()];
        let fit = fit_gaussian_points(&xs, &ys, Some(&sig)).unwrap();
        assert!((fit.fwhm_mhz / 80.0 - 1.0).abs() < 1e-8);
        let sig2 = vec![0.1; xs.len()];
        let fit2 = fit_gaussian_points(&xs, &ys, Some(&sig2)).unwrap();
        let ratio = fit2.covariance[1][1] / fit.covariance[1][1];
        assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(fit_gaussian_points(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 1.0, 0.0], None).is_err());
    }
}
