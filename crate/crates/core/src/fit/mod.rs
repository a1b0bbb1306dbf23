//! Weighted nonlinear least squares for storage-decay and spectral data.

pub mod gaussian;
pub mod lm;
pub mod spinwave_fit;

pub use gaussian::{fit_gaussian, fit_gaussian_points, GaussianFit};
pub use lm::{Bounds, LmOptions, Termination};
pub use spinwave_fit::{fit_spinwave_model, parse_decay_csv, DecayPoint, FitResult, SpinwaveFitOptions, SpinwaveParam};

/// 1σ errors from a covariance diagonal; `None` where unconstrained.
pub fn standard_errors(cov: &[Vec<f64>]) -> Vec<Option<f64>> {
    cov.iter()
        .enumerate()
        .map(|(i, row)| {
            let v = row[i];
            if v.is_finite() && v >= 0.0 {
                Some(v.sqrt())
            } else {
                None
            }
        })
        .collect()
}
