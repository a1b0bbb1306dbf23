//! Box-constrained Levenberg–Marquardt on weighted residual vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_damping: f64,
    pub rel_step_tol: f64,
    pub rel_objective_tol: f64,
    pub max_iterations: usize,
    /// Restarts from a perturbed best point when a run does not converge.
    pub restarts: usize,
    pub restart_perturbation: f64,
    /// Central-difference step relative to `max(|p|, scale)`.
    pub fd_relative_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_damping: 1e16,
            rel_step_tol: 1e-8,
            rel_objective_tol: 1e-10,
            max_iterations: 500,
            restarts: 3,
            restart_perturbation: 1e-2,
            fd_relative_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroResidual,
    StepTolerance,
    ObjectiveTolerance,
    MaxIterations,
    /// Damping grew past its ceiling without finding a downhill step.
    DampingOverflow,
}

impl Termination {
    pub fn converged(&self) -> bool {
        matches!(
            self,
            Termination::ZeroResidual | Termination::StepTolerance | Termination::ObjectiveTolerance
        )
    }
}

/// Per-parameter box and finite-difference scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::invalid("bounds", format!("expected {n} entries")));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid("bounds", "lower must not exceed upper"));
            }
        }
        Ok(())
    }

    pub fn project(&self, p: &mut [f64]) {
        for ((x, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared weighted residuals.
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after the start point and every accepted step, across restarts.
    pub history: Vec<f64>,
    pub restarts_used: usize,
}

fn objective(r: &[f64]) -> f64 {
    let s: f64 = r.iter().map(|x| x * x).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

fn fd_step(p: f64, scale: f64, rel: f64) -> f64 {
    rel * p.abs().max(scale)
}

/// Central-difference Jacobian, one-sided where a bound is active.
pub fn jacobian<F>(residual: &F, p: &[f64], bounds: &Bounds, scales: &[f64], rel: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = residual(p).len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = fd_step(p[j], scales[j], rel);
        let hi = (p[j] + h).min(bounds.upper[j]);
        let lo = (p[j] - h).max(bounds.lower[j]);
        if hi <= lo {
            continue;
        }
        q[j] = hi;
        let rp = residual(&q);
        q[j] = lo;
        let rm = residual(&q);
        q[j] = p[j];
        let denom = hi - lo;
        for i in 0..m {
            let d = (rp[i] - rm[i]) / denom;
            jac[(i, j)] = if d.is_finite() { d } else { 0.0 };
        }
    }
    jac
}

struct Run {
    params: Vec<f64>,
    objective: f64,
    iterations: usize,
    termination: Termination,
}

fn run_once<F>(
    residual: &F,
    start: Vec<f64>,
    bounds: &Bounds,
    scales: &[f64],
    opts: &LmOptions,
    history: &mut Vec<f64>,
) -> Run
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = start.len();
    let mut p = start;
    bounds.project(&mut p);
    let mut r = residual(&p);
    let mut f = objective(&r);
    history.push(f);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut jac = jacobian(residual, &p, bounds, scales, opts.fd_relative_step);

    while iterations < opts.max_iterations {
        if f == 0.0 {
            return Run {
                params: p,
                objective: f,
                iterations,
                termination: Termination::ZeroResidual,
            };
        }
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * rv;
        let diag_max = (0..n).map(|j| jtj[(j, j)]).fold(0.0_f64, f64::max);
        let floor = (diag_max * 1e-12).max(f64::MIN_POSITIVE);

        let mut accepted = false;
        while !accepted {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= opts.damping_up;
                    if lambda > opts.max_damping {
                        return Run {
                            params: p,
                            objective: f,
                            iterations,
                            termination: Termination::DampingOverflow,
                        };
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            bounds.project(&mut trial);
            let dp: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let pn: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            let small_step = dp <= opts.rel_step_tol * (pn + opts.rel_step_tol);
            let r_trial = residual(&trial);
            let f_trial = objective(&r_trial);
            if f_trial < f {
                let rel_change = (f - f_trial) / f;
                p = trial;
                r = r_trial;
                f = f_trial;
                history.push(f);
                lambda = (lambda / opts.damping_down).max(f64::MIN_POSITIVE);
                accepted = true;
                if small_step {
                    return Run {
                        params: p,
                        objective: f,
                        iterations,
                        termination: Termination::StepTolerance,
                    };
                }
                if rel_change <= opts.rel_objective_tol {
                    return Run {
                        params: p,
                        objective: f,
                        iterations,
                        termination: Termination::ObjectiveTolerance,
                    };
                }
                jac = jacobian(residual, &p, bounds, scales, opts.fd_relative_step);
            } else {
                if small_step {
                    return Run {
                        params: p,
                        objective: f,
                        iterations,
                        termination: Termination::StepTolerance,
                    };
                }
                lambda *= opts.damping_up;
                if lambda > opts.max_damping {
                    return Run {
                        params: p,
                        objective: f,
                        iterations,
                        termination: Termination::DampingOverflow,
                    };
                }
            }
        }
    }
    Run {
        params: p,
        objective: f,
        iterations,
        termination: Termination::MaxIterations,
    }
}

/// Minimizes the squared norm of `residual` inside `bounds`.
///
/// `scales` sets the magnitude below which finite-difference steps stop
/// shrinking with the parameter value.
pub fn minimize<F>(residual: F, start: &[f64], bounds: &Bounds, scales: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = start.len();
    bounds.validate(n)?;
    if scales.len() != n || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("scales", "one positive scale per parameter"));
    }
    if start.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("start", "must be finite"));
    }
    let m = residual(start).len();
    if m < n {
        return Err(Error::invalid(
            "data",
            format!("{m} residuals cannot constrain {n} parameters"),
        ));
    }

    let mut history = Vec::new();
    let mut best = run_once(&residual, start.to_vec(), bounds, scales, opts, &mut history);
    let mut total_iterations = best.iterations;
    let mut restarts_used = 0;
    while !best.termination.converged() && restarts_used < opts.restarts {
        restarts_used += 1;
        let k = restarts_used as f64;
        let perturbed: Vec<f64> = best
            .params
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let sign = if (j + restarts_used) % 2 == 0 { 1.0 } else { -1.0 };
                x + sign * k * opts.restart_perturbation * x.abs().max(scales[j])
            })
            .collect();
        // Each restart keeps its own monotone history segment.
        let run = run_once(&residual, perturbed, bounds, scales, opts, &mut history);
        total_iterations += run.iterations;
        if run.objective < best.objective || run.termination.converged() && run.objective <= best.objective {
            best = run;
        }
    }

    let residuals = residual(&best.params);
    let jac = jacobian(&residual, &best.params, bounds, scales, opts.fd_relative_step);
    Ok(LmOutcome {
        objective: objective(&residuals),
        params: best.params,
        residuals,
        jacobian: jac,
        iterations: total_iterations,
        termination: best.termination,
        history,
        restarts_used,
    })
}

/// `(JᵀJ)⁻¹` via eigendecomposition.
///
/// Parameters touching a null direction get infinite variance and NaN
/// covariances with every other parameter.
pub fn covariance(jac: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = jac.ncols();
    let jtj = jac.transpose() * jac;
    let eig = SymmetricEigen::new(jtj);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = max_ev * 1e-12;
    let mut cov = vec![vec![0.0; n]; n];
    let mut undetermined = vec![false; n];
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        if ev <= tol || max_ev == 0.0 {
            for i in 0..n {
                if v[i].abs() > 1e-6 {
                    undetermined[i] = true;
                }
            }
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                cov[i][j] += v[i] * v[j] / ev;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if undetermined[i] || undetermined[j] {
                cov[i][j] = if i == j { f64::INFINITY } else { f64::NAN };
            }
        }
    }
    cov
}

/// Correlation matrix from a covariance; undetermined entries become NaN.
pub fn correlation(cov: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cov.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = (cov[i][i] * cov[j][j]).sqrt();
                    if d.is_finite() && d > 0.0 {
                        cov[i][j] / d
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect()
}
