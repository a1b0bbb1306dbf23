//! Fit of the hyperfine-beating storage model to efficiency-vs-time data.

use serde::{Deserialize, Serialize};

use super::lm::{self, Bounds, LmOptions, Termination};
use super::standard_errors;
use crate::error::{Error, Result};
use crate::spinwave::{HyperfineSplittings, SpinwaveModel, SpinwaveModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t_ns: f64,
    pub eta: f64,
    pub sigma: f64,
}

/// Parses `t_ns,eta,sigma` rows; `#` lines and blank lines are skipped.
pub fn parse_decay_csv(text: &str) -> Result<Vec<DecayPoint>> {
    let mut header_seen = false;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line.replace(' ', "") != "t_ns,eta,sigma" {
                return Err(Error::parse(line_no, "expected column header `t_ns,eta,sigma`"));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                line_no,
                format!("expected 3 columns, found {}", fields.len()),
            ));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(line_no, format!("{name}: {e}")))
        };
        let point = DecayPoint {
            t_ns: num(0, "t_ns")?,
            eta: num(1, "eta")?,
            sigma: num(2, "sigma")?,
        };
        if !(point.sigma > 0.0) {
            return Err(Error::parse(line_no, "sigma must be positive"));
        }
        out.push(point);
    }
    if !header_seen {
        return Err(Error::parse(1, "missing column header `t_ns,eta,sigma`"));
    }
    Ok(out)
}

/// Fit coordinates, in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinwaveParam {
    Eta0,
    TauS,
    TauBar,
    T0,
    A,
    B,
    C,
    D,
    F23,
    F34,
    F45,
}

impl SpinwaveParam {
    pub const ALL: [SpinwaveParam; 11] = [
        SpinwaveParam::Eta0,
        SpinwaveParam::TauS,
        SpinwaveParam::TauBar,
        SpinwaveParam::T0,
        SpinwaveParam::A,
        SpinwaveParam::B,
        SpinwaveParam::C,
        SpinwaveParam::D,
        SpinwaveParam::F23,
        SpinwaveParam::F34,
        SpinwaveParam::F45,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SpinwaveParam::Eta0 => "eta0",
            SpinwaveParam::TauS => "tau_s_ns",
            SpinwaveParam::TauBar => "tau_bar_ns",
            SpinwaveParam::T0 => "t0_ns",
            SpinwaveParam::A => "a",
            SpinwaveParam::B => "b",
            SpinwaveParam::C => "c",
            SpinwaveParam::D => "d",
            SpinwaveParam::F23 => "f23_mhz",
            SpinwaveParam::F34 => "f34_mhz",
            SpinwaveParam::F45 => "f45_mhz",
        }
    }

    fn index(&self) -> usize {
        Self::ALL.iter().position(|p| p == self).expect("listed")
    }

    fn scale(&self) -> f64 {
        match self {
            SpinwaveParam::Eta0 => 0.01,
            SpinwaveParam::A | SpinwaveParam::B | SpinwaveParam::C | SpinwaveParam::D => 0.1,
            _ => 1.0,
        }
    }

    fn default_bounds(&self) -> (f64, f64) {
        match self {
            SpinwaveParam::Eta0 => (0.0, f64::INFINITY),
            SpinwaveParam::TauS | SpinwaveParam::TauBar => (1e-6, f64::INFINITY),
            SpinwaveParam::F23 | SpinwaveParam::F34 | SpinwaveParam::F45 => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl std::str::FromStr for SpinwaveParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SpinwaveParam::ALL
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| Error::invalid("parameter", format!("unknown fit parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpinwaveFitOptions {
    /// Hold these at their initial values.
    pub fixed: Vec<SpinwaveParam>,
    pub float_hyperfine: bool,
    /// Box over all eleven coordinates in `SpinwaveParam::ALL` order.
    pub bounds: Option<Bounds>,
    pub lm: LmOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: SpinwaveModelParams,
    pub hyperfine: HyperfineSplittings,
    /// Names of the free coordinates, in covariance order.
    pub free_parameters: Vec<String>,
    /// Unscaled `(JᵀWJ)⁻¹`; infinite diagonal marks unconstrained coordinates.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<Option<f64>>,
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Weighted residuals `(eta - model) / sigma` at the solution.
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

impl FitResult {
    pub fn error_of(&self, p: SpinwaveParam) -> Option<f64> {
        let i = self.free_parameters.iter().position(|n| n == p.name())?;
        self.standard_errors[i]
    }
}

fn to_vector(p: &SpinwaveModelParams, hf: &HyperfineSplittings) -> [f64; 11] {
    [
        p.eta0,
        p.tau_s_ns,
        p.tau_bar_ns,
        p.t0_ns,
        p.a,
        p.b,
        p.c,
        p.d,
        hf.f23_mhz,
        hf.f34_mhz,
        hf.f45_mhz,
    ]
}

fn from_vector(v: &[f64; 11]) -> (SpinwaveModelParams, HyperfineSplittings) {
    (
        SpinwaveModelParams {
            eta0: v[0],
            tau_s_ns: v[1],
            tau_bar_ns: v[2],
            t0_ns: v[3],
            a: v[4],
            b: v[5],
            c: v[6],
            d: v[7],
        },
        HyperfineSplittings {
            f23_mhz: v[8],
            f34_mhz: v[9],
            f45_mhz: v[10],
        },
    )
}

pub(crate) struct Problem<'a> {
    data: &'a [DecayPoint],
    base: [f64; 11],
    free: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn full(&self, x: &[f64]) -> [f64; 11] {
        let mut v = self.base;
        for (k, &i) in self.free.iter().enumerate() {
            v[i] = x[k];
        }
        v
    }

    pub(crate) fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let (p, hf) = from_vector(&self.full(x));
        match SpinwaveModel::new(p, hf) {
            Ok(model) => self
                .data
                .iter()
                .map(|d| (d.eta - model.efficiency(d.t_ns)) / d.sigma)
                .collect(),
            Err(_) => vec![f64::INFINITY; self.data.len()],
        }
    }
}

fn validate_data(data: &[DecayPoint], n_free: usize) -> Result<()> {
    if data.len() < n_free + 1 {
        return Err(Error::invalid(
            "data",
            format!(
                "{} points cannot constrain {} free parameters (need at least {})",
                data.len(),
                n_free,
                n_free + 1
            ),
        ));
    }
    for d in data {
        if !(d.sigma > 0.0 && d.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive (t = {} ns)", d.t_ns)));
        }
        if !d.t_ns.is_finite() || !d.eta.is_finite() {
            return Err(Error::invalid("data", "times and efficiencies must be finite"));
        }
    }
    Ok(())
}

pub(crate) fn build_problem<'a>(
    data: &'a [DecayPoint],
    init: &SpinwaveModelParams,
    hf: &HyperfineSplittings,
    opts: &SpinwaveFitOptions,
) -> (Problem<'a>, Vec<SpinwaveParam>) {
    let free: Vec<SpinwaveParam> = SpinwaveParam::ALL
        .iter()
        .copied()
        .filter(|p| {
            let is_hf = matches!(p, SpinwaveParam::F23 | SpinwaveParam::F34 | SpinwaveParam::F45);
            (opts.float_hyperfine || !is_hf) && !opts.fixed.contains(p)
        })
        .collect();
    let problem = Problem {
        data,
        base: to_vector(init, hf),
        free: free.iter().map(|p| p.index()).collect(),
    };
    (problem, free)
}

/// Levenberg–Marquardt fit of the beating model to `(t, eta, sigma)` data.
///
/// Non-convergence is reported through `converged`, not as an error.
pub fn fit_spinwave_model(
    data: &[DecayPoint],
    init: &SpinwaveModelParams,
    hf: &HyperfineSplittings,
    opts: &SpinwaveFitOptions,
) -> Result<FitResult> {
    init.validate()?;
    hf.validate()?;
    let (problem, free) = build_problem(data, init, hf, opts);
    validate_data(data, free.len())?;
    if free.is_empty() {
        return Err(Error::invalid("fixed", "no free parameters left"));
    }
    let full_bounds = match &opts.bounds {
        Some(b) => {
            b.validate(11)?;
            b.clone()
        }
        None => {
            let (lower, upper) = SpinwaveParam::ALL.iter().map(|p| p.default_bounds()).unzip();
            Bounds { lower, upper }
        }
    };
    let bounds = Bounds {
        lower: problem.free.iter().map(|&i| full_bounds.lower[i]).collect(),
        upper: problem.free.iter().map(|&i| full_bounds.upper[i]).collect(),
    };
    let start: Vec<f64> = problem.free.iter().map(|&i| problem.base[i]).collect();
    let scales: Vec<f64> = free.iter().map(|p| p.scale()).collect();

    let out = lm::minimize(|x| problem.residuals(x), &start, &bounds, &scales, &opts.lm)?;
    let covariance = lm::covariance(&out.jacobian);
    let (parameters, hyperfine) = from_vector(&problem.full(&out.params));
    Ok(FitResult {
        parameters,
        hyperfine,
        free_parameters: free.iter().map(|p| p.name().to_string()).collect(),
        standard_errors: standard_errors(&covariance),
        covariance,
        residual_norm: out.objective.sqrt(),
        chi2: out.objective,
        dof: data.len() - free.len(),
        iterations: out.iterations,
        converged: out.termination.converged(),
        termination: out.termination,
        residuals: out.residuals,
        objective_history: out.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::species::SpeciesConstants;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn hf() -> HyperfineSplittings {
        SpeciesConstants::cesium().hyperfine
    }

    fn noiseless(p: &SpinwaveModelParams, times: impl Iterator<Item = f64>) -> Vec<DecayPoint> {
        let model = SpinwaveModel::new(*p, hf()).unwrap();
        times
            .map(|t| DecayPoint {
                t_ns: t,
                eta: model.efficiency(t),
                sigma: 0.01,
            })
            .collect()
    }

    fn perturbed(p: &SpinwaveModelParams, pattern: &[f64; 8]) -> SpinwaveModelParams {
        let v = to_vector(p, &hf());
        let mut w = v;
        for i in 0..8 {
            w[i] = v[i] * pattern[i];
        }
        from_vector(&w).0
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn noiseless_round_trip_recovers_reference_fit() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let data = noiseless(&truth, (0..=160).map(|i| i as f64 * 0.5));
        let init = perturbed(&truth, &[1.2, 0.8, 1.2, 0.8, 1.2, 0.8, 1.2, 0.8]);
        let fit = fit_spinwave_model(&data, &init, &hf(), &SpinwaveFitOptions::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.termination);
        let got = to_vector(&fit.parameters, &hf());
        let want = to_vector(&truth, &hf());
        for i in 0..8 {
            assert!(
                rel(got[i], want[i]) < 1e-6,
                "{}: {} vs {}",
                SpinwaveParam::ALL[i].name(),
                got[i],
                want[i]
            );
        }
    }

    #[test]
    fn pure_gaussian_recovers_tau() {
        let truth = SpinwaveModelParams::gaussian(0.3, 24.0, 1.5);
        let data = noiseless(&truth, (0..=60).map(|i| i as f64));
        let init = SpinwaveModelParams::gaussian(0.25, 30.0, 0.5);
        // Without beating, t0 trades off against the tau_s/tau_bar asymmetry.
        let init = SpinwaveModelParams { t0_ns: 1.5, ..init };
        let opts = SpinwaveFitOptions {
            fixed: vec![
                SpinwaveParam::T0,
                SpinwaveParam::A,
                SpinwaveParam::B,
                SpinwaveParam::C,
                SpinwaveParam::D,
            ],
            ..Default::default()
        };
        let fit = fit_spinwave_model(&data, &init, &hf(), &opts).unwrap();
        assert!(fit.converged);
        assert!(rel(fit.parameters.tau_s_ns, 24.0) < 1e-8, "{}", fit.parameters.tau_s_ns);
        assert!(rel(fit.parameters.tau_bar_ns, 24.0) < 1e-8);
        assert_eq!(fit.free_parameters, ["eta0", "tau_s_ns", "tau_bar_ns"]);
    }

    #[test]
    fn objective_never_increases() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let data = noiseless(&truth, (0..=80).map(|i| i as f64));
        let init = perturbed(&truth, &[0.8, 1.2, 0.8, 1.2, 0.8, 1.2, 0.8, 1.2]);
        let fit = fit_spinwave_model(&data, &init, &hf(), &SpinwaveFitOptions::default()).unwrap();
        assert!(fit.objective_history.len() > 2);
        for w in fit.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    fn noisy(seed: u64, scale: f64) -> Vec<DecayPoint> {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let model = SpinwaveModel::new(truth, hf()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..=60)
            .map(|i| {
                let t = i as f64;
                let eta = model.efficiency(t) + 0.003 * (rng.gen::<f64>() - 0.5);
                DecayPoint {
                    t_ns: t,
                    eta,
                    sigma: 0.002 * scale,
                }
            })
            .collect()
    }

    #[test]
    fn sigma_rescaling_leaves_parameters_and_scales_covariance() {
        let init = SpinwaveModelParams::REFERENCE_FIT;
        let base = fit_spinwave_model(&noisy(3, 1.0), &init, &hf(), &SpinwaveFitOptions::default()).unwrap();
        for factor in [4.0, 3.0] {
            let fit = fit_spinwave_model(&noisy(3, factor), &init, &hf(), &SpinwaveFitOptions::default()).unwrap();
            let a = to_vector(&base.parameters, &hf());
            let b = to_vector(&fit.parameters, &hf());
            for i in 0..8 {
                assert!(
                    rel(b[i], a[i]) < 1e-9,
                    "factor {factor} param {i}: {} vs {}",
                    b[i],
                    a[i]
                );
            }
            for i in 0..8 {
                for j in 0..8 {
                    let want = base.covariance[i][j] * factor * factor;
                    assert!((fit.covariance[i][j] - want).abs() <= 1e-6 * want.abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        let fit = fit_spinwave_model(
            &noisy(9, 1.0),
            &SpinwaveModelParams::REFERENCE_FIT,
            &hf(),
            &Default::default(),
        )
        .unwrap();
        assert!(fit.converged);
        let n = fit.covariance.len();
        let m = DMatrix::from_fn(n, n, |i, j| fit.covariance[i][j]);
        let ev = m.symmetric_eigen().eigenvalues;
        let max = ev.max();
        assert!(ev.iter().all(|e| *e >= -1e-10 * max), "{ev}");
    }

    #[test]
    fn finite_difference_jacobian_is_second_order_consistent() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let data = noisy(5, 1.0);
        let opts = SpinwaveFitOptions::default();
        let (problem, free) = build_problem(&data, &truth, &hf(), &opts);
        let scales: Vec<f64> = free.iter().map(|p| p.scale()).collect();
        let bounds = Bounds::unbounded(free.len());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = |x: &[f64]| problem.residuals(x).iter().map(|r| r * r).sum::<f64>();
        for _ in 0..5 {
            let x: Vec<f64> = problem
                .free
                .iter()
                .map(|&i| problem.base[i] * (1.0 + 0.05 * (rng.gen::<f64>() - 0.5)))
                .collect();
            let v: Vec<f64> = scales.iter().map(|s| s * (rng.gen::<f64>() - 0.5)).collect();
            let jac = lm::jacobian(&|y: &[f64]| problem.residuals(y), &x, &bounds, &scales, 1e-6);
            let r = problem.residuals(&x);
            let jv = &jac * nalgebra::DVector::from_column_slice(&v);
            let dir: f64 = 2.0 * r.iter().zip(jv.iter()).map(|(a, b)| a * b).sum::<f64>();
            let f0 = f(&x);
            let remainder = |h: f64| {
                let xh: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
                (f(&xh) - f0 - h * dir).abs()
            };
            let (e1, e2) = (remainder(1e-2), remainder(5e-3));
            let ratio = e1 / e2;
            assert!((3.0..5.0).contains(&ratio), "remainder ratio {ratio} ({e1}, {e2})");
        }
    }

    #[test]
    fn poisson_pulls_have_unit_variance() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let model = SpinwaveModel::new(truth, hf()).unwrap();
        let n_in = 1e6;
        let times: Vec<f64> = (0..=60).map(|i| i as f64).collect();
        let reps = 200;
        let mut sum_sq = [0.0f64; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let want = to_vector(&truth, &hf());
        for _ in 0..reps {
            let data: Vec<DecayPoint> = times
                .iter()
                .map(|&t| {
                    let mean = n_in * model.efficiency(t);
                    let k: f64 = Poisson::new(mean).unwrap().sample(&mut rng);
                    DecayPoint {
                        t_ns: t,
                        eta: k / n_in,
                        sigma: mean.sqrt() / n_in,
                    }
                })
                .collect();
            let fit = fit_spinwave_model(&data, &truth, &hf(), &Default::default()).unwrap();
            assert!(fit.converged);
            let got = to_vector(&fit.parameters, &hf());
            for i in 0..8 {
                let s = fit.standard_errors[i].unwrap();
                sum_sq[i] += ((got[i] - want[i]) / s).powi(2);
            }
        }
        // Each parameter at 1% family-wise (Bonferroni over eight tests).
        let chi = ChiSquared::new(reps as f64).unwrap();
        let alpha = 0.01 / 8.0;
        let (lo, hi) = (chi.inverse_cdf(alpha / 2.0), chi.inverse_cdf(1.0 - alpha / 2.0));
        for (i, s) in sum_sq.iter().enumerate() {
            assert!(
                *s > lo && *s < hi,
                "{}: sum of squared pulls {s} outside [{lo}, {hi}]",
                SpinwaveParam::ALL[i].name()
            );
        }
    }

    #[test]
    fn floating_hyperfine_adds_coordinates() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let data = noiseless(&truth, (0..=120).map(|i| i as f64 * 0.5));
        let opts = SpinwaveFitOptions {
            float_hyperfine: true,
            ..Default::default()
        };
        let fit = fit_spinwave_model(&data, &truth, &hf(), &opts).unwrap();
        assert_eq!(fit.free_parameters.len(), 11);
        assert!(rel(fit.hyperfine.f23_mhz, hf().f23_mhz) < 1e-6);
    }

    #[test]
    fn precondition_errors() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let few = noiseless(&truth, (0..8).map(|i| i as f64));
        assert!(fit_spinwave_model(&few, &truth, &hf(), &Default::default()).is_err());
        let mut data = noiseless(&truth, (0..20).map(|i| i as f64));
        data[3].sigma = 0.0;
        assert!(fit_spinwave_model(&data, &truth, &hf(), &Default::default()).is_err());
        assert!("tau_x".parse::<SpinwaveParam>().is_err());
        assert_eq!("c".parse::<SpinwaveParam>().unwrap(), SpinwaveParam::C);
    }

    #[test]
    fn decay_csv_parsing() {
        let pts = parse_decay_csv("# run 3\nt_ns,eta,sigma\n0,0.7,0.01\n\n2.5, 0.6 ,0.02\n").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(
            pts[1],
            DecayPoint {
                t_ns: 2.5,
                eta: 0.6,
                sigma: 0.02
            }
        );
        match parse_decay_csv("t_ns,eta,sigma\n0,0.7,0.01\n1,x,0.1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_decay_csv("0,1,2\n").is_err());
        assert!(parse_decay_csv("t_ns,eta,sigma\n0,0.7,0\n").is_err());
    }

    #[test]
    fn exhausted_iterations_are_reported() {
        let truth = SpinwaveModelParams::REFERENCE_FIT;
        let data = noiseless(&truth, (0..=60).map(|i| i as f64));
        let init = perturbed(&truth, &[1.2, 0.8, 1.2, 0.8, 1.2, 0.8, 1.2, 0.8]);
        let opts = SpinwaveFitOptions {
            lm: LmOptions {
                max_iterations: 2,
                restarts: 0,
                ..LmOptions::default()
            },
            ..Default::default()
        };
        let fit = fit_spinwave_model(&data, &init, &hf(), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::MaxIterations);
    }
}
