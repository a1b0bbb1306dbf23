//! Subcommand bodies: parse the effective section, call the library, write files.

use std::fmt::Write as _;

use log::{info, warn};
use serde::Serialize;
use toml::Table;

use super::config::{
    effective_section, parse_section, path_value, AnalyzeSection, BenchmarkSection, DeconvolveSection, FitDecaySection,
    McDephaseSection, Override, SimulateTraceSection, VaporSection,
};
use super::manifest::config_hash;
use super::{
    config_err, AnalyzeArgs, BenchmarkArgs, CliError, Command, Context, DeconvolveArgs, FitDecayArgs, McDephaseArgs,
    SimulateTraceArgs, VaporArgs,
};
use crate::benchmark::{self, AcceptanceWindow, SourceBenchmarkScenario};
use crate::fit::{self, lm, parse_decay_csv, SpinwaveFitOptions, SpinwaveParam};
use crate::mc::{self, McConfig};
use crate::species::SpeciesConstants;
use crate::spectral::{self, SpectralCurve};
use crate::spinwave::{self, SpinwaveGeometry, SpinwaveModel, SpinwaveModelParams};
use crate::trace::{self, DetectionChain, EfficiencySource, Histogram, TimeWindow, TraceSynthesis, WindowSpec};
use crate::vapor::{self, VaporConditions};

pub fn dispatch(cmd: &Command, ctx: &mut Context) -> Result<(), CliError> {
    match cmd {
        Command::SimulateTrace(a) => simulate_trace(a, ctx),
        Command::Analyze(a) => analyze(a, ctx),
        Command::FitDecay(a) => fit_decay(a, ctx),
        Command::McDephase(a) => mc_dephase(a, ctx),
        Command::Deconvolve(a) => deconvolve(a, ctx),
        Command::Benchmark(a) => benchmark(a, ctx),
        Command::Vapor(a) => vapor_cmd(a, ctx),
    }
}

fn section(ctx: &mut Context, name: &str, overrides: Vec<Override>, seeded: bool) -> Result<Table, CliError> {
    let table = effective_section(ctx.config.section(name), ctx.config_dir.as_deref(), overrides);
    let seed = if seeded { Some(ctx.require_seed()?) } else { None };
    ctx.seed = seed;
    // Worker count never changes results, so it stays out of the hash.
    let mut hashed = table.clone();
    hashed.remove("workers");
    ctx.config_sha256 = Some(config_hash(name, seed, &hashed));
    Ok(table)
}

fn push<T: Into<toml::Value>>(v: &mut Vec<Override>, key: &'static str, value: Option<T>) {
    if let Some(x) = value {
        v.push(Override::new(key, x));
    }
}

fn chain(setup_transmission: f64, detector_efficiency: f64) -> Result<DetectionChain, CliError> {
    let c = DetectionChain {
        setup_transmission,
        detector_efficiency,
    };
    c.validate().map_err(config_err)?;
    Ok(c)
}

#[derive(Serialize)]
struct SynthesisSummary {
    synthesis: TraceSynthesis,
    windows: WindowSpec,
    internal_efficiency: f64,
    expected_input_counts: f64,
    expected_retrieved_counts: f64,
    expected_noise_counts_read_out: f64,
    expected_snr: f64,
}

fn simulate_trace(a: &SimulateTraceArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    push(&mut o, "mean_photons", a.mean_photons);
    if let Some(e) = a.internal_efficiency {
        o.push(Override::exclusive("internal_efficiency", e, &["model", "hyperfine"]));
    }
    if let Some(s) = a.target_snr {
        o.push(Override::exclusive("target_snr", s, &["noise_rate_hz"]));
    }
    if let Some(r) = a.noise_rate_hz {
        o.push(Override::exclusive("noise_rate_hz", r, &["target_snr"]));
    }
    let table = section(ctx, "simulate_trace", o, true)?;
    let s: SimulateTraceSection = parse_section("simulate_trace", &table)?;
    let seed = ctx.seed.expect("seeded");
    ctx.rng = Some("ChaCha8Rng (rand_chacha 0.3), streams 0/1/2 = signal/reference/noise");

    let efficiency = match (s.internal_efficiency, s.model) {
        (Some(e), None) => EfficiencySource::Fixed { internal_efficiency: e },
        (None, Some(params)) => EfficiencySource::Model {
            params,
            hyperfine: s.hyperfine.unwrap_or(SpeciesConstants::cesium().hyperfine),
        },
        _ => {
            return Err(CliError::usage(
                "[simulate_trace]: set exactly one of `internal_efficiency` or `model`",
            ))
        }
    };
    let mut synth = TraceSynthesis {
        efficiency,
        read_in_efficiency: s.read_in_efficiency,
        pulse_fwhm_ns: s.pulse_fwhm_ns,
        read_in_time_ns: s.read_in_time_ns,
        retrieval_time_ns: s.retrieval_time_ns,
        mean_photons: s.mean_photons,
        noise_rate_hz: 0.0,
        chain: chain(s.setup_transmission, s.detector_efficiency)?,
        integration_time_s: s.integration_time_s,
        repetition_rate_hz: s.repetition_rate_hz,
        bin_width_ns: s.bin_width_ns,
        seed,
    };
    synth.validate().map_err(config_err)?;
    let windows = synth.nominal_windows(s.window_threshold).map_err(config_err)?;
    synth.noise_rate_hz = match (s.noise_rate_hz, s.target_snr) {
        (Some(r), None) => r,
        (None, Some(t)) => synth.noise_rate_for_snr(&windows.read_out, t).map_err(config_err)?,
        _ => {
            return Err(CliError::usage(
                "[simulate_trace]: set exactly one of `noise_rate_hz` or `target_snr`",
            ))
        }
    };
    synth.validate().map_err(config_err)?;
    let traces = synth.synthesize()?;
    let expected = synth.expected()?;
    let retrieved = expected.integrate(&expected.signal, &windows.read_out)?;
    let noise = expected.integrate(&expected.noise, &windows.read_out)?;
    let summary = SynthesisSummary {
        synthesis: synth,
        windows,
        internal_efficiency: synth.internal_efficiency()?,
        expected_input_counts: synth.input_counts(),
        expected_retrieved_counts: retrieved - noise,
        expected_noise_counts_read_out: noise,
        expected_snr: if noise > 0.0 { retrieved / noise } else { f64::INFINITY },
    };
    ctx.write("signal.csv", traces.signal.to_csv())?;
    ctx.write("reference.csv", traces.reference.to_csv())?;
    ctx.write("noise.csv", traces.noise.to_csv())?;
    ctx.write_json("synthesis.json", &summary)
}

fn window(name: &str, v: [f64; 2]) -> Result<TimeWindow, CliError> {
    TimeWindow::new(v[0], v[1]).map_err(|e| CliError::usage(format!("[analyze] {name}: {e}")))
}

fn analyze(a: &AnalyzeArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    push(&mut o, "signal_path", a.signal.as_deref().map(path_value));
    push(&mut o, "reference_path", a.reference.as_deref().map(path_value));
    push(&mut o, "noise_path", a.noise.as_deref().map(path_value));
    push(&mut o, "threshold_fraction", a.threshold_fraction);
    let table = section(ctx, "analyze", o, false)?;
    let s: AnalyzeSection = parse_section("analyze", &table)?;
    let chain = chain(s.setup_transmission, s.detector_efficiency)?;
    let read = |p: &std::path::Path| Histogram::read(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())));
    let signal = read(&s.signal_path)?;
    let reference = read(&s.reference_path)?;
    let noise = read(&s.noise_path)?;
    let windows = match (s.read_in_ns, s.read_out_ns, s.noise_ns) {
        (Some(i), Some(r), Some(n)) => {
            let w = WindowSpec {
                read_in: window("read_in_ns", i)?,
                read_out: window("read_out_ns", r)?,
                noise: window("noise_ns", n)?,
            };
            w.validate().map_err(config_err)?;
            w
        }
        (None, None, None) => WindowSpec::from_threshold(&signal, &reference, s.threshold_fraction)?,
        _ => {
            return Err(CliError::usage(
                "[analyze]: give all of `read_in_ns`, `read_out_ns`, `noise_ns` or none",
            ))
        }
    };
    let report = trace::analyze(&signal, &reference, &noise, &windows, &chain)?;
    for d in &report.diagnostics {
        warn!("{d}");
    }
    ctx.write_json("report.json", &report)
}

#[derive(Serialize)]
struct FittedValue {
    name: &'static str,
    value: f64,
    free: bool,
    /// `null` for fixed or unconstrained parameters.
    error: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    converged: bool,
    termination: lm::Termination,
    iterations: usize,
    chi2: f64,
    dof: usize,
    reduced_chi2: f64,
    residual_norm: f64,
    parameters: Vec<FittedValue>,
    /// Rows and columns follow the free parameters in `parameters` order.
    correlation: Vec<Vec<f64>>,
    one_over_e_time_ns: Option<f64>,
}

fn fit_decay(a: &FitDecayArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    push(&mut o, "data_path", a.data.as_deref().map(path_value));
    if a.float_hyperfine {
        o.push(Override::new("float_hyperfine", true));
    }
    let table = section(ctx, "fit_decay", o, false)?;
    let s: FitDecaySection = parse_section("fit_decay", &table)?;
    let text = std::fs::read_to_string(&s.data_path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", s.data_path.display())))?;
    let data = parse_decay_csv(&text).map_err(|e| CliError::runtime(format!("{}: {e}", s.data_path.display())))?;
    let init = s.init.unwrap_or(SpinwaveModelParams::REFERENCE_FIT);
    let hf = s.hyperfine.unwrap_or(SpeciesConstants::cesium().hyperfine);
    let fixed = s
        .fixed
        .iter()
        .map(|n| n.parse::<SpinwaveParam>().map_err(config_err))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = SpinwaveFitOptions {
        fixed,
        float_hyperfine: s.float_hyperfine,
        ..Default::default()
    };
    let result = fit::fit_spinwave_model(&data, &init, &hf, &opts)?;
    if !result.converged {
        warn!("fit did not converge ({:?})", result.termination);
    }
    let model = SpinwaveModel::new(result.parameters, result.hyperfine)?;
    let p = result.parameters;
    let h = result.hyperfine;
    let parameters = [
        ("eta0", p.eta0),
        ("tau_s_ns", p.tau_s_ns),
        ("tau_bar_ns", p.tau_bar_ns),
        ("t0_ns", p.t0_ns),
        ("a", p.a),
        ("b", p.b),
        ("c", p.c),
        ("d", p.d),
        ("f23_mhz", h.f23_mhz),
        ("f34_mhz", h.f34_mhz),
        ("f45_mhz", h.f45_mhz),
    ]
    .into_iter()
    .map(|(name, value)| {
        let idx = result.free_parameters.iter().position(|n| n == name);
        FittedValue {
            name,
            value,
            free: idx.is_some(),
            error: idx.and_then(|i| result.standard_errors[i]),
        }
    })
    .collect();
    let report = FitReport {
        converged: result.converged,
        termination: result.termination,
        iterations: result.iterations,
        chi2: result.chi2,
        dof: result.dof,
        reduced_chi2: if result.dof > 0 {
            result.chi2 / result.dof as f64
        } else {
            f64::NAN
        },
        residual_norm: result.residual_norm,
        parameters,
        correlation: lm::correlation(&result.covariance),
        one_over_e_time_ns: model.one_over_e_time(spinwave::default_horizon_ns(&p)).ns(),
    };

    let mut residuals = String::from("t_ns,eta,sigma,model,weighted_residual\n");
    for (d, r) in data.iter().zip(&result.residuals) {
        let _ = writeln!(
            residuals,
            "{},{},{},{},{}",
            d.t_ns,
            d.eta,
            d.sigma,
            model.efficiency(d.t_ns),
            r
        );
    }
    let t_lo = data.iter().map(|d| d.t_ns).fold(f64::INFINITY, f64::min).min(0.0);
    let t_hi = s
        .curve_end_ns
        .unwrap_or_else(|| data.iter().map(|d| d.t_ns).fold(f64::NEG_INFINITY, f64::max));
    let step = s.curve_step_ns.unwrap_or(0.1);
    if !(step > 0.0) || !(t_hi > t_lo) {
        return Err(CliError::usage(
            "[fit_decay]: `curve_step_ns` must be positive and the curve span non-empty",
        ));
    }
    let n = ((t_hi - t_lo) / step).floor() as usize;
    let mut curve = String::from("t_ns,eta_model\n");
    for i in 0..=n {
        let t = t_lo + i as f64 * step;
        let _ = writeln!(curve, "{t},{}", model.efficiency(t));
    }
    ctx.write_json("fit_report.json", &report)?;
    ctx.write("residuals.csv", residuals)?;
    ctx.write("model_curve.csv", curve)
}

#[derive(Serialize)]
struct McReport {
    reference_curve: &'static str,
    n_atoms: usize,
    chunk_atoms: usize,
    doppler_decay_time_ns: Option<f64>,
    rms_deviation: f64,
    max_abs_deviation: f64,
}

fn mc_dephase(a: &McDephaseArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    push(&mut o, "n_atoms", a.atoms.map(|n| n as i64));
    push(&mut o, "temperature_k", a.temperature_k);
    push(&mut o, "workers", a.workers.map(|n| n as i64));
    if a.beating {
        o.push(Override::new("beating", true));
    }
    let table = section(ctx, "mc_dephase", o, true)?;
    let s: McDephaseSection = parse_section("mc_dephase", &table)?;
    ctx.rng = Some(mc::RNG_ALGORITHM);
    let species = SpeciesConstants::cesium();
    let geometry = SpinwaveGeometry {
        signal_wavelength_m: s.signal_wavelength_m.unwrap_or(species.atom.signal_wavelength_m),
        control_wavelength_m: s.control_wavelength_m.unwrap_or(species.atom.control_wavelength_m),
        propagation: s.propagation,
    };
    let vapor = VaporConditions::new(
        s.temperature_k,
        species.atom.atomic_mass_kg,
        s.cell_length_m,
        s.cell_diameter_m,
    )
    .map_err(config_err)?;
    if !(s.t_step_ns > 0.0 && s.t_max_ns >= 0.0) {
        return Err(CliError::usage(
            "[mc_dephase]: `t_step_ns` must be positive and `t_max_ns` non-negative",
        ));
    }
    let n_times = (s.t_max_ns / s.t_step_ns + 1e-9).floor() as usize;
    let times_ns: Vec<f64> = (0..=n_times).map(|i| i as f64 * s.t_step_ns).collect();
    let tau = mc::doppler_decay_time_ns(&vapor, &geometry);
    let hf = s.hyperfine.unwrap_or(species.hyperfine);
    let beating_model = if s.beating {
        let tau = tau.ok_or_else(|| CliError::usage("[mc_dephase]: beating needs a finite Doppler decay time"))?;
        let amps = s.model.unwrap_or(SpinwaveModelParams::REFERENCE_FIT);
        let params = SpinwaveModelParams {
            eta0: 1.0,
            tau_s_ns: tau,
            tau_bar_ns: tau,
            t0_ns: 0.0,
            ..amps
        };
        Some(SpinwaveModel::new(params, hf).map_err(config_err)?)
    } else {
        None
    };
    let cfg = McConfig {
        n_atoms: s.n_atoms,
        seed: ctx.seed.expect("seeded"),
        vapor,
        geometry,
        times_ns,
        storage_components: beating_model.as_ref().map(mc::components_from_model),
    };
    cfg.validate().map_err(config_err)?;
    let curve = match s.workers {
        Some(w) => mc::simulate_decay_with_workers(&cfg, w)?,
        None => mc::simulate_decay(&cfg)?,
    };
    let (label, cmp) = match &beating_model {
        Some(m) => ("beating model, Doppler envelope", mc::compare_to_model(&curve, m)?),
        None => (
            "exp(-(dk v_th t)^2)",
            mc::compare_curves(&curve, &mc::analytic_single_component(&cfg))?,
        ),
    };
    info!("rms deviation from {label}: {}", cmp.rms_deviation);
    let mut csv = String::from("t_ns,efficiency,stderr,model\n");
    for (p, c) in curve.iter().zip(&cmp.points) {
        let _ = writeln!(csv, "{},{},{},{}", p.t_ns, p.efficiency, p.stderr, c.model);
    }
    ctx.write("decay.csv", csv)?;
    ctx.write_json(
        "comparison.json",
        &McReport {
            reference_curve: label,
            n_atoms: cfg.n_atoms,
            chunk_atoms: mc::CHUNK_ATOMS,
            doppler_decay_time_ns: tau,
            rms_deviation: cmp.rms_deviation,
            max_abs_deviation: cmp.max_abs_deviation,
        },
    )
}

#[derive(Serialize)]
struct DeconvolveReport {
    epsilon: f64,
    laser_fwhm_mhz: Option<f64>,
    laser_resampled: bool,
    measured_fit: fit::GaussianFit,
    window_fit: fit::GaussianFit,
    window_fwhm_mhz: f64,
    window_fwhm_err_mhz: Option<f64>,
}

fn deconvolve(a: &DeconvolveArgs, ctx: &mut Context) -> Result<(), CliError> {
    const LASER: &[&str] = &["laser_path", "laser_fwhm_mhz", "pulse_fwhm_ns"];
    let mut o = Vec::new();
    push(&mut o, "measured_path", a.measured.as_deref().map(path_value));
    if let Some(p) = &a.laser {
        o.push(Override::exclusive("laser_path", path_value(p), LASER));
    }
    if let Some(f) = a.laser_fwhm_mhz {
        o.push(Override::exclusive("laser_fwhm_mhz", f, LASER));
    }
    if let Some(f) = a.pulse_fwhm_ns {
        o.push(Override::exclusive("pulse_fwhm_ns", f, LASER));
    }
    push(&mut o, "epsilon", a.epsilon);
    let table = section(ctx, "deconvolve", o, false)?;
    let s: DeconvolveSection = parse_section("deconvolve", &table)?;
    let d = SpectralCurve::read(&s.measured_path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", s.measured_path.display())))?;
    let (laser, fwhm, resampled) = match (&s.laser_path, s.laser_fwhm_mhz, s.pulse_fwhm_ns) {
        (Some(p), None, None) => {
            let e = SpectralCurve::read(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
            let resampled = !e.grid.matches(&d.grid);
            (e.on_grid(&d.grid)?, None, resampled)
        }
        (None, Some(f), None) => (
            SpectralCurve::gaussian(d.grid, 0.0, f, 1.0).map_err(config_err)?,
            Some(f),
            false,
        ),
        (None, None, Some(t)) => {
            let f = spectral::fourier_limited_linewidth(t).map_err(config_err)?;
            (SpectralCurve::gaussian(d.grid, 0.0, f, 1.0)?, Some(f), false)
        }
        _ => {
            return Err(CliError::usage(
                "[deconvolve]: set exactly one of `laser_path`, `laser_fwhm_mhz`, `pulse_fwhm_ns`",
            ))
        }
    };
    let area = laser.integral();
    if !(area > 0.0) {
        return Err(CliError::runtime(
            "laser spectrum has no positive area on the measured grid",
        ));
    }
    let laser = laser.scaled(1.0 / area);
    let m = spectral::deconvolve(&d, &laser, s.epsilon).map_err(|e| match e {
        crate::Error::InvalidParameter { .. } => config_err(e),
        other => other.into(),
    })?;
    let measured_fit = fit::fit_gaussian(&d)?;
    let window_fit = fit::fit_gaussian(&m)?;
    let report = DeconvolveReport {
        epsilon: s.epsilon,
        laser_fwhm_mhz: fwhm,
        laser_resampled: resampled,
        window_fwhm_mhz: window_fit.fwhm_mhz,
        window_fwhm_err_mhz: window_fit.fwhm_error(),
        measured_fit,
        window_fit,
    };
    ctx.write("window.csv", m.to_csv())?;
    ctx.write_json("deconvolve.json", &report)
}

#[derive(Serialize)]
struct BenchmarkReport<'a> {
    quantity: &'static str,
    photon_spectrum: &'static str,
    window: String,
    scenario: &'a SourceBenchmarkScenario,
    calibration: &'a benchmark::NoiseCalibration,
    max_snr: f64,
}

fn benchmark(a: &BenchmarkArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    if let Some(f) = a.window_fwhm_mhz {
        o.push(Override::exclusive("window_fwhm_mhz", f, &["window_path"]));
    }
    push(&mut o, "window_peak_efficiency", a.window_peak_efficiency);
    push(&mut o, "eta_src_points", a.eta_src_points.map(|n| n as i64));
    push(&mut o, "gamma_inhom_points", a.gamma_inhom_points.map(|n| n as i64));
    let table = section(ctx, "benchmark", o, false)?;
    let s: BenchmarkSection = parse_section("benchmark", &table)?;
    let window = match (s.window_fwhm_mhz, &s.window_path) {
        (Some(f), None) => AcceptanceWindow::Gaussian {
            fwhm_mhz: f,
            peak_efficiency: s.window_peak_efficiency,
        },
        (None, Some(p)) => {
            let mut c = SpectralCurve::read(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
            if c.values.iter().any(|v| *v < 0.0) {
                warn!("clamping negative acceptance-window values to zero");
                c.values.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let peak = c.max();
            if !(peak > 0.0) {
                return Err(CliError::runtime("acceptance window has no positive values"));
            }
            AcceptanceWindow::Curve {
                curve: c.scaled(s.window_peak_efficiency / peak),
            }
        }
        _ => {
            return Err(CliError::usage(
                "[benchmark]: set exactly one of `window_fwhm_mhz` or `window_path`",
            ))
        }
    };
    window.validate().map_err(config_err)?;
    let chain = chain(s.setup_transmission, s.detector_efficiency)?;
    let cal = benchmark::calibrate_noise(
        s.calibration_mean_photons,
        s.calibration_eta_int,
        &chain,
        s.calibration_snr,
    )
    .map_err(config_err)?;
    let scn = SourceBenchmarkScenario {
        eta_src: s.eta_src_max,
        eta_t: s.eta_t,
        eta_p: s.eta_p,
        eta_qd_mem: s.eta_qd_mem,
        gamma_hom_qd_mhz: s.gamma_hom_qd_mhz,
        gamma_inhom_mhz: s.gamma_inhom_min_mhz,
        repetition_rate_hz: s.repetition_rate_hz,
    };
    scn.validate().map_err(config_err)?;
    if s.eta_src_points == 0 || s.gamma_inhom_points == 0 {
        return Err(CliError::usage("[benchmark]: grid ranges must be non-empty"));
    }
    let etas = benchmark::linspace(s.eta_src_min, s.eta_src_max, s.eta_src_points);
    let gammas = benchmark::linspace(s.gamma_inhom_min_mhz, s.gamma_inhom_max_mhz, s.gamma_inhom_points);
    let grid = benchmark::snr_grid(&etas, &gammas, &scn, &window, &cal, &chain).map_err(config_err)?;
    let max_snr = grid.snr.iter().flatten().cloned().fold(0.0, f64::max);
    ctx.write("snr_grid.csv", grid.to_csv(&scn, &window, &cal))?;
    ctx.write_json(
        "benchmark.json",
        &BenchmarkReport {
            quantity: benchmark::SNR_LABEL,
            photon_spectrum: benchmark::PHOTON_SPECTRUM_MODEL,
            window: window.describe(),
            scenario: &scn,
            calibration: &cal,
            max_snr,
        },
    )
}

#[derive(Serialize)]
struct VaporReport {
    species: String,
    temperature_k: f64,
    thermal_velocity_m_s: f64,
    vapor_pressure_pa: f64,
    number_density_m3: f64,
    doppler_fwhm_signal_mhz: f64,
    doppler_fwhm_control_mhz: f64,
    spinwave_wavelength_um: Option<f64>,
    inhomogeneous_dephasing_time_ns: Option<f64>,
}

fn vapor_cmd(a: &VaporArgs, ctx: &mut Context) -> Result<(), CliError> {
    let mut o = Vec::new();
    if let Some(t) = a.temperature_k {
        o.push(Override::exclusive("temperature_k", t, &["temperature_c"]));
    }
    if let Some(t) = a.temperature_c {
        o.push(Override::exclusive("temperature_c", t, &["temperature_k"]));
    }
    let table = section(ctx, "vapor", o, false)?;
    let s: VaporSection = parse_section("vapor", &table)?;
    let temperature_k = match (s.temperature_k, s.temperature_c) {
        (Some(k), None) => k,
        (None, Some(c)) => crate::constants::celsius_to_kelvin(c),
        _ => {
            return Err(CliError::usage(
                "[vapor]: set exactly one of `temperature_k` or `temperature_c`",
            ))
        }
    };
    let species = SpeciesConstants::cesium();
    let cond = VaporConditions::new(temperature_k, species.atom.atomic_mass_kg, 0.025, 0.025).map_err(config_err)?;
    let pressure = species.vapor_pressure.pressure_pa(temperature_k).map_err(config_err)?;
    let v = vapor::thermal_velocity(&cond);
    let geometry = species.counter_propagating_geometry();
    let lambda = spinwave::spinwave_wavelength(&geometry)?.micrometers();
    let t_inhom = match lambda {
        Some(l) => spinwave::inhomogeneous_dephasing_time(l, v)?.ns(),
        None => None,
    };
    let report = VaporReport {
        species: species.atom.name.clone(),
        temperature_k,
        thermal_velocity_m_s: v,
        vapor_pressure_pa: pressure,
        number_density_m3: vapor::number_density(&cond, &species.vapor_pressure)?,
        doppler_fwhm_signal_mhz: vapor::doppler_fwhm(species.atom.signal_wavelength_m, &cond)?,
        doppler_fwhm_control_mhz: vapor::doppler_fwhm(species.atom.control_wavelength_m, &cond)?,
        spinwave_wavelength_um: lambda,
        inhomogeneous_dephasing_time_ns: t_inhom,
    };
    ctx.write_json("vapor.json", &report)
}
