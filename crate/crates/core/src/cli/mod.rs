//! `laddermem` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
//! configuration error. A manifest is written to the output directory on
//! every run that gets far enough to know that directory.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use manifest::{Manifest, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

/// Maps library validation errors raised while building inputs to exit code 2.
pub(crate) fn config_err(e: crate::Error) -> CliError {
    CliError::usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "laddermem", version, about = "Ladder-memory modeling and trace analysis")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `output_dir` from the config, else `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize signal, reference and noise histograms.
    SimulateTrace(SimulateTraceArgs),
    /// Efficiencies and SNR from a histogram trio.
    Analyze(AnalyzeArgs),
    /// Fit the beating model to efficiency-vs-time data.
    FitDecay(FitDecayArgs),
    /// Monte-Carlo motional dephasing.
    McDephase(McDephaseArgs),
    /// Extract the acceptance window from a measured spectral curve.
    Deconvolve(DeconvolveArgs),
    /// SNR grid for single-photon sources.
    Benchmark(BenchmarkArgs),
    /// Vapor properties at one temperature.
    Vapor(VaporArgs),
}

impl Command {
    pub fn section(&self) -> &'static str {
        match self {
            Command::SimulateTrace(_) => "simulate_trace",
            Command::Analyze(_) => "analyze",
            Command::FitDecay(_) => "fit_decay",
            Command::McDephase(_) => "mc_dephase",
            Command::Deconvolve(_) => "deconvolve",
            Command::Benchmark(_) => "benchmark",
            Command::Vapor(_) => "vapor",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateTraceArgs {
    #[arg(long)]
    pub mean_photons: Option<f64>,
    #[arg(long)]
    pub internal_efficiency: Option<f64>,
    #[arg(long)]
    pub target_snr: Option<f64>,
    #[arg(long)]
    pub noise_rate_hz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    pub threshold_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitDecayArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub float_hyperfine: bool,
}

#[derive(Debug, Args)]
pub struct McDephaseArgs {
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub temperature_k: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub beating: bool,
}

#[derive(Debug, Args)]
pub struct DeconvolveArgs {
    #[arg(long)]
    pub measured: Option<PathBuf>,
    #[arg(long)]
    pub laser: Option<PathBuf>,
    #[arg(long)]
    pub laser_fwhm_mhz: Option<f64>,
    #[arg(long)]
    pub pulse_fwhm_ns: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub window_fwhm_mhz: Option<f64>,
    #[arg(long)]
    pub window_peak_efficiency: Option<f64>,
    #[arg(long)]
    pub eta_src_points: Option<usize>,
    #[arg(long)]
    pub gamma_inhom_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VaporArgs {
    #[arg(long)]
    pub temperature_k: Option<f64>,
    #[arg(long)]
    pub temperature_c: Option<f64>,
}

/// Per-run state shared by every command.
pub struct Context {
    pub out_dir: PathBuf,
    pub config: RunConfig,
    pub config_dir: Option<PathBuf>,
    pub global_seed: Option<u64>,
    pub seed: Option<u64>,
    pub rng: Option<&'static str>,
    pub config_sha256: Option<String>,
    pub outputs: Vec<String>,
}

impl Context {
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::runtime(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.global_seed
            .ok_or_else(|| CliError::usage("missing required key `seed` (top level or --seed)"))
    }
}

fn init_logging(verbose: u8, config_level: Option<&str>) {
    let level = match verbose {
        0 => config_level.unwrap_or("warn").to_string(),
        1 => "info".into(),
        _ => "debug".into(),
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init();
}

fn resolve_out_dir(cli: &Cli, cfg: &RunConfig, cfg_dir: Option<&Path>) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    match (&cfg.output_dir, cfg_dir) {
        (Some(d), Some(base)) if d.is_relative() => base.join(d),
        (Some(d), _) => d.clone(),
        (None, _) => PathBuf::from("out"),
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let started = manifest::timestamp();

    let (config, config_dir, load_error) = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok((c, d)) => (c, Some(d), None),
            Err(e) => (RunConfig::default(), None, Some(e)),
        },
        None => (RunConfig::default(), None, None),
    };
    init_logging(cli.verbose, config.verbosity.as_deref());
    let out_dir = resolve_out_dir(&cli, &config, config_dir.as_deref());
    let global_seed = cli.seed.or(config.seed);
    let mut ctx = Context {
        out_dir,
        config,
        config_dir,
        global_seed,
        seed: None,
        rng: None,
        config_sha256: None,
        outputs: Vec::new(),
    };

    let result = match load_error {
        Some(e) => Err(e),
        None => std::fs::create_dir_all(&ctx.out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", ctx.out_dir.display())))
            .and_then(|_| commands::dispatch(&cli.command, &mut ctx)),
    };

    let (code, error) = match &result {
        Ok(()) => (0, None),
        Err(e) => (e.code, Some(e.message.clone())),
    };
    if let Some(msg) = &error {
        eprintln!("error: {msg}");
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.section().replace('_', "-"),
        status: if code == 0 { "ok" } else { "failed" },
        exit_code: code,
        error,
        config_sha256: ctx.config_sha256.clone(),
        seed: ctx.seed,
        rng: ctx.rng,
        started_unix_s: started,
        finished_unix_s: manifest::timestamp(),
        outputs: ctx.outputs.clone(),
    };
    let written = std::fs::create_dir_all(&ctx.out_dir).and_then(|_| {
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(ctx.out_dir.join(MANIFEST_FILE), text)
    });
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e}");
        if code == 0 {
            return 1;
        }
    }
    code
}
