//! Run configuration: one TOML file, one table per subcommand, strict keys.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::CliError;
use crate::spinwave::{HyperfineSplittings, Propagation, SpinwaveModelParams};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub verbosity: Option<String>,
    pub simulate_trace: Option<Table>,
    pub analyze: Option<Table>,
    pub fit_decay: Option<Table>,
    pub mc_dephase: Option<Table>,
    pub deconvolve: Option<Table>,
    pub benchmark: Option<Table>,
    pub vapor: Option<Table>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, dir))
    }

    pub fn section(&self, name: &str) -> Option<&Table> {
        match name {
            "simulate_trace" => self.simulate_trace.as_ref(),
            "analyze" => self.analyze.as_ref(),
            "fit_decay" => self.fit_decay.as_ref(),
            "mc_dephase" => self.mc_dephase.as_ref(),
            "deconvolve" => self.deconvolve.as_ref(),
            "benchmark" => self.benchmark.as_ref(),
            "vapor" => self.vapor.as_ref(),
            _ => None,
        }
    }
}

/// A flag value that replaces `key`, dropping any mutually exclusive keys.
pub struct Override {
    pub key: &'static str,
    pub value: Value,
    pub clears: &'static [&'static str],
}

impl Override {
    pub fn new(key: &'static str, value: impl Into<Value>) -> Self {
        Override {
            key,
            value: value.into(),
            clears: &[],
        }
    }

    pub fn exclusive(key: &'static str, value: impl Into<Value>, clears: &'static [&'static str]) -> Self {
        Override {
            key,
            value: value.into(),
            clears,
        }
    }
}

/// Config-file section with relative `*_path` entries anchored at the config
/// directory, then flag overrides applied.
pub fn effective_section(section: Option<&Table>, config_dir: Option<&Path>, overrides: Vec<Override>) -> Table {
    let mut table = section.cloned().unwrap_or_default();
    if let Some(dir) = config_dir {
        for (k, v) in table.iter_mut() {
            if k.ends_with("_path") {
                if let Value::String(s) = v {
                    let p = Path::new(s.as_str());
                    if p.is_relative() {
                        *s = dir.join(p).to_string_lossy().into_owned();
                    }
                }
            }
        }
    }
    for o in overrides {
        for c in o.clears {
            table.remove(*c);
        }
        table.insert(o.key.to_string(), o.value);
    }
    table
}

pub fn parse_section<T: DeserializeOwned>(name: &str, table: &Table) -> Result<T, CliError> {
    Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| CliError::usage(format!("[{name}]: {}", e.message())))
}

pub fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn default_threshold() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTraceSection {
    pub mean_photons: f64,
    pub repetition_rate_hz: f64,
    pub integration_time_s: f64,
    pub bin_width_ns: f64,
    pub pulse_fwhm_ns: f64,
    pub read_in_time_ns: f64,
    pub retrieval_time_ns: f64,
    pub read_in_efficiency: f64,
    pub setup_transmission: f64,
    pub detector_efficiency: f64,
    pub internal_efficiency: Option<f64>,
    pub model: Option<SpinwaveModelParams>,
    pub hyperfine: Option<HyperfineSplittings>,
    pub noise_rate_hz: Option<f64>,
    pub target_snr: Option<f64>,
    #[serde(default = "default_threshold")]
    pub window_threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub signal_path: PathBuf,
    pub reference_path: PathBuf,
    pub noise_path: PathBuf,
    pub setup_transmission: f64,
    pub detector_efficiency: f64,
    pub read_in_ns: Option<[f64; 2]>,
    pub read_out_ns: Option<[f64; 2]>,
    pub noise_ns: Option<[f64; 2]>,
    #[serde(default = "default_threshold")]
    pub threshold_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDecaySection {
    pub data_path: PathBuf,
    pub init: Option<SpinwaveModelParams>,
    pub hyperfine: Option<HyperfineSplittings>,
    #[serde(default)]
    pub fixed: Vec<String>,
    #[serde(default)]
    pub float_hyperfine: bool,
    pub curve_step_ns: Option<f64>,
    pub curve_end_ns: Option<f64>,
}

fn default_propagation() -> Propagation {
    Propagation::Counter
}

fn default_cell_m() -> f64 {
    0.025
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McDephaseSection {
    pub n_atoms: usize,
    pub temperature_k: f64,
    pub t_max_ns: f64,
    pub t_step_ns: f64,
    #[serde(default = "default_propagation")]
    pub propagation: Propagation,
    pub signal_wavelength_m: Option<f64>,
    pub control_wavelength_m: Option<f64>,
    #[serde(default = "default_cell_m")]
    pub cell_length_m: f64,
    #[serde(default = "default_cell_m")]
    pub cell_diameter_m: f64,
    /// Adds the five hyperfine components weighted by `model` amplitudes.
    #[serde(default)]
    pub beating: bool,
    pub model: Option<SpinwaveModelParams>,
    pub hyperfine: Option<HyperfineSplittings>,
    pub workers: Option<usize>,
}

fn default_epsilon() -> f64 {
    crate::spectral::DEFAULT_EPSILON
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvolveSection {
    pub measured_path: PathBuf,
    pub laser_path: Option<PathBuf>,
    pub laser_fwhm_mhz: Option<f64>,
    pub pulse_fwhm_ns: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn one() -> f64 {
    1.0
}
fn zero() -> f64 {
    0.0
}
fn eta_points() -> usize {
    21
}
fn gamma_max() -> f64 {
    3000.0
}
fn gamma_points() -> usize {
    31
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub eta_t: f64,
    pub eta_p: f64,
    pub eta_qd_mem: f64,
    pub gamma_hom_qd_mhz: f64,
    pub repetition_rate_hz: f64,
    pub window_fwhm_mhz: Option<f64>,
    pub window_path: Option<PathBuf>,
    #[serde(default = "one")]
    pub window_peak_efficiency: f64,
    pub calibration_mean_photons: f64,
    pub calibration_eta_int: f64,
    pub calibration_snr: f64,
    pub setup_transmission: f64,
    pub detector_efficiency: f64,
    #[serde(default = "zero")]
    pub eta_src_min: f64,
    #[serde(default = "one")]
    pub eta_src_max: f64,
    #[serde(default = "eta_points")]
    pub eta_src_points: usize,
    #[serde(default = "zero")]
    pub gamma_inhom_min_mhz: f64,
    #[serde(default = "gamma_max")]
    pub gamma_inhom_max_mhz: f64,
    #[serde(default = "gamma_points")]
    pub gamma_inhom_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaporSection {
    pub temperature_k: Option<f64>,
    pub temperature_c: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_top_level_key_rejected() {
        let err = toml::from_str::<RunConfig>("sede = 3\n").unwrap_err();
        assert!(err.to_string().contains("sede"));
    }

    #[test]
    fn missing_key_is_named() {
        let t: Table = toml::from_str("temperature_k = 300.0\nt_max_ns = 10.0\nt_step_ns = 1.0\n").unwrap();
        let err = parse_section::<McDephaseSection>("mc_dephase", &t).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("n_atoms"), "{}", err.message);
    }

    #[test]
    fn unknown_section_key_rejected() {
        let t: Table = toml::from_str("temperature_k = 300.0\ncolour = 1\n").unwrap();
        let err = parse_section::<VaporSection>("vapor", &t).unwrap_err();
        assert!(err.message.contains("colour"));
    }

    #[test]
    fn overrides_win_and_clear_alternatives() {
        let t: Table = toml::from_str("laser_path = \"e.csv\"\nmeasured_path = \"d.csv\"\nepsilon = 1e-4\n").unwrap();
        let eff = effective_section(
            Some(&t),
            Some(Path::new("/cfg")),
            vec![
                Override::exclusive("laser_fwhm_mhz", 440.0, &["laser_path", "pulse_fwhm_ns"]),
                Override::new("epsilon", 1e-6),
            ],
        );
        assert!(!eff.contains_key("laser_path"));
        assert_eq!(eff["epsilon"].as_float(), Some(1e-6));
        assert_eq!(eff["measured_path"].as_str(), Some("/cfg/d.csv"));
    }
}
