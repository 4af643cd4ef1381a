//! Optional TOML config: top-level `seed` and `scenario`, plus one table per
//! command whose keys mirror the long flag names with underscores.

use std::path::{Path, PathBuf};

use coexist_core::control::{ExperimentConfig, Timeline};
use serde::Deserialize;

use crate::args::{DetectorChoice, NormalizationChoice};
use crate::failure::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub scenario: Option<PathBuf>,
    pub experiment: Option<ExperimentConfig>,
    pub timeline: Option<Timeline>,
    pub generate: GenerateSection,
    pub dataset: DatasetSection,
    pub calibrate: CalibrateSection,
    pub detect: DetectorSection,
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub duration_s: Option<f64>,
    pub t0_s: Option<f64>,
    pub sample_rate_hz: Option<f64>,
    pub amplitude: Option<f64>,
    pub power: Option<f64>,
    pub bursts: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub out: Option<PathBuf>,
    pub per_cell: Option<usize>,
    pub radar_gains_db: Option<Vec<f64>>,
    pub cellular_gains_db: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub noise_iqb: Option<PathBuf>,
    pub windows: Option<usize>,
    pub target_pfa: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub out: Option<PathBuf>,
    pub detector: Option<DetectorChoice>,
    pub weights: Option<PathBuf>,
    pub allow_custom_arch: Option<bool>,
    pub normalization: Option<NormalizationChoice>,
    pub threshold: Option<f64>,
    pub threshold_file: Option<PathBuf>,
    pub vote_size: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(flatten)]
    pub detector: DetectorSection,
    pub target_pfa: Option<f64>,
    pub calibration_windows: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub deadline_ms: Option<f64>,
    pub duration_s: Option<f64>,
    pub bursts: Option<Vec<String>>,
    pub hold_count: Option<usize>,
    pub reconnect_delay_s: Option<f64>,
    pub measure_compute: Option<bool>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))
}
