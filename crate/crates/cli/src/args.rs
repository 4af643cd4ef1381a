use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coexist", version, about = "Radar/cellular spectrum coexistence simulator")]
pub struct Cli {
    /// TOML file supplying defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an IQ recording (.iqb plus .iqb.json sidecar).
    Generate(GenerateArgs),
    /// Build the labeled training mix (.dsb plus .dsb.json sidecar).
    GenDataset(GenDatasetArgs),
    /// Calibrate the energy detector threshold to a false-alarm target.
    Calibrate(CalibrateArgs),
    /// Run detection and voting over a recording and write a decision log.
    Detect(DetectArgs),
    /// Run the full timeline experiment and export a report directory.
    Run(RunArgs),
    /// Write randomly initialized (untrained) canonical CNN weights.
    InitWeights(InitWeightsArgs),
    /// Write the 4-window parity input batch.
    Fixture(FixtureArgs),
    /// Compare this engine's activations with a golden activation file.
    Parity(ParityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalKind {
    Radar,
    Cellular,
    Noise,
    /// The BS sensing-port mix from a scenario.
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorChoice {
    Energy,
    Cnn,
    /// Ground-truth labels from burst spans.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationChoice {
    UnitRms,
    MaxAbs,
    None,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Seed for every random draw; equal seeds give identical output.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: SignalKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub t0_s: Option<f64>,
    #[arg(long)]
    pub sample_rate_hz: Option<f64>,
    /// Peak (radar) or RMS (cellular) amplitude.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Noise power for `noise`; extra AWGN for `radar` and `cellular`.
    #[arg(long)]
    pub power: Option<f64>,
    /// Radar burst spans as `start:end` seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bursts: Option<Vec<String>>,
    /// Scenario TOML for `scene` (default: the shipped scenario).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub per_cell: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub radar_gains_db: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cellular_gains_db: Option<Vec<f64>>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Calibrate on windows of this recording instead of synthesized clear-band IQ.
    #[arg(long)]
    pub noise_iqb: Option<PathBuf>,
    /// Synthesized calibration windows.
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub target_pfa: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, value_enum)]
    pub detector: Option<DetectorChoice>,
    /// CNN weights (.cnw).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Accept weights whose architecture hash differs from the canonical one.
    #[arg(long)]
    pub allow_custom_arch: bool,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationChoice>,
    /// Energy threshold; overrides --threshold-file.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold file written by `calibrate`.
    #[arg(long)]
    pub threshold_file: Option<PathBuf>,
    #[arg(long)]
    pub vote_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// False-alarm target when the energy threshold is auto-calibrated.
    #[arg(long)]
    pub target_pfa: Option<f64>,
    #[arg(long)]
    pub calibration_windows: Option<usize>,
    /// Parent directory for the timestamped run directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Exact report directory; overrides --output-dir.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Mean detection latency above this (or a missed burst) exits with 4.
    #[arg(long)]
    pub deadline_ms: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Radar burst spans as `start:end` seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bursts: Option<Vec<String>>,
    #[arg(long)]
    pub hold_count: Option<usize>,
    #[arg(long)]
    pub reconnect_delay_s: Option<f64>,
    /// Charge measured inference time to each decision (reports stop being reproducible).
    #[arg(long)]
    pub measure_compute: bool,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct ParityArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub goldens: PathBuf,
    /// Input batch (default: the built-in fixture).
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub allow_custom_arch: bool,
    #[command(flatten)]
    pub seed: SeedArg,
}
