//! Base-station control loop, traffic model, spectrogram and report export.

mod experiment;
mod report;
mod spectrogram;
mod state;

pub use experiment::{
    calibrate_energy_for_scenario, mean_std, run_experiment, run_experiment_partial, BsSample,
    Detection, Event, ExperimentConfig, ExperimentReport, ExperimentSummary, ThroughputSample,
    Timeline,
};
pub use report::{export_report, read_report, REPORT_FILES};
pub use spectrogram::{
    hann, magnitude_db, mean_frame, spectrogram, SpectrogramFrame, SpectrogramFrames, Stft,
    MAGNITUDE_EPS,
};
pub use state::{
    begin_reconnect, settle_reconnects, step_controller, ue_throughput, BsMode, BsState, Command,
    ControllerConfig, ControllerState, UeSession, UeState,
};
