//! The end-to-end timeline: sense, detect, vote, control, record.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::spectrogram::{mean_frame, SpectrogramFrames, Stft};
use super::state::{
    begin_reconnect, settle_reconnects, step_controller, ue_throughput, BsMode, Command,
    ControllerConfig, ControllerState, UeSession,
};
use crate::decision::{latency, vote_outcome, VoteAccumulator, VoteConfig, VoteDecision};
use crate::detector::{calibrate_energy_threshold, Detector};
use crate::error::{Error, Result};
use crate::framing::{radar_label, window_stream, WINDOW_LEN};
use crate::scenario::Scenario;
use crate::sensing::{derive_seed, SensingModel, SensingSpan};
use crate::waveforms::{validate_bursts, Burst};

const STREAM_VOTE: u64 = 0x766f_7465;
const STREAM_CALIBRATION: u64 = 0x6361_6c69;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timeline {
    pub duration_s: f64,
    pub bursts: Vec<Burst>,
}

impl Default for Timeline {
    fn default() -> Self {
        Self {
            duration_s: 120.0,
            bursts: vec![Burst::new(50.0, 90.0)],
        }
    }
}

impl Timeline {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::validation("timeline.duration_s", "must be > 0"));
        }
        validate_bursts(&self.bursts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vote: VoteConfig,
    pub controller: ControllerConfig,
    pub sensing: SensingModel,
    /// FFT size of the per-vote spectrogram frame.
    pub spectrogram_nfft: usize,
    /// Charge wall-clock inference time to each decision. Off by default so
    /// reports are reproducible byte for byte.
    pub measure_compute: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vote: VoteConfig::default(),
            controller: ControllerConfig::default(),
            sensing: SensingModel::default(),
            spectrogram_nfft: 256,
            measure_compute: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsSample {
    pub t_s: f64,
    pub mode: BsMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub t_s: f64,
    pub ue_id: String,
    pub mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub burst_index: usize,
    pub onset_s: f64,
    /// Index of the first radar decision covering the onset; `None` if missed.
    pub decision_index: Option<usize>,
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub detector: String,
    pub scenario_hash: String,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub n_decisions: usize,
    pub n_radar_decisions: usize,
    pub n_shutdowns: usize,
    pub n_turn_ons: usize,
    pub vacated_duration_s: f64,
    pub detections: Vec<Detection>,
    pub missed_bursts: usize,
    pub mean_latency_ms: Option<f64>,
    pub latency_std_ms: Option<f64>,
    pub window_accuracy: Option<f64>,
    pub decision_accuracy: Option<f64>,
    pub spectrogram_nfft: usize,
    pub spectrogram_hop: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub bs_trace: Vec<BsSample>,
    pub throughput_trace: Vec<ThroughputSample>,
    pub decisions: Vec<VoteDecision>,
    pub events: Vec<Event>,
    pub spectrogram: SpectrogramFrames,
    pub summary: ExperimentSummary,
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Energy threshold calibrated on the clear band while the BS transmits
/// (noise plus self-coupled cellular).
pub fn calibrate_energy_for_scenario(
    scn: &Scenario,
    sensing: &SensingModel,
    n_windows: usize,
    target_pfa: f64,
    seed: u64,
) -> Result<f64> {
    let span = SensingSpan::new(0.0, n_windows * WINDOW_LEN, &[], derive_seed(seed, STREAM_CALIBRATION, 0));
    let x = sensing.synthesize(scn, &span)?;
    calibrate_energy_threshold(&window_stream(&x, WINDOW_LEN)?, target_pfa)
}

pub fn run_experiment(
    scn: &Scenario,
    timeline: &Timeline,
    detector: &Detector,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let (report, err) = run_experiment_partial(scn, timeline, detector, cfg, seed);
    match err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Like [`run_experiment`], but returns whatever was recorded before an error.
pub fn run_experiment_partial(
    scn: &Scenario,
    timeline: &Timeline,
    detector: &Detector,
    cfg: &ExperimentConfig,
    seed: u64,
) -> (ExperimentReport, Option<Error>) {
    let mut rec = Recorder::new(scn, timeline, detector, cfg, seed);
    let err = rec.run().err();
    (rec.finish(), err)
}

struct Recorder<'a> {
    scn: &'a Scenario,
    timeline: &'a Timeline,
    detector: &'a Detector,
    cfg: &'a ExperimentConfig,
    seed: u64,
    bs_trace: Vec<BsSample>,
    throughput: Vec<ThroughputSample>,
    decisions: Vec<VoteDecision>,
    events: Vec<Event>,
    spectrogram: SpectrogramFrames,
    windows_total: usize,
    windows_correct: usize,
    decisions_correct: usize,
    completed: bool,
}

impl<'a> Recorder<'a> {
    fn new(
        scn: &'a Scenario,
        timeline: &'a Timeline,
        detector: &'a Detector,
        cfg: &'a ExperimentConfig,
        seed: u64,
    ) -> Self {
        let vote_samples = cfg.vote.vote_size * cfg.vote.window_len;
        Self {
            scn,
            timeline,
            detector,
            cfg,
            seed,
            bs_trace: Vec::new(),
            throughput: Vec::new(),
            decisions: Vec::new(),
            events: Vec::new(),
            spectrogram: SpectrogramFrames {
                nfft: cfg.spectrogram_nfft,
                hop: vote_samples,
                sample_rate_hz: scn.sample_rate_hz,
                frames: Vec::new(),
            },
            windows_total: 0,
            windows_correct: 0,
            decisions_correct: 0,
            completed: false,
        }
    }

    fn event(&mut self, t_s: f64, kind: &str, detail: impl Into<String>) {
        self.events.push(Event {
            t_s,
            kind: kind.to_string(),
            detail: detail.into(),
        });
    }

    fn run(&mut self) -> Result<()> {
        let cfg = self.cfg;
        self.timeline.validate()?;
        cfg.vote.validate()?;
        cfg.controller.validate()?;
        if cfg.vote.window_len != WINDOW_LEN {
            return Err(Error::validation("vote.window_len", format!("must be {WINDOW_LEN}")));
        }
        if cfg.vote.sample_rate_hz != self.scn.sample_rate_hz {
            return Err(Error::validation(
                "vote.sample_rate_hz",
                "must equal the scenario sample rate",
            ));
        }
        if cfg.vote.batch_size > self.detector.batch_size {
            return Err(Error::validation(
                "vote.batch_size",
                format!("exceeds the detector batch size {}", self.detector.batch_size),
            ));
        }
        let fs = self.scn.sample_rate_hz;
        let vote_samples = cfg.vote.vote_size * cfg.vote.window_len;
        let n_votes = (self.timeline.duration_s * fs / vote_samples as f64).floor() as usize;
        let mut stft = Stft::new(cfg.spectrogram_nfft)?;
        let mut acc = VoteAccumulator::new(cfg.vote)?;
        let mut ctl = ControllerState::transmitting(0.0);
        let mut sessions: Vec<UeSession> = self.scn.ues().map(|n| UeSession::connected(&n.id)).collect();
        let mut next_sample = 0usize;
        let bursts = self.timeline.bursts.clone();
        for (i, b) in bursts.iter().enumerate() {
            self.event(b.start_s, "radar_burst_start", format!("burst={i}"));
            self.event(b.end_s, "radar_burst_end", format!("burst={i}"));
        }

        for k in 0..n_votes {
            let start = (k * vote_samples) as u64;
            let t0 = start as f64 / fs;
            let t1 = (start + vote_samples as u64) as f64 / fs;
            self.bs_trace.push(BsSample {
                t_s: t0,
                mode: ctl.bs.mode,
            });
            loop {
                let t = next_sample as f64 * cfg.controller.throughput_sample_s;
                if t >= t1 {
                    break;
                }
                for (done_s, ue) in settle_reconnects(&mut sessions, t) {
                    self.event(done_s, "ue_reconnected", format!("ue={ue}"));
                }
                for (ue_id, mbps) in ue_throughput(&ctl.bs, &sessions, t, &cfg.controller) {
                    self.throughput.push(ThroughputSample { t_s: t, ue_id, mbps });
                }
                next_sample += 1;
            }

            let mut span = SensingSpan::new(t0, vote_samples, &bursts, derive_seed(self.seed, STREAM_VOTE, k as u64));
            span.cellular_on = ctl.bs.mode == BsMode::Transmitting;
            let x = cfg.sensing.synthesize(self.scn, &span)?;
            self.spectrogram.frames.push(mean_frame(&mut stft, &x)?);

            let windows = window_stream(&x, WINDOW_LEN)?;
            let mut decision = None;
            let mut truth_radar = 0usize;
            for batch in windows.chunks(cfg.vote.batch_size) {
                let clock = Instant::now();
                let verdicts = self.detector.classify_batch(batch)?;
                let d = acc.accumulate(&verdicts)?;
                let compute_ms = if cfg.measure_compute {
                    clock.elapsed().as_secs_f64() * 1000.0
                } else {
                    0.0
                };
                for (w, v) in batch.iter().zip(&verdicts) {
                    let truth = radar_label(w, &bursts);
                    truth_radar += truth as usize;
                    self.windows_correct += usize::from(truth == v.label);
                }
                if let Some(mut d) = d {
                    d.compute_time_ms = compute_ms;
                    d.latency_ms = d.signal_time_ms + compute_ms;
                    decision = Some(d);
                }
            }
            self.windows_total += windows.len();
            let d = decision.ok_or_else(|| Error::Accounting(format!("vote {k} produced no decision")))?;
            let truth = vote_outcome(truth_radar, cfg.vote.vote_size, cfg.vote.tie_rule);
            self.decisions_correct += usize::from(truth == d.radar_present);

            let (next, cmds) = step_controller(&ctl, &d, &cfg.controller)?;
            let t_dec = d.decided_at_s();
            for c in cmds {
                match c {
                    Command::Shutdown => {
                        self.event(t_dec, "shutdown", format!("radar_count={}", d.radar_count));
                    }
                    Command::TurnOn => {
                        self.event(t_dec, "turn_on", format!("radar_count={}", d.radar_count));
                        begin_reconnect(&mut sessions, t_dec, &cfg.controller);
                    }
                }
            }
            ctl = next;
            self.decisions.push(d);
        }
        self.completed = true;
        Ok(())
    }

    fn detections(&self) -> Vec<Detection> {
        let fs = self.scn.sample_rate_hz;
        self.timeline
            .bursts
            .iter()
            .enumerate()
            .filter(|(_, b)| b.start_s < self.timeline.duration_s)
            .map(|(i, b)| {
                let onset = (b.start_s * fs).round() as u64;
                let hit = self
                    .decisions
                    .iter()
                    .enumerate()
                    .find(|(_, d)| d.radar_present && d.window_span.1 > onset);
                let (decision_index, latency_ms) = match hit {
                    Some((j, d)) => (Some(j), latency(d, onset, fs).ok()),
                    None => (None, None),
                };
                Detection {
                    burst_index: i,
                    onset_s: b.start_s,
                    decision_index,
                    latency_ms,
                }
            })
            .collect()
    }

    fn finish(mut self) -> ExperimentReport {
        let detections = self.detections();
        for det in &detections {
            if let (Some(j), Some(ms)) = (det.decision_index, det.latency_ms) {
                let t = self.decisions[j].decided_at_s();
                self.event(t, "radar_detected", format!("burst={} latency_ms={ms}", det.burst_index));
            }
        }
        self.events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));

        let latencies: Vec<f64> = detections.iter().filter_map(|d| d.latency_ms).collect();
        let stats = mean_std(&latencies);
        let vote_s = self.spectrogram.hop as f64 / self.scn.sample_rate_hz;
        let n_decisions = self.decisions.len();
        let summary = ExperimentSummary {
            seed: self.seed,
            detector: self.detector.id().to_string(),
            scenario_hash: self.scn.content_hash(),
            duration_s: self.timeline.duration_s,
            sample_rate_hz: self.scn.sample_rate_hz,
            n_decisions,
            n_radar_decisions: self.decisions.iter().filter(|d| d.radar_present).count(),
            n_shutdowns: self.events.iter().filter(|e| e.kind == "shutdown").count(),
            n_turn_ons: self.events.iter().filter(|e| e.kind == "turn_on").count(),
            vacated_duration_s: self.bs_trace.iter().filter(|s| s.mode == BsMode::Vacated).count() as f64
                * vote_s,
            missed_bursts: detections.iter().filter(|d| d.decision_index.is_none()).count(),
            detections,
            mean_latency_ms: stats.map(|s| s.0),
            latency_std_ms: stats.map(|s| s.1),
            window_accuracy: (self.windows_total > 0)
                .then(|| self.windows_correct as f64 / self.windows_total as f64),
            decision_accuracy: (n_decisions > 0).then(|| self.decisions_correct as f64 / n_decisions as f64),
            spectrogram_nfft: self.spectrogram.nfft,
            spectrogram_hop: self.spectrogram.hop,
            completed: self.completed,
        };
        ExperimentReport {
            bs_trace: self.bs_trace,
            throughput_trace: self.throughput,
            decisions: self.decisions,
            events: self.events,
            spectrogram: self.spectrogram,
            summary,
        }
    }
}
