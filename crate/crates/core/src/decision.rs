//! Tumbling majority votes over per-window verdicts, latency accounting and
//! the decision log.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorVerdict;
use crate::error::{Error, Result};
use crate::framing::WINDOW_LEN;
use crate::waveforms::DEFAULT_SAMPLE_RATE_HZ;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// An exact split counts as radar present.
    #[default]
    RadarWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    pub vote_size: usize,
    pub batch_size: usize,
    pub tie_rule: TieRule,
    pub window_len: usize,
    pub sample_rate_hz: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            vote_size: 100,
            batch_size: 10,
            tie_rule: TieRule::RadarWins,
            window_len: WINDOW_LEN,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vote_size == 0 {
            return Err(Error::validation("vote.vote_size", "must be >= 1"));
        }
        if self.batch_size == 0 || !self.vote_size.is_multiple_of(self.batch_size) {
            return Err(Error::validation(
                "vote.batch_size",
                format!("must be >= 1 and divide vote_size {}", self.vote_size),
            ));
        }
        if self.window_len == 0 {
            return Err(Error::validation("vote.window_len", "must be >= 1"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::validation("vote.sample_rate_hz", "must be > 0"));
        }
        Ok(())
    }

    /// Signal time covered by one vote, in ms.
    pub fn vote_period_ms(&self) -> f64 {
        (self.vote_size * self.window_len) as f64 / self.sample_rate_hz * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDecision {
    pub radar_present: bool,
    pub radar_count: usize,
    pub vote_size: usize,
    /// First window start and one past the last window's final sample.
    pub window_span: (u64, u64),
    pub sample_rate_hz: f64,
    pub signal_time_ms: f64,
    pub compute_time_ms: f64,
    pub latency_ms: f64,
}

impl VoteDecision {
    /// Time the decision becomes available: end of its span plus compute time.
    pub fn decided_at_s(&self) -> f64 {
        self.window_span.1 as f64 / self.sample_rate_hz + self.compute_time_ms / 1000.0
    }
}

pub fn vote_outcome(radar_count: usize, vote_size: usize, tie_rule: TieRule) -> bool {
    match tie_rule {
        TieRule::RadarWins => 2 * radar_count >= vote_size,
    }
}

pub fn majority(verdicts: &[DetectorVerdict], cfg: &VoteConfig) -> Result<VoteDecision> {
    majority_timed(verdicts, cfg, 0.0)
}

pub fn majority_timed(
    verdicts: &[DetectorVerdict],
    cfg: &VoteConfig,
    compute_time_ms: f64,
) -> Result<VoteDecision> {
    cfg.validate()?;
    if verdicts.len() != cfg.vote_size {
        return Err(Error::Usage(format!(
            "vote needs {} verdicts, got {}",
            cfg.vote_size,
            verdicts.len()
        )));
    }
    let radar_count = verdicts.iter().filter(|v| v.label == 1).count();
    let first = verdicts.iter().map(|v| v.window_start_sample).min().unwrap_or(0);
    let last = verdicts.iter().map(|v| v.window_start_sample).max().unwrap_or(0)
        + cfg.window_len as u64;
    let signal_time_ms = (last - first) as f64 / cfg.sample_rate_hz * 1000.0;
    Ok(VoteDecision {
        radar_present: vote_outcome(radar_count, cfg.vote_size, cfg.tie_rule),
        radar_count,
        vote_size: cfg.vote_size,
        window_span: (first, last),
        sample_rate_hz: cfg.sample_rate_hz,
        signal_time_ms,
        compute_time_ms,
        latency_ms: signal_time_ms + compute_time_ms,
    })
}

/// Buffers verdict batches and emits one decision per `vote_size` verdicts.
#[derive(Debug, Clone)]
pub struct VoteAccumulator {
    cfg: VoteConfig,
    buf: Vec<DetectorVerdict>,
}

impl VoteAccumulator {
    pub fn new(cfg: VoteConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            buf: Vec::with_capacity(cfg.vote_size),
            cfg,
        })
    }

    pub fn config(&self) -> &VoteConfig {
        &self.cfg
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    pub fn accumulate(&mut self, batch: &[DetectorVerdict]) -> Result<Option<VoteDecision>> {
        self.accumulate_timed(batch, 0.0)
    }

    /// As [`accumulate`](Self::accumulate); `compute_time_ms` is charged to the
    /// decision this batch completes, if any.
    pub fn accumulate_timed(
        &mut self,
        batch: &[DetectorVerdict],
        compute_time_ms: f64,
    ) -> Result<Option<VoteDecision>> {
        if batch.len() != self.cfg.batch_size {
            return Err(Error::Usage(format!(
                "batch holds {} verdicts; configured batch size is {}",
                batch.len(),
                self.cfg.batch_size
            )));
        }
        self.buf.extend_from_slice(batch);
        if self.buf.len() < self.cfg.vote_size {
            return Ok(None);
        }
        let d = majority_timed(&self.buf, &self.cfg, compute_time_ms)?;
        self.buf.clear();
        Ok(Some(d))
    }
}

/// Detection latency for a radar onset at `radar_onset_sample`.
pub fn latency(decision: &VoteDecision, radar_onset_sample: u64, fs: f64) -> Result<f64> {
    if !decision.radar_present {
        return Err(Error::Accounting("decision does not report radar".into()));
    }
    if radar_onset_sample > decision.window_span.1 {
        return Err(Error::Accounting(format!(
            "onset sample {radar_onset_sample} lies after the vote span ending at {}",
            decision.window_span.1
        )));
    }
    if !(fs > 0.0) {
        return Err(Error::Accounting(format!("sample rate must be > 0, got {fs}")));
    }
    Ok((decision.window_span.1 - radar_onset_sample) as f64 / fs * 1000.0 + decision.compute_time_ms)
}

/// One decision-log line.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLogEntry {
    pub timestamp_ms: f64,
    pub radar_count: usize,
    pub radar_present: bool,
    pub latency_ms: f64,
}

impl From<&VoteDecision> for DecisionLogEntry {
    fn from(d: &VoteDecision) -> Self {
        Self {
            timestamp_ms: d.decided_at_s() * 1000.0,
            radar_count: d.radar_count,
            radar_present: d.radar_present,
            latency_ms: d.latency_ms,
        }
    }
}

impl DecisionLogEntry {
    /// `timestamp_ms=<f> radar_count=<n> radar_present=<bool> latency_ms=<f>`
    pub fn to_line(&self) -> String {
        format!(
            "timestamp_ms={:.3} radar_count={} radar_present={} latency_ms={:.3}",
            self.timestamp_ms, self.radar_count, self.radar_present, self.latency_ms
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let (mut ts, mut count, mut present, mut lat) = (None, None, None, None);
        for field in line.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| format!("field `{field}` is not key=value"))?;
            let bad = |e: &dyn std::fmt::Display| format!("bad value for {k}: {e}");
            match k {
                "timestamp_ms" => ts = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
                "radar_count" => count = Some(v.parse::<usize>().map_err(|e| bad(&e))?),
                "radar_present" => present = Some(v.parse::<bool>().map_err(|e| bad(&e))?),
                "latency_ms" => lat = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
                _ => return Err(format!("unknown key `{k}`")),
            }
        }
        Ok(Self {
            timestamp_ms: ts.ok_or("missing timestamp_ms")?,
            radar_count: count.ok_or("missing radar_count")?,
            radar_present: present.ok_or("missing radar_present")?,
            latency_ms: lat.ok_or("missing latency_ms")?,
        })
    }
}

pub fn format_decision_log(decisions: &[VoteDecision]) -> String {
    let mut out = String::new();
    for d in decisions {
        let _ = writeln!(out, "{}", DecisionLogEntry::from(d).to_line());
    }
    out
}

pub fn write_decision_log(decisions: &[VoteDecision], path: &Path) -> Result<()> {
    std::fs::write(path, format_decision_log(decisions)).map_err(|e| Error::io(path, e))
}

pub fn read_decision_log(path: &Path) -> Result<Vec<DecisionLogEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            DecisionLogEntry::parse_line(l).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: {msg}", i + 1),
            })
        })
        .collect()
}
