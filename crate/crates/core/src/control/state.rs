//! Base-station vacate/resume controller and the UE rate allocator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decision::VoteDecision;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Consecutive clean decisions required before resuming.
    pub hold_count: usize,
    pub reconnect_delay_s: f64,
    pub aggregate_rate_mbps: f64,
    pub throughput_sample_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            hold_count: 1,
            reconnect_delay_s: 2.0,
            aggregate_rate_mbps: 12.0,
            throughput_sample_s: 0.1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hold_count == 0 {
            return Err(Error::validation("controller.hold_count", "must be >= 1"));
        }
        if !(self.reconnect_delay_s >= 0.0 && self.reconnect_delay_s.is_finite()) {
            return Err(Error::validation("controller.reconnect_delay_s", "must be >= 0"));
        }
        if !(self.aggregate_rate_mbps >= 0.0 && self.aggregate_rate_mbps.is_finite()) {
            return Err(Error::validation("controller.aggregate_rate_mbps", "must be >= 0"));
        }
        if !(self.throughput_sample_s > 0.0 && self.throughput_sample_s.is_finite()) {
            return Err(Error::validation("controller.throughput_sample_s", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsMode {
    Transmitting,
    Vacated,
}

impl fmt::Display for BsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BsMode::Transmitting => "transmitting",
            BsMode::Vacated => "vacated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsState {
    pub mode: BsMode,
    pub since_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Shutdown,
    TurnOn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub bs: BsState,
    /// Consecutive non-radar decisions seen while vacated.
    pub clean_streak: usize,
    pub last_decision_s: Option<f64>,
}

impl ControllerState {
    pub fn transmitting(t_s: f64) -> Self {
        Self {
            bs: BsState {
                mode: BsMode::Transmitting,
                since_s: t_s,
            },
            clean_streak: 0,
            last_decision_s: None,
        }
    }
}

pub fn step_controller(
    state: &ControllerState,
    d: &VoteDecision,
    cfg: &ControllerConfig,
) -> Result<(ControllerState, Vec<Command>)> {
    let t = d.decided_at_s();
    if let Some(prev) = state.last_decision_s {
        if t < prev {
            return Err(Error::Sequencing(format!(
                "decision at {t} s arrived after one at {prev} s"
            )));
        }
    }
    let mut next = ControllerState {
        last_decision_s: Some(t),
        ..*state
    };
    let mut cmds = Vec::new();
    match (state.bs.mode, d.radar_present) {
        (BsMode::Transmitting, true) => {
            next.bs = BsState {
                mode: BsMode::Vacated,
                since_s: t,
            };
            next.clean_streak = 0;
            cmds.push(Command::Shutdown);
        }
        (BsMode::Vacated, true) => next.clean_streak = 0,
        (BsMode::Vacated, false) => {
            next.clean_streak += 1;
            if next.clean_streak >= cfg.hold_count {
                next.bs = BsState {
                    mode: BsMode::Transmitting,
                    since_s: t,
                };
                next.clean_streak = 0;
                cmds.push(Command::TurnOn);
            }
        }
        (BsMode::Transmitting, false) => {}
    }
    Ok((next, cmds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeState {
    Connected,
    Reconnecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSession {
    pub ue_id: String,
    pub state: UeState,
    pub reconnect_done_s: f64,
}

impl UeSession {
    pub fn connected(ue_id: impl Into<String>) -> Self {
        Self {
            ue_id: ue_id.into(),
            state: UeState::Connected,
            reconnect_done_s: 0.0,
        }
    }

    fn active_at(&self, t_s: f64) -> bool {
        self.state == UeState::Connected || t_s >= self.reconnect_done_s
    }
}

/// Starts reconnects for every session after a turn-on at `t_s`.
pub fn begin_reconnect(sessions: &mut [UeSession], t_s: f64, cfg: &ControllerConfig) {
    for s in sessions {
        s.state = UeState::Reconnecting;
        s.reconnect_done_s = t_s + cfg.reconnect_delay_s;
    }
}

/// Marks reconnects finished by `t_s` as connected; returns `(done_s, ue_id)` for each.
pub fn settle_reconnects(sessions: &mut [UeSession], t_s: f64) -> Vec<(f64, String)> {
    let mut done = Vec::new();
    for s in sessions {
        if s.state == UeState::Reconnecting && s.reconnect_done_s <= t_s {
            s.state = UeState::Connected;
            done.push((s.reconnect_done_s, s.ue_id.clone()));
        }
    }
    done
}

/// Per-UE downlink rate at `t_s`: the aggregate split equally among active UEs.
pub fn ue_throughput(
    bs: &BsState,
    sessions: &[UeSession],
    t_s: f64,
    cfg: &ControllerConfig,
) -> Vec<(String, f64)> {
    let active = sessions.iter().filter(|s| s.active_at(t_s)).count();
    sessions
        .iter()
        .map(|s| {
            let rate = if bs.mode == BsMode::Transmitting && s.active_at(t_s) {
                cfg.aggregate_rate_mbps / active as f64
            } else {
                0.0
            };
            (s.ue_id.clone(), rate)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(radar: bool, end_sample: u64) -> VoteDecision {
        VoteDecision {
            radar_present: radar,
            radar_count: if radar { 100 } else { 0 },
            vote_size: 100,
            window_span: (end_sample - 102_400, end_sample),
            sample_rate_hz: 1.024e6,
            signal_time_ms: 100.0,
            compute_time_ms: 0.0,
            latency_ms: 100.0,
        }
    }

    #[test]
    fn vacate_and_resume() {
        let cfg = ControllerConfig::default();
        let s0 = ControllerState::transmitting(0.0);
        let (s1, c) = step_controller(&s0, &decision(true, 102_400), &cfg).unwrap();
        assert_eq!((s1.bs.mode, c), (BsMode::Vacated, vec![Command::Shutdown]));
        assert_eq!(s1.bs.since_s, 0.1);
        let (s2, c) = step_controller(&s1, &decision(true, 204_800), &cfg).unwrap();
        assert_eq!((s2.bs.mode, c.len()), (BsMode::Vacated, 0));
        let (s3, c) = step_controller(&s2, &decision(false, 307_200), &cfg).unwrap();
        assert_eq!((s3.bs.mode, c), (BsMode::Transmitting, vec![Command::TurnOn]));
        let (s4, c) = step_controller(&s3, &decision(false, 409_600), &cfg).unwrap();
        assert_eq!((s4.bs.mode, c.len()), (BsMode::Transmitting, 0));
    }

    #[test]
    fn hold_count_requires_consecutive_clean_votes() {
        let cfg = ControllerConfig {
            hold_count: 2,
            ..Default::default()
        };
        let mut s = ControllerState::transmitting(0.0);
        let mut end = 0;
        let mut modes = Vec::new();
        for radar in [true, false, true, false, false] {
            end += 102_400;
            s = step_controller(&s, &decision(radar, end), &cfg).unwrap().0;
            modes.push(s.bs.mode);
        }
        use BsMode::*;
        assert_eq!(modes, [Vacated, Vacated, Vacated, Vacated, Transmitting]);
    }

    #[test]
    fn out_of_order_is_sequencing_error() {
        let cfg = ControllerConfig::default();
        let s = ControllerState::transmitting(0.0);
        let (s, _) = step_controller(&s, &decision(false, 204_800), &cfg).unwrap();
        assert!(matches!(
            step_controller(&s, &decision(false, 102_400), &cfg),
            Err(Error::Sequencing(_))
        ));
    }

    #[test]
    fn throughput_split() {
        let cfg = ControllerConfig::default();
        let mut sessions: Vec<UeSession> = (1..=6).map(|i| UeSession::connected(format!("ue{i}"))).collect();
        let on = BsState {
            mode: BsMode::Transmitting,
            since_s: 0.0,
        };
        let off = BsState {
            mode: BsMode::Vacated,
            since_s: 0.0,
        };
        assert!(ue_throughput(&on, &sessions, 1.0, &cfg).iter().all(|(_, r)| *r == 2.0));
        assert!(ue_throughput(&off, &sessions, 1.0, &cfg).iter().all(|(_, r)| *r == 0.0));

        begin_reconnect(&mut sessions[..3], 10.0, &cfg);
        let rates = ue_throughput(&on, &sessions, 11.0, &cfg);
        let r: Vec<f64> = rates.iter().map(|(_, r)| *r).collect();
        assert_eq!(r, [0.0, 0.0, 0.0, 4.0, 4.0, 4.0]);
        assert!(settle_reconnects(&mut sessions, 11.9).is_empty());
        assert_eq!(settle_reconnects(&mut sessions, 12.0).len(), 3);
        assert!(ue_throughput(&on, &sessions, 12.0, &cfg).iter().all(|(_, r)| *r == 2.0));
    }
}
