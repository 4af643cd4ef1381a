//! What the base station's sensing port receives over a span of signal time:
//! noise, its own downlink leaking in at the self-coupling gain, and the radar
//! arriving through the moving-ship channel.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::framing::WINDOW_LEN;
use crate::scenario::{apply_channel_piecewise, compute_taps, Scenario};
use crate::waveforms::{
    gen_awgn_at, gen_cellular_samples, gen_radar_at, mix, Burst, CellularWaveformConfig, IqStream,
    RadarWaveformConfig,
};

/// Signal levels and waveforms seen at the BS sensing port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingModel {
    /// Burst spans are ignored here; they are passed per call.
    pub radar: RadarWaveformConfig,
    pub cellular: CellularWaveformConfig,
    /// Gain applied to the BS's own downlink in the sensed mix.
    pub self_coupling_db: f64,
    /// Channel taps are refreshed every this many samples.
    pub tap_refresh_samples: usize,
}

impl Default for SensingModel {
    fn default() -> Self {
        Self {
            radar: RadarWaveformConfig::default(),
            cellular: CellularWaveformConfig {
                amplitude: 1e-5,
                ..Default::default()
            },
            self_coupling_db: -20.0,
            tap_refresh_samples: WINDOW_LEN,
        }
    }
}

/// Per-call knobs for [`SensingModel::synthesize`].
#[derive(Debug, Clone, Copy)]
pub struct SensingSpan<'a> {
    pub t0_s: f64,
    pub n: usize,
    pub cellular_on: bool,
    pub bursts: &'a [Burst],
    /// Extra gain on the radar path, relative to the geometric link.
    pub radar_gain_db: f64,
    /// Extra gain on the self-coupled downlink.
    pub cellular_gain_db: f64,
    /// Time on the ship trajectory corresponding to `t0_s`.
    pub trajectory_t0_s: f64,
    pub seed: u64,
}

impl<'a> SensingSpan<'a> {
    pub fn new(t0_s: f64, n: usize, bursts: &'a [Burst], seed: u64) -> Self {
        Self {
            t0_s,
            n,
            cellular_on: true,
            bursts,
            radar_gain_db: 0.0,
            cellular_gain_db: 0.0,
            trajectory_t0_s: t0_s,
            seed,
        }
    }
}

/// SplitMix64 finalizer over `(base, stream, index)`; gives independent
/// sub-seeds for each synthesized component.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_NOISE: u64 = 1;
const STREAM_CELLULAR: u64 = 2;
const STREAM_RADAR: u64 = 3;

impl SensingModel {
    pub fn synthesize(&self, scn: &Scenario, span: &SensingSpan<'_>) -> Result<IqStream> {
        let fs = scn.sample_rate_hz;
        let noise = gen_awgn_at(
            scn.noise_power,
            span.t0_s,
            span.n,
            fs,
            derive_seed(span.seed, STREAM_NOISE, 0),
        )?;
        let mut parts: Vec<(IqStream, f64)> = vec![(noise, 0.0)];

        if span.cellular_on {
            let cell = gen_cellular_samples(
                &self.cellular,
                span.t0_s,
                span.n,
                fs,
                derive_seed(span.seed, STREAM_CELLULAR, 0),
            )?;
            parts.push((cell, self.self_coupling_db + span.cellular_gain_db));
        }

        let t1 = span.t0_s + span.n as f64 / fs;
        if span.bursts.iter().any(|b| b.start_s < t1 && b.end_s > span.t0_s) {
            parts.push((self.received_radar(scn, span)?, span.radar_gain_db));
        }

        let refs: Vec<(&IqStream, f64)> = parts.iter().map(|(s, g)| (s, *g)).collect();
        let mut out = mix(&refs)?;
        out.samples.truncate(span.n);
        Ok(out)
    }

    fn received_radar(&self, scn: &Scenario, span: &SensingSpan<'_>) -> Result<IqStream> {
        let fs = scn.sample_rate_hz;
        let seg = self.tap_refresh_samples.max(1);
        let n_seg = span.n.div_ceil(seg);
        let taps = (0..n_seg)
            .map(|i| {
                let t = span.trajectory_t0_s + (i * seg) as f64 / fs;
                compute_taps(scn, scn.radar(), scn.bs(), t, scn.carrier_hz_radar)
            })
            .collect::<Result<Vec<_>>>()?;
        let history = taps.iter().map(|h| h.max_delay()).max().unwrap_or(0);
        let cfg = RadarWaveformConfig {
            burst_spans: span.bursts.to_vec(),
            ..self.radar.clone()
        };
        let tx = gen_radar_at(
            &cfg,
            span.t0_s - history as f64 / fs,
            span.n + history,
            fs,
            derive_seed(span.seed, STREAM_RADAR, 0),
        )?;
        apply_channel_piecewise(&tx, history, seg, &taps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stream_and_index() {
        let a = derive_seed(7, 1, 0);
        assert_ne!(a, derive_seed(7, 2, 0));
        assert_ne!(a, derive_seed(7, 1, 1));
        assert_ne!(a, derive_seed(8, 1, 0));
        assert_eq!(a, derive_seed(7, 1, 0));
    }

    #[test]
    fn sensed_power_tracks_components() {
        let scn = Scenario::default_waikiki();
        let model = SensingModel::default();
        let n = 10 * WINDOW_LEN;
        let mut span = SensingSpan::new(10.0, n, &[], 3);
        span.cellular_on = false;
        let quiet = model.synthesize(&scn, &span).unwrap();
        assert_eq!(quiet.len(), n);
        assert!((quiet.power() / scn.noise_power - 1.0).abs() < 0.05);

        span.cellular_on = true;
        let busy = model.synthesize(&scn, &span).unwrap();
        assert!((busy.power() / scn.noise_power - 2.0).abs() < 0.1);

        let bursts = [Burst::new(0.0, 100.0)];
        let span = SensingSpan::new(10.0, n, &bursts, 3);
        let radar = model.synthesize(&scn, &span).unwrap();
        assert!(radar.power() > 10.0 * busy.power());
    }
}
