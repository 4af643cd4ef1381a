//! Node geometry, constant-velocity mobility and a log-distance
//! line-of-sight channel.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::read_file;
use crate::error::{Error, Result};
use crate::waveforms::{IqStream, DEFAULT_SAMPLE_RATE_HZ};

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;
pub const KNOT_MPS: f64 = 1852.0 / 3600.0;

const DEFAULT_SCENARIO: &str = include_str!("../scenarios/waikiki.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Bs,
    Ue,
    Radar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub position0: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

impl Node {
    pub fn speed(&self) -> f64 {
        norm(self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub carrier_hz_cellular: f64,
    pub carrier_hz_radar: f64,
    pub sample_rate_hz: f64,
    pub noise_power: f64,
    pub pathloss_exponent: f64,
    pub ship_speed_mps: f64,
}

/// On-disk form; everything but `nodes` may be omitted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    nodes: Vec<NodeFile>,
    carrier_hz_cellular: Option<f64>,
    carrier_hz_radar: Option<f64>,
    sample_rate_hz: Option<f64>,
    noise_power: Option<f64>,
    pathloss_exponent: Option<f64>,
    ship_speed_mps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: String,
    kind: NodeKind,
    position0: [f64; 3],
    velocity: Option<[f64; 3]>,
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl Scenario {
    /// The shipped beach scenario (`scenarios/waikiki.toml`).
    pub fn default_waikiki() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO).expect("shipped scenario is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<scenario>".into(),
            msg: e.to_string(),
        })?;
        Self::from_file_form(raw)
    }

    fn from_file_form(raw: ScenarioFile) -> Result<Self> {
        let ship_speed_mps = raw.ship_speed_mps.unwrap_or(20.0 * KNOT_MPS);
        let nodes = raw
            .nodes
            .into_iter()
            .map(|n| {
                let velocity = n.velocity.unwrap_or(match n.kind {
                    NodeKind::Radar => [0.0, -ship_speed_mps, 0.0],
                    _ => [0.0; 3],
                });
                Node {
                    id: n.id,
                    kind: n.kind,
                    position0: n.position0,
                    velocity,
                }
            })
            .collect();
        let scn = Scenario {
            nodes,
            carrier_hz_cellular: raw.carrier_hz_cellular.unwrap_or(980e6),
            carrier_hz_radar: raw.carrier_hz_radar.unwrap_or(980e6),
            sample_rate_hz: raw.sample_rate_hz.unwrap_or(DEFAULT_SAMPLE_RATE_HZ),
            noise_power: raw.noise_power.unwrap_or(1e-12),
            pathloss_exponent: raw.pathloss_exponent.unwrap_or(2.0),
            ship_speed_mps,
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz_cellular", self.carrier_hz_cellular),
            ("carrier_hz_radar", self.carrier_hz_radar),
            ("sample_rate_hz", self.sample_rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::validation("noise_power", "must be >= 0"));
        }
        if !(self.pathloss_exponent >= 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::validation("pathloss_exponent", "must be >= 0"));
        }

        let mut seen = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !seen.insert(n.id.as_str()) {
                return Err(Error::validation(
                    format!("nodes[{i}].id"),
                    format!("duplicate node id `{}`", n.id),
                ));
            }
            if n.position0.iter().chain(&n.velocity).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("nodes[{i}]"), "non-finite coordinate"));
            }
            if n.position0[2] <= 0.0 {
                return Err(Error::validation(
                    format!("nodes[{i}].position0"),
                    format!("node `{}` must be above ground (z > 0)", n.id),
                ));
            }
            match n.kind {
                NodeKind::Bs | NodeKind::Ue if n.speed() != 0.0 => {
                    return Err(Error::validation(
                        format!("nodes[{i}].velocity"),
                        format!("node `{}` must be static", n.id),
                    ));
                }
                NodeKind::Radar
                    if (n.speed() - self.ship_speed_mps).abs()
                        > 1e-3 * self.ship_speed_mps.max(1e-9) =>
                {
                    return Err(Error::validation(
                        format!("nodes[{i}].velocity"),
                        format!(
                            "radar speed {} m/s differs from ship_speed_mps {}",
                            n.speed(),
                            self.ship_speed_mps
                        ),
                    ));
                }
                _ => {}
            }
        }
        let count = |k: NodeKind| self.nodes.iter().filter(|n| n.kind == k).count();
        if count(NodeKind::Bs) != 1 {
            return Err(Error::validation("nodes", "exactly one bs node required"));
        }
        if count(NodeKind::Radar) != 1 {
            return Err(Error::validation("nodes", "exactly one radar node required"));
        }
        if count(NodeKind::Ue) == 0 {
            return Err(Error::validation("nodes", "at least one ue node required"));
        }
        Ok(())
    }

    fn single(&self, kind: NodeKind) -> &Node {
        self.nodes
            .iter()
            .find(|n| n.kind == kind)
            .expect("validated scenario")
    }

    pub fn bs(&self) -> &Node {
        self.single(NodeKind::Bs)
    }

    pub fn radar(&self) -> &Node {
        self.single(NodeKind::Radar)
    }

    pub fn ues(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Ue)
    }

    /// SHA-256 over the canonical JSON rendering, hex encoded.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Scenario::from_file_form(raw)
}

pub fn position_at(node: &Node, t_s: f64) -> [f64; 3] {
    let p = node.position0;
    let v = node.velocity;
    [p[0] + v[0] * t_s, p[1] + v[1] * t_s, p[2] + v[2] * t_s]
}

/// Free-space loss at the 1 m reference distance.
pub fn fspl_reference_db(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * PI * carrier_hz / SPEED_OF_LIGHT_MPS).log10()
}

pub fn path_loss_db(distance_m: f64, carrier_hz: f64, exponent: f64) -> f64 {
    fspl_reference_db(carrier_hz) + 10.0 * exponent * distance_m.log10()
}

/// Tapped delay line. Delays are in samples, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    pub delays_samples: Vec<usize>,
    pub gains: Vec<Complex64>,
}

impl ChannelTaps {
    pub fn new(delays_samples: Vec<usize>, gains: Vec<Complex64>) -> Result<Self> {
        if delays_samples.is_empty() || delays_samples.len() != gains.len() {
            return Err(Error::Config(format!(
                "taps need matching non-empty lists, got {} delays and {} gains",
                delays_samples.len(),
                gains.len()
            )));
        }
        if delays_samples.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("tap delays must be strictly increasing".into()));
        }
        Ok(Self {
            delays_samples,
            gains,
        })
    }

    pub fn identity() -> Self {
        Self {
            delays_samples: vec![0],
            gains: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn max_delay(&self) -> usize {
        *self.delays_samples.last().expect("at least one tap")
    }
}

/// Single line-of-sight tap between `tx` and `rx` at time `t_s`.
pub fn compute_taps(
    scn: &Scenario,
    tx: &Node,
    rx: &Node,
    t_s: f64,
    carrier_hz: f64,
) -> Result<ChannelTaps> {
    if tx.id == rx.id {
        return Err(Error::DegenerateGeometry(format!(
            "link from `{}` to itself",
            tx.id
        )));
    }
    let a = position_at(tx, t_s);
    let b = position_at(rx, t_s);
    let d = norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "`{}` and `{}` coincide at t = {t_s} s",
            tx.id, rx.id
        )));
    }
    let pl = path_loss_db(d, carrier_hz, scn.pathloss_exponent);
    let magnitude = 10f64.powf(-pl / 20.0);
    let phase = -2.0 * PI * carrier_hz * d / SPEED_OF_LIGHT_MPS;
    let delay = (d / SPEED_OF_LIGHT_MPS * scn.sample_rate_hz).round() as usize;
    Ok(ChannelTaps {
        delays_samples: vec![delay],
        gains: vec![Complex64::from_polar(magnitude, phase)],
    })
}

/// FIR application: `y[k] = Σ gains[i] · x[k − delays[i]]`, same length as `x`.
pub fn apply_channel(x: &IqStream, h: &ChannelTaps) -> IqStream {
    let samples = fir(&x.samples, 0, &[(x.len(), h)]);
    IqStream {
        sample_rate_hz: x.sample_rate_hz,
        t0_s: x.t0_s,
        samples,
    }
}

/// Time-varying FIR: output segment `i` (length `segment_len`) uses `taps[i]`.
///
/// The first `history` samples of `x` are look-back only; the output starts
/// after them, so delays up to `history` read real signal rather than zeros.
pub fn apply_channel_piecewise(
    x: &IqStream,
    history: usize,
    segment_len: usize,
    taps: &[ChannelTaps],
) -> Result<IqStream> {
    if segment_len == 0 || history > x.len() {
        return Err(Error::Config(format!(
            "invalid piecewise channel: segment_len {segment_len}, history {history}, len {}",
            x.len()
        )));
    }
    let out_len = x.len() - history;
    if taps.len() < out_len.div_ceil(segment_len) {
        return Err(Error::Config(format!(
            "{} tap sets cannot cover {} segments",
            taps.len(),
            out_len.div_ceil(segment_len)
        )));
    }
    let segments: Vec<(usize, &ChannelTaps)> = taps
        .iter()
        .scan(out_len, |left, h| {
            if *left == 0 {
                return None;
            }
            let n = segment_len.min(*left);
            *left -= n;
            Some((n, h))
        })
        .collect();
    let samples = fir(&x.samples, history, &segments);
    Ok(IqStream {
        sample_rate_hz: x.sample_rate_hz,
        t0_s: x.t0_s + history as f64 / x.sample_rate_hz,
        samples,
    })
}

fn fir(x: &[Complex32], history: usize, segments: &[(usize, &ChannelTaps)]) -> Vec<Complex32> {
    let mut out = Vec::with_capacity(x.len() - history);
    let mut k = history;
    for (len, h) in segments {
        for _ in 0..*len {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&d, g) in h.delays_samples.iter().zip(&h.gains) {
                if let Some(idx) = k.checked_sub(d) {
                    let s = x[idx];
                    acc += g * Complex64::new(s.re as f64, s.im as f64);
                }
            }
            out.push(Complex32::new(acc.re as f32, acc.im as f32));
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::gen_awgn;

    fn node(id: &str, kind: NodeKind, p: [f64; 3]) -> Node {
        Node {
            id: id.into(),
            kind,
            position0: p,
            velocity: [0.0; 3],
        }
    }

    #[test]
    fn shipped_scenario_geometry() {
        let scn = Scenario::default_waikiki();
        assert_eq!(scn.bs().position0[2], 3.0);
        assert_eq!(scn.ues().count(), 6);
        assert!(scn.ues().all(|u| u.position0[2] == 1.0));
        assert_eq!(scn.radar().position0[2], 3.0);
        assert!((scn.radar().speed() - 20.0 * KNOT_MPS).abs() < 1e-9);
    }

    #[test]
    fn validation_errors_name_the_field() {
        let dup = r#"
            [[nodes]]
            id = "a"
            kind = "bs"
            position0 = [0, 0, 3]
            [[nodes]]
            id = "a"
            kind = "ue"
            position0 = [1, 0, 1]
            [[nodes]]
            id = "r"
            kind = "radar"
            position0 = [9, 9, 3]
        "#;
        match Scenario::from_toml_str(dup) {
            Err(Error::Validation { path, msg }) => {
                assert_eq!(path, "nodes[1].id");
                assert!(msg.contains("`a`"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let no_ue = r#"
            [[nodes]]
            id = "b"
            kind = "bs"
            position0 = [0, 0, 3]
            [[nodes]]
            id = "r"
            kind = "radar"
            position0 = [9, 9, 3]
        "#;
        assert!(matches!(
            Scenario::from_toml_str(no_ue),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(
            Scenario::from_toml_str("nodes = 3"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn radar_velocity_defaults_to_southbound_ship_speed() {
        let text = r#"
            ship_speed_mps = 10.0
            [[nodes]]
            id = "b"
            kind = "bs"
            position0 = [0, 0, 3]
            [[nodes]]
            id = "u"
            kind = "ue"
            position0 = [5, 0, 1]
            [[nodes]]
            id = "r"
            kind = "radar"
            position0 = [0, 500, 3]
        "#;
        let scn = Scenario::from_toml_str(text).unwrap();
        let p = position_at(scn.radar(), 10.0);
        assert!((p[1] - 400.0).abs() < 1e-12);
        assert_eq!(position_at(scn.radar(), 0.0), [0.0, 500.0, 3.0]);
        let ue = scn.ues().next().unwrap();
        assert_eq!(position_at(ue, 1234.5), ue.position0);
    }

    #[test]
    fn path_loss_reference_values() {
        let reference = 20.0 * (4.0 * PI * 980e6 / 299_792_458.0f64).log10();
        assert!((path_loss_db(1.0, 980e6, 2.0) - 32.27).abs() <= 0.01);
        assert!((path_loss_db(1.0, 980e6, 2.0) - reference).abs() < 1e-12);

        let mut scn = Scenario::default_waikiki();
        scn.pathloss_exponent = 2.0;
        let bs = node("b", NodeKind::Bs, [0.0, 0.0, 3.0]);
        let near = node("n", NodeKind::Ue, [50.0, 0.0, 3.0]);
        let far = node("f", NodeKind::Ue, [100.0, 0.0, 3.0]);
        let g1 = compute_taps(&scn, &bs, &near, 0.0, 980e6).unwrap().gains[0].norm();
        let g2 = compute_taps(&scn, &bs, &far, 0.0, 980e6).unwrap().gains[0].norm();
        assert!((20.0 * (g1 / g2).log10() - 6.02).abs() <= 0.01);
    }

    #[test]
    fn tap_delay_rounds_to_samples() {
        let scn = Scenario::default_waikiki();
        let a = node("a", NodeKind::Bs, [0.0, 0.0, 3.0]);
        let b = node("b", NodeKind::Ue, [300.0, 0.0, 3.0]);
        let h = compute_taps(&scn, &a, &b, 0.0, 980e6).unwrap();
        assert_eq!(h.delays_samples, vec![1]);
        let expected_phase = -2.0 * PI * 980e6 * 300.0 / SPEED_OF_LIGHT_MPS;
        let diff = (h.gains[0].arg() - expected_phase).rem_euclid(2.0 * PI);
        assert!(diff < 1e-6 || (2.0 * PI - diff) < 1e-6);
    }

    #[test]
    fn coincident_nodes_are_degenerate() {
        let scn = Scenario::default_waikiki();
        let a = node("a", NodeKind::Bs, [1.0, 1.0, 3.0]);
        let b = node("b", NodeKind::Ue, [1.0, 1.0, 3.0]);
        assert!(matches!(
            compute_taps(&scn, &a, &b, 0.0, 980e6),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn radar_link_gain_varies_with_time() {
        let scn = Scenario::default_waikiki();
        let g = |t| {
            compute_taps(&scn, scn.radar(), scn.bs(), t, scn.carrier_hz_radar)
                .unwrap()
                .gains[0]
                .norm()
        };
        assert!(g(90.0) > g(50.0) && g(50.0) > g(0.0));
    }

    #[test]
    fn identity_and_pure_delay() {
        let x = gen_awgn(1.0, 64, 3).unwrap();
        assert_eq!(apply_channel(&x, &ChannelTaps::identity()), x);
        let h = ChannelTaps::new(vec![5], vec![Complex64::new(1.0, 0.0)]).unwrap();
        let y = apply_channel(&x, &h);
        assert!(y.samples[..5].iter().all(|s| s.norm() == 0.0));
        assert_eq!(&y.samples[5..], &x.samples[..59]);
    }

    #[test]
    fn piecewise_matches_static_channel_for_equal_taps() {
        let x = gen_awgn(1.0, 1000, 8).unwrap();
        let h = ChannelTaps::new(
            vec![0, 3],
            vec![Complex64::new(0.5, 0.1), Complex64::new(-0.2, 0.3)],
        )
        .unwrap();
        let full = apply_channel(&x, &h);
        let pw = apply_channel_piecewise(&x, 10, 256, &vec![h.clone(); 4]).unwrap();
        assert_eq!(pw.len(), 990);
        assert_eq!(&pw.samples[..], &full.samples[10..]);
        assert!(apply_channel_piecewise(&x, 10, 256, &[h]).is_err());
    }

    #[test]
    fn taps_reject_bad_lists() {
        assert!(ChannelTaps::new(vec![], vec![]).is_err());
        assert!(ChannelTaps::new(vec![2, 1], vec![Complex64::new(1.0, 0.0); 2]).is_err());
    }
}
