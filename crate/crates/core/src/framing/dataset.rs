//! Labeled training mixes and the `.dsb` container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "DSB1" | u32 version=1 | u64 n_windows | u32 window_len=1024 | u32 channels=2
//! n_windows × ( u8 label | 1024×2 f32 )
//! u64 XXH64(seed 0) of the body
//! ```
//!
//! Generation metadata and per-window start samples live in the `.dsb.json`
//! sidecar.

use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{label_windows, window_stream, IqWindow, LabeledWindow, WINDOW_LEN, WINDOW_VALUES};
use crate::codec::{checksum, put_f32s, read_file, write_file, ByteReader};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sensing::{derive_seed, SensingModel, SensingSpan};
use crate::waveforms::Burst;

const MAGIC: &[u8; 4] = b"DSB1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;
const RECORD_LEN: usize = 1 + WINDOW_VALUES * 4;
const MIN_MINORITY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMixConfig {
    pub radar_gains_db: Vec<f64>,
    pub cellular_gains_db: Vec<f64>,
    pub per_cell: usize,
    pub seed: u64,
    pub sensing: SensingModel,
    /// Cells draw their ship position uniformly from this stretch of trajectory.
    pub trajectory_span_s: (f64, f64),
}

impl Default for TrainingMixConfig {
    fn default() -> Self {
        Self {
            radar_gains_db: vec![-10.0, 0.0, 10.0],
            cellular_gains_db: vec![-10.0, 0.0, 10.0],
            per_cell: 2000,
            seed: 0,
            sensing: SensingModel::default(),
            trajectory_span_s: (0.0, 120.0),
        }
    }
}

/// Label counts of one gain cell. `None` gains mark absent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub radar_gain_db: Option<f64>,
    pub cellular_gain_db: Option<f64>,
    pub n_windows: usize,
    pub n_radar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub radar_gains_db: Vec<f64>,
    #[serde(default)]
    pub cellular_gains_db: Vec<f64>,
    #[serde(default)]
    pub per_cell: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scenario_hash: String,
    #[serde(default)]
    pub cells: Vec<CellSummary>,
    #[serde(default)]
    pub balance_warning: bool,
    /// `start_sample` of every window, in file order.
    #[serde(default)]
    pub window_starts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub windows: Vec<LabeledWindow>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn label_counts(&self) -> (usize, usize) {
        let radar = self.windows.iter().filter(|w| w.label == 1).count();
        (self.windows.len() - radar, radar)
    }
}

/// Synthesizes every `(radar_gain, cellular_gain)` cell plus one
/// cellular-only cell per cellular gain and one noise-only cell.
///
/// Radar cells transmit for their whole duration with a random pulse phase;
/// labels come from [`label_windows`] against the cell's burst span.
pub fn build_training_mix(scn: &Scenario, cfg: &TrainingMixConfig) -> Result<Dataset> {
    if cfg.radar_gains_db.is_empty() || cfg.cellular_gains_db.is_empty() {
        return Err(Error::Config("gain lists must be non-empty".into()));
    }
    if cfg.per_cell == 0 {
        return Err(Error::Config("per_cell must be >= 1".into()));
    }
    let mut cells: Vec<(Option<f64>, Option<f64>)> = Vec::new();
    for &r in &cfg.radar_gains_db {
        for &c in &cfg.cellular_gains_db {
            cells.push((Some(r), Some(c)));
        }
    }
    cells.extend(cfg.cellular_gains_db.iter().map(|&c| (None, Some(c))));
    cells.push((None, None));

    let fs = scn.sample_rate_hz;
    let n = cfg.per_cell * WINDOW_LEN;
    let cell_duration = n as f64 / fs;
    let (traj_lo, traj_hi) = cfg.trajectory_span_s;
    let mut windows = Vec::with_capacity(cells.len() * cfg.per_cell);
    let mut summaries = Vec::with_capacity(cells.len());

    for (idx, &(radar_gain, cellular_gain)) in cells.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 100, idx as u64));
        let traj_t0 = traj_lo + rng.random::<f64>() * (traj_hi - traj_lo).max(0.0);
        // Cells are laid end to end in dataset time so window start samples are unique.
        let t0 = idx as f64 * (cell_duration + 1.0);
        let pulse_offset = rng.random::<f64>() * cfg.sensing.radar.pri_s;
        let bursts = match radar_gain {
            Some(_) => vec![Burst::new(t0 - pulse_offset, t0 + cell_duration)],
            None => Vec::new(),
        };
        let span = SensingSpan {
            t0_s: t0,
            n,
            cellular_on: cellular_gain.is_some(),
            bursts: &bursts,
            radar_gain_db: radar_gain.unwrap_or(0.0),
            cellular_gain_db: cellular_gain.unwrap_or(0.0),
            trajectory_t0_s: traj_t0,
            seed: derive_seed(cfg.seed, 200, idx as u64),
        };
        let stream = cfg.sensing.synthesize(scn, &span)?;
        let labeled = label_windows(window_stream(&stream, WINDOW_LEN)?, &bursts);
        summaries.push(CellSummary {
            radar_gain_db: radar_gain,
            cellular_gain_db: cellular_gain,
            n_windows: labeled.len(),
            n_radar: labeled.iter().filter(|w| w.label == 1).count(),
        });
        windows.extend(labeled);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 300, 0));
    windows.shuffle(&mut rng);

    let radar = windows.iter().filter(|w| w.label == 1).count();
    let minority = radar.min(windows.len() - radar) as f64 / windows.len() as f64;
    let balance_warning = minority < MIN_MINORITY_FRACTION;
    if balance_warning {
        warn!(
            "label balance: minority class is {:.1}% of {} windows (below {:.0}%)",
            minority * 100.0,
            windows.len(),
            MIN_MINORITY_FRACTION * 100.0
        );
    }

    Ok(Dataset {
        meta: DatasetMeta {
            sample_rate_hz: fs,
            radar_gains_db: cfg.radar_gains_db.clone(),
            cellular_gains_db: cfg.cellular_gains_db.clone(),
            per_cell: cfg.per_cell,
            seed: cfg.seed,
            scenario_hash: scn.content_hash(),
            cells: summaries,
            balance_warning,
            window_starts: windows.iter().map(|w| w.window.start_sample).collect(),
        },
        windows,
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut body = Vec::with_capacity(ds.windows.len() * RECORD_LEN);
    for w in &ds.windows {
        body.push(w.label);
        put_f32s(&mut body, &w.window.data);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.windows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(WINDOW_LEN as u32).to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&checksum(&body).to_le_bytes());
    write_file(path, &out)?;

    let mut meta = ds.meta.clone();
    meta.window_starts = ds.windows.iter().map(|w| w.window.start_sample).collect();
    let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    write_file(&sidecar(path), &json)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes);
    r.magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported dsb version {version}")));
    }
    let n = r.u64("window count")?;
    let at = r.offset();
    let window_len = r.u32("window length")?;
    if window_len as usize != WINDOW_LEN {
        return Err(Error::format(at, format!("window length {window_len}, expected {WINDOW_LEN}")));
    }
    let at = r.offset();
    let channels = r.u32("channel count")?;
    if channels != 2 {
        return Err(Error::format(at, format!("{channels} channels, expected 2")));
    }
    let body_len = (n as usize).checked_mul(RECORD_LEN).filter(|&b| b + 8 == r.remaining());
    let Some(body_len) = body_len else {
        return Err(Error::format(
            r.offset(),
            format!(
                "header declares {n} windows ({} body bytes + 8 checksum) but {} bytes follow",
                (n as u128) * RECORD_LEN as u128,
                r.remaining()
            ),
        ));
    };
    let body_start = r.offset();
    let body = r.take(body_len, "body")?;
    let stored = r.u64("checksum")?;
    if checksum(body) != stored {
        return Err(Error::format(
            body_start + body_len as u64,
            "body checksum mismatch",
        ));
    }

    let meta: DatasetMeta = match sidecar(path) {
        side if side.exists() => {
            serde_json::from_slice(&read_file(&side)?).map_err(|e| Error::Parse {
                path: side,
                msg: e.to_string(),
            })?
        }
        _ => DatasetMeta {
            sample_rate_hz: crate::waveforms::DEFAULT_SAMPLE_RATE_HZ,
            ..Default::default()
        },
    };
    if !meta.window_starts.is_empty() && meta.window_starts.len() as u64 != n {
        return Err(Error::Parse {
            path: sidecar(path),
            msg: format!("{} window starts for {n} windows", meta.window_starts.len()),
        });
    }

    let mut br = ByteReader::new(body);
    let mut windows = Vec::with_capacity(n as usize);
    for i in 0..n as usize {
        let at = body_start + br.offset();
        let label = br.u8("label")?;
        if label > 1 {
            return Err(Error::format(at, format!("label {label} is not 0 or 1")));
        }
        let data = br.f32_vec(WINDOW_VALUES, "window")?;
        let start_sample = meta
            .window_starts
            .get(i)
            .copied()
            .unwrap_or((i * WINDOW_LEN) as u64);
        let window = IqWindow::new(data, start_sample, meta.sample_rate_hz)
            .map_err(|e| Error::format(at + 1, e.to_string()))?;
        windows.push(LabeledWindow { window, label });
    }
    Ok(Dataset { windows, meta })
}
