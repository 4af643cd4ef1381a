//! Fixed-length IQ windows: slicing, normalization and ground-truth labels.

mod dataset;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveforms::{Burst, IqStream};

pub use dataset::{
    build_training_mix, read_dataset, write_dataset, CellSummary, Dataset, DatasetMeta,
    TrainingMixConfig,
};

/// Samples per detector window.
pub const WINDOW_LEN: usize = 1024;
/// Values per window: I and Q for every sample.
pub const WINDOW_VALUES: usize = WINDOW_LEN * 2;
/// Minimum fraction of a window covered by a burst for a positive label.
pub const LABEL_OVERLAP_THRESHOLD: f64 = 0.25;

/// One `[1024][2]` slice, I in channel 0 and Q in channel 1, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IqWindow {
    pub data: Vec<f32>,
    /// Absolute sample index of the first sample (stream `t0` included).
    pub start_sample: u64,
    pub sample_rate_hz: f64,
}

impl IqWindow {
    pub fn new(data: Vec<f32>, start_sample: u64, sample_rate_hz: f64) -> Result<Self> {
        if data.len() != WINDOW_VALUES {
            return Err(Error::Config(format!(
                "window needs {WINDOW_VALUES} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("window holds non-finite values".into()));
        }
        Ok(Self {
            data,
            start_sample,
            sample_rate_hz,
        })
    }

    pub fn start_s(&self) -> f64 {
        self.start_sample as f64 / self.sample_rate_hz
    }

    pub fn end_s(&self) -> f64 {
        (self.start_sample + WINDOW_LEN as u64) as f64 / self.sample_rate_hz
    }

    /// Mean |x|² per complex sample, in f64.
    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / WINDOW_LEN as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: IqWindow,
    /// 1 if radar is present, else 0.
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    UnitRms,
    MaxAbs,
    None,
}

/// Slices `x` into windows at offsets `0, hop, 2·hop, …`; a trailing partial window is dropped.
pub fn window_stream(x: &IqStream, hop: usize) -> Result<Vec<IqWindow>> {
    if hop == 0 {
        return Err(Error::Config("hop must be >= 1".into()));
    }
    if x.len() < WINDOW_LEN {
        return Ok(Vec::new());
    }
    let base = (x.t0_s * x.sample_rate_hz).round().max(0.0) as u64;
    let count = (x.len() - WINDOW_LEN) / hop + 1;
    Ok((0..count)
        .map(|i| {
            let off = i * hop;
            let data = x.samples[off..off + WINDOW_LEN]
                .iter()
                .flat_map(|s| [s.re, s.im])
                .collect();
            IqWindow {
                data,
                start_sample: base + off as u64,
                sample_rate_hz: x.sample_rate_hz,
            }
        })
        .collect())
}

pub fn normalize(w: &IqWindow, policy: Normalization) -> IqWindow {
    let scale = match policy {
        Normalization::None => return w.clone(),
        Normalization::UnitRms => {
            let ms = w.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / WINDOW_VALUES as f64;
            ms.sqrt()
        }
        Normalization::MaxAbs => w.data.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs())),
    };
    if scale == 0.0 {
        return w.clone();
    }
    IqWindow {
        data: w.data.iter().map(|&v| (v as f64 / scale) as f32).collect(),
        ..w.clone()
    }
}

/// Fraction of the window's time span covered by any burst.
pub fn burst_overlap_fraction(w: &IqWindow, bursts: &[Burst]) -> f64 {
    let (a, b) = (w.start_s(), w.end_s());
    let covered: f64 = bursts
        .iter()
        .map(|s| (s.end_s.min(b) - s.start_s.max(a)).max(0.0))
        .sum();
    covered / (b - a)
}

pub fn radar_label(w: &IqWindow, bursts: &[Burst]) -> u8 {
    // Small slack keeps an exact 25% overlap inclusive despite rounding.
    u8::from(burst_overlap_fraction(w, bursts) >= LABEL_OVERLAP_THRESHOLD - 1e-9)
}

pub fn label_windows(windows: Vec<IqWindow>, bursts: &[Burst]) -> Vec<LabeledWindow> {
    windows
        .into_iter()
        .map(|window| {
            let label = radar_label(&window, bursts);
            LabeledWindow { window, label }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::{gen_awgn, DEFAULT_SAMPLE_RATE_HZ};
    use num_complex::Complex32;

    fn stream(n: usize) -> IqStream {
        gen_awgn(1.0, n, 5).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_stream(&stream(2048), 1024).unwrap().len(), 2);
        assert!(window_stream(&stream(1023), 1024).unwrap().is_empty());
        let ws = window_stream(&stream(4096), 512).unwrap();
        assert_eq!(ws.len(), (4096 - 1024) / 512 + 1);
        for (i, w) in ws.iter().enumerate() {
            assert_eq!(w.start_sample, 512 * i as u64);
        }
        assert!(window_stream(&stream(10), 0).is_err());
    }

    #[test]
    fn windows_partition_stream() {
        let x = stream(5000);
        let ws = window_stream(&x, WINDOW_LEN).unwrap();
        let rebuilt: Vec<Complex32> = ws
            .iter()
            .flat_map(|w| w.data.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])))
            .collect();
        assert_eq!(&rebuilt[..], &x.samples[..4 * WINDOW_LEN]);
    }

    #[test]
    fn normalize_policies() {
        let zero = IqWindow::new(vec![0.0; WINDOW_VALUES], 0, DEFAULT_SAMPLE_RATE_HZ).unwrap();
        for p in [Normalization::UnitRms, Normalization::MaxAbs, Normalization::None] {
            assert_eq!(normalize(&zero, p), zero);
        }
        let mut w = window_stream(&stream(1024), 1024).unwrap().remove(0);
        w.data.iter_mut().for_each(|v| *v *= 37.0);
        let n = normalize(&w, Normalization::UnitRms);
        let rms = (n.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / 2048.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6);
        let m = normalize(&w, Normalization::MaxAbs);
        let peak = m.data.iter().fold(0.0f32, |a, v| a.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-6);
    }

    #[test]
    fn labels_follow_overlap_rule() {
        let fs = DEFAULT_SAMPLE_RATE_HZ;
        let w = IqWindow::new(vec![0.0; WINDOW_VALUES], 1024, fs).unwrap();
        // Window spans [1 ms, 2 ms).
        assert_eq!(radar_label(&w, &[Burst::new(0.0, 1.0)]), 1);
        assert_eq!(radar_label(&w, &[Burst::new(0.5, 0.9)]), 0);
        assert_eq!(radar_label(&w, &[Burst::new(0.0, 0.00125)]), 1);
        assert_eq!(radar_label(&w, &[Burst::new(0.0, 0.001249)]), 0);
        assert_eq!(radar_label(&w, &[Burst::new(0.00175, 1.0)]), 1);
    }

    #[test]
    fn empty_burst_list_labels_everything_absent() {
        let ws = window_stream(&stream(4096), 1024).unwrap();
        assert!(label_windows(ws, &[]).iter().all(|l| l.label == 0));
    }
}
