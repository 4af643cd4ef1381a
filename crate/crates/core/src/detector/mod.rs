//! Per-window radar classifiers: the energy baseline, the CNN forward-pass
//! engine, and a ground-truth oracle used as the ideal reference.

mod energy;
mod layers;
mod model;
mod parity;
mod tensor;
mod weights;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::framing::{normalize, radar_label, IqWindow, Normalization, WINDOW_LEN};
use crate::waveforms::Burst;

pub use energy::{
    calibrate_energy_threshold, energy_detect, window_energy, ENERGY_DETECTOR_ID,
    MIN_CALIBRATION_WINDOWS,
};
pub use layers::{maxpool1d, relu, softmax, Conv1d, Dense, NonLocal};
pub use model::{cnn_forward, Architecture, CnnModel, LayerKind, LayerSpec, Shape};
pub use parity::{
    compare_goldens, goldens_from_model, parity_fixture, read_fixture, write_fixture, LayerDiff,
    FIXTURE_TENSOR, LAYER_TOLERANCE, PARITY_FIXTURE_SEED, POST_ATTENTION_TOLERANCE,
    PROBABILITIES_TENSOR,
};
pub use tensor::Tensor;
pub use weights::{load_weights, load_weights_for, write_weights, TensorFile};

pub const DEFAULT_BATCH_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorVerdict {
    pub window_start_sample: u64,
    pub label: u8,
    /// Probability of radar, in [0, 1].
    pub score: f64,
    pub detector_id: String,
}

#[derive(Debug, Clone)]
pub enum DetectorKind {
    Energy {
        threshold: f64,
    },
    Cnn {
        model: Arc<CnnModel>,
        normalization: Normalization,
    },
    /// Labels windows from known burst spans.
    Oracle {
        bursts: Vec<Burst>,
    },
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub kind: DetectorKind,
    pub batch_size: usize,
}

impl Detector {
    pub fn energy(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::Config(format!("energy threshold must be > 0, got {threshold}")));
        }
        Ok(Self::with_kind(DetectorKind::Energy { threshold }))
    }

    pub fn cnn(model: CnnModel, normalization: Normalization) -> Self {
        Self::with_kind(DetectorKind::Cnn {
            model: Arc::new(model),
            normalization,
        })
    }

    pub fn oracle(bursts: Vec<Burst>) -> Self {
        Self::with_kind(DetectorKind::Oracle { bursts })
    }

    fn with_kind(kind: DetectorKind) -> Self {
        Self {
            kind,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.batch_size = batch_size;
        Ok(self)
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            DetectorKind::Energy { .. } => ENERGY_DETECTOR_ID,
            DetectorKind::Cnn { .. } => "cnn",
            DetectorKind::Oracle { .. } => "oracle",
        }
    }

    pub fn classify_batch(&self, windows: &[IqWindow]) -> Result<Vec<DetectorVerdict>> {
        classify_batch(self, windows)
    }
}

/// Stacks windows into a `[b, 1024, 2]` tensor.
pub fn windows_to_batch(windows: &[IqWindow]) -> Tensor {
    let data: Vec<f32> = windows.iter().flat_map(|w| w.data.iter().copied()).collect();
    Tensor {
        dims: vec![windows.len(), WINDOW_LEN, 2],
        data,
    }
}

pub fn classify_batch(det: &Detector, windows: &[IqWindow]) -> Result<Vec<DetectorVerdict>> {
    if windows.is_empty() || windows.len() > det.batch_size {
        return Err(Error::Usage(format!(
            "batch holds {} windows; expected 1..={}",
            windows.len(),
            det.batch_size
        )));
    }
    match &det.kind {
        DetectorKind::Energy { threshold } => {
            Ok(windows.iter().map(|w| energy_detect(w, *threshold)).collect())
        }
        DetectorKind::Oracle { bursts } => Ok(windows
            .iter()
            .map(|w| {
                let label = radar_label(w, bursts);
                DetectorVerdict {
                    window_start_sample: w.start_sample,
                    label,
                    score: label as f64,
                    detector_id: det.id().to_string(),
                }
            })
            .collect()),
        DetectorKind::Cnn {
            model,
            normalization,
        } => {
            let normed: Vec<IqWindow> = windows.iter().map(|w| normalize(w, *normalization)).collect();
            let probs = model.forward(&windows_to_batch(&normed))?;
            Ok(windows
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let score = (probs.row(i)[1] as f64).clamp(0.0, 1.0);
                    DetectorVerdict {
                        window_start_sample: w.start_sample,
                        label: u8::from(score >= 0.5),
                        score,
                        detector_id: det.id().to_string(),
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::window_stream;
    use crate::waveforms::gen_awgn;

    fn windows(n: usize, seed: u64) -> Vec<IqWindow> {
        window_stream(&gen_awgn(1.0, n * WINDOW_LEN, seed).unwrap(), WINDOW_LEN).unwrap()
    }

    #[test]
    fn batch_bounds_are_usage_errors() {
        let det = Detector::energy(1.0).unwrap();
        assert!(matches!(det.classify_batch(&[]), Err(Error::Usage(_))));
        assert!(matches!(det.classify_batch(&windows(11, 1)), Err(Error::Usage(_))));
        assert_eq!(det.classify_batch(&windows(10, 1)).unwrap().len(), 10);
        assert!(Detector::energy(0.0).is_err());
        assert!(det.with_batch_size(0).is_err());
    }

    #[test]
    fn order_is_preserved() {
        let ws = windows(10, 2);
        let v = Detector::energy(1.0).unwrap().classify_batch(&ws).unwrap();
        for (w, v) in ws.iter().zip(&v) {
            assert_eq!(w.start_sample, v.window_start_sample);
        }
        assert!(v.windows(2).all(|p| p[0].window_start_sample < p[1].window_start_sample));
    }

    #[test]
    fn oracle_follows_labels() {
        let ws = windows(4, 3);
        let burst = Burst {
            start_s: ws[2].start_s(),
            end_s: 1.0,
        };
        let v = Detector::oracle(vec![burst]).classify_batch(&ws).unwrap();
        let labels: Vec<u8> = v.iter().map(|v| v.label).collect();
        assert_eq!(labels, [0, 0, 1, 1]);
    }
}
