//! Cross-implementation parity: a fixed 4-window input batch and layerwise
//! comparison against golden activations stored in the `.cnw` container.

use std::path::Path;

use super::model::{Architecture, CnnModel};
use super::tensor::Tensor;
use super::weights::TensorFile;
use super::windows_to_batch;
use crate::error::{Error, Result};
use crate::framing::{normalize, window_stream, Normalization, WINDOW_LEN};
use crate::scenario::Scenario;
use crate::sensing::{SensingModel, SensingSpan};
use crate::waveforms::Burst;

pub const PARITY_FIXTURE_SEED: u64 = 20_240_050;
pub const FIXTURE_TENSOR: &str = "input";
/// Golden tensor holding the final class probabilities.
pub const PROBABILITIES_TENSOR: &str = "probabilities";
pub const LAYER_TOLERANCE: f32 = 1e-4;
pub const POST_ATTENTION_TOLERANCE: f32 = 5e-4;

/// Four unit-RMS windows from the shipped scenario: two with radar, two without.
pub fn parity_fixture(seed: u64) -> Result<Tensor> {
    let scn = Scenario::default_waikiki();
    let model = SensingModel::default();
    let bursts = [Burst::new(50.0, 50.002)];
    let span = SensingSpan::new(50.0, 4 * WINDOW_LEN, &bursts, seed);
    let x = model.synthesize(&scn, &span)?;
    let windows: Vec<_> = window_stream(&x, WINDOW_LEN)?
        .iter()
        .map(|w| normalize(w, Normalization::UnitRms))
        .collect();
    Ok(windows_to_batch(&windows))
}

pub fn write_fixture(input: &Tensor, path: &Path) -> Result<()> {
    TensorFile {
        arch_hash: Architecture::canonical().hash(),
        tensors: vec![(FIXTURE_TENSOR.to_string(), input.clone())],
    }
    .write(path)
}

pub fn read_fixture(path: &Path) -> Result<Tensor> {
    TensorFile::read(path)?
        .get(FIXTURE_TENSOR)
        .cloned()
        .ok_or_else(|| Error::format(0, format!("fixture has no `{FIXTURE_TENSOR}` tensor")))
}

/// Post-layer activations for every named layer plus `probabilities`.
pub fn goldens_from_model(model: &CnnModel, input: &Tensor) -> Result<TensorFile> {
    let mut tensors = model.forward_traced(input)?;
    let probs = tensors.last().map(|(_, t)| t.clone()).expect("non-empty model");
    tensors.push((PROBABILITIES_TENSOR.to_string(), probs));
    Ok(TensorFile {
        arch_hash: model.architecture().hash(),
        tensors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiff {
    pub layer: String,
    pub max_abs_diff: f32,
    pub tolerance: f32,
}

impl LayerDiff {
    pub fn passed(&self) -> bool {
        self.max_abs_diff <= self.tolerance
    }
}

/// Compares this engine's activations with `goldens`. Layers downstream of a
/// non-local block get the looser tolerance; final probabilities never do.
/// Layers absent from the golden file are skipped.
pub fn compare_goldens(model: &CnnModel, input: &Tensor, goldens: &TensorFile) -> Result<Vec<LayerDiff>> {
    if goldens.arch_hash != model.architecture().hash() {
        return Err(Error::format(12, "golden file architecture hash differs from the model"));
    }
    let ours = model.forward_traced(input)?;
    let probs = ours.last().map(|(_, t)| t.clone()).expect("non-empty model");
    let mut after_attention = false;
    let mut out = Vec::new();
    let kinds = model.architecture().layers.iter().map(|l| &l.kind);
    for ((name, t), kind) in ours.iter().zip(kinds) {
        if matches!(kind, super::model::LayerKind::NonLocal { .. }) {
            after_attention = true;
        }
        if let Some(g) = goldens.get(name) {
            out.push(diff(name, t, g, if after_attention { POST_ATTENTION_TOLERANCE } else { LAYER_TOLERANCE })?);
        }
    }
    let g = goldens
        .get(PROBABILITIES_TENSOR)
        .ok_or_else(|| Error::format(0, format!("golden file lacks `{PROBABILITIES_TENSOR}`")))?;
    out.push(diff(PROBABILITIES_TENSOR, &probs, g, LAYER_TOLERANCE)?);
    Ok(out)
}

fn diff(name: &str, ours: &Tensor, golden: &Tensor, tolerance: f32) -> Result<LayerDiff> {
    let max_abs_diff = ours.max_abs_diff(golden).ok_or_else(|| Error::Shape {
        layer: name.to_string(),
        msg: format!("golden dims {:?}, computed {:?}", golden.dims, ours.dims),
    })?;
    Ok(LayerDiff {
        layer: name.to_string(),
        max_abs_diff,
        tolerance,
    })
}
