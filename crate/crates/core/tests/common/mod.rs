//! Independent scalar-loop reference implementations shared by the
//! integration tests. Everything is computed in f64 straight from the
//! framework-layout parameter tensors.
#![allow(dead_code)]

use std::collections::HashMap;

use coexist_core::detector::{Architecture, CnnModel, LayerKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vec(n: usize, seed: u64, scale: f32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `x` is `[len][cin]`, `w` is `[cout][cin][k]`.
pub fn conv1d(x: &[f64], len: usize, cin: usize, w: &[f32], b: &[f32], cout: usize, k: usize, pad: usize) -> Vec<f64> {
    let out_len = len + 2 * pad + 1 - k;
    let mut out = vec![0.0; out_len * cout];
    for l in 0..out_len {
        for o in 0..cout {
            let mut s = b[o] as f64;
            for c in 0..cin {
                for t in 0..k {
                    let src = l as isize + t as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        s += w[(o * cin + c) * k + t] as f64 * x[src as usize * cin + c];
                    }
                }
            }
            out[l * cout + o] = s;
        }
    }
    out
}

pub fn maxpool(x: &[f64], len: usize, ch: usize, size: usize) -> Vec<f64> {
    let out_len = len / size;
    let mut out = vec![f64::NEG_INFINITY; out_len * ch];
    for l in 0..out_len {
        for c in 0..ch {
            for t in 0..size {
                out[l * ch + c] = out[l * ch + c].max(x[(l * size + t) * ch + c]);
            }
        }
    }
    out
}

/// `w` is `[out][in]`.
pub fn dense(x: &[f64], w: &[f32], b: &[f32], nin: usize, nout: usize) -> Vec<f64> {
    (0..nout)
        .map(|o| b[o] as f64 + (0..nin).map(|i| w[o * nin + i] as f64 * x[i]).sum::<f64>())
        .collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub struct NlbParams<'a> {
    pub theta: (&'a [f32], &'a [f32]),
    pub phi: (&'a [f32], &'a [f32]),
    pub g: (&'a [f32], &'a [f32]),
    pub wz: (&'a [f32], &'a [f32]),
}

/// Direct double-loop attention; returns `(output, attention matrix)`.
pub fn nonlocal(x: &[f64], len: usize, c: usize, p: &NlbParams) -> (Vec<f64>, Vec<f64>) {
    let h = c / 2;
    let proj = |(w, b): (&[f32], &[f32])| {
        let mut out = vec![0.0; len * h];
        for l in 0..len {
            for d in 0..h {
                let mut s = b[d] as f64;
                for ch in 0..c {
                    s += w[d * c + ch] as f64 * x[l * c + ch];
                }
                out[l * h + d] = s;
            }
        }
        out
    };
    let theta = proj(p.theta);
    let phi = proj(p.phi);
    let g = proj(p.g);
    let mut attn = vec![0.0; len * len];
    for i in 0..len {
        let row: Vec<f64> = (0..len)
            .map(|j| (0..h).map(|d| theta[i * h + d] * phi[j * h + d]).sum())
            .collect();
        attn[i * len..(i + 1) * len].copy_from_slice(&softmax(&row));
    }
    let mut out = x.to_vec();
    for i in 0..len {
        let y: Vec<f64> = (0..h)
            .map(|d| (0..len).map(|j| attn[i * len + j] * g[j * h + d]).sum())
            .collect();
        for o in 0..c {
            let mut z = p.wz.1[o] as f64;
            for d in 0..h {
                z += p.wz.0[o * h + d] as f64 * y[d];
            }
            out[i * c + o] += z;
        }
    }
    (out, attn)
}

/// Whole-model reference forward pass for one `[L][C]` row.
pub fn forward_row(model: &CnnModel, row: &[f32]) -> Vec<f64> {
    let arch: &Architecture = model.architecture();
    let params: HashMap<String, Tensor> = model.tensors().into_iter().collect();
    let p = |name: &str| &params[name].data[..];
    let mut x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    let (mut len, mut ch) = (arch.input_len, arch.input_channels);
    for spec in &arch.layers {
        let n = &spec.name;
        x = match spec.kind {
            LayerKind::Conv1d { in_ch, out_ch, kernel, padding } => {
                let y = conv1d(&x, len, in_ch, p(&format!("{n}.weight")), p(&format!("{n}.bias")), out_ch, kernel, padding);
                len = len + 2 * padding + 1 - kernel;
                ch = out_ch;
                y
            }
            LayerKind::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            LayerKind::NonLocal { channels } => {
                let get = |part: &str| (p(&format!("{n}.{part}.weight")), p(&format!("{n}.{part}.bias")));
                let np = NlbParams { theta: get("theta"), phi: get("phi"), g: get("g"), wz: get("wz") };
                nonlocal(&x, len, channels, &np).0
            }
            LayerKind::MaxPool1d { size } => {
                let y = maxpool(&x, len, ch, size);
                len /= size;
                y
            }
            LayerKind::Flatten => {
                ch *= len;
                len = 1;
                x
            }
            LayerKind::Dense { in_features, out_features } => {
                ch = out_features;
                dense(&x, p(&format!("{n}.weight")), p(&format!("{n}.bias")), in_features, out_features)
            }
            LayerKind::Softmax => softmax(&x),
        };
    }
    x
}

/// A `[b, 1024, 2]` batch of uniform noise windows.
pub fn random_batch(b: usize, seed: u64) -> Tensor {
    Tensor::new(vec![b, 1024, 2], random_vec(b * 2048, seed, 1.0)).unwrap()
}
