//! Per-row layer kernels. Activations are channels-last `[len][channels]`
//! f32; every dot product accumulates in f64.
//!
//! Parameters use the usual framework layouts: conv weights `[out][in][k]`,
//! dense weights `[out][in]`. Each layer repacks them once at construction so
//! the innermost loop runs over output channels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `[out][in][k]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    // [k][in][out]
    packed: Vec<f64>,
}

impl Conv1d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if weight.len() != out_ch * in_ch * kernel || bias.len() != out_ch {
            return Err(Error::Config(format!(
                "conv1d({in_ch}->{out_ch}, k{kernel}) got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        let mut packed = vec![0.0f64; weight.len()];
        for o in 0..out_ch {
            for c in 0..in_ch {
                for k in 0..kernel {
                    packed[(k * in_ch + c) * out_ch + o] = weight[(o * in_ch + c) * kernel + k] as f64;
                }
            }
        }
        Ok(Self {
            in_ch,
            out_ch,
            kernel,
            padding,
            weight,
            bias,
            packed,
        })
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding + 1).saturating_sub(self.kernel)
    }

    /// Stride-1 convolution with zero padding.
    pub fn forward(&self, x: &[f32], len: usize) -> Vec<f32> {
        debug_assert_eq!(x.len(), len * self.in_ch);
        let out_len = self.out_len(len);
        let mut out = vec![0.0f32; out_len * self.out_ch];
        let bias: Vec<f64> = self.bias.iter().map(|&b| b as f64).collect();
        let mut acc = vec![0.0f64; self.out_ch];
        for l in 0..out_len {
            acc.copy_from_slice(&bias);
            for k in 0..self.kernel {
                let src = l + k;
                if src < self.padding || src - self.padding >= len {
                    continue;
                }
                let row = &x[(src - self.padding) * self.in_ch..][..self.in_ch];
                let taps = &self.packed[k * self.in_ch * self.out_ch..][..self.in_ch * self.out_ch];
                for (c, &xv) in row.iter().enumerate() {
                    let xv = xv as f64;
                    let w = &taps[c * self.out_ch..][..self.out_ch];
                    for (a, &wv) in acc.iter_mut().zip(w) {
                        *a += wv * xv;
                    }
                }
            }
            for (o, a) in out[l * self.out_ch..][..self.out_ch].iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
        out
    }

    /// 1×1 convolution producing f64 activations (used inside the non-local block).
    fn pointwise_f64(&self, x: &[f32], len: usize) -> Vec<f64> {
        debug_assert_eq!(self.kernel, 1);
        let mut out = vec![0.0f64; len * self.out_ch];
        for l in 0..len {
            let acc = &mut out[l * self.out_ch..][..self.out_ch];
            for (a, &b) in acc.iter_mut().zip(&self.bias) {
                *a = b as f64;
            }
            for (c, &xv) in x[l * self.in_ch..][..self.in_ch].iter().enumerate() {
                let xv = xv as f64;
                for (a, &wv) in acc.iter_mut().zip(&self.packed[c * self.out_ch..][..self.out_ch]) {
                    *a += wv * xv;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    // [in][out]
    packed: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::Config(format!(
                "dense({in_features}->{out_features}) got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        let mut packed = vec![0.0f64; weight.len()];
        for o in 0..out_features {
            for i in 0..in_features {
                packed[i * out_features + o] = weight[o * in_features + i] as f64;
            }
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
            packed,
        })
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.in_features);
        let mut acc: Vec<f64> = self.bias.iter().map(|&b| b as f64).collect();
        for (i, &xv) in x.iter().enumerate() {
            let xv = xv as f64;
            for (a, &w) in acc.iter_mut().zip(&self.packed[i * self.out_features..][..self.out_features]) {
                *a += w * xv;
            }
        }
        acc.into_iter().map(|a| a as f32).collect()
    }
}

pub fn relu(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Non-overlapping max pooling along the length axis; a trailing remainder is dropped.
pub fn maxpool1d(x: &[f32], len: usize, channels: usize, size: usize) -> Vec<f32> {
    let out_len = len / size;
    let mut out = vec![f32::NEG_INFINITY; out_len * channels];
    for l in 0..out_len {
        let dst = &mut out[l * channels..][..channels];
        for s in 0..size {
            for (d, &v) in dst.iter_mut().zip(&x[(l * size + s) * channels..][..channels]) {
                *d = d.max(v);
            }
        }
    }
    out
}

/// Numerically stable softmax of one vector, computed in f64.
pub fn softmax(x: &[f32]) -> Vec<f32> {
    let m = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let e: Vec<f64> = x.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| (v / s) as f32).collect()
}

/// Embedded-Gaussian non-local block with a `C/2` bottleneck.
///
/// `A = softmax_j(θ(x)_i · φ(x)_j)`, `y = A·g(x)`, `out = x + w_z(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonLocal {
    pub channels: usize,
    pub theta: Conv1d,
    pub phi: Conv1d,
    pub g: Conv1d,
    pub wz: Conv1d,
}

impl NonLocal {
    pub fn new(channels: usize, theta: Conv1d, phi: Conv1d, g: Conv1d, wz: Conv1d) -> Result<Self> {
        if !channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "non-local block needs an even channel count, got {channels}"
            )));
        }
        let inner = channels / 2;
        for (name, conv, (i, o)) in [
            ("theta", &theta, (channels, inner)),
            ("phi", &phi, (channels, inner)),
            ("g", &g, (channels, inner)),
            ("wz", &wz, (inner, channels)),
        ] {
            if conv.kernel != 1 || conv.in_ch != i || conv.out_ch != o {
                return Err(Error::Config(format!(
                    "non-local {name} must map {i}->{o} with kernel 1"
                )));
            }
        }
        Ok(Self {
            channels,
            theta,
            phi,
            g,
            wz,
        })
    }

    fn inner(&self) -> usize {
        self.channels / 2
    }

    /// Row `i` of the attention matrix into `scores` (length `len`).
    fn attention_row(&self, theta_i: &[f64], phi_t: &[f64], len: usize, scores: &mut [f64]) {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for (c, &t) in theta_i.iter().enumerate() {
            for (s, &p) in scores.iter_mut().zip(&phi_t[c * len..][..len]) {
                *s += t * p;
            }
        }
        let m = scores.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - m).exp();
            total += *s;
        }
        for s in scores.iter_mut() {
            *s /= total;
        }
    }

    fn projections(&self, x: &[f32], len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let inner = self.inner();
        let theta = self.theta.pointwise_f64(x, len);
        let phi = self.phi.pointwise_f64(x, len);
        // φ transposed to [inner][len] so score rows vectorize over positions.
        let mut phi_t = vec![0.0f64; inner * len];
        for j in 0..len {
            for c in 0..inner {
                phi_t[c * len + j] = phi[j * inner + c];
            }
        }
        let g = self.g.pointwise_f64(x, len);
        (theta, phi_t, g)
    }

    /// Full `[len][len]` attention matrix, row-major.
    pub fn attention(&self, x: &[f32], len: usize) -> Vec<f64> {
        let inner = self.inner();
        let (theta, phi_t, _) = self.projections(x, len);
        let mut a = vec![0.0f64; len * len];
        for i in 0..len {
            self.attention_row(&theta[i * inner..][..inner], &phi_t, len, &mut a[i * len..][..len]);
        }
        a
    }

    pub fn forward(&self, x: &[f32], len: usize) -> Vec<f32> {
        let inner = self.inner();
        let c = self.channels;
        let (theta, phi_t, g) = self.projections(x, len);
        let mut scores = vec![0.0f64; len];
        let mut y = vec![0.0f32; len * inner];
        let mut yi = vec![0.0f64; inner];
        for i in 0..len {
            self.attention_row(&theta[i * inner..][..inner], &phi_t, len, &mut scores);
            yi.iter_mut().for_each(|v| *v = 0.0);
            for (j, &a) in scores.iter().enumerate() {
                for (acc, &gv) in yi.iter_mut().zip(&g[j * inner..][..inner]) {
                    *acc += a * gv;
                }
            }
            for (dst, &v) in y[i * inner..][..inner].iter_mut().zip(&yi) {
                *dst = v as f32;
            }
        }
        let z = self.wz.forward(&y, len);
        debug_assert_eq!(z.len(), len * c);
        x.iter().zip(&z).map(|(&xv, &zv)| xv + zv).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        // Center tap 1 on the diagonal: output equals input.
        let (c, k) = (3, 3);
        let mut w = vec![0.0; c * c * k];
        for o in 0..c {
            w[(o * c + o) * k + 1] = 1.0;
        }
        let conv = Conv1d::new(c, c, k, 1, w, vec![0.0; c]).unwrap();
        let x: Vec<f32> = (0..15).map(|v| v as f32).collect();
        assert_eq!(conv.forward(&x, 5), x);
    }

    #[test]
    fn maxpool_and_relu() {
        let x = vec![1.0, -2.0, 3.0, 5.0, -1.0, 0.0, 2.0, 2.0, 9.0, 9.0];
        // len 5, channels 2, pool 2 -> len 2
        assert_eq!(maxpool1d(&x, 5, 2, 2), vec![3.0, 5.0, 2.0, 2.0]);
        let mut r = vec![-1.0, 0.5, -0.0];
        relu(&mut r);
        assert_eq!(r, vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn softmax_is_normalized_and_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let q = softmax(&[-3.0, 0.5, 2.0]);
        assert!((q.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonlocal_rejects_odd_channels() {
        let conv = |i, o| Conv1d::new(i, o, 1, 0, vec![0.0; i * o], vec![0.0; o]).unwrap();
        assert!(NonLocal::new(3, conv(3, 1), conv(3, 1), conv(3, 1), conv(1, 3)).is_err());
        assert!(NonLocal::new(4, conv(4, 2), conv(4, 2), conv(4, 2), conv(2, 4)).is_ok());
    }
}
