//! Short-time Fourier magnitude frames.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveforms::IqStream;

/// Floor added to magnitudes before taking the log.
pub const MAGNITUDE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramFrame {
    pub t_s: f64,
    /// `20·log10(|X| + ε)` per bin, ordered from `-fs/2` to `+fs/2`.
    pub magnitude_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramFrames {
    pub nfft: usize,
    /// Samples between frame starts.
    pub hop: usize,
    pub sample_rate_hz: f64,
    pub frames: Vec<SpectrogramFrame>,
}

impl SpectrogramFrames {
    /// Center frequency offset of each bin, in Hz.
    pub fn bin_frequencies_hz(&self) -> Vec<f64> {
        let n = self.nfft as f64;
        (0..self.nfft)
            .map(|k| (k as f64 - (self.nfft / 2) as f64) * self.sample_rate_hz / n)
            .collect()
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable FFT plan and window for one `nfft`.
pub struct Stft {
    nfft: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl Stft {
    pub fn new(nfft: usize) -> Result<Self> {
        if nfft == 0 {
            return Err(Error::Config("nfft must be >= 1".into()));
        }
        Ok(Self {
            nfft,
            window: hann(nfft),
            fft: FftPlanner::new().plan_fft_forward(nfft),
            buf: vec![Complex64::new(0.0, 0.0); nfft],
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Hann-windowed DFT of `frame`, fftshifted so DC sits at `nfft/2`.
    pub fn spectrum(&mut self, frame: &[Complex32]) -> Vec<Complex64> {
        debug_assert_eq!(frame.len(), self.nfft);
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex64::new(x.re as f64 * w, x.im as f64 * w);
        }
        self.fft.process(&mut self.buf);
        let half = self.nfft / 2;
        let mut out = Vec::with_capacity(self.nfft);
        out.extend_from_slice(&self.buf[self.nfft - half..]);
        out.extend_from_slice(&self.buf[..self.nfft - half]);
        out
    }
}

pub fn magnitude_db(mag: f64) -> f64 {
    20.0 * (mag + MAGNITUDE_EPS).log10()
}

pub fn spectrogram(x: &IqStream, nfft: usize, hop: usize) -> Result<SpectrogramFrames> {
    if hop == 0 {
        return Err(Error::Config("hop must be >= 1".into()));
    }
    if x.len() < nfft || nfft == 0 {
        return Err(Error::Usage(format!(
            "stream of {} samples is shorter than nfft {nfft}",
            x.len()
        )));
    }
    let mut stft = Stft::new(nfft)?;
    let count = (x.len() - nfft) / hop + 1;
    let frames = (0..count)
        .map(|i| {
            let start = i * hop;
            let spec = stft.spectrum(&x.samples[start..start + nfft]);
            SpectrogramFrame {
                t_s: x.t0_s + start as f64 / x.sample_rate_hz,
                magnitude_db: spec.iter().map(|v| magnitude_db(v.norm())).collect(),
            }
        })
        .collect();
    Ok(SpectrogramFrames {
        nfft,
        hop,
        sample_rate_hz: x.sample_rate_hz,
        frames,
    })
}

/// One frame summarizing all of `x`: per-bin RMS magnitude over
/// non-overlapping `nfft` frames, in dB.
pub fn mean_frame(stft: &mut Stft, x: &IqStream) -> Result<SpectrogramFrame> {
    let nfft = stft.nfft;
    if x.len() < nfft {
        return Err(Error::Usage(format!(
            "stream of {} samples is shorter than nfft {nfft}",
            x.len()
        )));
    }
    let mut power = vec![0.0f64; nfft];
    let chunks = x.samples.chunks_exact(nfft);
    let count = chunks.len();
    for frame in chunks {
        for (p, v) in power.iter_mut().zip(stft.spectrum(frame)) {
            *p += v.norm_sqr();
        }
    }
    Ok(SpectrogramFrame {
        t_s: x.t0_s,
        magnitude_db: power
            .iter()
            .map(|p| magnitude_db((p / count as f64).sqrt()))
            .collect(),
    })
}
