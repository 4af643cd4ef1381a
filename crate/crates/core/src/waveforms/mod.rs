//! Baseband signal synthesis: pulsed LFM radar, CP-OFDM downlink, AWGN and
//! gain-weighted mixing.
//!
//! Every generator is a pure function of its arguments; the same seed yields
//! the same samples bit for bit.

mod iqb;

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use iqb::{read_iqb, read_iqb_meta, write_iqb, IqbMeta};

/// Default sample rate: one 1024-sample window spans exactly 1 ms.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1.024e6;

/// A sample-rate-stamped block of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqStream {
    pub sample_rate_hz: f64,
    pub t0_s: f64,
    pub samples: Vec<Complex32>,
}

impl IqStream {
    pub fn new(sample_rate_hz: f64, t0_s: f64, samples: Vec<Complex32>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(Error::Config(format!("sample {i} is not finite")));
        }
        Ok(Self {
            sample_rate_hz,
            t0_s,
            samples,
        })
    }

    pub fn zeros(sample_rate_hz: f64, t0_s: f64, n: usize) -> Self {
        Self {
            sample_rate_hz,
            t0_s,
            samples: vec![Complex32::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean of |x|² over the stream, accumulated in f64.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.energy() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.re as f64).powi(2) + (s.im as f64).powi(2))
            .sum()
    }
}

/// A time span `[start_s, end_s)` during which the radar transmits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start_s: f64,
    pub end_s: f64,
}

impl Burst {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Checks that spans are well formed, ordered and non-overlapping.
pub fn validate_bursts(bursts: &[Burst]) -> Result<()> {
    for (i, b) in bursts.iter().enumerate() {
        if !(b.start_s.is_finite() && b.end_s.is_finite() && b.start_s < b.end_s) {
            return Err(Error::Config(format!(
                "burst {i} must satisfy start < end, got [{}, {})",
                b.start_s, b.end_s
            )));
        }
        if i > 0 && bursts[i - 1].end_s > b.start_s {
            return Err(Error::Config(format!(
                "burst {i} overlaps or precedes burst {}",
                i - 1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarWaveformConfig {
    pub pri_s: f64,
    pub pulse_width_s: f64,
    /// Linear FM sweep width, centered on 0 Hz.
    pub chirp_bandwidth_hz: f64,
    /// Peak linear amplitude.
    pub amplitude: f64,
    pub burst_spans: Vec<Burst>,
}

impl Default for RadarWaveformConfig {
    fn default() -> Self {
        Self {
            pri_s: 1e-3,
            pulse_width_s: 100e-6,
            chirp_bandwidth_hz: 200e3,
            amplitude: 1.0,
            burst_spans: Vec::new(),
        }
    }
}

impl RadarWaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_width_s > 0.0 && self.pulse_width_s < self.pri_s) {
            return Err(Error::Config(format!(
                "radar requires 0 < pulse_width_s < pri_s, got {} and {}",
                self.pulse_width_s, self.pri_s
            )));
        }
        if !(self.chirp_bandwidth_hz >= 0.0 && self.chirp_bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!(
                "chirp bandwidth must be >= 0, got {}",
                self.chirp_bandwidth_hz
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "radar amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        validate_bursts(&self.burst_spans)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Qpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellularWaveformConfig {
    pub fft_size: usize,
    pub cp_len: usize,
    /// Active subcarriers, split around (and excluding) DC.
    pub occupied_subcarriers: usize,
    pub modulation: Modulation,
    /// Target RMS amplitude of the whole stream.
    pub amplitude: f64,
}

impl Default for CellularWaveformConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            cp_len: 72,
            occupied_subcarriers: 600,
            modulation: Modulation::Qpsk,
            amplitude: 1.0,
        }
    }
}

impl CellularWaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.occupied_subcarriers > 0 && self.occupied_subcarriers < self.fft_size) {
            return Err(Error::Config(format!(
                "need 0 < occupied_subcarriers < fft_size, got {} and {}",
                self.occupied_subcarriers, self.fft_size
            )));
        }
        if self.cp_len >= self.fft_size {
            return Err(Error::Config(format!(
                "cp_len {} must be below fft_size {}",
                self.cp_len, self.fft_size
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "cellular amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    /// FFT bin indices carrying data: `occupied/2` bins below DC, the rest above.
    pub fn occupied_bins(&self) -> impl Iterator<Item = usize> + '_ {
        let below = self.occupied_subcarriers / 2;
        let above = self.occupied_subcarriers - below;
        let n = self.fft_size;
        (1..=above).chain((n - below)..n)
    }
}

pub(crate) fn sample_count(duration_s: f64, sample_rate_hz: f64) -> Result<usize> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Config(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::Config(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    Ok((duration_s * sample_rate_hz).round() as usize)
}

// Sample index of the first sample at or after time `t`, tolerant to float noise.
fn first_sample_at(t: f64, t0: f64, fs: f64) -> i64 {
    ((t - t0) * fs - 1e-6).ceil() as i64
}

/// Pulsed LFM radar over `[0, duration_s)`.
pub fn gen_radar(
    cfg: &RadarWaveformConfig,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqStream> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    gen_radar_at(cfg, 0.0, n, sample_rate_hz, seed)
}

/// Pulsed LFM radar for `n` samples starting at absolute time `t0_s`.
///
/// Pulses start at `burst.start_s + m * pri_s` and are clipped at the burst
/// end. The waveform is a function of absolute time, so consecutive calls
/// over adjacent intervals concatenate seamlessly.
pub fn gen_radar_at(
    cfg: &RadarWaveformConfig,
    t0_s: f64,
    n: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqStream> {
    cfg.validate()?;
    if cfg.pulse_width_s * sample_rate_hz < 2.0 {
        return Err(Error::Config(format!(
            "pulse of {} s spans fewer than 2 samples at {} Hz",
            cfg.pulse_width_s, sample_rate_hz
        )));
    }
    let mut out = IqStream::zeros(sample_rate_hz, t0_s, n);
    if cfg.amplitude == 0.0 || n == 0 {
        return Ok(out);
    }
    let fs = sample_rate_hz;
    let t_end = t0_s + n as f64 / fs;
    let phase0 = ChaCha20Rng::seed_from_u64(seed).random::<f64>() * 2.0 * PI;

    for burst in &cfg.burst_spans {
        if burst.end_s <= t0_s || burst.start_s >= t_end {
            continue;
        }
        let first_pulse = ((t0_s - cfg.pulse_width_s - burst.start_s) / cfg.pri_s)
            .floor()
            .max(0.0) as u64;
        let mut m = first_pulse;
        loop {
            let p_start = burst.start_s + m as f64 * cfg.pri_s;
            if p_start >= burst.end_s || p_start >= t_end {
                break;
            }
            let p_end = (p_start + cfg.pulse_width_s).min(burst.end_s);
            let k0 = first_sample_at(p_start, t0_s, fs).max(0);
            let k1 = first_sample_at(p_end, t0_s, fs).min(n as i64);
            for k in k0..k1 {
                let tau = t0_s + k as f64 / fs - p_start;
                let s = chirp_sample(cfg, phase0, tau);
                out.samples[k as usize] = Complex32::new(s.re as f32, s.im as f32);
            }
            m += 1;
        }
    }
    Ok(out)
}

/// One chirp sample `tau` seconds into a pulse: instantaneous frequency sweeps
/// linearly from `-B/2` to `+B/2` over the pulse width.
fn chirp_sample(cfg: &RadarWaveformConfig, phase0: f64, tau: f64) -> Complex64 {
    let rate = cfg.chirp_bandwidth_hz / cfg.pulse_width_s;
    let f_start = -cfg.chirp_bandwidth_hz / 2.0;
    let phase = phase0 + 2.0 * PI * (f_start * tau + 0.5 * rate * tau * tau);
    Complex64::from_polar(cfg.amplitude, phase)
}

/// CP-OFDM downlink with random QPSK on the occupied subcarriers over `[0, duration_s)`.
pub fn gen_cellular(
    cfg: &CellularWaveformConfig,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqStream> {
    cfg.validate()?;
    let n = sample_count(duration_s, sample_rate_hz)?;
    if n < cfg.symbol_len() {
        return Err(Error::Config(format!(
            "{n} samples cannot hold one OFDM symbol of {} samples",
            cfg.symbol_len()
        )));
    }
    gen_cellular_samples(cfg, 0.0, n, sample_rate_hz, seed)
}

/// CP-OFDM for exactly `n` samples; the final symbol is truncated if `n` is
/// not a multiple of the symbol length.
pub fn gen_cellular_samples(
    cfg: &CellularWaveformConfig,
    t0_s: f64,
    n: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqStream> {
    cfg.validate()?;
    let mut out = IqStream::zeros(sample_rate_hz, t0_s, n);
    if cfg.amplitude == 0.0 || n == 0 {
        return Ok(out);
    }
    let nfft = cfg.fft_size;
    let sym_len = cfg.symbol_len();
    let n_symbols = n.div_ceil(sym_len);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(nfft);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let qpsk = std::f64::consts::FRAC_1_SQRT_2;
    let bins: Vec<usize> = cfg.occupied_bins().collect();

    let mut body = vec![Complex64::new(0.0, 0.0); nfft];
    let mut raw: Vec<Complex64> = Vec::with_capacity(n_symbols * sym_len);
    for _ in 0..n_symbols {
        body.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for &k in &bins {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { qpsk } else { -qpsk };
            let im = if bits & 2 == 0 { qpsk } else { -qpsk };
            body[k] = Complex64::new(re, im);
        }
        ifft.process(&mut body);
        raw.extend_from_slice(&body[nfft - cfg.cp_len..]);
        raw.extend_from_slice(&body);
    }
    raw.truncate(n);

    let rms = (raw.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64).sqrt();
    let scale = if rms > 0.0 { cfg.amplitude / rms } else { 0.0 };
    for (o, s) in out.samples.iter_mut().zip(&raw) {
        *o = Complex32::new((s.re * scale) as f32, (s.im * scale) as f32);
    }
    Ok(out)
}

/// Circularly-symmetric complex Gaussian noise with total variance `power`.
pub fn gen_awgn(power: f64, n: usize, seed: u64) -> Result<IqStream> {
    gen_awgn_at(power, 0.0, n, DEFAULT_SAMPLE_RATE_HZ, seed)
}

pub fn gen_awgn_at(
    power: f64,
    t0_s: f64,
    n: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqStream> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::Config(format!("noise power must be >= 0, got {power}")));
    }
    let mut out = IqStream::zeros(sample_rate_hz, t0_s, n);
    if power == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, (power / 2.0).sqrt())
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for s in out.samples.iter_mut() {
        let re: f64 = normal.sample(&mut rng);
        let im: f64 = normal.sample(&mut rng);
        *s = Complex32::new(re as f32, im as f32);
    }
    Ok(out)
}

pub fn db_to_amplitude(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 20.0)
}

/// Sums streams scaled by `10^(gain_db/20)`, aligned on a common start time.
///
/// Shorter or later-starting streams are zero-padded. Accumulation is in f64
/// with a single rounding to f32 per output sample.
pub fn mix(parts: &[(&IqStream, f64)]) -> Result<IqStream> {
    let Some((first, _)) = parts.first() else {
        return Err(Error::Config("mix needs at least one stream".into()));
    };
    let fs = first.sample_rate_hz;
    if let Some((s, _)) = parts.iter().find(|(s, _)| s.sample_rate_hz != fs) {
        return Err(Error::Config(format!(
            "sample rate mismatch in mix: {} Hz vs {} Hz",
            fs, s.sample_rate_hz
        )));
    }
    let t0 = parts
        .iter()
        .map(|(s, _)| s.t0_s)
        .fold(f64::INFINITY, f64::min);
    let offsets: Vec<usize> = parts
        .iter()
        .map(|(s, _)| ((s.t0_s - t0) * fs).round() as usize)
        .collect();
    let len = parts
        .iter()
        .zip(&offsets)
        .map(|((s, _), off)| off + s.len())
        .max()
        .unwrap_or(0);

    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    for ((stream, gain_db), &off) in parts.iter().zip(&offsets) {
        let g = db_to_amplitude(*gain_db);
        for (a, s) in acc[off..].iter_mut().zip(&stream.samples) {
            a.re += g * s.re as f64;
            a.im += g * s.im as f64;
        }
    }
    Ok(IqStream {
        sample_rate_hz: fs,
        t0_s: t0,
        samples: acc
            .into_iter()
            .map(|a| Complex32::new(a.re as f32, a.im as f32))
            .collect(),
    })
}
