//! Average-power baseline detector.

use super::DetectorVerdict;
use crate::error::{Error, Result};
use crate::framing::{IqWindow, WINDOW_LEN};

pub const ENERGY_DETECTOR_ID: &str = "energy";
/// Fewest noise windows accepted for calibration.
pub const MIN_CALIBRATION_WINDOWS: usize = 1000;

/// E = Σ(I² + Q²) / 1024, accumulated in f64.
pub fn window_energy(w: &IqWindow) -> f64 {
    w.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / WINDOW_LEN as f64
}

pub fn energy_detect(w: &IqWindow, threshold: f64) -> DetectorVerdict {
    let e = window_energy(w);
    DetectorVerdict {
        window_start_sample: w.start_sample,
        label: u8::from(e >= threshold),
        score: (e / (2.0 * threshold)).clamp(0.0, 1.0),
        detector_id: ENERGY_DETECTOR_ID.to_string(),
    }
}

/// Empirical `(1 - target_pfa)` quantile of window energy, linearly
/// interpolated between order statistics.
pub fn calibrate_energy_threshold(noise_windows: &[IqWindow], target_pfa: f64) -> Result<f64> {
    if noise_windows.len() < MIN_CALIBRATION_WINDOWS {
        return Err(Error::Calibration(format!(
            "need at least {MIN_CALIBRATION_WINDOWS} noise windows, got {}",
            noise_windows.len()
        )));
    }
    if !(target_pfa > 0.0 && target_pfa <= 0.5) {
        return Err(Error::Calibration(format!(
            "target_pfa must lie in (0, 0.5], got {target_pfa}"
        )));
    }
    let mut e: Vec<f64> = noise_windows.iter().map(window_energy).collect();
    e.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&e, 1.0 - target_pfa);
    if !(threshold > 0.0) {
        return Err(Error::Calibration(
            "noise windows carry no energy; threshold would be zero".into(),
        ));
    }
    Ok(threshold)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
