//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use coexist_core::control::{
    calibrate_energy_for_scenario, export_report, mean_std, read_report, run_experiment, spectrogram,
    BsMode, ExperimentConfig, ExperimentReport, Stft, Timeline, MAGNITUDE_EPS, REPORT_FILES,
};
use coexist_core::decision::{latency, majority, VoteConfig};
use coexist_core::detector::{
    calibrate_energy_threshold, classify_batch, cnn_forward, energy_detect, load_weights, maxpool1d,
    write_weights, Architecture, CnnModel, Conv1d, Dense, Detector, DetectorVerdict, NonLocal,
    TensorFile,
};
use coexist_core::framing::{
    read_dataset, window_stream, write_dataset, build_training_mix, Normalization, TrainingMixConfig,
    WINDOW_LEN,
};
use coexist_core::scenario::Scenario;
use coexist_core::waveforms::{gen_awgn, gen_radar, mix, read_iqb, write_iqb, Burst, IqStream, RadarWaveformConfig};
use coexist_core::Error;
use num_complex::Complex32;

const FS: f64 = 1.024e6;

type Outcome = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn as_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

fn max_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (&x, &y)| m.max((x as f64 - y).abs()))
}

fn conv(cin: usize, cout: usize, k: usize, pad: usize, seed: u64) -> Conv1d {
    let w = common::random_vec(cout * cin * k, seed, 0.5);
    Conv1d::new(cin, cout, k, pad, w, common::random_vec(cout, seed + 1, 0.5)).unwrap()
}

fn nlb(c: usize, seed: u64) -> NonLocal {
    let h = c / 2;
    NonLocal::new(c, conv(c, h, 1, 0, seed), conv(c, h, 1, 0, seed + 10), conv(c, h, 1, 0, seed + 20), conv(h, c, 1, 0, seed + 30))
        .unwrap()
}

fn verdicts(labels: impl Iterator<Item = u8>) -> Vec<DetectorVerdict> {
    labels
        .enumerate()
        .map(|(i, label)| DetectorVerdict {
            window_start_sample: (i * WINDOW_LEN) as u64,
            label,
            score: label as f64,
            detector_id: "acceptance".into(),
        })
        .collect()
}

fn vote_correctness() -> Outcome {
    let cfg = VoteConfig::default();
    for count in 0..=100usize {
        let d = majority(&verdicts((0..100).map(|i| u8::from(i < count))), &cfg).map_err(|e| e.to_string())?;
        ensure!(d.radar_count == count, "count {count} tallied as {}", d.radar_count);
        ensure!(d.radar_present == (count >= 50), "count {count} decided {}", d.radar_present);
    }
    Ok(())
}

fn cnn_shape() -> Outcome {
    let arch = Architecture::canonical();
    let model = CnnModel::random(arch.clone(), 11).map_err(|e| e.to_string())?;
    let batch = common::random_batch(10, 12);
    let out = cnn_forward(&model, &batch).map_err(|e| e.to_string())?;
    ensure!(out.dims == vec![10, 2], "output dims {:?}", out.dims);
    for i in 0..10 {
        let s: f64 = out.row(i).iter().map(|&p| p as f64).sum();
        ensure!((s - 1.0).abs() <= 1e-6, "row {i} sums to {s}");
    }
    let zero = CnnModel::constant(arch, 0.0).map_err(|e| e.to_string())?;
    let out = cnn_forward(&zero, &batch).map_err(|e| e.to_string())?;
    ensure!(out.data.iter().all(|&p| p == 0.5), "zero model gave {:?}", &out.data[..2]);
    Ok(())
}

fn layer_oracles() -> Outcome {
    for (i, &(cin, cout, k, pad, len)) in [(2, 4, 3, 1, 16), (3, 5, 3, 0, 9), (1, 3, 5, 2, 11)].iter().enumerate() {
        let c = conv(cin, cout, k, pad, 300 + i as u64);
        let x = common::random_vec(len * cin, 400 + i as u64, 2.0);
        let d = max_diff(&c.forward(&x, len), &common::conv1d(&as_f64(&x), len, cin, &c.weight, &c.bias, cout, k, pad));
        ensure!(d <= 1e-6, "conv1d case {i}: {d:e}");
    }
    let x = common::random_vec(12 * 3, 5, 3.0);
    let d = max_diff(&maxpool1d(&x, 12, 3, 2), &common::maxpool(&as_f64(&x), 12, 3, 2));
    ensure!(d <= 1e-6, "maxpool: {d:e}");
    let (nin, nout) = (29, 7);
    let dense = Dense::new(nin, nout, common::random_vec(nin * nout, 6, 0.5), common::random_vec(nout, 7, 0.5))
        .map_err(|e| e.to_string())?;
    let x = common::random_vec(nin, 8, 2.0);
    let d = max_diff(&dense.forward(&x), &common::dense(&as_f64(&x), &dense.weight, &dense.bias, nin, nout));
    ensure!(d <= 1e-6, "dense: {d:e}");
    let (len, c) = (8, 4);
    let n = nlb(c, 90);
    let x = common::random_vec(len * c, 91, 1.5);
    let params = common::NlbParams {
        theta: (&n.theta.weight, &n.theta.bias),
        phi: (&n.phi.weight, &n.phi.bias),
        g: (&n.g.weight, &n.g.bias),
        wz: (&n.wz.weight, &n.wz.bias),
    };
    let d = max_diff(&n.forward(&x, len), &common::nonlocal(&as_f64(&x), len, c, &params).0);
    ensure!(d <= 1e-6, "nonlocal: {d:e}");
    Ok(())
}

fn nlb_identity() -> Outcome {
    for c in [4, 8] {
        let mut n = nlb(c, 60 + c as u64);
        n.wz = Conv1d::new(c / 2, c, 1, 0, vec![0.0; c * c / 2], vec![0.0; c]).unwrap();
        let x = common::random_vec(16 * c, 61, 4.0);
        ensure!(n.forward(&x, 16) == x, "output differs from input at C={c}");
    }
    Ok(())
}

fn noise_windows(n: usize, seed: u64) -> Vec<coexist_core::framing::IqWindow> {
    window_stream(&gen_awgn(1.0, n * WINDOW_LEN, seed).unwrap(), WINDOW_LEN).unwrap()
}

fn energy_calibration() -> Outcome {
    let threshold = calibrate_energy_threshold(&noise_windows(10_000, 1), 0.01).map_err(|e| e.to_string())?;
    let fresh = noise_windows(10_000, 2);
    let far = fresh.iter().filter(|w| energy_detect(w, threshold).label == 1).count() as f64 / fresh.len() as f64;
    ensure!((0.005..=0.015).contains(&far), "false-alarm rate {far}");

    // Peak radar power 10 dB over the noise floor.
    let n = 1000 * WINDOW_LEN;
    let radar_cfg = RadarWaveformConfig {
        burst_spans: vec![Burst::new(0.0, n as f64 / FS)],
        ..RadarWaveformConfig::default()
    };
    let radar = gen_radar(&radar_cfg, n as f64 / FS, FS, 3).map_err(|e| e.to_string())?;
    let noise = gen_awgn(1.0, n, 4).map_err(|e| e.to_string())?;
    let rx = mix(&[(&radar, 10.0), (&noise, 0.0)]).map_err(|e| e.to_string())?;
    let ws = window_stream(&rx, WINDOW_LEN).map_err(|e| e.to_string())?;
    let pd = ws.iter().filter(|w| energy_detect(w, threshold).label == 1).count() as f64 / ws.len() as f64;
    ensure!(ws.len() == 1000 && pd >= 0.99, "detection rate {pd} over {} windows", ws.len());
    println!("      threshold {threshold:.5}, false-alarm rate {far:.4}, detection rate {pd:.4}");
    Ok(())
}

fn short_timeline() -> Timeline {
    Timeline { duration_s: 1.5, bursts: vec![Burst::new(0.5, 1.0)] }
}

fn latency_criterion() -> Outcome {
    let cfg = VoteConfig::default();
    let start = 500 * 102_400u64;
    let mut v = verdicts(std::iter::repeat_n(1, 100));
    for (i, w) in v.iter_mut().enumerate() {
        w.window_start_sample = start + (i * WINDOW_LEN) as u64;
    }
    let d = majority(&v, &cfg).map_err(|e| e.to_string())?;
    let l = latency(&d, start, FS).map_err(|e| e.to_string())?;
    ensure!(l == 100.0, "signal latency {l} ms");

    let scn = Scenario::default_waikiki();
    let exp = ExperimentConfig { measure_compute: true, ..ExperimentConfig::default() };
    let mut lat = Vec::new();
    for seed in 0..20u64 {
        let t = calibrate_energy_for_scenario(&scn, &exp.sensing, 1000, 0.01, seed).map_err(|e| e.to_string())?;
        let r = run_experiment(&scn, &short_timeline(), &Detector::energy(t).unwrap(), &exp, seed)
            .map_err(|e| e.to_string())?;
        let m = r.summary.mean_latency_ms.ok_or(format!("seed {seed}: burst missed"))?;
        ensure!((100.0..=300.0).contains(&m), "seed {seed}: end-to-end latency {m} ms");
        lat.push(m);
    }
    let (mean, std) = mean_std(&lat).unwrap();
    println!("      energy detector end-to-end latency {mean:.3} ± {std:.3} ms over 20 runs");

    let model = CnnModel::random(Architecture::canonical(), 5).map_err(|e| e.to_string())?;
    let det = Detector::cnn(model, Normalization::UnitRms);
    let ws = noise_windows(10, 9);
    let t0 = Instant::now();
    classify_batch(&det, &ws).map_err(|e| e.to_string())?;
    let batch_ms = t0.elapsed().as_secs_f64() * 1e3;
    println!("      info: cnn batch of 10 takes {batch_ms:.1} ms, projected end-to-end {:.1} ms", 100.0 + batch_ms);
    Ok(())
}

fn full_run(dir: &Path) -> std::result::Result<ExperimentReport, String> {
    let scn = Scenario::default_waikiki();
    let exp = ExperimentConfig::default();
    let t = calibrate_energy_for_scenario(&scn, &exp.sensing, 2000, 0.01, 7).map_err(|e| e.to_string())?;
    let r = run_experiment(&scn, &Timeline::default(), &Detector::energy(t).unwrap(), &exp, 7).map_err(|e| e.to_string())?;
    export_report(&r, dir).map_err(|e| e.to_string())?;
    Ok(r)
}

fn timeline_reproduction() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let r = full_run(a.path())?;
    full_run(b.path())?;
    let vote_s = 0.1;
    let first = |kind: &str| r.events.iter().find(|e| e.kind == kind).map(|e| e.t_s);
    let shutdown = first("shutdown").ok_or("no shutdown")?;
    ensure!(shutdown <= 50.0 + 2.0 * vote_s + 1e-9, "vacated at {shutdown} s");
    let quiet: Vec<_> = r.throughput_trace.iter().filter(|s| (51.0..=89.0).contains(&s.t_s)).collect();
    ensure!(!quiet.is_empty(), "no throughput samples in [51, 89] s");
    ensure!(quiet.iter().all(|s| s.mbps == 0.0), "traffic while vacated");
    let turn_on = r.events.iter().find(|e| e.kind == "turn_on" && e.t_s > 90.0).map(|e| e.t_s).ok_or("never turned on")?;
    let resumed = r.events.iter().filter(|e| e.kind == "ue_reconnected" && e.t_s > 90.0).map(|e| e.t_s).fold(0.0, f64::max);
    let bound = 90.0 + 0.1 + 2.0 + vote_s + 1e-9;
    ensure!(resumed > 0.0 && resumed <= bound, "UEs back at {resumed} s, bound {bound} s");
    let mode = r.bs_trace.iter().rev().find(|s| s.t_s <= bound).map(|s| s.mode);
    ensure!(mode == Some(BsMode::Transmitting), "BS mode {mode:?} at {bound} s");
    for name in REPORT_FILES {
        let x = std::fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{name} differs between seeded runs");
    }
    println!("      shutdown {shutdown:.3} s, turn-on {turn_on:.3} s, UEs reconnected {resumed:.3} s");
    Ok(())
}

fn tone(n: usize, f: f64) -> IqStream {
    let samples = (0..n)
        .map(|i| {
            let ph = 2.0 * std::f64::consts::PI * f * i as f64;
            Complex32::new(ph.cos() as f32, ph.sin() as f32)
        })
        .collect();
    IqStream::new(FS, 0.0, samples).unwrap()
}

fn parseval_rel_error(x: &IqStream, nfft: usize) -> f64 {
    let mut stft = Stft::new(nfft).unwrap();
    let w = stft.window().to_vec();
    let s = spectrogram(x, nfft, nfft).unwrap();
    let mut worst = 0.0f64;
    for (frame, exported) in x.samples.chunks_exact(nfft).zip(&s.frames) {
        let time: f64 = frame.iter().zip(&w).map(|(s, w)| s.norm_sqr() as f64 * w * w).sum();
        let direct: f64 = stft.spectrum(frame).iter().map(|v| v.norm_sqr()).sum::<f64>() / nfft as f64;
        let from_db: f64 = exported
            .magnitude_db
            .iter()
            .map(|db| (10f64.powf(db / 20.0) - MAGNITUDE_EPS).powi(2))
            .sum::<f64>()
            / nfft as f64;
        worst = worst.max((direct - time).abs() / time).max((from_db - time).abs() / time);
    }
    worst
}

fn spectrogram_parseval() -> Outcome {
    for (name, x, nfft) in [
        ("noise", gen_awgn(1.0, 16 * 1024, 5).unwrap(), 1024),
        ("tone", tone(8 * 256, 0.071), 256),
    ] {
        let e = parseval_rel_error(&x, nfft);
        ensure!(e <= 1e-6, "{name}: relative error {e:e}");
    }
    for (nfft, k) in [(256usize, 32i64), (1024, -100)] {
        let s = spectrogram(&tone(4 * nfft, k as f64 / nfft as f64), nfft, nfft / 2).unwrap();
        let want = (nfft as i64 / 2 + k) as usize;
        for f in &s.frames {
            let peak = (0..nfft).max_by(|&a, &b| f.magnitude_db[a].total_cmp(&f.magnitude_db[b])).unwrap();
            ensure!(peak == want, "nfft {nfft}: tone in bin {peak}, expected {want}");
        }
    }
    Ok(())
}

/// Truncations and header corruptions must all decode to format errors without panicking.
fn corruption_sweep<T>(path: &Path, good: &[u8], load: impl Fn(&Path) -> coexist_core::Result<T>) -> Outcome {
    let mut cases: Vec<Vec<u8>> = [0, 2, 4, 7, 12, 20, 30, good.len() / 2, good.len() - 1]
        .iter()
        .filter(|&&c| c < good.len())
        .map(|&c| good[..c].to_vec())
        .collect();
    for at in [0usize, 4, 5] {
        let mut b = good.to_vec();
        b[at] ^= 0x5a;
        cases.push(b);
    }
    let mut long = good.to_vec();
    long.extend_from_slice(&[0; 3]);
    cases.push(long);
    for (i, bytes) in cases.iter().enumerate() {
        std::fs::write(path, bytes).unwrap();
        match catch_unwind(AssertUnwindSafe(|| load(path))) {
            Ok(Err(Error::Format { .. })) => {}
            Ok(Err(e)) => return Err(format!("{}: case {i} gave non-format error {e}", path.display())),
            Ok(Ok(_)) => return Err(format!("{}: case {i} decoded", path.display())),
            Err(_) => return Err(format!("{}: case {i} panicked", path.display())),
        }
    }
    std::fs::write(path, good).unwrap();
    Ok(())
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let err = |e: Error| e.to_string();

    let iqb = dir.path().join("x.iqb");
    let stream = IqStream { t0_s: 3.25, ..gen_awgn(0.5, 5000, 1).unwrap() };
    write_iqb(&stream, &iqb, None).map_err(err)?;
    let back = read_iqb(&iqb).map_err(err)?;
    ensure!(back.t0_s == stream.t0_s && back.sample_rate_hz == stream.sample_rate_hz, "iqb header changed");
    ensure!(
        back.samples.iter().zip(&stream.samples).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits())
            && back.len() == stream.len(),
        "iqb samples changed"
    );
    corruption_sweep(&iqb, &std::fs::read(&iqb).unwrap(), read_iqb)?;

    let dsb = dir.path().join("x.dsb");
    let cfg = TrainingMixConfig { per_cell: 3, radar_gains_db: vec![0.0], cellular_gains_db: vec![0.0], seed: 2, ..Default::default() };
    let ds = build_training_mix(&Scenario::default_waikiki(), &cfg).map_err(err)?;
    write_dataset(&ds, &dsb).map_err(err)?;
    ensure!(read_dataset(&dsb).map_err(err)? == ds, "dsb round trip changed the dataset");
    corruption_sweep(&dsb, &std::fs::read(&dsb).unwrap(), read_dataset)?;

    let cnw = dir.path().join("x.cnw");
    let model = CnnModel::random(Architecture::canonical(), 3).map_err(err)?;
    write_weights(&model, &cnw).map_err(err)?;
    ensure!(load_weights(&cnw).map_err(err)?.tensors() == model.tensors(), "cnw round trip changed weights");
    let file = TensorFile::read(&cnw).map_err(err)?;
    ensure!(TensorFile::from_bytes(&file.to_bytes().map_err(err)?).map_err(err)? == file, "cnw re-encode differs");
    corruption_sweep(&cnw, &std::fs::read(&cnw).unwrap(), TensorFile::read)?;

    let scn = Scenario::default_waikiki();
    let exp = ExperimentConfig::default();
    let t = calibrate_energy_for_scenario(&scn, &exp.sensing, 1000, 0.01, 4).map_err(err)?;
    let report = run_experiment(&scn, &short_timeline(), &Detector::energy(t).unwrap(), &exp, 4).map_err(err)?;
    let rdir = dir.path().join("report");
    export_report(&report, &rdir).map_err(err)?;
    ensure!(read_report(&rdir).map_err(err)? == report, "report round trip changed fields");
    let rdir2 = dir.path().join("report2");
    export_report(&read_report(&rdir).map_err(err)?, &rdir2).map_err(err)?;
    for name in REPORT_FILES {
        ensure!(
            std::fs::read(rdir.join(name)).unwrap() == std::fs::read(rdir2.join(name)).unwrap(),
            "{name} re-export differs"
        );
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("vote correctness", vote_correctness, Duration::from_secs(1)),
        ("cnn shape and normalization", cnn_shape, Duration::from_secs(5)),
        ("layer oracles", layer_oracles, Duration::from_secs(10)),
        ("nonlocal residual identity", nlb_identity, Duration::from_secs(1)),
        ("energy detector calibration", energy_calibration, Duration::from_secs(30)),
        ("latency arithmetic", latency_criterion, Duration::from_secs(60)),
        ("timeline reproduction", timeline_reproduction, Duration::from_secs(120)),
        ("spectrogram parseval", spectrogram_parseval, Duration::from_secs(10)),
        ("format round trips", format_round_trips, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let t0 = Instant::now();
        let outcome = match catch_unwind(check) {
            Ok(o) => o,
            Err(_) => Err("panicked".into()),
        };
        let took = t0.elapsed();
        let outcome = outcome.and_then(|()| {
            if took <= budget {
                Ok(())
            } else {
                Err(format!("took {:.2} s, budget {} s", took.as_secs_f64(), budget.as_secs()))
            }
        });
        match outcome {
            Ok(()) => println!("PASS {name} ({:.2} s)", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({:.2} s): {msg}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
