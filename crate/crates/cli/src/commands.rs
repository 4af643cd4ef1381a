use std::path::{Path, PathBuf};

use coexist_core::control::{
    calibrate_energy_for_scenario, export_report, run_experiment_partial, ExperimentConfig, Timeline,
};
use coexist_core::decision::{write_decision_log, VoteAccumulator, VoteConfig};
use coexist_core::detector::{
    calibrate_energy_threshold, compare_goldens, load_weights, load_weights_for, parity_fixture,
    read_fixture, write_fixture, write_weights, Architecture, CnnModel, Detector, TensorFile,
    PARITY_FIXTURE_SEED,
};
use coexist_core::framing::{
    build_training_mix, window_stream, write_dataset, Normalization, TrainingMixConfig, WINDOW_LEN,
};
use coexist_core::scenario::{load_scenario, Scenario};
use coexist_core::sensing::{derive_seed, SensingModel, SensingSpan};
use coexist_core::waveforms::{
    gen_awgn_at, gen_cellular_samples, gen_radar_at, mix, read_iqb, read_iqb_meta, write_iqb, Burst,
    CellularWaveformConfig, IqStream, IqbMeta, RadarWaveformConfig, DEFAULT_SAMPLE_RATE_HZ,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::{DetectorSection, FileConfig};
use crate::failure::Failure;

type CmdResult = Result<(), Failure>;

const DEFAULT_TARGET_PFA: f64 = 0.01;
const DEFAULT_CALIBRATION_WINDOWS: usize = 2000;
const DEFAULT_DEADLINE_MS: f64 = 60_000.0;

fn seed(arg: &SeedArg, file: &FileConfig) -> u64 {
    arg.seed.or(file.seed).unwrap_or(0)
}

fn scenario(flag: Option<&PathBuf>, file: &FileConfig) -> Result<Scenario, Failure> {
    match flag.or(file.scenario.as_ref()) {
        Some(p) => load_scenario(p).map_err(|e| Failure::from(e).into_config()),
        None => Ok(Scenario::default_waikiki()),
    }
}

fn parse_bursts(specs: &[String]) -> Result<Vec<Burst>, Failure> {
    specs
        .iter()
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| Failure::config(format!("burst `{s}` is not start:end")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Failure::config(format!("burst `{s}`: {e}")))
            };
            Ok(Burst::new(parse(a)?, parse(b)?))
        })
        .collect()
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::config(format!("{what} {} does not exist", path.display())))
    }
}

pub fn generate(a: &GenerateArgs, file: &FileConfig) -> CmdResult {
    let g = &file.generate;
    let seed = seed(&a.seed, file);
    let duration = a.duration_s.or(g.duration_s).unwrap_or(1.0);
    let t0 = a.t0_s.or(g.t0_s).unwrap_or(0.0);
    let power = a.power.or(g.power);
    let bursts = a.bursts.as_ref().or(g.bursts.as_ref()).map(|b| parse_bursts(b)).transpose()?;
    let scn = scenario(a.scenario.as_ref(), file)?;
    let fs = match a.kind {
        SignalKind::Scene => scn.sample_rate_hz,
        _ => a.sample_rate_hz.or(g.sample_rate_hz).unwrap_or(DEFAULT_SAMPLE_RATE_HZ),
    };
    if !(duration > 0.0 && fs > 0.0) {
        return Err(Failure::config("duration and sample rate must be > 0"));
    }
    let n = (duration * fs).round() as usize;
    let amplitude = a.amplitude.or(g.amplitude);

    let mut meta = IqbMeta::default();
    let signal = match a.kind {
        SignalKind::Radar => {
            let spans = bursts.unwrap_or_else(|| vec![Burst::new(t0, t0 + duration)]);
            let cfg = RadarWaveformConfig {
                amplitude: amplitude.unwrap_or(1.0),
                burst_spans: spans.clone(),
                ..Default::default()
            };
            meta.burst_spans = spans;
            meta.center_frequency = Some(format!("{} Hz", scn.carrier_hz_radar));
            gen_radar_at(&cfg, t0, n, fs, seed)?
        }
        SignalKind::Cellular => {
            let cfg = CellularWaveformConfig {
                amplitude: amplitude.unwrap_or(1.0),
                ..Default::default()
            };
            meta.center_frequency = Some(format!("{} Hz", scn.carrier_hz_cellular));
            gen_cellular_samples(&cfg, t0, n, fs, seed)?
        }
        SignalKind::Noise => gen_awgn_at(power.unwrap_or(1.0), t0, n, fs, seed)?,
        SignalKind::Scene => {
            let spans = bursts.unwrap_or_default();
            let span = SensingSpan::new(t0, n, &spans, seed);
            meta.burst_spans = spans.clone();
            meta.center_frequency = Some(format!("{} Hz", scn.carrier_hz_cellular));
            SensingModel::default().synthesize(&scn, &span)?
        }
    };
    let signal = match (a.kind, power) {
        (SignalKind::Radar | SignalKind::Cellular, Some(p)) if p > 0.0 => {
            let noise = gen_awgn_at(p, t0, n, fs, derive_seed(seed, 1, 0))?;
            let mut out = mix(&[(&signal, 0.0), (&noise, 0.0)])?;
            out.samples.truncate(n);
            out
        }
        _ => signal,
    };
    write_iqb(&signal, &a.out, Some(&meta))?;
    println!(
        "wrote {} samples ({:.6} s at {} Hz, power {:.6e}) to {}",
        signal.len(),
        signal.duration_s(),
        fs,
        signal.power(),
        a.out.display()
    );
    Ok(())
}

pub fn gen_dataset(a: &GenDatasetArgs, file: &FileConfig) -> CmdResult {
    let d = &file.dataset;
    let scn = scenario(a.scenario.as_ref(), file)?;
    let defaults = TrainingMixConfig::default();
    let cfg = TrainingMixConfig {
        radar_gains_db: a.radar_gains_db.clone().or(d.radar_gains_db.clone()).unwrap_or(defaults.radar_gains_db),
        cellular_gains_db: a
            .cellular_gains_db
            .clone()
            .or(d.cellular_gains_db.clone())
            .unwrap_or(defaults.cellular_gains_db),
        per_cell: a.per_cell.or(d.per_cell).unwrap_or(defaults.per_cell),
        seed: seed(&a.seed, file),
        ..defaults
    };
    let out = a.out.clone().or(d.out.clone()).unwrap_or_else(|| PathBuf::from("dataset.dsb"));
    let ds = build_training_mix(&scn, &cfg)?;
    write_dataset(&ds, &out)?;
    let (absent, present) = ds.label_counts();
    println!("wrote {} windows to {}", ds.windows.len(), out.display());
    println!("labels: radar_absent={absent} radar_present={present}");
    let fmt_gain = |g: Option<f64>| g.map_or("off".to_string(), |v| format!("{v:+} dB"));
    for c in &ds.meta.cells {
        println!(
            "cell radar={} cellular={}: windows={} radar={}",
            fmt_gain(c.radar_gain_db),
            fmt_gain(c.cellular_gain_db),
            c.n_windows,
            c.n_radar
        );
    }
    Ok(())
}

/// Written by `calibrate`, read by `detect` and `run`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub threshold: f64,
    pub target_pfa: f64,
    pub n_windows: usize,
    pub seed: u64,
    pub source: String,
}

pub fn read_threshold_file(path: &Path) -> Result<ThresholdFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read threshold file {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::config(format!("threshold file {}: {e}", path.display())))
}

pub fn calibrate(a: &CalibrateArgs, file: &FileConfig) -> CmdResult {
    let c = &file.calibrate;
    let seed = seed(&a.seed, file);
    let target_pfa = a.target_pfa.or(c.target_pfa).unwrap_or(DEFAULT_TARGET_PFA);
    let out = a.out.clone().or(c.out.clone()).unwrap_or_else(|| PathBuf::from("threshold.toml"));
    let (threshold, n_windows, source) = match a.noise_iqb.as_ref().or(c.noise_iqb.as_ref()) {
        Some(path) => {
            let windows = window_stream(&read_iqb(path)?, WINDOW_LEN)?;
            let t = calibrate_energy_threshold(&windows, target_pfa)?;
            (t, windows.len(), path.display().to_string())
        }
        None => {
            let scn = scenario(a.scenario.as_ref(), file)?;
            let n = a.windows.or(c.windows).unwrap_or(DEFAULT_CALIBRATION_WINDOWS);
            let t = calibrate_energy_for_scenario(&scn, &SensingModel::default(), n, target_pfa, seed)?;
            (t, n, "synthesized clear band while transmitting".to_string())
        }
    };
    let record = ThresholdFile {
        threshold,
        target_pfa,
        n_windows,
        seed,
        source,
    };
    let text = toml::to_string(&record).map_err(|e| Failure::runtime(e.to_string()))?;
    std::fs::write(&out, text)
        .map_err(|e| Failure::from(coexist_core::Error::Io { path: out.clone(), source: e }))?;
    println!("threshold={threshold:e} target_pfa={target_pfa} windows={n_windows} -> {}", out.display());
    Ok(())
}

/// Flag values take precedence over the config section.
struct DetectorChoiceResolved<'a> {
    args: &'a DetectorArgs,
    file: &'a DetectorSection,
}

impl DetectorChoiceResolved<'_> {
    fn kind(&self) -> DetectorChoice {
        self.args.detector.or(self.file.detector).unwrap_or(DetectorChoice::Energy)
    }

    fn vote_config(&self, base: VoteConfig, fs: f64) -> Result<VoteConfig, Failure> {
        let cfg = VoteConfig {
            vote_size: self.args.vote_size.or(self.file.vote_size).unwrap_or(base.vote_size),
            batch_size: self.args.batch_size.or(self.file.batch_size).unwrap_or(base.batch_size),
            sample_rate_hz: fs,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn explicit_threshold(&self) -> Result<Option<f64>, Failure> {
        if let Some(t) = self.args.threshold.or(self.file.threshold) {
            return Ok(Some(t));
        }
        match self.args.threshold_file.as_ref().or(self.file.threshold_file.as_ref()) {
            Some(p) => Ok(Some(read_threshold_file(p)?.threshold)),
            None => Ok(None),
        }
    }

    fn cnn(&self) -> Result<Detector, Failure> {
        let weights = self
            .args
            .weights
            .as_ref()
            .or(self.file.weights.as_ref())
            .ok_or_else(|| Failure::config("--detector cnn requires --weights"))?;
        require_file(weights, "weights file")?;
        let custom = self.args.allow_custom_arch || self.file.allow_custom_arch.unwrap_or(false);
        let model = if custom {
            load_weights_for(weights, Architecture::canonical(), true)?
        } else {
            load_weights(weights)?
        };
        let norm = match self.args.normalization.or(self.file.normalization) {
            Some(NormalizationChoice::MaxAbs) => Normalization::MaxAbs,
            Some(NormalizationChoice::None) => Normalization::None,
            _ => Normalization::UnitRms,
        };
        Ok(Detector::cnn(model, norm))
    }

    fn build(
        &self,
        bursts: &[Burst],
        batch_size: usize,
        calibrate: impl FnOnce() -> Result<f64, Failure>,
    ) -> Result<Detector, Failure> {
        let det = match self.kind() {
            DetectorChoice::Energy => {
                let t = match self.explicit_threshold()? {
                    Some(t) => t,
                    None => calibrate()?,
                };
                info!("energy threshold {t:e}");
                Detector::energy(t)?
            }
            DetectorChoice::Cnn => self.cnn()?,
            DetectorChoice::Oracle => Detector::oracle(bursts.to_vec()),
        };
        Ok(det.with_batch_size(batch_size)?)
    }
}

pub fn detect(a: &DetectArgs, file: &FileConfig) -> CmdResult {
    let sel = DetectorChoiceResolved {
        args: &a.detector,
        file: &file.detect,
    };
    let kind = sel.kind();
    if kind == DetectorChoice::Cnn {
        sel.cnn()?;
    }
    let x: IqStream = read_iqb(&a.input)?;
    let bursts = read_iqb_meta(&a.input)?.map(|m| m.burst_spans).unwrap_or_default();
    let vote = sel.vote_config(VoteConfig::default(), x.sample_rate_hz)?;
    let det = sel.build(&bursts, vote.batch_size, || {
        Err(Failure::config("energy detection needs --threshold or --threshold-file"))
    })?;
    let out = a
        .out
        .clone()
        .or(file.detect.out.clone())
        .unwrap_or_else(|| PathBuf::from("decisions.log"));

    let windows = window_stream(&x, WINDOW_LEN)?;
    let usable = windows.len() / vote.vote_size * vote.vote_size;
    if usable < windows.len() {
        warn!("dropping {} trailing windows that do not fill a vote", windows.len() - usable);
    }
    let mut acc = VoteAccumulator::new(vote)?;
    let mut decisions = Vec::new();
    for batch in windows[..usable].chunks(vote.batch_size) {
        let verdicts = det.classify_batch(batch)?;
        decisions.extend(acc.accumulate(&verdicts)?);
    }
    write_decision_log(&decisions, &out)?;
    let radar = decisions.iter().filter(|d| d.radar_present).count();
    println!(
        "decisions={} radar_decisions={radar} windows={usable} detector={} -> {}",
        decisions.len(),
        det.id(),
        out.display()
    );
    Ok(())
}

fn unique_run_dir(base: &Path, seed: u64) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let first = base.join(format!("{stamp}_seed{seed}"));
    let mut dir = first.clone();
    let mut i = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}_{i}", first.display()));
        i += 1;
    }
    dir
}

pub fn run(a: &RunArgs, file: &FileConfig) -> CmdResult {
    let r = &file.run;
    let seed = seed(&a.seed, file);
    let scn = scenario(a.scenario.as_ref(), file)?;
    let sel = DetectorChoiceResolved {
        args: &a.detector,
        file: &r.detector,
    };
    if sel.kind() == DetectorChoice::Cnn {
        sel.cnn()?;
    }

    let mut timeline: Timeline = file.timeline.clone().unwrap_or_default();
    if let Some(d) = a.duration_s.or(r.duration_s) {
        timeline.duration_s = d;
    }
    if let Some(b) = a.bursts.as_ref().or(r.bursts.as_ref()) {
        timeline.bursts = parse_bursts(b)?;
    }
    timeline.validate()?;

    let mut cfg: ExperimentConfig = file.experiment.clone().unwrap_or_default();
    cfg.vote = sel.vote_config(cfg.vote, scn.sample_rate_hz)?;
    if let Some(h) = a.hold_count.or(r.hold_count) {
        cfg.controller.hold_count = h;
    }
    if let Some(d) = a.reconnect_delay_s.or(r.reconnect_delay_s) {
        cfg.controller.reconnect_delay_s = d;
    }
    cfg.measure_compute |= a.measure_compute || r.measure_compute.unwrap_or(false);
    cfg.controller.validate()?;

    let deadline_ms = a.deadline_ms.or(r.deadline_ms).unwrap_or(DEFAULT_DEADLINE_MS);
    let target_pfa = a.target_pfa.or(r.target_pfa).unwrap_or(DEFAULT_TARGET_PFA);
    let cal_windows = a.calibration_windows.or(r.calibration_windows).unwrap_or(DEFAULT_CALIBRATION_WINDOWS);
    let det = sel.build(&timeline.bursts, cfg.vote.batch_size, || {
        Ok(calibrate_energy_for_scenario(&scn, &cfg.sensing, cal_windows, target_pfa, seed)?)
    })?;

    let dir = match a.run_dir.as_ref().or(r.run_dir.as_ref()) {
        Some(d) => d.clone(),
        None => unique_run_dir(
            a.output_dir.as_ref().or(r.output_dir.as_ref()).map_or(Path::new("runs"), |p| p.as_path()),
            seed,
        ),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::from(coexist_core::Error::Io { path: dir.clone(), source: e }))?;

    info!("running {} s with the {} detector, seed {seed}", timeline.duration_s, det.id());
    let (report, err) = run_experiment_partial(&scn, &timeline, &det, &cfg, seed);
    export_report(&report, &dir)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let s = &report.summary;
    let latency = s.mean_latency_ms.map_or("none".to_string(), |v| format!("{v:.3}"));
    println!(
        "decisions={} radar_decisions={} mean_latency_ms={latency} vacated_s={:.3} report={}",
        s.n_decisions,
        s.n_radar_decisions,
        s.vacated_duration_s,
        dir.display()
    );
    if s.missed_bursts > 0 {
        return Err(Failure::compliance(format!("{} radar burst(s) never detected", s.missed_bursts)));
    }
    if let Some(m) = s.mean_latency_ms.filter(|m| *m > deadline_ms) {
        return Err(Failure::compliance(format!(
            "mean detection latency {m:.3} ms exceeds the {deadline_ms} ms deadline"
        )));
    }
    Ok(())
}

pub fn init_weights(a: &InitWeightsArgs, file: &FileConfig) -> CmdResult {
    let model = CnnModel::random(Architecture::canonical(), seed(&a.seed, file))?;
    write_weights(&model, &a.out)?;
    println!("wrote untrained canonical weights to {}", a.out.display());
    Ok(())
}

pub fn fixture(a: &FixtureArgs, file: &FileConfig) -> CmdResult {
    let seed = a.seed.seed.or(file.seed).unwrap_or(PARITY_FIXTURE_SEED);
    write_fixture(&parity_fixture(seed)?, &a.out)?;
    println!("wrote 4-window parity batch to {}", a.out.display());
    Ok(())
}

pub fn parity(a: &ParityArgs, file: &FileConfig) -> CmdResult {
    let model = load_weights_for(&a.weights, Architecture::canonical(), a.allow_custom_arch)?;
    let input = match &a.fixture {
        Some(p) => read_fixture(p)?,
        None => parity_fixture(a.seed.seed.or(file.seed).unwrap_or(PARITY_FIXTURE_SEED))?,
    };
    let goldens = TensorFile::read(&a.goldens)?;
    let diffs = compare_goldens(&model, &input, &goldens)?;
    let mut failed = 0;
    for d in &diffs {
        let verdict = if d.passed() { "ok" } else { "FAIL" };
        failed += usize::from(!d.passed());
        println!("{verdict:4} {:<16} max_abs_diff={:.3e} tolerance={:.0e}", d.layer, d.max_abs_diff, d.tolerance);
    }
    if failed > 0 {
        return Err(Failure::runtime(format!("{failed} tensor(s) outside tolerance")));
    }
    Ok(())
}
