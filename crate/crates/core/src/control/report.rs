//! Report directory: five CSV traces plus `summary.json`.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::experiment::{BsSample, Event, ExperimentReport, ExperimentSummary, ThroughputSample};
use super::spectrogram::{SpectrogramFrame, SpectrogramFrames};
use crate::decision::VoteDecision;
use crate::error::{Error, Result};

pub const REPORT_FILES: [&str; 6] = [
    "bs_trace.csv",
    "throughput.csv",
    "decisions.csv",
    "events.csv",
    "spectrogram.csv",
    "summary.json",
];

#[derive(Debug, Serialize, Deserialize)]
struct DecisionRow {
    index: usize,
    first_start_sample: u64,
    last_end_sample: u64,
    radar_count: usize,
    vote_size: usize,
    radar_present: bool,
    signal_time_ms: f64,
    compute_time_ms: f64,
    latency_ms: f64,
    decided_at_s: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn export_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = |name: &str| dir.join(name);

    write_rows(&path("bs_trace.csv"), &report.bs_trace)?;
    write_rows(&path("throughput.csv"), &report.throughput_trace)?;
    write_rows(
        &path("decisions.csv"),
        report.decisions.iter().enumerate().map(|(index, d)| DecisionRow {
            index,
            first_start_sample: d.window_span.0,
            last_end_sample: d.window_span.1,
            radar_count: d.radar_count,
            vote_size: d.vote_size,
            radar_present: d.radar_present,
            signal_time_ms: d.signal_time_ms,
            compute_time_ms: d.compute_time_ms,
            latency_ms: d.latency_ms,
            decided_at_s: d.decided_at_s(),
        }),
    )?;
    write_rows(&path("events.csv"), &report.events)?;

    let spec_path = path("spectrogram.csv");
    let mut w = writer(&spec_path)?;
    let mut header = vec!["t_s".to_string()];
    header.extend(report.spectrogram.bin_frequencies_hz().iter().map(|f| format!("{f}")));
    w.write_record(&header).map_err(|e| csv_err(&spec_path, e))?;
    for f in &report.spectrogram.frames {
        let row = std::iter::once(f.t_s).chain(f.magnitude_db.iter().copied()).map(|v| v.to_string());
        w.write_record(row).map_err(|e| csv_err(&spec_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&spec_path, e))?;

    let summary_path = path("summary.json");
    let mut json = serde_json::to_string_pretty(&report.summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    json.push('\n');
    std::fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;

    Ok(REPORT_FILES.iter().map(|n| path(n)).collect())
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let summary: ExperimentSummary = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: summary_path.clone(),
        msg: e.to_string(),
    })?;

    let bs_trace: Vec<BsSample> = read_rows(&dir.join("bs_trace.csv"))?;
    let throughput_trace: Vec<ThroughputSample> = read_rows(&dir.join("throughput.csv"))?;
    let events: Vec<Event> = read_rows(&dir.join("events.csv"))?;
    let decisions = read_rows::<DecisionRow>(&dir.join("decisions.csv"))?
        .into_iter()
        .map(|r| VoteDecision {
            radar_present: r.radar_present,
            radar_count: r.radar_count,
            vote_size: r.vote_size,
            window_span: (r.first_start_sample, r.last_end_sample),
            sample_rate_hz: summary.sample_rate_hz,
            signal_time_ms: r.signal_time_ms,
            compute_time_ms: r.compute_time_ms,
            latency_ms: r.latency_ms,
        })
        .collect();

    let spec_path = dir.join("spectrogram.csv");
    let mut r = csv::Reader::from_path(&spec_path).map_err(|e| csv_err(&spec_path, e))?;
    let mut frames = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(&spec_path, e))?;
        let vals = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                path: spec_path.clone(),
                msg: format!("row {}: {e}", frames.len() + 1),
            })?;
        if vals.len() != summary.spectrogram_nfft + 1 {
            return Err(Error::Parse {
                path: spec_path.clone(),
                msg: format!("row {} has {} bins", frames.len() + 1, vals.len().saturating_sub(1)),
            });
        }
        frames.push(SpectrogramFrame {
            t_s: vals[0],
            magnitude_db: vals[1..].to_vec(),
        });
    }

    Ok(ExperimentReport {
        bs_trace,
        throughput_trace,
        decisions,
        events,
        spectrogram: SpectrogramFrames {
            nfft: summary.spectrogram_nfft,
            hop: summary.spectrogram_hop,
            sample_rate_hz: summary.sample_rate_hz,
            frames,
        },
        summary,
    })
}
