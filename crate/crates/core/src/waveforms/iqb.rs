//! `.iqb` recordings: a fixed little-endian header followed by interleaved
//! f32 I/Q pairs, plus an optional `.iqb.json` sidecar.

use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{Burst, IqStream};
use crate::codec::{put_f32s, read_file, write_file, ByteReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IQB1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

/// Free-form metadata stored next to a recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IqbMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_frequency: Option<String>,
    #[serde(default)]
    pub burst_spans: Vec<Burst>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_iqb(stream: &IqStream, path: &Path, meta: Option<&IqbMeta>) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + stream.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&stream.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&stream.t0_s.to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for s in &stream.samples {
        put_f32s(&mut out, &[s.re, s.im]);
    }
    write_file(path, &out)?;
    if let Some(meta) = meta {
        let json = serde_json::to_vec_pretty(meta).expect("metadata serializes");
        write_file(&sidecar(path), &json)?;
    }
    Ok(())
}

pub fn read_iqb(path: &Path) -> Result<IqStream> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes);
    r.magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported iqb version {version}")));
    }
    let at = r.offset();
    let sample_rate_hz = r.f64("sample rate")?;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::format(at, format!("invalid sample rate {sample_rate_hz}")));
    }
    let t0_s = r.f64("t0")?;
    let at = r.offset();
    let n = r.u64("sample count")?;
    let need = n.checked_mul(8).filter(|&b| b == r.remaining() as u64);
    if need.is_none() {
        return Err(Error::format(
            at,
            format!(
                "header declares {n} samples but body holds {} bytes",
                r.remaining()
            ),
        ));
    }
    let flat = r.f32_vec(n as usize * 2, "samples")?;
    let samples = flat
        .chunks_exact(2)
        .map(|p| Complex32::new(p[0], p[1]))
        .collect();
    IqStream::new(sample_rate_hz, t0_s, samples)
        .map_err(|e| Error::format(HEADER_LEN as u64, e.to_string()))
}

/// Reads the `.iqb.json` sidecar if one exists.
pub fn read_iqb_meta(path: &Path) -> Result<Option<IqbMeta>> {
    let side = sidecar(path);
    if !side.exists() {
        return Ok(None);
    }
    let bytes = read_file(&side)?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| Error::Parse {
            path: side,
            msg: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::gen_awgn;

    #[test]
    fn round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.iqb");
        let mut s = gen_awgn(0.5, 3000, 4).unwrap();
        s.t0_s = 1.25;
        let meta = IqbMeta {
            center_frequency: Some("980 MHz".into()),
            burst_spans: vec![Burst::new(0.1, 0.2)],
            ..Default::default()
        };
        write_iqb(&s, &path, Some(&meta)).unwrap();
        assert_eq!(read_iqb(&path).unwrap(), s);
        assert_eq!(read_iqb_meta(&path).unwrap(), Some(meta));
    }

    #[test]
    fn truncated_and_bad_magic_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.iqb");
        write_iqb(&gen_awgn(1.0, 10, 1).unwrap(), &path, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_iqb(&path), Err(Error::Format { offset: 24, .. })));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        let err = read_iqb(&path).unwrap_err().to_string();
        assert!(err.contains("IQB1"), "{err}");

        std::fs::write(&path, b"").unwrap();
        assert!(matches!(read_iqb(&path), Err(Error::Format { .. })));
    }
}
