//! `.cnw` tensor containers, used for model weights and golden activations.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CNW1" | u32 version=1 | u32 n_tensors | [u8; 32] architecture hash
//! n_tensors × ( u16 name_len | name (UTF-8) | u8 dtype=0 (f32) | u8 ndim | ndim × u32 dim | f32 data )
//! u64 XXH64(seed 0) of the tensor records
//! ```

use std::path::Path;

use super::model::{Architecture, CnnModel};
use super::tensor::Tensor;
use crate::codec::{checksum, put_f32s, read_file, write_file, ByteReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CNW1";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 4 + 4 + 4 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub arch_hash: [u8; 32],
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut body = Vec::new();
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Config(format!("tensor name too long: {name}")))?;
            let ndim = u8::try_from(t.dims.len())
                .map_err(|_| Error::Config(format!("tensor `{name}` has too many dims")))?;
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(Error::Config(format!("tensor `{name}` dims disagree with data")));
            }
            body.extend_from_slice(&name_len.to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.push(DTYPE_F32);
            body.push(ndim);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Config(format!("tensor `{name}` dim {d} exceeds u32")))?;
                body.extend_from_slice(&d.to_le_bytes());
            }
            put_f32s(&mut body, &t.data);
        }
        let n = u32::try_from(self.tensors.len())
            .map_err(|_| Error::Config("too many tensors".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + body.len() + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&self.arch_hash);
        out.extend_from_slice(&body);
        out.extend_from_slice(&checksum(&body).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(at, format!("unsupported cnw version {version}")));
        }
        let n = r.u32("tensor count")?;
        let arch_hash: [u8; 32] = r.take(32, "architecture hash")?.try_into().unwrap();
        if r.remaining() < 8 {
            return Err(Error::format(r.offset(), "truncated: no room for checksum footer"));
        }
        let body_start = r.offset();
        let body = &bytes[body_start as usize..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());

        let mut br = ByteReader::new(body);
        let mut tensors = Vec::with_capacity(n.min(1024) as usize);
        for _ in 0..n {
            let at = body_start + br.offset();
            let name_len = br.u16("name length")? as usize;
            let name = std::str::from_utf8(br.take(name_len, "tensor name")?)
                .map_err(|_| Error::format(at + 2, "tensor name is not UTF-8"))?
                .to_string();
            let at = body_start + br.offset();
            let dtype = br.u8("dtype")?;
            if dtype != DTYPE_F32 {
                return Err(Error::format(at, format!("tensor `{name}`: unsupported dtype {dtype}")));
            }
            let ndim = br.u8("ndim")? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(br.u32("dim")? as usize);
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format(at, format!("tensor `{name}`: dims overflow")))?;
            let data = br.f32_vec(numel, "tensor data")?;
            tensors.push((name, Tensor { dims, data }));
        }
        if br.remaining() != 0 {
            return Err(Error::format(
                body_start + br.offset(),
                format!("{} trailing bytes after last tensor", br.remaining()),
            ));
        }
        if checksum(body) != stored {
            return Err(Error::format(
                (bytes.len() - 8) as u64,
                "tensor checksum mismatch",
            ));
        }
        Ok(Self { arch_hash, tensors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }
}

pub fn write_weights(model: &CnnModel, path: &Path) -> Result<()> {
    TensorFile {
        arch_hash: model.architecture().hash(),
        tensors: model.tensors(),
    }
    .write(path)
}

/// Loads weights for the canonical architecture.
pub fn load_weights(path: &Path) -> Result<CnnModel> {
    load_weights_for(path, Architecture::canonical(), false)
}

/// Loads weights for `arch`. Unless `allow_custom_arch` is set, the file's
/// architecture hash must equal `arch.hash()`.
pub fn load_weights_for(path: &Path, arch: Architecture, allow_custom_arch: bool) -> Result<CnnModel> {
    let file = TensorFile::read(path)?;
    if !allow_custom_arch && file.arch_hash != arch.hash() {
        return Err(Error::format(
            12,
            format!(
                "architecture hash mismatch: file {}, expected {}",
                hex(&file.arch_hash),
                hex(&arch.hash())
            ),
        ));
    }
    CnnModel::from_tensors(arch, file.tensors)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
