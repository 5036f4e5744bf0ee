//! Binary checkpoint format.
//!
//! ```text
//! "DSCJ" | version: u32 LE | header_len: u32 LE | header: JSON (header_len bytes)
//! then until EOF, per tensor:
//!   name_len: u32 LE | name: UTF-8 | rank: u32 LE | dims: rank x u32 LE | data: f32 LE
//! ```
//!
//! Parameters are stored as 32-bit floats, so a model saved once and
//! reloaded saves back to identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArchitectureSpec, CodecModel, VariantId};
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"DSCJ";
pub const FORMAT_VERSION: u32 = 1;

/// Guards against absurd allocations from corrupted length fields.
const MAX_HEADER_BYTES: usize = 1 << 20;
const MAX_NAME_BYTES: usize = 256;
const MAX_TENSOR_ELEMENTS: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub variant: VariantId,
    pub architecture: ArchitectureSpec,
    /// `k/n` as an exact fraction.
    pub rho: String,
    pub c: usize,
    pub k: usize,
    pub n: usize,
    pub power: f64,
}

pub fn to_bytes(model: &CodecModel) -> Result<Vec<u8>> {
    let bw = model.bandwidth();
    let header = CheckpointHeader {
        variant: model.variant(),
        architecture: model.architecture().clone(),
        rho: format!("{}/{}", bw.k, bw.n),
        c: model.architecture().channel_count,
        k: bw.k,
        n: bw.n,
        power: model.power(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, t) in model.parameters() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&4u32.to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn at_end(&self) -> bool {
        self.pos == self.data.len()
    }
}

pub fn from_bytes(data: &[u8]) -> Result<(CheckpointHeader, CodecModel)> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = r.u32("header length")?;
    if header_len > MAX_HEADER_BYTES {
        return Err(Error::Checkpoint(format!("header length {header_len} too large")));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

    let mut params = Vec::new();
    while !r.at_end() {
        let name_len = r.u32("name length")?;
        if name_len > MAX_NAME_BYTES {
            return Err(Error::Checkpoint(format!("tensor name length {name_len} too large")));
        }
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")?;
        if rank != 4 {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has rank {rank}, expected 4"
            )));
        }
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = r.u32("dims")?;
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= MAX_TENSOR_ELEMENTS)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let bytes = r.take(count * 4, "tensor data")?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        params.push((name, Tensor4::from_vec(shape, values)?));
    }

    let arch = &header.architecture;
    if header.c != arch.channel_count || header.k != arch.symbols() || header.n != arch.input_shape.source_symbols() {
        return Err(Error::Checkpoint(
            "header bandwidth fields disagree with the architecture".into(),
        ));
    }
    let model = CodecModel::from_parts(arch.clone(), header.variant, header.power, params)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((header, model))
}

pub fn save_checkpoint(model: &CodecModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<CodecModel> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(from_bytes(&data)?.1)
}
