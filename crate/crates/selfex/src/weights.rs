//! The `STIW` weights container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "STIW"            4 bytes
//! version           u32 (currently 1)
//! fingerprint       u64, ModelSpec::fingerprint of the generator
//! record count      u32
//! per record:
//!   name length     u32
//!   name            UTF-8 bytes
//!   rank            u32
//!   shape           rank × u32
//!   data            product(shape) × f32
//! ```
//!
//! The model spec itself travels in a JSON sidecar next to the weights,
//! `<weights>.spec.json`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use selfex_core::model::{Generator, ModelSpec, Param, ParamSet};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STIW";
pub const VERSION: u32 = 1;

pub fn encode_weights(params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + params.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.fingerprint().to_le_bytes());
    out.extend_from_slice(&(params.params().len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::format(self.path, "truncated weights file"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a container without checking it against any spec.
pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<ParamSet<f32>> {
    let mut c = Cursor { bytes, path };
    if c.take(4)? != MAGIC {
        return Err(Error::format(path, "not a STIW weights file"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported weights version {version}")));
    }
    let fingerprint = c.u64()?;
    let count = c.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::format(path, "parameter name is not UTF-8"))?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(path, format!("shape {shape:?} of {name} overflows")))?;
        let data = c
            .take(n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.push(Param { name, shape, data });
    }
    if !c.bytes.is_empty() {
        return Err(Error::format(path, "trailing bytes after the last record"));
    }
    ParamSet::from_parts(fingerprint, params).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_weights(params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_weights(params)).map_err(|e| Error::io(path, e))
}

/// Loads weights for `spec`, rejecting files written for another network.
pub fn load_weights(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<ParamSet<f32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let params = decode_weights(&bytes, path)?;
    if params.fingerprint() != spec.fingerprint() {
        return Err(Error::format(
            path,
            format!(
                "weights fingerprint {:016x} does not match the model spec ({:016x})",
                params.fingerprint(),
                spec.fingerprint()
            ),
        ));
    }
    let generator = Generator::new(spec.clone())?;
    generator
        .check_params(&params)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(params)
}

pub fn spec_sidecar(weights: &Path) -> PathBuf {
    let mut name = weights.as_os_str().to_owned();
    name.push(".spec.json");
    PathBuf::from(name)
}

/// Writes the weights and their spec sidecar.
pub fn save_model(spec: &ModelSpec, params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_weights(params, path)?;
    let side = spec_sidecar(path);
    let json = serde_json::to_string_pretty(spec).expect("spec serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

/// Loads weights with the spec from `spec_path`, or from the sidecar.
pub fn load_model(path: impl AsRef<Path>, spec_path: Option<&Path>) -> Result<(ModelSpec, ParamSet<f32>)> {
    let path = path.as_ref();
    let side = spec_sidecar(path);
    let spec: ModelSpec = crate::config::read_json(spec_path.unwrap_or(&side))?;
    let params = load_weights(path, &spec)?;
    Ok((spec, params))
}
