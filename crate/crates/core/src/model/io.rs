//! Binary model files.
//!
//! Layout: the 8-byte magic, a little-endian `u32` version, a `u64` header
//! length, a JSON header (spec, preprocessing, parameter names and shapes),
//! then every parameter as little-endian `f64` in header order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, Preprocessing};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TTMMODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    preprocessing: Preprocessing,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

fn entries(model: &Model) -> Vec<ParamEntry> {
    model
        .named_params()
        .into_iter()
        .map(|(name, p)| ParamEntry {
            name,
            rows: p.value.rows(),
            cols: p.value.cols(),
        })
        .collect()
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&Header {
        spec: model.spec.clone(),
        preprocessing: model.preprocessing.clone(),
        params: entries(model),
    })?;
    let mut buf = Vec::with_capacity(20 + header.len() + 8 * model.num_params());
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in model.flat_params() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::ModelFormat(format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < header_len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len])?;
    let mut model = Model::new(header.spec, header.preprocessing, 0)?;
    if entries(&model) != header.params {
        return Err(bad("parameter table does not match the spec"));
    }
    let data = &body[header_len..];
    if data.len() != 8 * model.num_params() {
        return Err(bad(&format!(
            "expected {} parameter bytes, found {}",
            8 * model.num_params(),
            data.len()
        )));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    model.set_flat_params(&values)?;
    Ok(model)
}
