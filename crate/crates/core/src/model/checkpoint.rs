//! Binary checkpoint layout:
//!
//! ```text
//! b"ERCCKPT1"                 8 bytes
//! header length               u64, little endian
//! header                      UTF-8 JSON {config, tensors: [{name, offset, len}], metadata}
//! tensor data                 f64 little endian, concatenated in header order
//! ```
//!
//! `offset` and `len` count `f64` values from the start of the data block.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ERCCKPT1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    metadata: serde_json::Value,
) -> Result<()> {
    let mut offset = 0;
    let tensors = params
        .tensors()
        .into_iter()
        .map(|t| {
            let e = TensorEntry {
                name: t.name,
                offset,
                len: t.data.len(),
            };
            offset += e.len;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: params.config,
        tensors,
        metadata,
    })?;
    let file =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let write_err = |e| Error::io(format!("writing {}", path.display()), e);
    w.write_all(CHECKPOINT_MAGIC).map_err(write_err)?;
    w.write_all(&(header.len() as u64).to_le_bytes())
        .map_err(write_err)?;
    w.write_all(&header).map_err(write_err)?;
    for t in params.tensors() {
        for x in t.data {
            w.write_all(&x.to_le_bytes()).map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
    header.config.validate()?;
    let data = &bytes[data_start..];
    if data.len() % 8 != 0 {
        return Err(bad("tensor data is not a whole number of f64 values"));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut params = ModelParams::init(header.config, 0)?.zeros_like();
    let slots = params.tensors_mut();
    if slots.len() != header.tensors.len() {
        return Err(bad(&format!(
            "expected {} tensors, header lists {}",
            slots.len(),
            header.tensors.len()
        )));
    }
    for (slot, entry) in slots.into_iter().zip(&header.tensors) {
        if slot.name != entry.name || slot.data.len() != entry.len {
            return Err(bad(&format!(
                "tensor {} ({} values) does not match expected {} ({} values)",
                entry.name,
                entry.len,
                slot.name,
                slot.data.len()
            )));
        }
        let src = values
            .get(entry.offset..entry.offset + entry.len)
            .ok_or_else(|| bad(&format!("tensor {} runs past the data block", entry.name)))?;
        slot.data.copy_from_slice(src);
    }
    Ok((params, header.metadata))
}
