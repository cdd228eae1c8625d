//! Weight files.
//!
//! ```text
//! "ECGW"                      4 bytes
//! version                     u32 LE (currently 1)
//! descriptor length           u32 LE
//! descriptor                  canonical JSON: {"arch": ..., "shapes": [...]}
//! tensors                     f32 LE, in descriptor order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, ModelParams, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ECGW";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    arch: Arch,
    shapes: Vec<Vec<usize>>,
}

pub fn encode_weights(params: &ModelParams) -> Vec<u8> {
    let desc = Descriptor {
        arch: params.arch().clone(),
        shapes: params
            .tensors()
            .iter()
            .map(|t| t.shape().to_vec())
            .collect(),
    };
    let json = serde_json::to_vec(&desc).expect("descriptor serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!("weight file truncated in {what}")));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(
        take(bytes, 4, what)?.try_into().expect("four bytes"),
    ))
}

pub fn decode_weights(mut bytes: &[u8]) -> Result<ModelParams> {
    let cur = &mut bytes;
    if take(cur, 4, "magic")? != MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = read_u32(cur, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported weight format version {version}"
        )));
    }
    let len = read_u32(cur, "descriptor length")? as usize;
    let desc: Descriptor = serde_json::from_slice(take(cur, len, "descriptor")?)?;
    desc.arch
        .validate()
        .map_err(|e| Error::Format(format!("descriptor: {e}")))?;
    if desc.shapes != desc.arch.param_shapes() {
        return Err(Error::Format(
            "descriptor shapes disagree with its architecture".into(),
        ));
    }
    let mut tensors = Vec::with_capacity(desc.shapes.len());
    for shape in desc.shapes {
        let n: usize = shape.iter().product();
        let raw = take(cur, 4 * n, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
            .collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor: {e}")))?);
    }
    if !cur.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensors",
            cur.len()
        )));
    }
    ModelParams::new(desc.arch, tensors).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_weights(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(params))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_weights(&fs::read(path)?)
}
