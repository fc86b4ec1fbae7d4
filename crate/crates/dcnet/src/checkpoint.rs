//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DCNK"  version:u32  config_len:u32  config text (architecture keys)
//! until end of file, one record per named tensor:
//!   name_len:u16  name  rank:u8  rank x extent:u32  values: f32
//! ```
//!
//! Running batch-norm statistics are stored as ordinary records.

use std::path::Path;

use dcnet_core::model::{ModelConfig, ModelParams};
use dcnet_core::{Rng, Tensor};

use crate::config::{model_from_text, model_text};
use crate::error::{CliError, FormatError, Result};
use crate::io::{read_file, write_file, Cursor};

pub const MAGIC: &[u8; 4] = b"DCNK";
pub const VERSION: u32 = 1;

pub fn encode(config: &ModelConfig, params: &ModelParams) -> Vec<u8> {
    let text = model_text(config);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for (name, t, _) in params.named() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint and checks every tensor against the shapes its
/// configuration implies. All tensors must be present exactly once.
pub fn decode(bytes: &[u8]) -> std::result::Result<(ModelConfig, ModelParams), FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(MAGIC)?;
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version { expected: VERSION, found: version });
    }
    let text = c.string("configuration")?;
    let config = model_from_text(&text).map_err(|e| FormatError::Invalid(format!("configuration: {e}")))?;
    // template supplies the expected names and shapes
    let mut params = ModelParams::init(&config, &mut Rng::new(0)).map_err(|e| FormatError::Invalid(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    while !c.at_end() {
        let n = c.u16("tensor name")? as usize;
        let name = String::from_utf8(c.take(n, "tensor name")?.to_vec()).map_err(|_| FormatError::Utf8 { what: "tensor name" })?;
        let rank = c.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("tensor shape")? as usize);
        }
        let count = shape.iter().try_fold(4usize, |acc, &e| acc.checked_mul(e)).ok_or(FormatError::Truncated { what: "tensor values" })?;
        let values: Vec<f64> = c.take(count, "tensor values")?.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
        let tensor = Tensor::new(&shape, values).map_err(|e| FormatError::Invalid(format!("{name}: {e}")))?;
        params.set(&name, tensor).map_err(|e| FormatError::Invalid(e.to_string()))?;
        if !seen.insert(name.clone()) {
            return Err(FormatError::Invalid(format!("{name} stored twice")));
        }
    }
    let missing: Vec<String> = params.named().into_iter().map(|p| p.0).filter(|n| !seen.contains(n)).collect();
    if !missing.is_empty() {
        return Err(FormatError::Invalid(format!("missing tensors: {}", missing.join(", "))));
    }
    Ok((config, params))
}

pub fn save(config: &ModelConfig, params: &ModelParams, path: &Path) -> Result<()> {
    write_file(path, &encode(config, params))
}

pub fn load(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let bytes = read_file(path)?;
    decode(&bytes).map_err(|e| CliError::format(path, e))
}

/// Rounds every tensor to `f32` precision, as a save/load cycle would.
pub fn round_to_f32(params: &mut ModelParams) {
    for (_, t, _) in params.named_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
}
