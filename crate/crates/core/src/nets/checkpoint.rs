//! Checkpoint files: `EDCK`, a little-endian `u32` header length, a JSON
//! header, then every parameter as a little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchConfig, ModelKind, ModelParams, ParamSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EDCK";
const FORMAT: &str = "endodepth-checkpoint-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub model: ModelKind,
    pub arch: ArchConfig,
    pub seed: u64,
    pub step: u64,
    pub param_count: usize,
    pub tensors: Vec<ParamSpec>,
    /// Training configuration or other provenance, free-form.
    #[serde(default)]
    pub notes: serde_json::Value,
}

pub fn encode_checkpoint(params: &ModelParams, step: u64, notes: serde_json::Value) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format: FORMAT.to_string(),
        model: params.kind,
        arch: params.arch.clone(),
        seed: params.seed,
        step,
        param_count: params.param_count(),
        tensors: params.specs.clone(),
        notes,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in &params.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointHeader)> {
    let bad = |m: &str| Error::contract("nets", format!("checkpoint: {m}"));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.format != FORMAT {
        return Err(bad(&format!("unknown format {:?}", header.format)));
    }
    let raw = &bytes[8 + hlen..];
    if raw.len() != 4 * header.param_count {
        return Err(bad(&format!(
            "{} parameter bytes for {} parameters",
            raw.len(),
            header.param_count
        )));
    }
    let mut params = ModelParams::build(header.model, header.arch.clone(), header.seed)?;
    if params.param_count() != header.param_count || params.specs != header.tensors {
        return Err(bad("tensor table does not match the architecture"));
    }
    for (dst, chunk) in params.values.iter_mut().zip(raw.chunks_exact(4)) {
        *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok((params, header))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, step: u64, notes: serde_json::Value) -> Result<()> {
    let bytes = encode_checkpoint(params, step, notes)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::model::{build_depth_net, build_discriminator};
    use crate::nets::tensor::Tensor;

    #[test]
    fn quantized_model_round_trips_exactly() {
        let mut net = build_depth_net(ArchConfig::desk_depth(), 3).unwrap();
        net.quantize();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck/depth.ckpt");
        save_checkpoint(&path, &net, 17, serde_json::json!({"lr": 1e-4})).unwrap();
        let (back, header) = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(header.step, 17);
        assert_eq!(header.notes["lr"], 1e-4);
        let x = Tensor::zeros(3, 64, 64);
        assert_eq!(back.run(&x).unwrap(), net.run(&x).unwrap());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let net = build_discriminator(ArchConfig::desk_discriminator(), 1).unwrap();
        let bytes = encode_checkpoint(&net, 0, serde_json::Value::Null).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode_checkpoint(b"NOPE1234").is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_checkpoint(&nan).unwrap_err().to_string().contains("non-finite"));
    }
}
