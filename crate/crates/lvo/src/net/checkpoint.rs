//! Model checkpoint format.
//!
//! Layout (all integers little-endian):
//!   magic `LVOCKPT1` (8 bytes)
//!   config block: input_width u32, input_height u32, layer count u32,
//!     per-layer channel counts u32..., squeeze_divisor u32, fc_hidden u32
//!   parameter tensors in declaration order, each value little-endian f32
//!   sha256 digest of everything above (32 bytes)
//!
//! Values are stored as f32: loading yields exactly the stored values widened
//! to f64, so save -> load -> save reproduces a file byte for byte.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::net::model::{LvoConfig, LvoModel};

const CKPT_MAGIC: &[u8; 8] = b"LVOCKPT1";
const MAX_DIM: u32 = 1 << 20;

pub fn save_checkpoint(model: &LvoModel, path: &Path) -> Result<()> {
    let cfg = model.config();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&(cfg.input_width as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.input_height as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.stream_channels.len() as u32).to_le_bytes());
    for &c in &cfg.stream_channels {
        buf.extend_from_slice(&(c as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(cfg.squeeze_divisor as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.fc_hidden as u32).to_le_bytes());
    for t in model.tensor_refs() {
        for &v in t.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<LvoModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 {
        return Err(Error::parse(format!(
            "{}: too short to be a checkpoint",
            path.display()
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let expected = Sha256::digest(body);
    if digest != expected.as_slice() {
        return Err(Error::parse(format!(
            "{}: checksum mismatch (file corrupted?)",
            path.display()
        )));
    }

    let mut r = ByteReader::new(body, path);
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::parse(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let dim = |r: &mut ByteReader, what: &str| -> Result<usize> {
        let v = r.u32()?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::parse(format!("implausible {what}: {v}")));
        }
        Ok(v as usize)
    };
    let input_width = dim(&mut r, "input width")?;
    let input_height = dim(&mut r, "input height")?;
    let n_layers = dim(&mut r, "layer count")?;
    if n_layers > 32 {
        return Err(Error::parse(format!(
            "{}: implausible layer count {n_layers}",
            path.display()
        )));
    }
    let mut stream_channels = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        stream_channels.push(dim(&mut r, "channel count")?);
    }
    let squeeze_divisor = dim(&mut r, "squeeze divisor")?;
    let fc_hidden = dim(&mut r, "fc width")?;
    let config = LvoConfig {
        input_width,
        input_height,
        stream_channels,
        squeeze_divisor,
        fc_hidden,
    };
    config
        .validate()
        .map_err(|e| Error::parse(format!("{}: bad config block: {e}", path.display())))?;

    let mut model = LvoModel::zeros(&config)?;
    let expected_params = model.param_count();
    if r.remaining() != expected_params * 4 {
        return Err(Error::parse(format!(
            "{}: {} bytes of tensor data, expected {} ({} f32 parameters)",
            path.display(),
            r.remaining(),
            expected_params * 4,
            expected_params
        )));
    }
    for t in model.tensor_refs_mut() {
        for v in t.iter_mut() {
            *v = r.f32()? as f64;
        }
    }
    r.expect_end()?;
    Ok(model)
}
