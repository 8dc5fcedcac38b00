//! Binary model files.
//!
//! Layout (little-endian): magic `DSAE`, `u32` version, `u32` input dimension,
//! `u32` layer count, then per layer `u32` rows, `u32` cols, `rows * cols`
//! row-major `f32` weights and `cols` `f32` biases. The remainder of the file
//! is a JSON object echoing the config and the training loss trace.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{AnchorModel, AutoencoderConfig, Layer};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"DSAE";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Trailer {
    config: AutoencoderConfig,
    training_loss_trace: Vec<f64>,
}

pub fn encode_model(model: &AnchorModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend(MODEL_VERSION.to_le_bytes());
    buf.extend((model.input_dim() as u32).to_le_bytes());
    buf.extend((model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        buf.extend((layer.fan_in() as u32).to_le_bytes());
        buf.extend((layer.fan_out() as u32).to_le_bytes());
        for w in layer.weights.iter() {
            buf.extend((*w as f32).to_le_bytes());
        }
        for b in layer.biases.iter() {
            buf.extend((*b as f32).to_le_bytes());
        }
    }
    serde_json::to_writer(
        &mut buf,
        &Trailer {
            config: model.config().clone(),
            training_loss_trace: model.training_loss_trace().to_vec(),
        },
    )?;
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format {
                kind: "model",
                index: self.pos,
                message: "truncated file".into(),
            }
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<AnchorModel> {
    let bad = |index: usize, message: &str| Error::Format {
        kind: "model",
        index,
        message: message.into(),
    };
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(bad(0, "bad magic"));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(bad(4, &format!("unsupported version {version}")));
    }
    let d = cur.u32()? as usize;
    let n_layers = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let w = cur.f32s(rows * cols)?;
        let b = cur.f32s(cols)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((rows, cols), w).map_err(|e| bad(cur.pos, &e.to_string()))?,
            biases: Array1::from(b),
        });
    }
    let trailer: Trailer = serde_json::from_slice(&bytes[cur.pos..])?;
    if trailer.config.input_dim != d {
        return Err(bad(8, "header dimension disagrees with config"));
    }
    let mut model = AnchorModel::from_layers(trailer.config, layers)?;
    model.set_loss_trace(trailer.training_loss_trace);
    Ok(model)
}

/// Writes a model file. Parameters are stored as `f32`; trained models are
/// already at that precision so they reload exactly.
pub fn save_model(model: &AnchorModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<AnchorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
