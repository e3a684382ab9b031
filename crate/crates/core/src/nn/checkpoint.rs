//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! "DBFG" | version u16 | layer_count u16
//! per layer: out_dim u32 | in_dim u32 | activation u8
//! per layer: weights f64[out*in] row-major | bias f64[out]
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DBFG";
pub const CHECKPOINT_VERSION: u16 = 1;

impl ModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.layers().len() * 9 + self.parameter_count() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers().len() as u16).to_le_bytes());
        for layer in self.layers() {
            out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
            out.push(layer.activation.code());
        }
        for layer in self.layers() {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint; trailing bytes are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, used) = Self::read_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after model",
                bytes.len() - used
            )));
        }
        Ok(params)
    }

    /// Parses one checkpoint from the front of `bytes`, returning bytes consumed.
    pub(crate) fn read_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u16()? as usize;
        if count == 0 {
            return Err(Error::Checkpoint("zero layers".into()));
        }
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            let out = r.u32()? as usize;
            let inp = r.u32()? as usize;
            let act = Activation::from_code(r.take(1)?[0])
                .ok_or_else(|| Error::Checkpoint("unknown activation code".into()))?;
            dims.push((out, inp, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (out, inp, activation) in dims {
            let weights = r.f64s(out * inp)?;
            let bias = r.f64s(out)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((out, inp), weights).map_err(|e| Error::Checkpoint(e.to_string()))?,
                bias: Array1::from(bias),
                activation,
            });
        }
        let params = ModelParams::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok((params, r.pos))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("len 2")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("len 8")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("len 8")))
            .collect())
    }
}
