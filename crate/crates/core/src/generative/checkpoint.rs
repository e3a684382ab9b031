//! Container layout (little-endian):
//!
//! ```text
//! "DBGM" | version u16 | latent_dim u32 | encoder_len u64 | decoder_len u64
//! encoder DBFG checkpoint | decoder DBFG checkpoint
//! prior_mean f64[latent_dim] | prior_var f64[latent_dim]
//! ```

use std::path::Path;

use super::GenerativeModel;
use crate::error::{Error, Result};
use crate::nn::{ModelParams, Reader};

pub const GENERATIVE_MAGIC: &[u8; 4] = b"DBGM";
const VERSION: u16 = 1;

impl GenerativeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let enc = self.encoder.to_bytes();
        let dec = self.decoder.to_bytes();
        let mut out = Vec::with_capacity(26 + enc.len() + dec.len() + 16 * self.latent_dim());
        out.extend_from_slice(GENERATIVE_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.latent_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(enc.len() as u64).to_le_bytes());
        out.extend_from_slice(&(dec.len() as u64).to_le_bytes());
        out.extend_from_slice(&enc);
        out.extend_from_slice(&dec);
        for v in self.prior_mean.iter().chain(&self.prior_var) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != GENERATIVE_MAGIC {
            return Err(Error::Checkpoint("bad generative magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported generative version {version}")));
        }
        let latent = r.u32()? as usize;
        let enc_len = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("section too large".into()))?;
        let dec_len = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("section too large".into()))?;
        let encoder = ModelParams::from_bytes(r.take(enc_len)?)?;
        let decoder = ModelParams::from_bytes(r.take(dec_len)?)?;
        let prior_mean = r.f64s(latent)?;
        let prior_var = r.f64s(latent)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after generative model".into()));
        }
        GenerativeModel::new(encoder, decoder, prior_mean, prior_var).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
