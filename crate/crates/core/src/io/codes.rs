//! Code grids of every dataset measure, as produced by a trained VQ-VAE.

use std::path::Path;

use super::{read_file, write_atomic, Dec, Enc};
use crate::error::{Error, Result};
use crate::vqvae::CodeGrid;

const MAGIC: &[u8; 4] = b"RCCD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodesFile {
    pub codebook_size: usize,
    /// Fingerprint of the tone vocabulary the encoder was trained on.
    pub tone_fingerprint: u32,
    pub grids: Vec<CodeGrid>,
}

impl CodesFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (h, w) = self.grids.first().map_or((0, 0), |g| (g.h, g.w));
        let mut e = Enc::new(MAGIC, VERSION);
        e.len32(self.grids.len());
        e.len32(h);
        e.len32(w);
        e.len32(self.codebook_size);
        e.u32(self.tone_fingerprint);
        for g in &self.grids {
            g.codes.iter().for_each(|&c| e.u16(c));
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Dec::open(bytes, MAGIC, VERSION)?;
        let n = d.len()?;
        let h = d.len()?;
        let w = d.len()?;
        let codebook_size = d.len()?;
        let tone_fingerprint = d.u32()?;
        let mut grids = Vec::with_capacity(n.min(bytes.len()));
        for _ in 0..n {
            let codes = (0..h * w).map(|_| d.u16()).collect::<Result<Vec<_>>>()?;
            let g = CodeGrid::new(h, w, codes)?;
            g.check(codebook_size).map_err(|e| d.corrupt(e.to_string()))?;
            grids.push(g);
        }
        d.end()?;
        Ok(Self {
            codebook_size,
            tone_fingerprint,
            grids,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.grids.windows(2).any(|w| (w[0].h, w[0].w) != (w[1].h, w[1].w)) {
            return Err(Error::invalid("code grids of different shapes"));
        }
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
