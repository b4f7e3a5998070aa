//! `FHM1` container holding everything a decoder needs: transform, codebooks
//! and entropy model.
//!
//! ```text
//! magic "FHM1" | version u8 = 1 | Nt u32 | d u16
//! | mean f64 x 2Nt | analysis f64 x (d * 2Nt), row-major
//! | L u8 | per stage: requested K u32, K u32, codewords f64 x (K * d)
//! | codebook fingerprint u64
//! | model order u8 | per stage: alphabet u32, order-0 counts u64 x K,
//!   order-1 counts u64 x (K * K) when order = 1
//! ```

use super::entropy::{EntropyModel, StageModel};
use super::rvq::{Codebook, CodebookStack};
use super::transform::TransformPair;
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"FHM1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CodecArtifacts {
    pub transform: TransformPair,
    pub codebooks: CodebookStack,
    pub model: EntropyModel,
}

impl CodecArtifacts {
    pub fn new(transform: TransformPair, codebooks: CodebookStack, model: EntropyModel) -> Result<Self> {
        if transform.latent_dim() != codebooks.dim() {
            return Err(Error::input("transform and codebook dims differ"));
        }
        if model.alphabets() != codebooks.stage_sizes() {
            return Err(Error::input("entropy model alphabets do not match codebook sizes"));
        }
        Ok(Self {
            transform,
            codebooks,
            model,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        self.codebooks.fingerprint()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let t = &self.transform;
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.len_u32(t.num_tx(), "Nt")?;
        w.u16(u16::try_from(t.latent_dim()).map_err(|_| Error::input("latent dim exceeds u16"))?);
        w.f64s(t.mean());
        w.f64s(t.analysis());
        w.u8(self.codebooks.num_stages() as u8);
        for (cb, &req) in self.codebooks.stages().iter().zip(self.codebooks.requested_sizes()) {
            w.len_u32(req, "requested codebook size")?;
            w.len_u32(cb.len(), "codebook size")?;
            w.f64s(cb.as_slice());
        }
        w.u64(self.codebooks.fingerprint());
        w.u8(self.model.order());
        for l in 0..self.model.num_stages() {
            let s = self.model.stage(l);
            w.len_u32(s.alphabet(), "alphabet")?;
            for &c in s.order0_counts().iter().chain(s.order1_counts()) {
                w.u64(c);
            }
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC, VERSION)?;
        let nt = r.u32()? as usize;
        let d = r.u16()? as usize;
        let width = 2 * nt;
        let mean = r.f64s(width)?;
        let analysis = r.f64s(d * width)?;
        let transform = TransformPair::from_parts(nt, d, analysis, mean).map_err(|e| Error::corrupt(e.to_string()))?;

        let num_stages = r.u8()? as usize;
        let mut stages = Vec::with_capacity(num_stages);
        let mut requested = Vec::with_capacity(num_stages);
        for _ in 0..num_stages {
            requested.push(r.u32()? as usize);
            let k = r.u32()? as usize;
            let words = r.f64s(k * d)?;
            stages.push(Codebook::from_vec(d, words).map_err(|e| Error::corrupt(e.to_string()))?);
        }
        let codebooks = CodebookStack::new(stages, requested).map_err(|e| Error::corrupt(e.to_string()))?;
        let stored = r.u64()?;
        if stored != codebooks.fingerprint() {
            return Err(Error::corrupt(format!(
                "stored codebook fingerprint {stored:#018x} does not match codewords ({:#018x})",
                codebooks.fingerprint()
            )));
        }

        let order = r.u8()?;
        let mut models = Vec::with_capacity(num_stages);
        for _ in 0..num_stages {
            let k = r.u32()? as usize;
            let read_counts = |r: &mut Reader<'_>, n: usize| (0..n).map(|_| r.u64()).collect::<Result<Vec<u64>>>();
            let order0 = read_counts(&mut r, k)?;
            let order1 = if order == 1 {
                read_counts(&mut r, k * k)?
            } else {
                Vec::new()
            };
            models.push(StageModel::new(k, order0, order1).map_err(|e| Error::corrupt(e.to_string()))?);
        }
        r.finish()?;
        let model = EntropyModel::new(order, models).map_err(|e| Error::corrupt(e.to_string()))?;
        Self::new(transform, codebooks, model).map_err(|e| Error::corrupt(e.to_string()))
    }
}
