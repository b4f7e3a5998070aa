//! `FHZ1` container for one compressed precoding tensor.
//!
//! ```text
//! magic "FHZ1" | version u8 = 1 | D u32 | Nt u32 | G u32 | K_users u32
//! | d u16 | L_active u8 | model order u8 | codebook fingerprint u64
//! | payload length u32 x L_active | payloads
//! ```
//!
//! All integers are little-endian.

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"FHZ1";
pub const VERSION: u8 = 1;
/// Header bytes before the per-stage length table.
pub const FIXED_HEADER_LEN: usize = 4 + 1 + 4 * 4 + 2 + 1 + 1 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub num_rows: u32,
    pub num_tx: u32,
    pub num_rbs: u32,
    pub num_users: u32,
    pub latent_dim: u16,
    pub model_order: u8,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: BitstreamHeader,
    pub payloads: Vec<Vec<u8>>,
}

impl Bitstream {
    pub fn active_stages(&self) -> usize {
        self.payloads.len()
    }

    pub fn header_len(&self) -> usize {
        FIXED_HEADER_LEN + 4 * self.payloads.len()
    }

    pub fn payload_bits(&self) -> Vec<u64> {
        self.payloads.iter().map(|p| 8 * p.len() as u64).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let active = u8::try_from(self.payloads.len()).map_err(|_| Error::input("more than 255 active stages"))?;
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.u32(h.num_rows);
        w.u32(h.num_tx);
        w.u32(h.num_rbs);
        w.u32(h.num_users);
        w.u16(h.latent_dim);
        w.u8(active);
        w.u8(h.model_order);
        w.u64(h.fingerprint);
        for p in &self.payloads {
            w.len_u32(p.len(), "payload length")?;
        }
        for p in &self.payloads {
            w.bytes(p);
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC, VERSION)?;
        let num_rows = r.u32()?;
        let num_tx = r.u32()?;
        let num_rbs = r.u32()?;
        let num_users = r.u32()?;
        let latent_dim = r.u16()?;
        let active = r.u8()? as usize;
        let model_order = r.u8()?;
        let fingerprint = r.u64()?;
        if u64::from(num_rows) != u64::from(num_rbs) * u64::from(num_users) {
            return Err(Error::corrupt(format!(
                "header declares D = {num_rows} rows but G x K = {num_rbs} x {num_users}"
            )));
        }
        let lens: Vec<usize> = (0..active)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<_>>()?;
        let declared: usize = lens.iter().sum();
        if declared != r.remaining() {
            return Err(Error::corrupt(format!(
                "payloads declare {declared} bytes but {} follow the header",
                r.remaining()
            )));
        }
        let payloads = lens
            .iter()
            .map(|&n| r.take(n).map(<[u8]>::to_vec))
            .collect::<Result<_>>()?;
        r.finish()?;
        Ok(Self {
            header: BitstreamHeader {
                num_rows,
                num_tx,
                num_rbs,
                num_users,
                latent_dim,
                model_order,
                fingerprint,
            },
            payloads,
        })
    }
}
