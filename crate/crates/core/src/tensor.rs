//! Real-valued stacking of RB-wise precoders.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"FHT1";
pub const VERSION: u8 = 1;

/// Stacked precoders `D x 2Nt` with `D = G * K`.
///
/// Row `g * K + k` holds `[Re(v_{g,k}) | Im(v_{g,k})]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingTensor {
    num_rbs: usize,
    num_users: usize,
    num_tx: usize,
    data: Vec<f64>,
}

impl PrecodingTensor {
    pub fn from_vec(num_rbs: usize, num_users: usize, num_tx: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_rbs * num_users * 2 * num_tx {
            return Err(Error::input(format!(
                "tensor has {} entries, expected {}x{}",
                data.len(),
                num_rbs * num_users,
                2 * num_tx
            )));
        }
        Ok(Self {
            num_rbs,
            num_users,
            num_tx,
            data,
        })
    }

    pub fn zeros(num_rbs: usize, num_users: usize, num_tx: usize) -> Self {
        Self {
            num_rbs,
            num_users,
            num_tx,
            data: vec![0.0; num_rbs * num_users * 2 * num_tx],
        }
    }

    /// Stacks complex precoders given in `[g][k][antenna]` order.
    pub fn from_complex(num_rbs: usize, num_users: usize, num_tx: usize, v: &[Complex64]) -> Result<Self> {
        if v.len() != num_rbs * num_users * num_tx {
            return Err(Error::input("precoder count does not match G*K*Nt"));
        }
        let mut data = Vec::with_capacity(v.len() * 2);
        for row in v.chunks_exact(num_tx) {
            data.extend(row.iter().map(|c| c.re));
            data.extend(row.iter().map(|c| c.im));
        }
        Self::from_vec(num_rbs, num_users, num_tx, data)
    }

    /// Inverse of [`PrecodingTensor::from_complex`].
    pub fn to_complex(&self) -> Vec<Complex64> {
        let n = self.num_tx;
        self.data
            .chunks_exact(2 * n)
            .flat_map(|row| (0..n).map(move |a| Complex64::new(row[a], row[n + a])))
            .collect()
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    /// `D = G * K`.
    pub fn rows(&self) -> usize {
        self.num_rbs * self.num_users
    }

    /// `2 * Nt`.
    pub fn cols(&self) -> usize {
        2 * self.num_tx
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `FHT1` file: magic, version u8, G u32, K u32, Nt u32, then the rows as
    /// little-endian f64.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.len_u32(self.num_rbs, "G")?;
        w.len_u32(self.num_users, "K")?;
        w.len_u32(self.num_tx, "Nt")?;
        w.f64s(&self.data);
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC, VERSION)?;
        let g = r.u32()? as usize;
        let k = r.u32()? as usize;
        let nt = r.u32()? as usize;
        let n = g.checked_mul(k).and_then(|x| x.checked_mul(2 * nt));
        if n.map(|n| n.checked_mul(8) != Some(r.remaining())).unwrap_or(true) {
            return Err(Error::corrupt(format!(
                "{g}x{k}x{nt} tensor does not match {} payload bytes",
                r.remaining()
            )));
        }
        let data = r.f64s(n.unwrap_or(0))?;
        r.finish()?;
        Self::from_vec(g, k, nt, data)
    }
}
