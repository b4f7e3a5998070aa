//! Byte-oriented range coder with a 64-bit state.
//!
//! The encoder keeps `low` and `range` in `u64` and renormalizes whenever the
//! range drops below 2^56, so frequency totals up to 2^32 cost well under a
//! millibit per symbol in truncation loss. Carries are propagated straight
//! into the output buffer. The flush writes the single byte that pins a value
//! inside the final interval; the decoder reads zeros past the end of input.
//! Coded length is therefore within about 8 bits of `-log2` of the product of
//! the modeled probabilities, and never below it.

use crate::error::{Error, Result};

const TOP: u64 = 1 << 56;
/// Largest frequency total the coder accepts.
pub const MAX_TOTAL: u64 = 1 << 32;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u64::MAX,
            out: Vec::new(),
        }
    }

    fn carry(&mut self) {
        for b in self.out.iter_mut().rev() {
            if *b == 0xFF {
                *b = 0;
            } else {
                *b += 1;
                return;
            }
        }
    }

    /// Encodes the symbol occupying `[cum, cum + freq)` out of `total`.
    pub fn encode(&mut self, cum: u64, freq: u64, total: u64) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= MAX_TOTAL);
        let r = self.range / total;
        let (low, overflow) = self.low.overflowing_add(r * cum);
        self.low = low;
        if overflow {
            self.carry();
        }
        self.range = r * freq;
        while self.range < TOP {
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        // Round `low` up to a multiple of 2^56; the result stays inside
        // [low, low + range) because range >= 2^56.
        let mask = TOP - 1;
        let (v, overflow) = self.low.overflowing_add(mask);
        if overflow {
            self.carry();
        }
        let v = v & !mask;
        self.out.push((v >> 56) as u8);
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    /// `code - low`, always below `range` for a well-formed stream.
    value: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = Self {
            input,
            pos: 0,
            value: 0,
            range: u64::MAX,
        };
        for _ in 0..8 {
            d.value = (d.value << 8) | d.next_byte() as u64;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative frequency of the next symbol, in `[0, total)`.
    pub fn target(&mut self, total: u64) -> Result<u64> {
        let r = self.range / total;
        let t = self.value / r;
        if t >= total {
            return Err(Error::corrupt("arithmetic-coded value outside the coding interval"));
        }
        Ok(t)
    }

    /// Removes the symbol `[cum, cum + freq)` found via [`RangeDecoder::target`].
    pub fn consume(&mut self, cum: u64, freq: u64, total: u64) {
        let r = self.range / total;
        self.value -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.value = (self.value << 8) | self.next_byte() as u64;
            self.range <<= 8;
        }
    }

    /// Bytes read past the end of the input, counting the initial fill.
    pub fn overrun(&self) -> usize {
        self.pos.saturating_sub(self.input.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(symbols: &[usize], freqs: &[u64]) -> Vec<u8> {
        let cum: Vec<u64> = std::iter::once(0)
            .chain(freqs.iter().scan(0, |acc, f| {
                *acc += f;
                Some(*acc)
            }))
            .collect();
        let total = *cum.last().unwrap();
        let mut enc = RangeEncoder::new();
        for &s in symbols {
            enc.encode(cum[s], freqs[s], total);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        for &s in symbols {
            let t = dec.target(total).unwrap();
            let got = cum.partition_point(|&c| c <= t) - 1;
            assert_eq!(got, s);
            dec.consume(cum[got], freqs[got], total);
        }
        bytes
    }

    #[test]
    fn empty_stream_is_one_byte() {
        assert_eq!(RangeEncoder::new().finish(), vec![0]);
    }

    #[test]
    fn carries_propagate() {
        // Highly skewed towards the top symbol drives `low` upward and forces
        // repeated carries through 0xFF runs.
        let freqs = [1, 1, 1 << 20];
        let symbols: Vec<usize> = (0..5000).map(|i| if i % 997 == 0 { 1 } else { 2 }).collect();
        roundtrip(&symbols, &freqs);
    }

    #[test]
    fn uniform_costs_log2_total() {
        let freqs = [1u64; 16];
        let symbols: Vec<usize> = (0..8000).map(|i| (i * 7 + 3) % 16).collect();
        let bytes = roundtrip(&symbols, &freqs);
        let bits = bytes.len() * 8;
        assert!((4 * 8000 - 8..=4 * 8000 + 16).contains(&bits), "{bits}");
    }
}
