//! Paired channel/precoder samples and the `FHD1` dataset container.
//!
//! ```text
//! magic "FHD1" | version u8 = 1 | N u32
//! | Nt u32 | K u32 | G u32 | subcarriers/RB u32 | spacing f64 | P u32
//! | RMS delay spread f64 | carrier f64 | seed u64 | rb_average u8
//! | total power f64 | noise power f64
//! | per sample: H as (re f64, im f64) x G*K*Nt, then tensor f64 x G*K*2Nt
//! ```

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channelgen::{generate_channels, ChannelConfig, RBChannelSet};
use crate::error::{Error, Result};
use crate::precoder::{generate_precoding_tensor, PrecoderConfig};
use crate::tensor::PrecodingTensor;
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"FHD1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub channels: RBChannelSet,
    pub tensor: PrecodingTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Generation parameters; `seed` is the dataset seed, not a sample seed.
    pub channel: ChannelConfig,
    pub total_power: f64,
    pub noise_power: f64,
    pub samples: Vec<Sample>,
}

/// SplitMix64 finalizer over `seed + index`, used to derive per-sample seeds.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `n` channel realizations and their WMMSE precoders. Sample `i` uses
/// channel seed `sample_seed(channel.seed, i)`.
pub fn generate_dataset(channel: &ChannelConfig, precoder: &PrecoderConfig, n: usize) -> Result<Dataset> {
    channel.validate()?;
    precoder.validate()?;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = ChannelConfig {
                seed: sample_seed(channel.seed, i as u64),
                ..channel.clone()
            };
            let channels = generate_channels(&cfg)?;
            let tensor = generate_precoding_tensor(&channels, precoder)?;
            Ok(Sample { channels, tensor })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        channel: channel.clone(),
        total_power: precoder.total_power,
        noise_power: precoder.noise_power,
        samples,
    })
}

/// Seeded partition of `0..n` into disjoint, exhaustive train and test index
/// sets, each sorted. Both sides get at least one sample.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::config("num_samples", "need at least 2 samples to split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie in (0, 1)"));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn precoder_config(&self) -> PrecoderConfig {
        PrecoderConfig {
            total_power: self.total_power,
            noise_power: self.noise_power,
            ..PrecoderConfig::default()
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<Sample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.channel;
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.len_u32(self.samples.len(), "sample count")?;
        w.len_u32(c.num_tx_antennas, "Nt")?;
        w.len_u32(c.num_users, "K")?;
        w.len_u32(c.num_rbs, "G")?;
        w.len_u32(c.subcarriers_per_rb, "subcarriers per RB")?;
        w.f64(c.subcarrier_spacing);
        w.len_u32(c.num_paths, "P")?;
        w.f64(c.rms_delay_spread);
        w.f64(c.carrier_freq);
        w.u64(c.seed);
        w.u8(c.rb_average as u8);
        w.f64(self.total_power);
        w.f64(self.noise_power);
        for s in &self.samples {
            let h = &s.channels;
            let t = &s.tensor;
            if (h.num_tx(), h.num_users(), h.num_rbs()) != (c.num_tx_antennas, c.num_users, c.num_rbs)
                || (t.num_tx(), t.num_users(), t.num_rbs()) != (c.num_tx_antennas, c.num_users, c.num_rbs)
            {
                return Err(Error::input("sample dimensions disagree with the dataset header"));
            }
            for z in h.as_slice() {
                w.f64(z.re);
                w.f64(z.im);
            }
            w.f64s(t.as_slice());
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        let channel = ChannelConfig {
            num_tx_antennas: r.u32()? as usize,
            num_users: r.u32()? as usize,
            num_rbs: r.u32()? as usize,
            subcarriers_per_rb: r.u32()? as usize,
            subcarrier_spacing: r.f64()?,
            num_paths: r.u32()? as usize,
            rms_delay_spread: r.f64()?,
            carrier_freq: r.f64()?,
            seed: r.u64()?,
            rb_average: match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::corrupt(format!("rb_average flag is {b}"))),
            },
        };
        channel.validate().map_err(|e| Error::corrupt(e.to_string()))?;
        let total_power = r.f64()?;
        let noise_power = r.f64()?;
        let (nt, k, g) = (channel.num_tx_antennas, channel.num_users, channel.num_rbs);
        let per_sample = (g * k * nt) * 16 + g * k * 2 * nt * 8;
        if r.remaining() != n.saturating_mul(per_sample) {
            return Err(Error::corrupt(format!(
                "{n} samples need {} bytes, {} present",
                n.saturating_mul(per_sample),
                r.remaining()
            )));
        }
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let sample_cfg = ChannelConfig {
                seed: sample_seed(channel.seed, i as u64),
                ..channel.clone()
            };
            let raw = r.f64s(2 * g * k * nt)?;
            let h: Vec<Complex64> = raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            let channels =
                RBChannelSet::from_vec(sample_cfg, g, k, nt, h).map_err(|e| Error::corrupt(e.to_string()))?;
            let tensor = PrecodingTensor::from_vec(g, k, nt, r.f64s(g * k * 2 * nt)?)
                .map_err(|e| Error::corrupt(e.to_string()))?;
            samples.push(Sample { channels, tensor });
        }
        r.finish()?;
        Ok(Self {
            channel,
            total_power,
            noise_power,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ChannelConfig, PrecoderConfig) {
        let ch = ChannelConfig {
            num_tx_antennas: 4,
            num_users: 2,
            num_rbs: 3,
            num_paths: 5,
            seed: 11,
            ..ChannelConfig::default()
        };
        (ch, PrecoderConfig::default())
    }

    #[test]
    fn round_trip_and_determinism() {
        let (ch, pc) = small();
        let a = generate_dataset(&ch, &pc, 3).unwrap();
        let b = generate_dataset(&ch, &pc, 3).unwrap();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(bytes, b.to_bytes().unwrap());
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 3);
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), a);

        let other = generate_dataset(&ChannelConfig { seed: 12, ..ch }, &pc, 3).unwrap();
        assert_ne!(other.to_bytes().unwrap(), bytes);
        assert_ne!(a.samples[0], a.samples[1]);
    }

    #[test]
    fn truncated_dataset_is_corrupt() {
        let (ch, pc) = small();
        let bytes = generate_dataset(&ch, &pc, 2).unwrap().to_bytes().unwrap();
        assert!(matches!(
            Dataset::from_bytes(&bytes[..bytes.len() - 8]),
            Err(Error::Corrupt(_))
        ));
        let mut bad = bytes.clone();
        bad[3] = b'0';
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        for (n, f) in [(2, 0.5), (10, 0.9), (513, 0.8), (7, 0.01)] {
            let (tr, te) = split_indices(n, f, 3).unwrap();
            assert!(!tr.is_empty() && !te.is_empty());
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert_eq!(split_indices(20, 0.5, 1).unwrap(), split_indices(20, 0.5, 1).unwrap());
        assert_ne!(split_indices(20, 0.5, 1).unwrap(), split_indices(20, 0.5, 2).unwrap());
        assert!(split_indices(1, 0.5, 0).is_err());
        assert!(split_indices(4, 1.0, 0).is_err());
    }

    #[test]
    fn sample_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| sample_seed(5, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
