//! Synthetic frequency-selective downlink channels at resource-block granularity.
//!
//! Each single-antenna user sees an uncorrelated tapped delay line: `P` taps on
//! an exponential quantile grid with an exponential power-delay profile, and
//! i.i.d. circularly-symmetric Gaussian gains across transmit antennas. The
//! tap grid is deterministic and scaled so its RMS delay spread equals the
//! configured value exactly; only the gains are random.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub num_tx_antennas: usize,
    pub num_users: usize,
    pub num_rbs: usize,
    pub subcarriers_per_rb: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    pub num_paths: usize,
    /// Seconds.
    pub rms_delay_spread: f64,
    /// Hz. Recorded in datasets, not used by the tapped delay line.
    pub carrier_freq: f64,
    pub seed: u64,
    /// Average the response over all subcarriers of an RB instead of sampling
    /// the center subcarrier.
    pub rb_average: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_tx_antennas: 16,
            num_users: 4,
            num_rbs: 16,
            subcarriers_per_rb: 12,
            subcarrier_spacing: 30e3,
            num_paths: 20,
            rms_delay_spread: 800e-9,
            carrier_freq: 3.5e9,
            seed: 0,
            rb_average: false,
        }
    }
}

impl ChannelConfig {
    /// Dual-polarized 8x16 panel: 256 antenna elements.
    pub fn panel_8x16_dual() -> Self {
        Self {
            num_tx_antennas: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: usize) -> Result<()> {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
            Ok(())
        }
        positive("num_tx_antennas", self.num_tx_antennas)?;
        positive("num_users", self.num_users)?;
        positive("num_rbs", self.num_rbs)?;
        positive("subcarriers_per_rb", self.subcarriers_per_rb)?;
        positive("num_paths", self.num_paths)?;
        if !(self.rms_delay_spread > 0.0 && self.rms_delay_spread.is_finite()) {
            return Err(Error::config("rms_delay_spread", "must be positive and finite"));
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            return Err(Error::config("subcarrier_spacing", "must be positive and finite"));
        }
        if !self.carrier_freq.is_finite() {
            return Err(Error::config("carrier_freq", "must be finite"));
        }
        Ok(())
    }

    /// Baseband frequency of the center subcarrier of RB `g` (0-based).
    pub fn rb_center_freq(&self, g: usize) -> f64 {
        let spr = self.subcarriers_per_rb as f64;
        (g as f64 * spr + spr / 2.0) * self.subcarrier_spacing
    }
}

/// One tap of a user's delay line.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    /// Seconds.
    pub delay: f64,
    /// One complex gain per transmit antenna.
    pub gains: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipathProfile {
    /// Power-delay-profile weights shared by every user, summing to 1.
    pub pdp_weights: Vec<f64>,
    /// `users[k]` holds the taps of user `k`, sorted by delay.
    pub users: Vec<Vec<Tap>>,
}

impl MultipathProfile {
    /// RMS delay spread of the power-delay profile, in seconds.
    pub fn rms_delay_spread(&self) -> f64 {
        let delays: Vec<f64> = self.users[0].iter().map(|t| t.delay).collect();
        rms_spread(&delays, &self.pdp_weights)
    }
}

fn rms_spread(delays: &[f64], weights: &[f64]) -> f64 {
    let mean: f64 = delays.iter().zip(weights).map(|(t, w)| w * t).sum();
    let second: f64 = delays.iter().zip(weights).map(|(t, w)| w * t * t).sum();
    (second - mean * mean).max(0.0).sqrt()
}

/// Deterministic delay grid and PDP weights for `num_paths` taps.
///
/// Unscaled delays sit at the exponential quantiles `-ln(1 - p/P)`, weighted by
/// the exponential density at each delay; the grid is then stretched so the
/// discrete profile has exactly the requested RMS spread.
pub fn pdp_grid(num_paths: usize, rms_delay_spread: f64) -> (Vec<f64>, Vec<f64>) {
    let p_count = num_paths as f64;
    let unit: Vec<f64> = (0..num_paths).map(|p| -(1.0 - p as f64 / p_count).ln()).collect();
    let raw: Vec<f64> = unit.iter().map(|x| (-x).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    if num_paths == 1 {
        return (vec![0.0], weights);
    }
    let scale = rms_delay_spread / rms_spread(&unit, &weights);
    (unit.iter().map(|x| x * scale).collect(), weights)
}

/// Draws the per-user multipath profile. User `k` uses the RNG stream seeded
/// with `seed ^ k`, so users can be generated independently.
pub fn generate_profile(cfg: &ChannelConfig) -> Result<MultipathProfile> {
    cfg.validate()?;
    let (delays, weights) = pdp_grid(cfg.num_paths, cfg.rms_delay_spread);
    let users = (0..cfg.num_users)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ k as u64);
            delays
                .iter()
                .zip(&weights)
                .map(|(&delay, &w)| {
                    let sd = (w / 2.0).sqrt();
                    let gains = (0..cfg.num_tx_antennas)
                        .map(|_| {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let im: f64 = StandardNormal.sample(&mut rng);
                            Complex64::new(re * sd, im * sd)
                        })
                        .collect();
                    Tap { delay, gains }
                })
                .collect()
        })
        .collect();
    Ok(MultipathProfile {
        pdp_weights: weights,
        users,
    })
}

/// Per-RB, per-user channel vectors, stored flat in `[g][k][antenna]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct RBChannelSet {
    pub config: ChannelConfig,
    num_rbs: usize,
    num_users: usize,
    num_tx: usize,
    data: Vec<Complex64>,
}

impl RBChannelSet {
    pub fn from_vec(
        config: ChannelConfig,
        num_rbs: usize,
        num_users: usize,
        num_tx: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != num_rbs * num_users * num_tx {
            return Err(Error::input(format!(
                "channel data has {} entries, expected {num_rbs}x{num_users}x{num_tx}",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::input("channel contains non-finite entries"));
        }
        Ok(Self {
            config,
            num_rbs,
            num_users,
            num_tx,
            data,
        })
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

    pub fn user(&self, g: usize, k: usize) -> &[Complex64] {
        let start = (g * self.num_users + k) * self.num_tx;
        &self.data[start..start + self.num_tx]
    }

    /// All `K` user vectors of RB `g`, concatenated.
    pub fn rb(&self, g: usize) -> &[Complex64] {
        let n = self.num_users * self.num_tx;
        &self.data[g * n..(g + 1) * n]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

fn tap_sum(taps: &[Tap], antenna: usize, freq: f64) -> Complex64 {
    taps.iter()
        .map(|t| t.gains[antenna] * Complex64::from_polar(1.0, -2.0 * PI * freq * t.delay))
        .sum()
}

/// Evaluates `H[g][k] = sum_p g_p exp(-j 2 pi f_g tau_p)` at every RB.
pub fn frequency_response(profile: &MultipathProfile, cfg: &ChannelConfig) -> Result<RBChannelSet> {
    cfg.validate()?;
    if profile.users.len() != cfg.num_users
        || profile
            .users
            .iter()
            .flatten()
            .any(|t| t.gains.len() != cfg.num_tx_antennas)
    {
        return Err(Error::input("multipath profile does not match channel config"));
    }
    let (g_count, k_count, n_tx) = (cfg.num_rbs, cfg.num_users, cfg.num_tx_antennas);
    let spr = cfg.subcarriers_per_rb;
    let mut data = Vec::with_capacity(g_count * k_count * n_tx);
    for g in 0..g_count {
        for taps in &profile.users {
            for a in 0..n_tx {
                let h = if cfg.rb_average {
                    let sum: Complex64 = (0..spr)
                        .map(|s| {
                            let f = ((g * spr + s) as f64) * cfg.subcarrier_spacing;
                            tap_sum(taps, a, f)
                        })
                        .sum();
                    sum / spr as f64
                } else {
                    tap_sum(taps, a, cfg.rb_center_freq(g))
                };
                data.push(h);
            }
        }
    }
    RBChannelSet::from_vec(cfg.clone(), g_count, k_count, n_tx, data)
}

/// `generate_profile` followed by `frequency_response`.
pub fn generate_channels(cfg: &ChannelConfig) -> Result<RBChannelSet> {
    let profile = generate_profile(cfg)?;
    frequency_response(&profile, cfg)
}
