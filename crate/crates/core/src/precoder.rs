//! RB-granular WMMSE downlink precoding and sum-rate evaluation.
//!
//! Each RB is optimized independently under a sum-power constraint. Users have
//! a single receive antenna, so the receiver and MSE weight of each user are
//! scalars and the precoder update reduces to a `K x K` linear system in the
//! span of the user channels:
//!
//! ```text
//! u_k = h_k^H v_k / (sum_j |h_k^H v_j|^2 + sigma^2)
//! w_k = 1 / e_k,   e_k = 1 - |h_k^H v_k|^2 / (sum_j |h_k^H v_j|^2 + sigma^2)
//! v_k = w_k u_k (sum_j w_j |u_j|^2 h_j h_j^H + mu I)^-1 h_k
//! ```
//!
//! The last line is evaluated in the span of the channels as `V = H X` with
//! `(D G + mu I) X = diag(w u)`, `G = H^H H` and `D = diag(w |u|^2)`, which
//! is the same solution by the push-through identity.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channelgen::RBChannelSet;
use crate::error::{Error, Result};
use crate::tensor::PrecodingTensor;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderConfig {
    /// Linear watts per RB.
    pub total_power: f64,
    /// Linear watts.
    pub noise_power: f64,
    pub max_iters: usize,
    /// Relative sum-rate change that ends the iteration.
    pub convergence_tol: f64,
    /// Per-RB multipliers applied when averaging RB rates into
    /// [`PrecodingSet::final_sum_rate`]. Empty means uniform.
    pub rb_weights: Vec<f64>,
}

impl Default for PrecoderConfig {
    fn default() -> Self {
        Self {
            total_power: 1.0,
            noise_power: 1e-2,
            max_iters: 100,
            convergence_tol: 1e-8,
            rb_weights: Vec::new(),
        }
    }
}

impl PrecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return Err(Error::config("total_power", "must be positive and finite"));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::config("noise_power", "must be positive and finite"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::config("convergence_tol", "must be positive"));
        }
        if self.rb_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("rb_weights", "must be non-negative and finite"));
        }
        Ok(())
    }
}

/// WMMSE output for one RB.
#[derive(Debug, Clone, PartialEq)]
pub struct RbSolution {
    /// `K` precoders of length `Nt`, flat in `[k][antenna]` order.
    pub precoders: Vec<Complex64>,
    /// Lagrange multiplier of the last precoder update.
    pub mu: f64,
    pub iterations: usize,
    /// Sum rate (bits/s/Hz) after initialization and after every iteration.
    pub rate_history: Vec<f64>,
}

impl RbSolution {
    pub fn sum_rate(&self) -> f64 {
        *self.rate_history.last().unwrap_or(&0.0)
    }
}

#[inline]
fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// `sum_k log2(1 + SINR_k)` for one RB; `h` and `v` are `K x Nt`, flat.
pub fn rb_sum_rate(h: &[Complex64], v: &[Complex64], num_users: usize, noise_power: f64) -> f64 {
    let nt = h.len() / num_users;
    let mut rate = 0.0;
    for k in 0..num_users {
        let hk = &h[k * nt..(k + 1) * nt];
        let mut signal = 0.0;
        let mut interference = noise_power;
        for j in 0..num_users {
            let p = dot_h(hk, &v[j * nt..(j + 1) * nt]).norm_sqr();
            if j == k {
                signal = p;
            } else {
                interference += p;
            }
        }
        rate += (1.0 + signal / interference).log2();
    }
    rate
}

/// Precoder update for fixed receivers and weights. `channels` is `Nt x K'`
/// over the active users.
struct PrecoderUpdate<'a> {
    channels: &'a DMatrix<Complex64>,
    gram: &'a DMatrix<Complex64>,
    /// `w_k |u_k|^2`.
    d: Vec<f64>,
    /// `w_k u_k`.
    b: Vec<Complex64>,
}

impl PrecoderUpdate<'_> {
    /// Smallest `mu >= 0` meeting the power budget, and the matching
    /// precoders as the columns of an `Nt x K'` matrix.
    ///
    /// Users with `d_k = 0` get a zero precoder. For the rest, the Hermitian
    /// matrix `D^1/2 G D^1/2 = Q diag(lambda) Q^H` turns the transmit power
    /// into `sum_i lambda_i |c_i|^2 / (lambda_i + mu)^2` with
    /// `c = Q^H D^-1/2 diag(b)`, so `mu` is found by bisection on a scalar
    /// function and `X = D^1/2 Q (diag(lambda) + mu I)^-1 c`.
    fn constrained(&self, budget: f64) -> (f64, DMatrix<Complex64>) {
        let (nt, k) = self.channels.shape();
        let mut v = DMatrix::zeros(nt, k);
        let served: Vec<usize> = (0..k).filter(|&i| self.d[i] > 0.0).collect();
        let n = served.len();
        if n == 0 {
            return (0.0, v);
        }
        let sq: Vec<f64> = served.iter().map(|&i| self.d[i].sqrt()).collect();
        let scaled_gram = DMatrix::from_fn(n, n, |i, j| self.gram[(served[i], served[j])] * (sq[i] * sq[j]));
        let eig = scaled_gram.symmetric_eigen();
        let q = eig.eigenvectors;
        let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let c = DMatrix::from_fn(n, n, |i, j| q[(j, i)].conj() * (self.b[served[j]] / sq[j]));
        let energy: Vec<f64> = (0..n).map(|i| c.row(i).iter().map(|z| z.norm_sqr()).sum()).collect();
        // Directions with numerically zero eigenvalue carry no power.
        let floor = 1e-12 * lambda.iter().copied().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..n).filter(|&i| lambda[i] > floor).collect();
        let power = |mu: f64| -> f64 {
            kept.iter()
                .map(|&i| lambda[i] * energy[i] / ((lambda[i] + mu) * (lambda[i] + mu)))
                .sum()
        };

        let mu = if power(0.0) <= budget {
            0.0
        } else {
            // lambda / (lambda + mu)^2 <= lambda / mu^2 bounds the power from above.
            let total: f64 = kept.iter().map(|&i| lambda[i] * energy[i]).sum();
            let mut hi = (total / budget).sqrt();
            let mut lo = 0.0;
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if power(mid) <= budget {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };

        let x = DMatrix::from_fn(n, n, |row, col| {
            kept.iter()
                .map(|&i| q[(row, i)] * c[(i, col)] / (lambda[i] + mu))
                .sum::<Complex64>()
                * sq[row]
        });
        let served_channels = DMatrix::from_fn(nt, n, |a, j| self.channels[(a, served[j])]);
        let vs = served_channels * x;
        for (j, &user) in served.iter().enumerate() {
            v.set_column(user, &vs.column(j));
        }
        // Rounding in the closed-form power can leave the budget exceeded by
        // a few ulps; the budget is a hard constraint.
        let actual: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if actual > budget {
            v *= Complex64::new((budget / actual).sqrt(), 0.0);
        }
        (mu, v)
    }
}

/// Runs WMMSE on one RB. `h` holds the `K` user channels flat in `[k][antenna]`
/// order.
pub fn wmmse_rb(h: &[Complex64], num_users: usize, cfg: &PrecoderConfig) -> Result<RbSolution> {
    cfg.validate()?;
    if num_users == 0 || h.is_empty() || !h.len().is_multiple_of(num_users) {
        return Err(Error::input("channel slice is not K x Nt"));
    }
    if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::input("channel contains non-finite entries"));
    }
    let nt = h.len() / num_users;
    let user = |k: usize| &h[k * nt..(k + 1) * nt];
    let active: Vec<usize> = (0..num_users).filter(|&k| norm_sqr(user(k)) > 0.0).collect();
    let mut v = vec![Complex64::new(0.0, 0.0); h.len()];
    if active.is_empty() {
        return Ok(RbSolution {
            precoders: v,
            mu: 0.0,
            iterations: 0,
            rate_history: vec![0.0],
        });
    }

    let ka = active.len();
    let channels = DMatrix::from_fn(nt, ka, |a, j| user(active[j])[a]);
    let gram = channels.adjoint() * &channels;
    let per_user = (cfg.total_power / ka as f64).sqrt();
    for &k in &active {
        let scale = per_user / norm_sqr(user(k)).sqrt();
        for (dst, src) in v[k * nt..(k + 1) * nt].iter_mut().zip(user(k)) {
            *dst = src * scale;
        }
    }

    let sigma2 = cfg.noise_power;
    let mut rate = rb_sum_rate(h, &v, num_users, sigma2);
    let mut history = vec![rate];
    let mut mu = 0.0;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        // Cross gains s[i][j] = h_i^H v_j over active users.
        let s = DMatrix::from_fn(ka, ka, |i, j| {
            dot_h(user(active[i]), &v[active[j] * nt..(active[j] + 1) * nt])
        });
        let mut d = Vec::with_capacity(ka);
        let mut b = Vec::with_capacity(ka);
        for i in 0..ka {
            let total: f64 = (0..ka).map(|j| s[(i, j)].norm_sqr()).sum::<f64>() + sigma2;
            let u = s[(i, i)] / total;
            let mse = (total - s[(i, i)].norm_sqr()).max(f64::MIN_POSITIVE) / total;
            let w = 1.0 / mse;
            d.push(w * u.norm_sqr());
            b.push(u * w);
        }
        let update = PrecoderUpdate {
            channels: &channels,
            gram: &gram,
            d,
            b,
        };
        let (new_mu, vm) = update.constrained(cfg.total_power);
        mu = new_mu;
        v.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (col, &k) in active.iter().enumerate() {
            for (a, dst) in v[k * nt..(k + 1) * nt].iter_mut().enumerate() {
                *dst = vm[(a, col)];
            }
        }
        let new_rate = rb_sum_rate(h, &v, num_users, sigma2);
        history.push(new_rate);
        let converged = (new_rate - rate).abs() <= cfg.convergence_tol * rate.abs().max(f64::MIN_POSITIVE);
        rate = new_rate;
        if converged {
            break;
        }
    }
    Ok(RbSolution {
        precoders: v,
        mu,
        iterations,
        rate_history: history,
    })
}

/// Precoders for every RB and user, flat in `[g][k][antenna]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingSet {
    num_rbs: usize,
    num_users: usize,
    num_tx: usize,
    data: Vec<Complex64>,
    /// Largest iteration count over all RBs.
    pub iterations_used: usize,
    /// RB-averaged sum rate in bits/s/Hz.
    pub final_sum_rate: f64,
}

impl PrecodingSet {
    pub fn from_vec(num_rbs: usize, num_users: usize, num_tx: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != num_rbs * num_users * num_tx {
            return Err(Error::input("precoder data does not match G*K*Nt"));
        }
        Ok(Self {
            num_rbs,
            num_users,
            num_tx,
            data,
            iterations_used: 0,
            final_sum_rate: 0.0,
        })
    }

    pub fn from_tensor(t: &PrecodingTensor) -> Self {
        Self::from_vec(t.num_rbs(), t.num_users(), t.num_tx(), t.to_complex())
            .expect("tensor dimensions are consistent")
    }

    pub fn to_tensor(&self) -> PrecodingTensor {
        PrecodingTensor::from_complex(self.num_rbs, self.num_users, self.num_tx, &self.data)
            .expect("set dimensions are consistent")
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

    pub fn rb(&self, g: usize) -> &[Complex64] {
        let n = self.num_users * self.num_tx;
        &self.data[g * n..(g + 1) * n]
    }

    pub fn rb_mut(&mut self, g: usize) -> &mut [Complex64] {
        let n = self.num_users * self.num_tx;
        &mut self.data[g * n..(g + 1) * n]
    }

    pub fn rb_power(&self, g: usize) -> f64 {
        norm_sqr(self.rb(g))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Scales down any RB whose power exceeds `budget`.
    pub fn project_power(&mut self, budget: f64) {
        for g in 0..self.num_rbs {
            let p = self.rb_power(g);
            if p > budget {
                let s = (budget / p).sqrt();
                self.rb_mut(g).iter_mut().for_each(|c| *c *= s);
            }
        }
    }
}

/// Runs [`wmmse_rb`] on every RB. RBs are independent and solved in parallel.
pub fn precode(h: &RBChannelSet, cfg: &PrecoderConfig) -> Result<PrecodingSet> {
    cfg.validate()?;
    let k = h.num_users();
    let solutions: Vec<RbSolution> = (0..h.num_rbs())
        .into_par_iter()
        .map(|g| wmmse_rb(h.rb(g), k, cfg))
        .collect::<Result<_>>()?;
    let weight = |g: usize| cfg.rb_weights.get(g).copied().unwrap_or(1.0);
    let total_weight: f64 = (0..h.num_rbs()).map(weight).sum();
    let weighted: f64 = solutions
        .iter()
        .enumerate()
        .map(|(g, s)| weight(g) * s.sum_rate())
        .sum();
    let iterations_used = solutions.iter().map(|s| s.iterations).max().unwrap_or(0);
    let data = solutions.into_iter().flat_map(|s| s.precoders).collect();
    let mut set = PrecodingSet::from_vec(h.num_rbs(), k, h.num_tx(), data)?;
    set.iterations_used = iterations_used;
    set.final_sum_rate = if total_weight > 0.0 {
        weighted / total_weight
    } else {
        0.0
    };
    Ok(set)
}

/// WMMSE on every RB, stacked into the real `D x 2Nt` layout.
pub fn generate_precoding_tensor(h: &RBChannelSet, cfg: &PrecoderConfig) -> Result<PrecodingTensor> {
    Ok(precode(h, cfg)?.to_tensor())
}

/// RB-averaged downlink sum rate in bits/s/Hz.
pub fn sum_rate(h: &RBChannelSet, v: &PrecodingSet, noise_power: f64) -> Result<f64> {
    if (h.num_rbs(), h.num_users(), h.num_tx()) != (v.num_rbs(), v.num_users(), v.num_tx()) {
        return Err(Error::input(format!(
            "channel is {}x{}x{}, precoders are {}x{}x{}",
            h.num_rbs(),
            h.num_users(),
            h.num_tx(),
            v.num_rbs(),
            v.num_users(),
            v.num_tx()
        )));
    }
    let total: f64 = (0..h.num_rbs())
        .map(|g| rb_sum_rate(h.rb(g), v.rb(g), h.num_users(), noise_power))
        .sum();
    Ok(total / h.num_rbs() as f64)
}
