//! Distortion, rate, objective and sum-rate loss of reconstructed precoders.
//!
//! EVM is measured on the precoding matrix itself. ΔR compares RB-averaged
//! sum rates over the same channels; reconstructed precoders that exceed the
//! per-RB power budget are scaled down to it first, since a transmitter
//! cannot radiate more than its budget.

use rayon::prelude::*;

use crate::channelgen::RBChannelSet;
use crate::codec::{self, CodecArtifacts};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::precoder::{sum_rate, PrecodingSet};
use crate::tensor::PrecodingTensor;

pub const CSV_HEADER: &str = "stages,rate_bits_per_token,mse,nmse_db,evm_pct,delta_rate,objective";
/// Fractional sum-rate loss flagged as meeting the spectral-efficiency target.
pub const RATE_LOSS_TARGET: f64 = 0.03;
/// Per-user SINR degradation, in dB, flagged in reports.
pub const SINR_LOSS_TARGET_DB: f64 = 0.5;

fn same_shape(v: &PrecodingTensor, v_hat: &PrecodingTensor) -> Result<()> {
    if (v.num_rbs(), v.num_users(), v.num_tx()) != (v_hat.num_rbs(), v_hat.num_users(), v_hat.num_tx()) {
        return Err(Error::input(format!(
            "shapes differ: {}x{} vs {}x{}",
            v.rows(),
            v.cols(),
            v_hat.rows(),
            v_hat.cols()
        )));
    }
    Ok(())
}

fn sq_err(v: &PrecodingTensor, v_hat: &PrecodingTensor) -> f64 {
    v.as_slice()
        .iter()
        .zip(v_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn energy(v: &PrecodingTensor) -> f64 {
    v.as_slice().iter().map(|a| a * a).sum()
}

/// `||V_hat - V||_F^2 / (M N)` over the real `M x N` layout.
pub fn mse(v: &PrecodingTensor, v_hat: &PrecodingTensor) -> Result<f64> {
    same_shape(v, v_hat)?;
    let n = v.as_slice().len();
    if n == 0 {
        return Err(Error::UndefinedMetric("MSE of an empty tensor".into()));
    }
    Ok(sq_err(v, v_hat) / n as f64)
}

pub fn nmse(v: &PrecodingTensor, v_hat: &PrecodingTensor) -> Result<f64> {
    same_shape(v, v_hat)?;
    let e = energy(v);
    if e == 0.0 {
        return Err(Error::UndefinedMetric("NMSE against an all-zero reference".into()));
    }
    Ok(sq_err(v, v_hat) / e)
}

/// `100 sqrt(NMSE)`, in percent.
pub fn evm(v: &PrecodingTensor, v_hat: &PrecodingTensor) -> Result<f64> {
    Ok(100.0 * nmse(v, v_hat)?.sqrt())
}

/// `mse + lambda rate + gamma l_vq`.
pub fn rd_objective(mse: f64, rate_bits_per_token: f64, l_vq: f64, lambda: f64, gamma: f64) -> Result<f64> {
    for (name, x) in [
        ("mse", mse),
        ("rate", rate_bits_per_token),
        ("l_vq", l_vq),
        ("lambda", lambda),
        ("gamma", gamma),
    ] {
        if x.is_nan() || x < 0.0 {
            return Err(Error::input(format!("{name} must be non-negative, got {x}")));
        }
    }
    Ok(mse + lambda * rate_bits_per_token + gamma * l_vq)
}

/// Fractional sum-rate loss of `v_hat` relative to `v_ref` on channels `h`.
pub fn delta_rate(h: &RBChannelSet, v_ref: &PrecodingSet, v_hat: &PrecodingSet, noise_power: f64) -> Result<f64> {
    let r_ref = sum_rate(h, v_ref, noise_power)?;
    let r_hat = sum_rate(h, v_hat, noise_power)?;
    if r_ref == 0.0 {
        return Err(Error::UndefinedMetric("reference sum rate is zero".into()));
    }
    Ok((r_ref - r_hat) / r_ref)
}

/// Linear SINR of every user on every RB, flat in `[g][k]` order.
pub fn user_sinr(h: &RBChannelSet, v: &PrecodingSet, noise_power: f64) -> Result<Vec<f64>> {
    if (h.num_rbs(), h.num_users(), h.num_tx()) != (v.num_rbs(), v.num_users(), v.num_tx()) {
        return Err(Error::input("channel and precoder shapes differ"));
    }
    let mut out = Vec::with_capacity(h.num_rbs() * h.num_users());
    for g in 0..h.num_rbs() {
        for k in 0..h.num_users() {
            let hk = h.user(g, k);
            let mut signal = 0.0;
            let mut interference = noise_power;
            for j in 0..h.num_users() {
                let p = hk
                    .iter()
                    .zip(v.user(g, j))
                    .map(|(a, b)| a.conj() * b)
                    .sum::<num_complex::Complex64>()
                    .norm_sqr();
                if j == k {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            out.push(signal / interference);
        }
    }
    Ok(out)
}

/// Largest per-user SINR loss in dB, averaged over the RBs where the user is
/// served by the reference.
fn max_user_sinr_loss_db(sinr_ref: &[f64], sinr_hat: &[f64], num_users: usize) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..num_users {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (r, h) in sinr_ref
            .iter()
            .skip(k)
            .step_by(num_users)
            .zip(sinr_hat.iter().skip(k).step_by(num_users))
        {
            if *r > 0.0 {
                sum += 10.0 * (r / h).log10();
                count += 1;
            }
        }
        if count > 0 {
            worst = worst.max(sum / count as f64);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub lambda: f64,
    pub gamma: f64,
    pub total_power: f64,
    pub noise_power: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            gamma: 0.25,
            total_power: 1.0,
            noise_power: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub stages: usize,
    pub mse: f64,
    pub nmse: f64,
    pub nmse_db: f64,
    pub evm_percent: f64,
    pub rate_bits_per_token: f64,
    /// Mean squared latent quantization error per token.
    pub l_vq: f64,
    pub objective: f64,
    pub sum_rate_ref: f64,
    pub sum_rate_compressed: f64,
    pub delta_rate_fraction: f64,
    /// Worst per-user SINR loss over the evaluated samples, dB.
    pub max_sinr_loss_db: f64,
}

impl EvalReport {
    pub fn meets_rate_target(&self) -> bool {
        self.delta_rate_fraction <= RATE_LOSS_TARGET
    }

    pub fn meets_sinr_target(&self) -> bool {
        self.max_sinr_loss_db <= SINR_LOSS_TARGET_DB
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.stages,
            sci(self.rate_bits_per_token),
            sci(self.mse),
            sci(self.nmse_db),
            sci(self.evm_percent),
            sci(self.delta_rate_fraction),
            sci(self.objective)
        )
    }
}

/// `printf("%.10e")` formatting: signed exponent of at least two digits.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Per-sample sums for one stage count; reduced sequentially across samples.
#[derive(Debug, Clone, Default)]
struct Partial {
    sq_err: f64,
    energy: f64,
    elements: usize,
    bits: u64,
    tokens: usize,
    latent_err: f64,
    rate_ref: f64,
    rate_hat: f64,
    sinr_loss_db: f64,
}

fn sample_partials(s: &Sample, a: &CodecArtifacts, stage_counts: &[usize], p: &EvalParams) -> Result<Vec<Partial>> {
    let enc = codec::encode_all(&s.tensor, a)?;
    let v_ref = PrecodingSet::from_tensor(&s.tensor);
    let rate_ref = sum_rate(&s.channels, &v_ref, p.noise_power)?;
    let sinr_ref = user_sinr(&s.channels, &v_ref, p.noise_power)?;
    let energy = energy(&s.tensor);
    let (g, k) = (s.tensor.num_rbs(), s.tensor.num_users());
    stage_counts
        .iter()
        .map(|&n| {
            if n > enc.payloads.len() {
                return Err(Error::input(format!(
                    "{n} stages requested, {} trained",
                    enc.payloads.len()
                )));
            }
            let prefix = enc.quantized.indices.prefix(n);
            let z_hat = codec::dequantize(&prefix, &a.codebooks)?;
            let v_hat = a.transform.synthesize(&z_hat, g, k)?;
            let latent_err: f64 = enc
                .latent
                .as_slice()
                .iter()
                .zip(z_hat.as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let mut set_hat = PrecodingSet::from_tensor(&v_hat);
            set_hat.project_power(p.total_power);
            let rate_hat = sum_rate(&s.channels, &set_hat, p.noise_power)?;
            let sinr_hat = user_sinr(&s.channels, &set_hat, p.noise_power)?;
            Ok(Partial {
                sq_err: sq_err(&s.tensor, &v_hat),
                energy,
                elements: s.tensor.as_slice().len(),
                bits: enc.payloads[..n].iter().map(|b| 8 * b.len() as u64).sum(),
                tokens: enc.latent.num_tokens(),
                latent_err,
                rate_ref,
                rate_hat,
                sinr_loss_db: max_user_sinr_loss_db(&sinr_ref, &sinr_hat, k),
            })
        })
        .collect()
}

fn finish(stages: usize, parts: &[Partial], p: &EvalParams) -> Result<EvalReport> {
    let mut t = Partial {
        sinr_loss_db: f64::NEG_INFINITY,
        ..Partial::default()
    };
    for x in parts {
        t.sq_err += x.sq_err;
        t.energy += x.energy;
        t.elements += x.elements;
        t.bits += x.bits;
        t.tokens += x.tokens;
        t.latent_err += x.latent_err;
        t.rate_ref += x.rate_ref;
        t.rate_hat += x.rate_hat;
        t.sinr_loss_db = t.sinr_loss_db.max(x.sinr_loss_db);
    }
    if t.elements == 0 || t.tokens == 0 {
        return Err(Error::UndefinedMetric("no samples to evaluate".into()));
    }
    if t.energy == 0.0 {
        return Err(Error::UndefinedMetric("NMSE against an all-zero reference".into()));
    }
    if t.rate_ref == 0.0 {
        return Err(Error::UndefinedMetric("reference sum rate is zero".into()));
    }
    let n = parts.len() as f64;
    let mse = t.sq_err / t.elements as f64;
    let nmse = t.sq_err / t.energy;
    let rate = t.bits as f64 / t.tokens as f64;
    let l_vq = t.latent_err / t.tokens as f64;
    let sum_rate_ref = t.rate_ref / n;
    let sum_rate_compressed = t.rate_hat / n;
    Ok(EvalReport {
        stages,
        mse,
        nmse,
        nmse_db: 10.0 * nmse.log10(),
        evm_percent: 100.0 * nmse.sqrt(),
        rate_bits_per_token: rate,
        l_vq,
        objective: rd_objective(mse, rate, l_vq, p.lambda, p.gamma)?,
        sum_rate_ref,
        sum_rate_compressed,
        delta_rate_fraction: (sum_rate_ref - sum_rate_compressed) / sum_rate_ref,
        max_sinr_loss_db: t.sinr_loss_db,
    })
}

/// One report per entry of `stage_counts`, in that order. Samples are
/// processed in parallel; sums are reduced in sample order.
pub fn evaluate_stages(
    samples: &[Sample],
    a: &CodecArtifacts,
    stage_counts: &[usize],
    p: &EvalParams,
) -> Result<Vec<EvalReport>> {
    let per_sample = samples
        .par_iter()
        .map(|s| sample_partials(s, a, stage_counts, p))
        .collect::<Result<Vec<_>>>()?;
    stage_counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let parts: Vec<Partial> = per_sample.iter().map(|v| v[i].clone()).collect();
            finish(n, &parts, p)
        })
        .collect()
}

pub fn evaluate(samples: &[Sample], a: &CodecArtifacts, stages: usize, p: &EvalParams) -> Result<EvalReport> {
    Ok(evaluate_stages(samples, a, &[stages], p)?.remove(0))
}

/// Reports for every active-stage count `1..=L`.
pub fn rd_sweep(samples: &[Sample], a: &CodecArtifacts, p: &EvalParams) -> Result<Vec<EvalReport>> {
    let counts: Vec<usize> = (1..=a.codebooks.num_stages()).collect();
    evaluate_stages(samples, a, &counts, p)
}

/// Dataset-mean coded rate of each stage, bits/token.
pub fn mean_stage_rates(samples: &[Sample], a: &CodecArtifacts) -> Result<Vec<f64>> {
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let enc = codec::encode_all(&s.tensor, a)?;
            Ok((
                enc.payloads.iter().map(|b| 8 * b.len() as u64).collect::<Vec<_>>(),
                enc.latent.num_tokens(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bits = vec![0u64; a.codebooks.num_stages()];
    let mut tokens = 0usize;
    for (b, t) in per_sample {
        bits.iter_mut().zip(b).for_each(|(acc, x)| *acc += x);
        tokens += t;
    }
    Ok(bits.iter().map(|&b| b as f64 / tokens.max(1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::ChannelConfig;
    use crate::codec::{train, CodecConfig};
    use crate::dataset::generate_dataset;
    use crate::precoder::PrecoderConfig;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, g: usize, k: usize, nt: usize) -> PrecodingTensor {
        PrecodingTensor::from_vec(
            g,
            k,
            nt,
            (0..g * k * 2 * nt).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mse_hand_values() {
        // V = [[1, 0], [0, 1]] as one RB, two users, one antenna (re | im).
        let v = PrecodingTensor::from_vec(1, 2, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let z = PrecodingTensor::zeros(1, 2, 1);
        assert_eq!(mse(&v, &v).unwrap(), 0.0);
        assert_eq!(mse(&v, &z).unwrap(), 0.5);
        assert_eq!(nmse(&v, &z).unwrap(), 1.0);
        assert_eq!(evm(&v, &z).unwrap(), 100.0);
        assert_eq!(nmse(&v, &v).unwrap(), 0.0);
        assert!(matches!(nmse(&z, &v), Err(Error::UndefinedMetric(_))));
        let other = PrecodingTensor::zeros(2, 1, 1);
        assert!(matches!(mse(&v, &other), Err(Error::Input(_))));
    }

    #[test]
    fn metrics_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // 8 x 16 real layout: 4 RBs, 2 users, 8 antennas.
        let v = random_tensor(&mut rng, 4, 2, 8);
        let w = random_tensor(&mut rng, 4, 2, 8);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..v.rows() {
            for j in 0..v.cols() {
                let d = v.row(i)[j] - w.row(i)[j];
                num += d * d;
                den += v.row(i)[j] * v.row(i)[j];
            }
        }
        assert!((mse(&v, &w).unwrap() - num / 128.0).abs() <= 1e-12);
        assert!((nmse(&v, &w).unwrap() - num / den).abs() <= 1e-12);
        assert!((evm(&v, &w).unwrap() - 100.0 * (num / den).sqrt()).abs() <= 1e-12);
        assert!(mse(&v, &w).unwrap() > 0.0);
    }

    #[test]
    fn objective_arithmetic() {
        assert_eq!(rd_objective(0.0, 0.0, 0.0, 0.01, 0.25).unwrap(), 0.0);
        assert!((rd_objective(1.0, 2.0, 3.0, 0.5, 0.1).unwrap() - 2.3).abs() < 1e-15);
        assert!(rd_objective(-1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(rd_objective(0.0, 0.0, 0.0, 0.0, -0.5).is_err());
        // Affine in each argument: unit steps move the objective by the coefficient.
        let base = rd_objective(0.5, 4.0, 0.25, 0.125, 0.5).unwrap();
        assert_eq!(rd_objective(1.5, 4.0, 0.25, 0.125, 0.5).unwrap() - base, 1.0);
        assert_eq!(rd_objective(0.5, 5.0, 0.25, 0.125, 0.5).unwrap() - base, 0.125);
        assert_eq!(rd_objective(0.5, 4.0, 1.25, 0.125, 0.5).unwrap() - base, 0.5);
    }

    #[test]
    fn delta_rate_endpoints_and_oracle() {
        let ch = ChannelConfig {
            num_tx_antennas: 4,
            num_users: 2,
            num_rbs: 3,
            num_paths: 4,
            seed: 9,
            ..ChannelConfig::default()
        };
        let pc = PrecoderConfig::default();
        let ds = generate_dataset(&ch, &pc, 1).unwrap();
        let s = &ds.samples[0];
        let v = PrecodingSet::from_tensor(&s.tensor);
        assert_eq!(delta_rate(&s.channels, &v, &v, pc.noise_power).unwrap(), 0.0);
        let zero = PrecodingSet::from_vec(3, 2, 4, vec![Complex64::new(0.0, 0.0); 24]).unwrap();
        assert_eq!(delta_rate(&s.channels, &v, &zero, pc.noise_power).unwrap(), 1.0);
        assert!(matches!(
            delta_rate(&s.channels, &zero, &v, pc.noise_power),
            Err(Error::UndefinedMetric(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy: Vec<Complex64> = v
            .as_slice()
            .iter()
            .map(|c| c + Complex64::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
            .collect();
        let noisy = PrecodingSet::from_vec(3, 2, 4, noisy).unwrap();
        let rate = |set: &PrecodingSet| -> f64 {
            let mut total = 0.0;
            for g in 0..3 {
                for k in 0..2 {
                    let gain = |j: usize| -> f64 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for a in 0..4 {
                            acc += s.channels.user(g, k)[a].conj() * set.user(g, j)[a];
                        }
                        acc.norm_sqr()
                    };
                    total += (1.0 + gain(k) / (gain(1 - k) + pc.noise_power)).log2();
                }
            }
            total / 3.0
        };
        let expected = (rate(&v) - rate(&noisy)) / rate(&v);
        assert!((delta_rate(&s.channels, &v, &noisy, pc.noise_power).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn sci_matches_printf() {
        assert_eq!(sci(0.0), "0.0000000000e+00");
        assert_eq!(sci(1.5e-3), "1.5000000000e-03");
        assert_eq!(sci(-123.0), "-1.2300000000e+02");
        assert_eq!(sci(1e100), "1.0000000000e+100");
        assert_eq!(sci(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn sweep_is_monotone_and_consistent() {
        let ch = ChannelConfig {
            num_tx_antennas: 4,
            num_users: 2,
            num_rbs: 4,
            num_paths: 6,
            seed: 2,
            ..ChannelConfig::default()
        };
        let pc = PrecoderConfig::default();
        let ds = generate_dataset(&ch, &pc, 24).unwrap();
        let cfg = CodecConfig {
            latent_dim: 6,
            codebook_sizes: vec![16, 8, 8],
            lbg_iters: 15,
            ..CodecConfig::default()
        };
        let training: Vec<PrecodingTensor> = ds.samples.iter().map(|s| s.tensor.clone()).collect();
        let a = train(&training, &cfg, 4).unwrap();
        let p = EvalParams::default();
        let sweep = rd_sweep(&ds.samples, &a, &p).unwrap();
        assert_eq!(sweep.len(), 3);
        for w in sweep.windows(2) {
            assert!(w[1].mse <= w[0].mse);
            assert!(w[1].rate_bits_per_token >= w[0].rate_bits_per_token);
        }
        let csv = to_csv(&sweep);
        assert_eq!(csv.lines().count(), 4);
        assert!(!csv.contains('\r'));

        // Single-stage row equals a direct compress/decompress evaluation.
        let one = &sweep[0];
        let (mut err, mut bits, mut tokens) = (0.0, 0u64, 0usize);
        for s in &ds.samples {
            let (b, report) = codec::compress_stages(&s.tensor, &a, 1).unwrap();
            let back = codec::decompress(&b, &a).unwrap();
            err += sq_err(&s.tensor, &back);
            bits += report.stage_bits.iter().sum::<u64>();
            tokens += report.tokens;
        }
        let elements = ds.samples.len() * ds.samples[0].tensor.as_slice().len();
        assert!((one.mse - err / elements as f64).abs() <= 1e-12);
        assert_eq!(one.rate_bits_per_token, bits as f64 / tokens as f64);
        let recomposed = one.mse + p.lambda * one.rate_bits_per_token + p.gamma * one.l_vq;
        assert!((one.objective - recomposed).abs() <= 1e-15);
    }
}
