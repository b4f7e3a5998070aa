//! Precoder compression: linear transform, residual VQ and arithmetic coding.
//!
//! `compress` runs analyze -> quantize -> encode and keeps the longest prefix
//! of refinement stages that fits the fronthaul budget; `decompress` runs
//! decode -> dequantize -> synthesize. Tokens follow the tensor's row order,
//! RB-major then user.

pub mod artifacts;
pub mod bitstream;
pub mod entropy;
pub mod rangecoder;
pub mod rvq;
pub mod transform;

pub use artifacts::CodecArtifacts;
pub use bitstream::{Bitstream, BitstreamHeader};
pub use entropy::{entropy_estimate, fit_entropy_model, EntropyModel};
pub use rvq::{dequantize, quantize, train_codebooks, Codebook, CodebookStack, IndexStream, Quantized};
pub use transform::{fit_transform, Latent, TransformPair};

use crate::error::{Error, Result};
use crate::tensor::PrecodingTensor;

/// Outcome of [`select_stages`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSelection {
    pub stages: usize,
    /// Set when even the base stage exceeds the budget.
    pub infeasible: bool,
}

/// Longest prefix of stages whose summed rate fits `budget` (bits/token).
pub fn select_stages(per_stage_rates: &[f64], budget: f64) -> StageSelection {
    let mut total = 0.0;
    let mut stages = 0;
    for &r in per_stage_rates {
        if total + r > budget {
            break;
        }
        total += r;
        stages += 1;
    }
    StageSelection {
        stages,
        infeasible: stages == 0 && !per_stage_rates.is_empty(),
    }
}

/// Rate accounting for one compressed tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub tokens: usize,
    /// Coded payload bits of each active stage.
    pub stage_bits: Vec<u64>,
    /// `sum(stage_bits) / tokens`.
    pub rate_total: f64,
    /// Ideal code length under the entropy model, per active stage, in bits.
    pub model_entropy_bits: Vec<f64>,
    /// `log2 K_l` per active stage: the cost of sending indices uncoded.
    pub fixed_rate_bits: Vec<f64>,
    /// Coded rate of every stage in the stack, active or not, in bits/token.
    pub candidate_stage_rates: Vec<f64>,
}

impl RateReport {
    pub fn active_stages(&self) -> usize {
        self.stage_bits.len()
    }

    pub fn model_entropy_per_token(&self) -> Vec<f64> {
        self.model_entropy_bits
            .iter()
            .map(|b| b / self.tokens.max(1) as f64)
            .collect()
    }
}

fn check_artifacts(a: &CodecArtifacts, v: &PrecodingTensor) -> Result<()> {
    if v.num_tx() != a.transform.num_tx() {
        return Err(Error::input(format!(
            "tensor has Nt = {}, artifacts were trained for Nt = {}",
            v.num_tx(),
            a.transform.num_tx()
        )));
    }
    Ok(())
}

fn header_for(v: &PrecodingTensor, a: &CodecArtifacts) -> Result<BitstreamHeader> {
    let u32_of = |n: usize, what: &str| u32::try_from(n).map_err(|_| Error::input(format!("{what} exceeds u32")));
    Ok(BitstreamHeader {
        num_rows: u32_of(v.rows(), "D")?,
        num_tx: u32_of(v.num_tx(), "Nt")?,
        num_rbs: u32_of(v.num_rbs(), "G")?,
        num_users: u32_of(v.num_users(), "K")?,
        latent_dim: a.transform.latent_dim() as u16,
        model_order: a.model.order(),
        fingerprint: a.fingerprint(),
    })
}

/// Everything `compress` computes before choosing how many stages to send.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub latent: Latent,
    pub quantized: Quantized,
    pub payloads: Vec<Vec<u8>>,
    pub header: BitstreamHeader,
}

impl Encoded {
    pub fn stage_rates(&self) -> Vec<f64> {
        let t = self.latent.num_tokens().max(1) as f64;
        self.payloads.iter().map(|p| 8.0 * p.len() as f64 / t).collect()
    }

    /// Bitstream and rate report for the first `n` stages.
    pub fn truncate(
        &self,
        n: usize,
        model: &EntropyModel,
        codebooks: &CodebookStack,
    ) -> Result<(Bitstream, RateReport)> {
        if n > self.payloads.len() {
            return Err(Error::input(format!(
                "{n} stages requested, {} available",
                self.payloads.len()
            )));
        }
        let bits = Bitstream {
            header: self.header.clone(),
            payloads: self.payloads[..n].to_vec(),
        };
        let tokens = self.latent.num_tokens();
        let stage_bits = bits.payload_bits();
        let rate_total = if tokens == 0 {
            0.0
        } else {
            stage_bits.iter().sum::<u64>() as f64 / tokens as f64
        };
        let model_entropy_bits = entropy_estimate(model, &self.quantized.indices.prefix(n))?;
        let fixed_rate_bits = codebooks.stage_sizes()[..n]
            .iter()
            .map(|&k| (k as f64).log2())
            .collect();
        let report = RateReport {
            tokens,
            stage_bits,
            rate_total,
            model_entropy_bits,
            fixed_rate_bits,
            candidate_stage_rates: self.stage_rates(),
        };
        Ok((bits, report))
    }
}

/// Analyzes, quantizes through every stage and arithmetic-codes each stage.
pub fn encode_all(v: &PrecodingTensor, a: &CodecArtifacts) -> Result<Encoded> {
    check_artifacts(a, v)?;
    let latent = a.transform.analyze(v)?;
    let quantized = quantize(&latent, &a.codebooks, a.codebooks.num_stages())?;
    let payloads = entropy::encode(&a.model, &quantized.indices)?;
    Ok(Encoded {
        header: header_for(v, a)?,
        latent,
        quantized,
        payloads,
    })
}

/// Compresses with as many stages as fit `budget` bits/token, or all stages
/// when `budget` is `None`.
pub fn compress(v: &PrecodingTensor, a: &CodecArtifacts, budget: Option<f64>) -> Result<(Bitstream, RateReport)> {
    let enc = encode_all(v, a)?;
    let n = match budget {
        None => enc.payloads.len(),
        Some(b) => {
            let rates = enc.stage_rates();
            let sel = select_stages(&rates, b);
            if sel.infeasible {
                return Err(Error::BudgetInfeasible {
                    budget: b,
                    base_rate: rates[0],
                });
            }
            sel.stages
        }
    };
    enc.truncate(n, &a.model, &a.codebooks)
}

/// Compresses with exactly `stages` active stages (0 sends only the header,
/// which decodes to the training mean).
pub fn compress_stages(v: &PrecodingTensor, a: &CodecArtifacts, stages: usize) -> Result<(Bitstream, RateReport)> {
    encode_all(v, a)?.truncate(stages, &a.model, &a.codebooks)
}

/// Entropy-decodes the index stream after checking it belongs to `codebooks`.
pub fn decode(bits: &Bitstream, model: &EntropyModel, codebooks: &CodebookStack) -> Result<IndexStream> {
    if bits.header.fingerprint != codebooks.fingerprint() {
        return Err(Error::CodebookMismatch {
            stream: bits.header.fingerprint,
            artifacts: codebooks.fingerprint(),
        });
    }
    if bits.header.model_order != model.order() {
        return Err(Error::corrupt(format!(
            "stream was coded with an order-{} model, artifacts hold order {}",
            bits.header.model_order,
            model.order()
        )));
    }
    if bits.active_stages() > codebooks.num_stages() {
        return Err(Error::corrupt(format!(
            "stream has {} stages, codebooks have {}",
            bits.active_stages(),
            codebooks.num_stages()
        )));
    }
    let t = bits.header.num_rows as usize;
    let stages = bits
        .payloads
        .iter()
        .enumerate()
        .map(|(l, p)| entropy::decode_stage(model, l, p, t))
        .collect::<Result<_>>()?;
    IndexStream::new(t, stages)
}

pub fn decompress(bits: &Bitstream, a: &CodecArtifacts) -> Result<PrecodingTensor> {
    let h = &bits.header;
    if h.num_tx as usize != a.transform.num_tx() || h.latent_dim as usize != a.transform.latent_dim() {
        return Err(Error::CodebookMismatch {
            stream: h.fingerprint,
            artifacts: a.fingerprint(),
        });
    }
    let indices = decode(bits, &a.model, &a.codebooks)?;
    let z_hat = dequantize(&indices, &a.codebooks)?;
    a.transform.synthesize(&z_hat, h.num_rbs as usize, h.num_users as usize)
}

/// In-memory reconstruction through `stages` stages, skipping entropy coding.
pub fn reconstruct(v: &PrecodingTensor, a: &CodecArtifacts, stages: usize) -> Result<PrecodingTensor> {
    check_artifacts(a, v)?;
    let z = a.transform.analyze(v)?;
    let z_hat = if stages == 0 {
        Latent::zeros(z.num_tokens(), z.dim())
    } else {
        quantize(&z, &a.codebooks, stages)?.reconstruction
    };
    a.transform.synthesize(&z_hat, v.num_rbs(), v.num_users())
}

/// Codec hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub latent_dim: usize,
    pub codebook_sizes: Vec<usize>,
    pub lbg_iters: usize,
    pub entropy_order: u8,
    /// Rate weight of the rate-distortion objective, per bit/token.
    pub lambda: f64,
    /// Weight of the quantization (commitment) term.
    pub gamma: f64,
    /// Fronthaul budget in bits/token; `None` sends every stage.
    pub budget: Option<f64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            codebook_sizes: vec![64; 4],
            lbg_iters: 25,
            entropy_order: 0,
            lambda: 0.01,
            gamma: 0.25,
            budget: None,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim > u16::MAX as usize {
            return Err(Error::config("latent_dim", "must be in 1..=65535"));
        }
        if self.codebook_sizes.is_empty() || self.codebook_sizes.len() > u8::MAX as usize {
            return Err(Error::config("codebook_sizes", "need 1..=255 stages"));
        }
        if self.codebook_sizes.iter().any(|&k| k == 0 || k > 1 << 16) {
            return Err(Error::config("codebook_sizes", "sizes must be in 1..=65536"));
        }
        if self.lbg_iters == 0 {
            return Err(Error::config("lbg_iters", "must be at least 1"));
        }
        if self.entropy_order > 1 {
            return Err(Error::config("entropy_order", "must be 0 or 1"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::config("lambda/gamma", "must be non-negative"));
        }
        if let Some(b) = self.budget {
            if b.is_nan() || b < 0.0 {
                return Err(Error::config("budget_bits_per_token", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Two-phase fit: transform on the training tensors, codebooks on their
/// latents, then the entropy model on the resulting full-depth indices.
pub fn train(training: &[PrecodingTensor], cfg: &CodecConfig, seed: u64) -> Result<CodecArtifacts> {
    cfg.validate()?;
    let width = training.first().map(|t| t.cols()).unwrap_or(0);
    if cfg.latent_dim > width {
        return Err(Error::config("latent_dim", format!("must not exceed 2Nt = {width}")));
    }
    let transform = fit_transform(training, cfg.latent_dim)?;
    let latents = training
        .iter()
        .map(|t| transform.analyze(t))
        .collect::<Result<Vec<_>>>()?;
    let codebooks = train_codebooks(&latents, &cfg.codebook_sizes, cfg.lbg_iters, seed)?;
    let streams = latents
        .iter()
        .map(|z| quantize(z, &codebooks, codebooks.num_stages()).map(|q| q.indices))
        .collect::<Result<Vec<_>>>()?;
    let model = fit_entropy_model(&streams, &codebooks.stage_sizes(), cfg.entropy_order)?;
    CodecArtifacts::new(transform, codebooks, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensors(seed: u64, n: usize) -> Vec<PrecodingTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let data = (0..4 * 2 * 2 * 3)
                    .map(|i| rng.random_range(-1.0..1.0) / (1 + i % 6) as f64)
                    .collect();
                PrecodingTensor::from_vec(4, 2, 3, data).unwrap()
            })
            .collect()
    }

    fn small_artifacts(order: u8) -> (Vec<PrecodingTensor>, CodecArtifacts) {
        let data = random_tensors(1, 40);
        let cfg = CodecConfig {
            latent_dim: 4,
            codebook_sizes: vec![8, 4, 4],
            lbg_iters: 10,
            entropy_order: order,
            ..CodecConfig::default()
        };
        let a = train(&data, &cfg, 7).unwrap();
        (data, a)
    }

    #[test]
    fn select_stages_prefix_sums() {
        let r = [3.0, 2.0, 2.0];
        assert_eq!(
            select_stages(&r, 100.0),
            StageSelection {
                stages: 3,
                infeasible: false
            }
        );
        assert_eq!(
            select_stages(&r, 7.0),
            StageSelection {
                stages: 3,
                infeasible: false
            }
        );
        assert_eq!(
            select_stages(&r, 5.0),
            StageSelection {
                stages: 2,
                infeasible: false
            }
        );
        assert_eq!(
            select_stages(&r, 2.9),
            StageSelection {
                stages: 0,
                infeasible: true
            }
        );
    }

    #[test]
    fn decompress_equals_direct_pipeline() {
        for order in [0, 1] {
            let (data, a) = small_artifacts(order);
            for v in &data[..5] {
                let (bits, _) = compress(v, &a, None).unwrap();
                let bytes = bits.to_bytes().unwrap();
                let back = decompress(&Bitstream::from_bytes(&bytes).unwrap(), &a).unwrap();
                let z = a.transform.analyze(v).unwrap();
                let q = quantize(&z, &a.codebooks, 3).unwrap();
                let direct = a
                    .transform
                    .synthesize(&dequantize(&q.indices, &a.codebooks).unwrap(), 4, 2)
                    .unwrap();
                assert_eq!(back, direct);
                assert_eq!(back, reconstruct(v, &a, 3).unwrap());
            }
        }
    }

    #[test]
    fn rate_report_accounts_for_file_size() {
        let (data, a) = small_artifacts(1);
        let (bits, report) = compress(&data[0], &a, None).unwrap();
        let file = bits.to_bytes().unwrap();
        let payload_bits = 8 * (file.len() - bits.header_len()) as u64;
        assert_eq!(report.stage_bits.iter().sum::<u64>(), payload_bits);
        assert!((report.rate_total * report.tokens as f64 - payload_bits as f64).abs() < 1e-9);
    }

    #[test]
    fn budget_picks_prefix_and_rejects_infeasible() {
        let (data, a) = small_artifacts(0);
        let (_, full) = compress(&data[0], &a, None).unwrap();
        let rates = full.candidate_stage_rates.clone();
        let (_, two) = compress(&data[0], &a, Some(rates[0] + rates[1] + 1e-9)).unwrap();
        assert_eq!(two.active_stages(), 2);
        assert!(two.rate_total <= rates[0] + rates[1] + 1e-9);
        match compress(&data[0], &a, Some(rates[0] * 0.5)) {
            Err(Error::BudgetInfeasible { .. }) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn zero_stages_decode_to_mean() {
        let (data, a) = small_artifacts(0);
        let (bits, report) = compress_stages(&data[0], &a, 0).unwrap();
        assert_eq!(report.rate_total, 0.0);
        let back = decompress(&bits, &a).unwrap();
        for row in back.rows_iter() {
            assert_eq!(row, a.transform.mean());
        }
    }

    #[test]
    fn fingerprint_mismatch_detected() {
        let (data, a) = small_artifacts(0);
        let (bits, _) = compress(&data[0], &a, None).unwrap();
        let mut bytes = bits.to_bytes().unwrap();
        bytes[25] ^= 0x01;
        let tampered = Bitstream::from_bytes(&bytes).unwrap();
        assert!(matches!(decompress(&tampered, &a), Err(Error::CodebookMismatch { .. })));
    }

    #[test]
    fn mse_decreases_with_stages_on_training_data() {
        let (data, a) = small_artifacts(0);
        let mut prev = f64::INFINITY;
        for n in 0..=3 {
            let mse: f64 = data
                .iter()
                .map(|v| {
                    let r = reconstruct(v, &a, n).unwrap();
                    v.as_slice()
                        .iter()
                        .zip(r.as_slice())
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                })
                .sum();
            assert!(mse <= prev, "stage {n}: {mse} > {prev}");
            prev = mse;
        }
    }

    #[test]
    fn artifacts_round_trip_and_detect_corruption() {
        for order in [0, 1] {
            let (_, a) = small_artifacts(order);
            let bytes = a.to_bytes().unwrap();
            assert_eq!(CodecArtifacts::from_bytes(&bytes).unwrap(), a);
            let mut bad = bytes.clone();
            // Flip a byte inside the first codeword.
            let offset = 4 + 1 + 4 + 2 + 8 * (6 + 4 * 6) + 1 + 8 + 3;
            bad[offset] ^= 0x40;
            assert!(matches!(CodecArtifacts::from_bytes(&bad), Err(Error::Corrupt(_))));
            assert!(matches!(
                CodecArtifacts::from_bytes(&bytes[..bytes.len() - 3]),
                Err(Error::Corrupt(_))
            ));
        }
    }

    #[test]
    fn latent_dim_above_width_is_config_error() {
        let data = random_tensors(2, 3);
        let cfg = CodecConfig {
            latent_dim: 7,
            ..CodecConfig::default()
        };
        assert!(matches!(train(&data, &cfg, 0), Err(Error::Config { .. })));
    }
}
