use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fhz_core::codec::{Bitstream, CodecArtifacts};
use fhz_core::harness::{self, RunConfig, Split};
use fhz_core::metrics::{self, EvalReport, RATE_LOSS_TARGET, SINR_LOSS_TARGET_DB};
use fhz_core::precoder::{sum_rate, PrecodingSet};
use fhz_core::{Dataset, Error, PrecodingTensor, Result};

#[derive(Parser, Debug)]
#[command(
    name = "fhz",
    version,
    about = "Compress RB-wise downlink precoders for fronthaul links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate channels and WMMSE precoders into an FHD1 dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Fit transform, codebooks and entropy model on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// FHD1 dataset produced by `gen-data`.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Compress one precoding tensor into an FHZ1 bitstream.
    Compress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifacts: PathBuf,
        /// FHT1 tensor or FHD1 dataset.
        #[arg(long)]
        input: PathBuf,
        /// Sample index when `--input` is a dataset.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Reconstruct a precoding tensor (FHT1) from an FHZ1 bitstream.
    Decompress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Evaluate distortion, rate and sum-rate loss; writes one CSV row.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// Number of active stages; defaults to the budget or all stages.
        #[arg(long)]
        eval_stages: Option<usize>,
    },
    /// Evaluate every active-stage count; writes one CSV row per count.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Which part of the dataset to evaluate: train, test or all.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Args, Debug)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; CSV commands print to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rbs: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    tx_antennas: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    delay_spread_ns: Option<f64>,
    #[arg(long)]
    rb_average: bool,
    #[arg(long)]
    num_samples: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Number of refinement stages L.
    #[arg(long)]
    stages: Option<usize>,
    /// Comma-separated codebook sizes, one per stage.
    #[arg(long)]
    codebook_sizes: Option<String>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    budget_bits_per_token: Option<f64>,
    #[arg(long)]
    entropy_order: Option<u8>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), p) => RunConfig::load(path, p.as_deref())?,
            (None, Some(p)) => RunConfig::preset(p)?,
            (None, None) => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 12] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("rbs", self.rbs.map(|v| v.to_string())),
            ("users", self.users.map(|v| v.to_string())),
            ("tx_antennas", self.tx_antennas.map(|v| v.to_string())),
            ("paths", self.paths.map(|v| v.to_string())),
            ("delay_spread_ns", self.delay_spread_ns.map(|v| v.to_string())),
            ("num_samples", self.num_samples.map(|v| v.to_string())),
            ("train_fraction", self.train_fraction.map(|v| v.to_string())),
            ("codebook_sizes", self.codebook_sizes.clone()),
            ("stages", self.stages.map(|v| v.to_string())),
            ("latent_dim", self.latent_dim.map(|v| v.to_string())),
            ("entropy_order", self.entropy_order.map(|v| v.to_string())),
        ];
        for (k, v) in overrides {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if let Some(b) = self.budget_bits_per_token {
            cfg.set("budget_bits_per_token", &b.to_string())?;
        }
        if self.rb_average {
            cfg.channel.rb_average = true;
        }
        Ok(cfg)
    }

    /// Adopts the dataset's generation parameters; the dataset seed applies
    /// unless `--seed` was given.
    fn run_config_for(&self, ds: &Dataset) -> Result<RunConfig> {
        let mut cfg = self.run_config()?;
        cfg.channel = ds.channel.clone();
        cfg.precoder.total_power = ds.total_power;
        cfg.precoder.noise_power = ds.noise_power;
        cfg.num_samples = ds.len();
        if self.seed.is_none() {
            cfg.seed = ds.channel.seed;
        }
        if cfg.codec.latent_dim > 2 * cfg.channel.num_tx_antennas {
            log::warn!(
                "latent_dim {} exceeds 2 * Nt for this dataset, using {}",
                cfg.codec.latent_dim,
                2 * cfg.channel.num_tx_antennas
            );
            cfg.codec.latent_dim = 2 * cfg.channel.num_tx_antennas;
        }
        Ok(cfg)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&read(path)?)
}

fn load_artifacts(path: &Path) -> Result<CodecArtifacts> {
    CodecArtifacts::from_bytes(&read(path)?)
}

fn load_tensor(path: &Path, sample: usize) -> Result<PrecodingTensor> {
    let bytes = read(path)?;
    if bytes.starts_with(fhz_core::dataset::MAGIC) {
        let ds = Dataset::from_bytes(&bytes)?;
        let n = ds.len();
        return ds
            .samples
            .into_iter()
            .nth(sample)
            .map(|s| s.tensor)
            .ok_or_else(|| Error::input(format!("sample {sample} out of range, dataset has {n}")));
    }
    PrecodingTensor::from_bytes(&bytes)
}

fn emit_csv(out: &Option<PathBuf>, reports: &[EvalReport]) -> Result<()> {
    let csv = metrics::to_csv(reports);
    match out {
        Some(p) => harness::write_atomic(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn describe(r: &EvalReport) -> String {
    format!(
        "stages {}: rate {:.3} bits/token, MSE {:.4e}, NMSE {:.2} dB, EVM {:.1}%, sum rate {:.3} -> {:.3} bits/s/Hz, \
         loss {:.2}% ({}), worst user SINR loss {:.2} dB ({})",
        r.stages,
        r.rate_bits_per_token,
        r.mse,
        r.nmse_db,
        r.evm_percent,
        r.sum_rate_ref,
        r.sum_rate_compressed,
        100.0 * r.delta_rate_fraction,
        if r.meets_rate_target() {
            format!("within {:.0}%", 100.0 * RATE_LOSS_TARGET)
        } else {
            format!("above {:.0}%", 100.0 * RATE_LOSS_TARGET)
        },
        r.max_sinr_loss_db,
        if r.meets_sinr_target() {
            format!("within {SINR_LOSS_TARGET_DB} dB")
        } else {
            format!("above {SINR_LOSS_TARGET_DB} dB")
        },
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = common.run_config()?;
            let out = common.out_or("dataset.fhd");
            log::info!("generating {} samples", cfg.num_samples);
            let ds = harness::gen_data(&cfg)?;
            for (i, s) in ds.samples.iter().enumerate() {
                let v = PrecodingSet::from_tensor(&s.tensor);
                println!(
                    "sample {i}: sum rate {:.6} bits/s/Hz",
                    sum_rate(&s.channels, &v, ds.noise_power)?
                );
            }
            harness::write_atomic(&out, &ds.to_bytes()?)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Train { common, dataset } => {
            let ds = load_dataset(&dataset)?;
            let cfg = common.run_config_for(&ds)?;
            let out = common.out_or("codec.fhm");
            let (a, summary) = harness::train(&cfg, &ds)?;
            harness::write_atomic(&out, &a.to_bytes()?)?;
            println!(
                "trained on {} samples ({} held out), fingerprint {:016x}",
                summary.train_samples,
                summary.test_samples,
                a.fingerprint()
            );
            println!("codebook sizes {:?}", a.codebooks.stage_sizes());
            println!("training split, {}", describe(&summary.train_report));
            println!("wrote {}", out.display());
        }
        Command::Compress {
            common,
            artifacts,
            input,
            sample,
        } => {
            let cfg = common.run_config()?;
            let a = load_artifacts(&artifacts)?;
            let v = load_tensor(&input, sample)?;
            let out = common.out_or("precoders.fhz");
            let (bits, report) = harness::compress(&a, &v, cfg.codec.budget)?;
            let bytes = bits.to_bytes()?;
            harness::write_atomic(&out, &bytes)?;
            println!(
                "{} tokens, {} of {} stages, {:.4} bits/token ({} bytes, {} header)",
                report.tokens,
                report.active_stages(),
                a.codebooks.num_stages(),
                report.rate_total,
                bytes.len(),
                bits.header_len()
            );
            for (l, ((bits, model), fixed)) in report
                .stage_bits
                .iter()
                .zip(report.model_entropy_per_token())
                .zip(&report.fixed_rate_bits)
                .enumerate()
            {
                println!(
                    "stage {l}: {:.4} bits/token coded, {model:.4} model entropy, {fixed:.4} fixed-rate",
                    *bits as f64 / report.tokens.max(1) as f64
                );
            }
        }
        Command::Decompress {
            common,
            artifacts,
            input,
        } => {
            let a = load_artifacts(&artifacts)?;
            let bits = Bitstream::from_bytes(&read(&input)?)?;
            let v = harness::decompress(&a, &bits)?;
            let out = common.out_or("precoders.fht");
            harness::write_atomic(&out, &v.to_bytes()?)?;
            println!(
                "decoded {} x {} tensor from {} stages to {}",
                v.rows(),
                v.cols(),
                bits.active_stages(),
                out.display()
            );
        }
        Command::Eval {
            common,
            eval,
            eval_stages,
        } => {
            let ds = load_dataset(&eval.dataset)?;
            let mut cfg = common.run_config_for(&ds)?;
            cfg.stages = eval_stages;
            let a = load_artifacts(&eval.artifacts)?;
            let report = harness::eval(&cfg, &a, &ds, eval.split)?;
            emit_csv(&common.out, std::slice::from_ref(&report))?;
            eprintln!("{}", describe(&report));
        }
        Command::Sweep { common, eval } => {
            let ds = load_dataset(&eval.dataset)?;
            let cfg = common.run_config_for(&ds)?;
            let a = load_artifacts(&eval.artifacts)?;
            let reports = harness::sweep(&cfg, &a, &ds, eval.split)?;
            emit_csv(&common.out, &reports)?;
            for r in &reports {
                eprintln!("{}", describe(r));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
