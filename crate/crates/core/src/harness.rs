//! Run configuration and the generate -> precode -> train -> compress ->
//! evaluate pipeline behind the `fhz` command-line driver.
//!
//! Configuration files are flat `key = value` text with `#` comments. A
//! `preset` key, wherever it appears, is applied before the other keys.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::channelgen::ChannelConfig;
use crate::codec::{self, select_stages, Bitstream, CodecArtifacts, CodecConfig, RateReport};
use crate::dataset::{generate_dataset, split_indices, Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalParams, EvalReport};
use crate::precoder::PrecoderConfig;
use crate::tensor::PrecodingTensor;

const SPLIT_SALT: u64 = 0x5851_F42D_4C95_7F2D;

pub const PRESETS: &[&str] = &["desk", "paper-outdoor", "panel-8x16-dual"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub precoder: PrecoderConfig,
    pub codec: CodecConfig,
    pub num_samples: usize,
    pub train_fraction: f64,
    /// Drives channel draws, the train/test split and codebook seeding.
    pub seed: u64,
    /// Active stages for `eval`; `None` uses the budget or every stage.
    pub stages: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            precoder: PrecoderConfig::default(),
            codec: CodecConfig::default(),
            num_samples: 512,
            train_fraction: 0.8,
            seed: 0,
            stages: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    /// `desk` is the default; the other two raise Nt to 256 and are slow.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        match name {
            "desk" => {}
            "paper-outdoor" | "panel-8x16-dual" => {
                cfg.channel = ChannelConfig::panel_8x16_dual();
                cfg.codec.latent_dim = 64;
            }
            _ => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset {name:?}, expected one of {}", PRESETS.join(", ")),
                ))
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "tx_antennas" | "num_tx_antennas" => self.channel.num_tx_antennas = parse(key, v)?,
            "users" | "num_users" => self.channel.num_users = parse(key, v)?,
            "rbs" | "num_rbs" => self.channel.num_rbs = parse(key, v)?,
            "subcarriers_per_rb" => self.channel.subcarriers_per_rb = parse(key, v)?,
            "subcarrier_spacing_hz" => self.channel.subcarrier_spacing = parse(key, v)?,
            "paths" | "num_paths" => self.channel.num_paths = parse(key, v)?,
            "delay_spread_ns" => self.channel.rms_delay_spread = parse::<f64>(key, v)? * 1e-9,
            "carrier_freq_hz" => self.channel.carrier_freq = parse(key, v)?,
            "rb_average" => self.channel.rb_average = parse(key, v)?,
            "total_power" => self.precoder.total_power = parse(key, v)?,
            "noise_power" => self.precoder.noise_power = parse(key, v)?,
            "max_iters" => self.precoder.max_iters = parse(key, v)?,
            "convergence_tol" => self.precoder.convergence_tol = parse(key, v)?,
            "latent_dim" => self.codec.latent_dim = parse(key, v)?,
            "codebook_sizes" => self.codec.codebook_sizes = parse_list(key, v)?,
            "stages" => {
                let l: usize = parse(key, v)?;
                if l == 0 {
                    return Err(Error::config(key, "must be at least 1"));
                }
                let fill = *self.codec.codebook_sizes.last().unwrap_or(&64);
                self.codec.codebook_sizes.resize(l, fill);
            }
            "lbg_iters" => self.codec.lbg_iters = parse(key, v)?,
            "entropy_order" => self.codec.entropy_order = parse(key, v)?,
            "lambda" => self.codec.lambda = parse(key, v)?,
            "gamma" => self.codec.gamma = parse(key, v)?,
            "budget_bits_per_token" => {
                self.codec.budget = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "eval_stages" => self.stages = Some(parse(key, v)?),
            "num_samples" => self.num_samples = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        Self::from_config_text_with_preset(text, None)
    }

    /// Like [`RunConfig::from_config_text`], with `preset` taking precedence
    /// over any `preset` key in the text.
    pub fn from_config_text_with_preset(text: &str, preset: Option<&str>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected key = value"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let file_presets: Vec<&str> = pairs
            .iter()
            .filter(|(k, _)| k == "preset")
            .map(|(_, v)| v.as_str())
            .collect();
        if file_presets.len() > 1 {
            return Err(Error::config("preset", "given more than once"));
        }
        let mut cfg = match preset.or(file_presets.first().copied()) {
            Some(name) => Self::preset(name)?,
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Option<&str>) -> Result<Self> {
        Self::from_config_text_with_preset(&fs::read_to_string(path)?, preset)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.precoder.validate()?;
        self.codec.validate()?;
        if self.num_samples < 2 {
            return Err(Error::config("num_samples", "must be at least 2"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        if self.codec.latent_dim > 2 * self.channel.num_tx_antennas {
            return Err(Error::config("latent_dim", "must not exceed 2 * tx_antennas"));
        }
        if let Some(n) = self.stages {
            if n > self.codec.codebook_sizes.len() {
                return Err(Error::config("eval_stages", "exceeds the number of codebook stages"));
            }
        }
        Ok(())
    }

    pub fn eval_params(&self) -> EvalParams {
        EvalParams {
            lambda: self.codec.lambda,
            gamma: self.codec.gamma,
            total_power: self.precoder.total_power,
            noise_power: self.precoder.noise_power,
        }
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn gen_data(cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    let channel = ChannelConfig {
        seed: cfg.seed,
        ..cfg.channel.clone()
    };
    generate_dataset(&channel, &cfg.precoder, cfg.num_samples)
}

/// Train and test samples of `ds` under the run's seeded split.
pub fn split(cfg: &RunConfig, ds: &Dataset) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let (train, test) = split_indices(ds.len(), cfg.train_fraction, cfg.seed ^ SPLIT_SALT)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_samples: usize,
    pub test_samples: usize,
    /// Full-depth evaluation on the training split.
    pub train_report: EvalReport,
}

/// Fits codec artifacts on the training split only.
pub fn train(cfg: &RunConfig, ds: &Dataset) -> Result<(CodecArtifacts, TrainSummary)> {
    cfg.validate()?;
    let (train, test) = split(cfg, ds)?;
    let tensors: Vec<PrecodingTensor> = train.iter().map(|s| s.tensor.clone()).collect();
    let artifacts = codec::train(&tensors, &cfg.codec, cfg.seed)?;
    let params = EvalParams {
        total_power: ds.total_power,
        noise_power: ds.noise_power,
        ..cfg.eval_params()
    };
    let train_report = metrics::evaluate(&train, &artifacts, artifacts.codebooks.num_stages(), &params)?;
    Ok((
        artifacts,
        TrainSummary {
            train_samples: train.len(),
            test_samples: test.len(),
            train_report,
        },
    ))
}

pub fn compress(a: &CodecArtifacts, tensor: &PrecodingTensor, budget: Option<f64>) -> Result<(Bitstream, RateReport)> {
    codec::compress(tensor, a, budget)
}

pub fn decompress(a: &CodecArtifacts, bits: &Bitstream) -> Result<PrecodingTensor> {
    codec::decompress(bits, a)
}

/// Which part of a dataset to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::config(
                "split",
                format!("expected train, test or all, got {s:?}"),
            )),
        }
    }
}

pub fn select(cfg: &RunConfig, ds: &Dataset, which: Split) -> Result<Vec<Sample>> {
    Ok(match which {
        Split::All => ds.samples.clone(),
        Split::Train => split(cfg, ds)?.0,
        Split::Test => split(cfg, ds)?.1,
    })
}

fn params_for(cfg: &RunConfig, ds: &Dataset) -> EvalParams {
    EvalParams {
        total_power: ds.total_power,
        noise_power: ds.noise_power,
        ..cfg.eval_params()
    }
}

/// Evaluates at `cfg.stages`, else at the deepest prefix whose mean coded
/// rate fits the budget, else at full depth.
pub fn eval(cfg: &RunConfig, a: &CodecArtifacts, ds: &Dataset, which: Split) -> Result<EvalReport> {
    let samples = select(cfg, ds, which)?;
    let stages = match (cfg.stages, cfg.codec.budget) {
        (Some(n), _) => n,
        (None, Some(b)) => {
            let rates = metrics::mean_stage_rates(&samples, a)?;
            let sel = select_stages(&rates, b);
            if sel.infeasible {
                return Err(Error::BudgetInfeasible {
                    budget: b,
                    base_rate: rates[0],
                });
            }
            sel.stages
        }
        (None, None) => a.codebooks.num_stages(),
    };
    metrics::evaluate(&samples, a, stages, &params_for(cfg, ds))
}

pub fn sweep(cfg: &RunConfig, a: &CodecArtifacts, ds: &Dataset, which: Split) -> Result<Vec<EvalReport>> {
    let samples = select(cfg, ds, which)?;
    metrics::rd_sweep(&samples, a, &params_for(cfg, ds))
}
