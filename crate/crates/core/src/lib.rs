//! Compression of RB-wise downlink precoding matrices for fronthaul links.
//!
//! The pipeline generates synthetic frequency-selective channels
//! ([`channelgen`]), computes WMMSE precoders per resource block
//! ([`precoder`]), compresses the stacked precoders with a learned linear
//! transform, residual vector quantization and arithmetic coding ([`codec`]),
//! and evaluates distortion, rate and sum-rate loss ([`metrics`]).
//! [`harness`] ties the stages together for the command-line driver.

pub mod channelgen;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod precoder;
pub mod tensor;
pub mod wire;

pub use channelgen::{ChannelConfig, MultipathProfile, RBChannelSet};
pub use codec::{
    Bitstream, CodebookStack, CodecArtifacts, CodecConfig, EntropyModel, IndexStream, Latent, TransformPair,
};
pub use dataset::{Dataset, Sample};
pub use error::{Error, Result};
pub use harness::RunConfig;
pub use metrics::EvalReport;
pub use precoder::{PrecoderConfig, PrecodingSet};
pub use tensor::PrecodingTensor;
