//! Lossless progressive RAW codec.
//!
//! The Bayer mosaic is split into its four colour planes, the black level
//! is subtracted and the planes are reflect-padded to multiples of 16. A
//! five-level pyramid is coded coarsest first: level 0 with adaptive
//! frequency models, each finer level by predicting the three new samples
//! of every 2x2 group from the level below and already-coded samples, and
//! coding them under a discretized logistic mixture around the prediction.
//! All probabilities are computed in integer arithmetic, so streams are
//! byte-identical across platforms and thread counts.

pub mod bitstream;
pub mod codec;
pub mod context;
pub mod fixed;
pub mod logistic;
pub mod model;
pub mod pyramid;
pub mod rangecoder;

pub use codec::{
    decode, decode_progressive, encode, encode_with, entropy_loss, preview_rgb, symbol_pyramid, Decoded, EncodeOptions,
    EncodeReport, Encoded, Progressive, RicStream,
};
pub use context::{fit_context, ContextModel, FitOptions, Profile};
pub use logistic::{
    logistic_pmf, mixture_pmf, CrossChannel, DecodedGroup, LogisticComponent, LogisticMixture, MpuModel,
};
pub use pyramid::{build_pyramid, Pyramid};
