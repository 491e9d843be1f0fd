//! Neural machine translation with a convolutional-recurrent encoder and an
//! attention GRU decoder, built on a small reverse-mode autodiff engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: `f64` tensors and the define-by-run tape with every
//!   differentiable primitive the model needs.
//! - [`corpus`]: tokenization, vocabularies, TSV ingestion and batching.
//! - [`encoder`] / [`decoder`] / [`model`]: the network.
//! - [`training`]: Adadelta, gradient clipping, the epoch loop and checkpoints.
//! - [`evaluation`]: corpus BLEU, batch translation and ablation sweeps.
//! - [`cli`]: the `nmt` command-line front end.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod tensor;
pub mod training;

pub use config::{ModelConfig, Preset, TrainConfig};
pub use error::{NmtError, Result};
pub use model::Seq2Seq;
pub use tensor::{Tape, Tensor, Var};
