//! Entity embeddings for game mechanics.
//!
//! The pipeline turns rule files into per-entity mechanical states, encodes
//! each state as a 1600-wide one-hot vector, trains a small variational
//! autoencoder to a 25-dimensional latent space and scores its
//! reconstructions against nearest-neighbour and PCA baselines.
//!
//! | module | contents |
//! |---|---|
//! | [`corpus`] | rule-file parser, state extraction, synthetic corpora, splits |
//! | [`onehot`] | state ⇄ one-hot codec, segment-argmax decoding |
//! | [`numkit`] | dense kernels, activations, BCE, Adam, gradient checking |
//! | [`vae`] | the autoencoder and its training loop |
//! | [`baselines`] | nearest-entity search and PCA |
//! | [`eval`] | distances, per-entity comparisons, the method report |
//! | [`latent`] | averaging, perturbation, distance tables, t-SNE |
//! | [`persist`] | versioned weight documents |
//!
//! A guide with worked examples lives in the `book/` directory of the
//! repository; its code blocks run as doc-tests of this crate.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod latent;
pub mod numkit;
pub mod onehot;
pub mod persist;
pub mod state;
pub mod vae;

pub use error::{Error, ErrorClass, Result};
pub use onehot::{decode_vector, encode_state, OneHotVec, ONEHOT_DIM, SEGMENT_WIDTH};
pub use state::EntityState;
pub use vae::{LatentPoint, TrainConfig, VaeHyper, VaeModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct Intro;
    #[doc = include_str!("../../../book/src/rules.md")]
    pub struct Rules;
    #[doc = include_str!("../../../book/src/onehot.md")]
    pub struct OneHot;
    #[doc = include_str!("../../../book/src/vae.md")]
    pub struct Vae;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/latent.md")]
    pub struct Latent;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
