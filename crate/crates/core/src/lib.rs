//! Layout-aware entity extraction from visually rich documents: a document
//! model, layout graphs, a small transformer text encoder, a multi-edge-type
//! graph convolution, a BIO tagger, unsupervised pretraining, synthetic
//! corpora and evaluation tooling.

pub mod docmodel;
pub mod error;
pub mod evalkit;
pub mod extractor;
pub mod layoutgcn;
pub mod layoutgraph;
pub mod pretrain;
pub mod synthcorpus;
pub mod textencoder;
pub mod util;

pub use error::{Error, Result};
pub use extractor::{Model, ModelConfig, TrainConfig};
