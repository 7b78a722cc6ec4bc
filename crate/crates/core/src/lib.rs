//! Few-shot classification with object-centric crop augmentation.
//!
//! The engine works on precomputed embeddings: a dataset manifest describes
//! images and their object boxes, a feature cache maps (image, crop) pairs
//! to vectors, and the experiment drivers in [`runner`] train linear probes
//! on sampled episodes with and without crop augmentation, transductive
//! pseudolabeling, and confidence-gated multi-crop inference.

pub mod analysis;
pub mod cropgeom;
pub mod datamodel;
pub mod episodes;
pub mod error;
pub mod fusion;
pub mod par;
pub mod plan;
pub mod probe;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod synth;
pub mod transduction;

pub use error::{CodecError, Error, Result};
