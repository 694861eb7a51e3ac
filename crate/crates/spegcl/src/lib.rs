//! Spectral graph contrastive learning at desk scale.
//!
//! The crate bundles:
//! - a graph/dataset data model with TUDataset-format ingestion and a
//!   synthetic two-class generator ([`graph`]),
//! - discrete Fourier machinery with center-shifted radial masks
//!   ([`spectral`]) and the frequency-split view augmentation built on it
//!   ([`augment`]),
//! - a Fourier graph encoder with hand-derived reverse-mode gradients
//!   ([`encoder`]),
//! - contrastive objectives, including the positive-free negative-only
//!   loss ([`objective`]),
//! - a Monte-Carlo lab that checks the loss's convergence limit, decay
//!   rate and bounding inequalities numerically ([`theory`]),
//! - a deterministic training loop with Adam and resumable checkpoints
//!   ([`trainer`]), and downstream evaluation via linear probes,
//!   semi-supervised fine-tuning and an ablation harness ([`eval`]).
//!
//! The `spegcl` binary exposes all of it as reproducible CLI runs; see the
//! [`cli`] module.

pub mod augment;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod manifest;
pub mod objective;
pub mod rng;
pub mod spectral;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
