//! Few-shot classification of frame-feature sequences.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`tensor`]: `f64` tensors and a single-use reverse-mode tape.
//! - [`relation`]: task-specific feature enhancement. Each sequence is first
//!   refined on its own (self-attention, transformer block, or recurrent
//!   scan), then refined against the pooled descriptors of every sequence in
//!   the episode, and the two are fused frame by frame.
//! - [`metrics`]: set-matching distances between frame sets (Hausdorff,
//!   directed and bidirectional mean Hausdorff) plus frame-by-frame and DTW
//!   baselines, with exhaustive oracles.
//! - [`episodic`]: N-way K-shot sampling, prototypes, logits and losses,
//!   Adam training and evaluation.
//! - [`data`]: the binary feature-store format and a synthetic generator
//!   with controllable temporal misalignment.
//! - [`cli`]: the `relmatch` command-line front end.

pub mod cli;
pub mod data;
pub mod episodic;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod relation;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
