//! Toy decoder-only transformer instrumented for attention-pattern analysis
//! and attention replacement during generation.
//!
//! - [`numerics`]: matrices, causal softmax, layer norm.
//! - [`model`]: weights, per-head attention, the forward pass.
//! - [`analysis`]: uniform reference, m-index, head classification, masking.
//! - [`art`]: replacement of uniform heads' attention with local targets and
//!   the inverse / scattered variants.
//! - [`generation`]: greedy and beam decoding with shallow-layer interventions.
//! - [`io`]: weight files, byte tokenizer, PGM heatmaps, JSON reports.
//! - [`cli`]: the `art` command.
//!
//! ```
//! use art_core::art::{InterventionConfig, InterventionMode};
//! use art_core::generation::{greedy_decode, GenerationConfig};
//! use art_core::io::tokenizer::ByteTokenizer;
//! use art_core::model::{init_random, ModelSpec};
//!
//! let weights = init_random(&ModelSpec::toy(), 7)?;
//! let prompt = ByteTokenizer.encode_prompt("The capital of France is");
//! let cfg = GenerationConfig::greedy(4)
//!     .with_intervention(InterventionConfig::with_mode(InterventionMode::ArtMax));
//! let trace = greedy_decode(&prompt, &weights, &cfg)?;
//! assert_eq!(trace.steps.len(), trace.generated.len());
//! # Ok::<(), art_core::Error>(())
//! ```

pub mod analysis;
pub mod art;
pub mod cli;
pub mod error;
pub mod generation;
pub mod io;
pub mod model;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result, WeightFileError};
