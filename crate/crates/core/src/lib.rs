//! Dimension-level analysis of rotary attention.
//!
//! This crate decomposes rotary attention scores into per-frequency
//! contributions, tracks which frequency band dominates each query/key pair
//! as a function of token distance, scores attention heads by the Spearman
//! correlation of that relationship (strongly correlated heads are
//! "positional heads"), and supports head-masking and length-extrapolation
//! experiments through a small forward-only decoder. Activation dumps from
//! external models can be ingested through a binary tensor container so the
//! same analyses run on real traces.
//!
//! Module map:
//!
//! - [`rope`]: frequency schedules, rotations, scaling transforms.
//! - [`contrib`]: per-frequency contribution vectors and the dominant
//!   dimension statistic.
//! - [`analysis`]: pair sampling, distance curves, head scoring, mask
//!   selection.
//! - [`model`]: the toy decoder, masking semantics, perplexity.
//! - [`tasks`]: pass-key retrieval prompts and scoring.
//! - [`trace`] / [`rstn`]: activation traces and their on-disk format.
//! - [`synthetic`]: seeded traces with planted positional heads.

pub mod analysis;
pub mod contrib;
pub mod error;
pub mod matrix;
pub mod model;
pub mod rope;
pub mod rstn;
pub mod synthetic;
pub mod tasks;
pub mod tokenizer;
pub mod trace;

pub use error::{Error, Result};
