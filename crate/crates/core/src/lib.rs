//! Distantly supervised relation extraction at the bag level.
//!
//! The crate provides three sentence encoders (a piecewise-pooled CNN, a
//! bidirectional GRU with word attention, and a CNN augmented with per-entity
//! attention), multi-instance multi-label training over entity-pair bags,
//! a regression-fit weighted-voting ensemble, held-out precision/recall
//! evaluation, and a dataset builder that grows seed facts into bags by
//! retrieving co-occurrence snippets from a document corpus.
//!
//! Everything runs on a small f64 tensor core with reverse-mode gradients
//! recorded on a tape; every layer is validated against central-difference
//! gradient checks. All randomness flows through a seeded [`rng::Rng`], so
//! reruns with the same seed are bit-identical.

pub mod corpus;
pub mod encoders;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod gds;
pub mod params;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use params::{grad_check, Init, ParamId, ParamSet, Parameter};
pub use rng::Rng;
pub use tensor::{Mode, Tensor};
