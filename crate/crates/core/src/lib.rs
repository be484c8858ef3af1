//! Template-instance margin losses for fine-grained classification.
//!
//! The crate has three layers:
//!
//! * [`glyphs`], [`features`] and [`affinity`] turn printed template glyphs
//!   into a class-pair prior margin table, by fusing five image similarity
//!   measures through the principal singular vector of each template's
//!   similarity matrix.
//! * [`loss`] implements the cosine-logit losses (plain softmax, additive
//!   margin, prior-margin template loss and the adaptive instance loss)
//!   together with their exact gradients.
//! * [`trainer`] is a small from-scratch MLP with an L2-normalized cosine
//!   head for studying margin effects on 2-D embeddings.
//!
//! Feature extractors and losses are registered by name in
//! [`features::FeatureRegistry`] and [`loss::LossRegistry`], so callers can
//! select them from configuration.

pub mod affinity;
pub mod error;
pub mod export;
pub mod features;
pub mod glyphs;
pub mod loss;
pub mod numeric;
pub mod trainer;

pub use error::{Error, Result};
