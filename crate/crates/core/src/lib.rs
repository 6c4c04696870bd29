//! Overlaying-text detection for room-interior photos.
//!
//! The pipeline runs in stages: character-region score maps gate which images
//! go to annotators ([`selection`]), crowd votes are curated into binary labels
//! ([`annotation`], [`vetting`]), and a mask-attention classifier is trained
//! and scored on the result ([`model`], [`training`], [`evaluation`]).
//! [`synthcorpus`] builds labelled composites with known ground truth for
//! end-to-end checks.

pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod scoremap;
pub mod selection;
pub mod synthcorpus;
pub mod training;
pub mod annotation;
pub mod vetting;

pub use error::{Error, Result};
