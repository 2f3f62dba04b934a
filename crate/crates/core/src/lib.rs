//! Contextualized semantic axes: build antonym-pole lexicons, realize them
//! as direction vectors from static or contextual embeddings, validate them,
//! project words onto them and cluster their movement over time.

pub mod axis;
pub mod config;
pub mod context;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod format;
pub mod lexicon;
pub mod pipeline;
pub mod plot;
pub mod project;
pub mod rng;
pub mod stats;
pub mod timeseries;
pub mod toy;
pub mod validate;

pub use error::{Error, Result};
