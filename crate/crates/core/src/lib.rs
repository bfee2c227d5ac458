//! Markov-switching latent-space models for weighted temporal networks.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod generative;
pub mod gibbs;
pub mod model;
pub mod moments;
pub mod persist;
pub mod selection;

pub use error::{MslsError, Result};
