//! Learned MAC signaling protocols on a desk: train a neural protocol with a
//! base-station message hub, turn it into probabilistic clauses, and measure
//! both with information-theoretic tools.

pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod extract;
pub mod info;
pub mod learn;
pub mod nn;
pub mod seeds;
pub mod symbolic;

pub use error::{Error, Result};
