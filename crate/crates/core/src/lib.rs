//! Personalized product search: ranks a product catalog for a (user, query)
//! pair by fusing the query with attentively weighted long- and short-term
//! user preferences.

pub mod corpus;
mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod checkpoint;
pub mod embed;
pub mod model;
pub mod eval;
pub mod trainer;
pub mod baselines;
pub mod synth;
pub mod config;
pub mod pipeline;
