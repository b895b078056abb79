//! Black-box inversion of deep feature templates through a generator's
//! latent space, plus the harness that measures how well the reconstructed
//! samples impersonate their owners.

pub mod ablation;
pub mod bridge;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod ga;
pub mod models;
pub mod world;

pub use error::{Error, Result};
