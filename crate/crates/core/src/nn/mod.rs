//! Dense-network substrate: matrices, residual MLP, Adam, time embedding.

mod adam;
mod embed;
mod matrix;
mod mlp;

pub use adam::AdamState;
pub use embed::{sinusoidal_embed, sinusoidal_embed_into};
pub use matrix::{Matrix, Trans};
pub use mlp::{Activation, Dense, ForwardCache, MlpParams, MlpSpec, ResidualBlock};
