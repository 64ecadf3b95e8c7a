//! Chord-conditional harmonic recomposition.

pub mod error;
pub mod harmony;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod prior;
pub mod score;
pub mod synth;
pub mod train;
pub mod vqvae;

pub use error::{Error, Result};
