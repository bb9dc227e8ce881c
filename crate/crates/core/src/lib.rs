//! Two-domain EEG representation learning: multi-spectral topography maps and
//! spectrograms encoded by parallel transformers, fused with a graph
//! convolution, trained with Git and cross-entropy losses, with per-domain
//! gradient conflicts resolved by a closed-form min-norm (Pareto) weighting.

pub mod autodiff;
pub mod config;
pub mod container;
pub mod dsp;
pub mod error;
pub mod features;
pub mod losses;
pub mod model;
pub mod signal_io;
pub mod trainer;

pub use error::{GeegaError, Result};
