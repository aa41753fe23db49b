//! Causal personalized speech enhancement with cross-task teacher gating.
//!
//! The crate covers the full desk-scale experiment loop:
//!
//! - [`dsp`]: STFT/iSTFT, power-law compression, log-mel features
//! - [`simulate`]: room impulse responses, SNR/SIR mixing, inactive-target
//!   sample injection, evaluation sessions, and a synthetic corpus generator
//! - [`embed`]: speaker d-vectors with a pluggable embedder
//! - [`model`]: the causal enhancement network and the voice-activity teacher
//! - [`loss`]: the compressed phase-aware loss family with teacher gating
//! - [`metrics`]: over-suppression (TSOS) and leakage (delta-N) reporting
//! - [`train`]: two-stage training (teacher, then gated student)
//! - [`cli`]: the `pse-distill` binary's subcommand implementations
//!
//! See the crate examples for one runnable program per capability.

pub mod cli;
pub mod dsp;
pub mod embed;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
