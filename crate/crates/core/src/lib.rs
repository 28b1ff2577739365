//! Hidden-Markov-family models of symbolic piano music.
//!
//! Pieces are flat streams of MIDI pitches ([`midi::PitchSequence`]). The
//! crate trains the fifteen registry models on a single piece, samples new
//! pieces from them and scores batches of samples against the training
//! piece.

pub mod error;
pub mod hmm;
pub mod metrics;
pub mod midi;
pub mod pipeline;
pub mod tvar;
pub mod variants;

pub use error::{Error, Result};
