//! Radar/cellular spectrum coexistence simulator.
//!
//! The pipeline runs from signal synthesis ([`waveforms`]) through a
//! geometry-driven channel ([`scenario`]), 1024-sample IQ framing
//! ([`framing`]), per-window radar detection ([`detector`]), 100-window
//! majority voting ([`decision`]) and finally the base-station
//! vacate/resume loop ([`control`]).

pub mod codec;
pub mod control;
pub mod decision;
pub mod detector;
pub mod error;
pub mod framing;
pub mod scenario;
pub mod sensing;
pub mod waveforms;

pub use error::{Error, Result};
