//! Temporal super-resolution for 1D sensor waveforms.
//!
//! The pipeline: synthesize aggregate load data ([`datagen`]), degrade it to a
//! low sampling rate ([`signal`]), reconstruct the high-rate waveform with a
//! learned convolutional model ([`net`]) or deterministic baselines
//! ([`baselines`]), score reconstructions ([`metrics`]), and measure the
//! effect on downstream appliance classification ([`nilm`]).

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod net;
pub mod nilm;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use signal::{degrade, DegradationSpec, Domain, TimeSeries};
