//! Event-driven spiking network simulator trained with spike-gated
//! Equilibrium Propagation, with rate-based reference oracles and the
//! accounting used to analyse it.

pub mod alignment;
pub mod data;
pub mod oracle;
pub mod error;
pub mod io;
pub mod params;
pub mod rate;
pub mod metrics;
pub mod readout;
pub mod snn;
pub mod trainer;

pub use error::{Error, Result};
pub use params::HyperParams;
