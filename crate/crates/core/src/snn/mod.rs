//! Spiking substrate: LIF neurons, layered bidirectional topology, spike
//! propagation, input clamping and the network energy function.

mod energy;
mod network;
mod neuron;
mod spikes;
mod topology;
mod weights;

pub use energy::{energy, hard_sigmoid};
pub use network::{gather_current, nudge_outputs, Network, NetworkState};
pub use neuron::{fi_curve, saturating_current, step_membrane, NeuronState};
pub use spikes::{SpikeEvent, SpikeLog};
pub use topology::Topology;
pub use weights::{Block, WeightStore};
