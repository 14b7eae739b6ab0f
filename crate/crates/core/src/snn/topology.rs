use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layered, fully connected topology. Layer 0 is the (clamped) input layer,
/// the last layer is the output layer. Only adjacent layers are connected;
/// block `b` joins layer `b` (rows) to layer `b + 1` (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Topology {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Topology {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output layer, got {} layer(s)",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!("empty layer in {layer_sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0;
        for &n in &layer_sizes {
            offsets.push(acc);
            acc += n;
        }
        offsets.push(acc);
        Ok(Self {
            sizes: layer_sizes,
            offsets,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn output_layer(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn total_neurons(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.sizes[layer]
    }

    pub fn offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    /// Global neuron indices of `layer`.
    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    pub fn input_range(&self) -> Range<usize> {
        self.layer_range(0)
    }

    pub fn output_range(&self) -> Range<usize> {
        self.layer_range(self.output_layer())
    }

    /// Layer containing global neuron `neuron`.
    pub fn layer_of(&self, neuron: usize) -> usize {
        debug_assert!(neuron < self.total_neurons());
        // partition_point returns the first offset strictly greater than neuron
        self.offsets.partition_point(|&o| o <= neuron) - 1
    }

    /// `(rows, cols)` of weight block `block`.
    pub fn block_shape(&self, block: usize) -> (usize, usize) {
        (self.sizes[block], self.sizes[block + 1])
    }

    pub fn n_synapses(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// Number of synapses a spike of a neuron in `layer` transits.
    ///
    /// Input neurons only project upwards (they are clamped and never
    /// receive anything back); every other neuron drives both incident
    /// blocks since synapses are bidirectional.
    pub fn fan_out(&self, layer: usize) -> usize {
        let below = if layer > 0 { self.sizes[layer - 1] } else { 0 };
        let above = self.sizes.get(layer + 1).copied().unwrap_or(0);
        if layer == 0 {
            above
        } else {
            below + above
        }
    }
}

impl TryFrom<Vec<usize>> for Topology {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Topology::new(sizes)
    }
}

impl From<Topology> for Vec<usize> {
    fn from(t: Topology) -> Self {
        t.sizes
    }
}
