//! Layered bidirectional network of LIF neurons with delta synapses.
//!
//! A spike emitted at step `t` adds the shared weight to the membrane of
//! every neighbour at step `t + 1`. Input neurons integrate their clamped
//! current only and ignore spikes coming back from the hidden layer.

use super::neuron::{step_membrane, NeuronState};
use super::{SpikeLog, Topology, WeightStore};
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::rate::RateTracker;

/// Membranes, refractory counters and rate trackers of every neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub neurons: Vec<NeuronState>,
    pub trackers: Vec<RateTracker>,
}

impl NetworkState {
    pub fn new(topology: &Topology, params: &HyperParams) -> Self {
        let n = topology.total_neurons();
        Self {
            neurons: vec![NeuronState::default(); n],
            trackers: vec![RateTracker::new(params); n],
        }
    }

    /// Rate estimates (spikes per step) of the neurons in `range`.
    pub fn rates(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        self.trackers[range].iter().map(RateTracker::rate).collect()
    }
}

/// Current delivered to `neuron` this step by the spikes of the previous
/// step (`spiking`, global indices).
///
/// Non-input neurons receive their bias plus the shared weight of every
/// spiking neighbour, whichever side it sits on. Input neurons return their
/// clamped current.
pub fn gather_current(
    topology: &Topology,
    weights: &WeightStore,
    state: &NetworkState,
    spiking: &[usize],
    neuron: usize,
) -> f64 {
    let layer = topology.layer_of(neuron);
    if layer == 0 {
        return state.neurons[neuron].clamped_current.unwrap_or(0.0);
    }
    let mut current = weights.bias_of(topology, neuron);
    for &k in spiking {
        if let Some(w) = weights.between(topology, k, neuron) {
            current += w;
        }
    }
    current
}

/// `u_o <- u_o - beta * grad_o` on every output neuron.
pub fn nudge_outputs(state: &mut NetworkState, topology: &Topology, grad: &[f64], beta: f64) -> Result<()> {
    let out = topology.output_range();
    if grad.len() != out.len() {
        return Err(Error::Shape {
            what: "output error gradient",
            expected: out.len(),
            actual: grad.len(),
        });
    }
    for (n, &g) in state.neurons[out].iter_mut().zip(grad) {
        n.u -= beta * g;
    }
    Ok(())
}

/// Step-by-step simulator over a [`NetworkState`].
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    params: HyperParams,
    pub state: NetworkState,
    /// Per-layer local indices of neurons that spiked on the previous step.
    prev_spikes: Vec<Vec<usize>>,
    spikes: Vec<Vec<usize>>,
    currents: Vec<f64>,
    /// Smoothed derivative signal of every neuron after the last step.
    smoothed: Vec<f64>,
    /// Input neurons with a non-zero clamped current; the rest stay at rest.
    active_inputs: Vec<usize>,
    step: u64,
    /// Spikes emitted per layer since the counters were last cleared.
    layer_spikes: Vec<u64>,
    recorder: Option<SpikeLog>,
}

impl Network {
    pub fn new(topology: Topology, params: HyperParams) -> Self {
        let n = topology.total_neurons();
        let layers = topology.n_layers();
        Self {
            state: NetworkState::new(&topology, &params),
            prev_spikes: vec![Vec::new(); layers],
            spikes: vec![Vec::new(); layers],
            currents: vec![0.0; n],
            smoothed: vec![0.0; n],
            active_inputs: Vec::new(),
            step: 0,
            layer_spikes: vec![0; layers],
            recorder: None,
            topology,
            params,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    /// Steps simulated since the last reset.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Returns every neuron and tracker to rest and clears clamps.
    pub fn reset(&mut self) {
        for n in &mut self.state.neurons {
            *n = NeuronState::default();
        }
        for t in &mut self.state.trackers {
            t.reset();
        }
        for s in self.prev_spikes.iter_mut().chain(self.spikes.iter_mut()) {
            s.clear();
        }
        self.smoothed.iter_mut().for_each(|x| *x = 0.0);
        self.active_inputs.clear();
        self.step = 0;
        if let Some(log) = &mut self.recorder {
            *log = SpikeLog::new();
        }
    }

    /// Starts recording every spike into a [`SpikeLog`] (cleared by `reset`).
    pub fn record_spikes(&mut self, on: bool) {
        self.recorder = on.then(SpikeLog::new);
    }

    /// Takes the recorded log, leaving an empty one in its place.
    pub fn take_spike_log(&mut self) -> Option<SpikeLog> {
        let steps = self.step;
        self.recorder.as_mut().map(|log| {
            let mut out = std::mem::take(log);
            out.n_steps = steps;
            out
        })
    }

    /// Spikes per layer since the last [`clear_spike_counts`](Self::clear_spike_counts).
    pub fn layer_spike_counts(&self) -> &[u64] {
        &self.layer_spikes
    }

    pub fn clear_spike_counts(&mut self) {
        self.layer_spikes.iter_mut().for_each(|c| *c = 0);
    }

    /// Sets the static input current of every input neuron.
    pub fn clamp_inputs(&mut self, image_currents: &[f64]) -> Result<()> {
        let n_in = self.topology.layer_size(0);
        if image_currents.len() != n_in {
            return Err(Error::Shape {
                what: "input currents",
                expected: n_in,
                actual: image_currents.len(),
            });
        }
        if let Some(bad) = image_currents.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::NumericFault(format!("invalid input current {bad}")));
        }
        self.active_inputs.clear();
        for (i, &c) in image_currents.iter().enumerate() {
            self.state.neurons[i].clamped_current = Some(c);
            if c != 0.0 {
                self.active_inputs.push(i);
            }
        }
        Ok(())
    }

    /// Local indices of the neurons of `layer` that spiked on the last step.
    pub fn spikes(&self, layer: usize) -> &[usize] {
        &self.spikes[layer]
    }

    /// Smoothed derivative signal of every neuron (global index) after the
    /// last step.
    pub fn smoothed(&self) -> &[f64] {
        &self.smoothed
    }

    /// Rate estimates of the output layer.
    pub fn output_rates(&self) -> Vec<f64> {
        self.state.rates(self.topology.output_range())
    }

    /// Tracker rates (spikes per step) of every neuron in `layer`.
    pub fn layer_rates(&self, layer: usize) -> Vec<f64> {
        self.state.rates(self.topology.layer_range(layer))
    }

    /// Advances the whole network by one step.
    ///
    /// `error_grad`, when given, nudges the output layer: each output
    /// membrane is decremented by `beta * error_grad[o]` before its LIF
    /// update, refractory neurons included.
    pub fn step(&mut self, weights: &WeightStore, error_grad: Option<&[f64]>) -> Result<()> {
        std::mem::swap(&mut self.prev_spikes, &mut self.spikes);
        for s in &mut self.spikes {
            s.clear();
        }
        self.accumulate_currents(weights);
        if let Some(grad) = error_grad {
            nudge_outputs(&mut self.state, &self.topology, grad, self.params.beta)?;
        }

        let params = self.params;
        // clamped inputs: only the driven ones can ever leave rest
        for &i in &self.active_inputs {
            let neuron = &mut self.state.neurons[i];
            let current = neuron.clamped_current.unwrap_or(0.0);
            let spiked = step_membrane(neuron, current, &params)?;
            if spiked {
                self.spikes[0].push(i);
            }
            self.smoothed[i] = self.state.trackers[i].update(spiked);
        }
        for layer in 1..self.topology.n_layers() {
            let off = self.topology.offset(layer);
            for g in self.topology.layer_range(layer) {
                let spiked = step_membrane(&mut self.state.neurons[g], self.currents[g], &params)?;
                if spiked {
                    self.spikes[layer].push(g - off);
                }
                self.smoothed[g] = self.state.trackers[g].update(spiked);
            }
        }
        for (count, s) in self.layer_spikes.iter_mut().zip(&self.spikes) {
            *count += s.len() as u64;
        }
        if self.recorder.is_some() {
            let step = self.step;
            let spiking = self.spiking_global();
            if let Some(log) = &mut self.recorder {
                for g in spiking {
                    log.push(step, g);
                }
            }
        }
        self.step += 1;
        Ok(())
    }

    fn accumulate_currents(&mut self, weights: &WeightStore) {
        let topo = &self.topology;
        for layer in 1..topo.n_layers() {
            let range = topo.layer_range(layer);
            let cur = &mut self.currents[range];
            cur.copy_from_slice(&weights.biases[layer]);
            let below = &weights.blocks[layer - 1];
            for &i in &self.prev_spikes[layer - 1] {
                for (c, w) in cur.iter_mut().zip(below.row(i)) {
                    *c += w;
                }
            }
            if layer + 1 < topo.n_layers() {
                let above = &weights.blocks[layer];
                for &k in &self.prev_spikes[layer + 1] {
                    for (j, c) in cur.iter_mut().enumerate() {
                        *c += above.get(j, k);
                    }
                }
            }
        }
    }

    /// Current each neuron receives on the next step, given the spikes of
    /// the last one. Mirrors [`gather_current`] over the whole network.
    pub fn pending_currents(&mut self, weights: &WeightStore) -> Vec<f64> {
        std::mem::swap(&mut self.prev_spikes, &mut self.spikes);
        self.accumulate_currents(weights);
        std::mem::swap(&mut self.prev_spikes, &mut self.spikes);
        let mut out = self.currents.clone();
        for i in self.topology.input_range() {
            out[i] = self.state.neurons[i].clamped_current.unwrap_or(0.0);
        }
        out
    }

    /// Global indices of every neuron that spiked on the last step.
    pub fn spiking_global(&self) -> Vec<usize> {
        self.spikes
            .iter()
            .enumerate()
            .flat_map(|(l, s)| {
                let off = self.topology.offset(l);
                s.iter().map(move |&i| i + off)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn tiny() -> (Topology, WeightStore) {
        let t = Topology::new(vec![2, 2, 2]).unwrap();
        (t.clone(), WeightStore::zeros(&t))
    }

    #[test]
    fn bias_only_current() {
        let (t, mut w) = tiny();
        w.biases[1][0] = 0.3;
        let s = NetworkState::new(&t, &HyperParams::default());
        assert_eq!(gather_current(&t, &w, &s, &[], 2), 0.3);
    }

    #[test]
    fn sums_both_directions() {
        let (t, mut w) = tiny();
        w.blocks[0].set(0, 1, 0.5); // input 0 -> hidden 1 (global 3)
        w.blocks[1].set(1, 0, -0.2); // hidden 1 -> output 0 (global 4)
        let s = NetworkState::new(&t, &HyperParams::default());
        let c = gather_current(&t, &w, &s, &[0, 4], 3);
        assert!((c - 0.3).abs() < 1e-15);
    }

    #[test]
    fn input_ignores_network_spikes() {
        let (t, mut w) = tiny();
        w.blocks[0].set(0, 0, 1.0);
        w.blocks[0].set(0, 1, 1.0);
        let mut s = NetworkState::new(&t, &HyperParams::default());
        s.neurons[0].clamped_current = Some(0.7);
        assert_eq!(gather_current(&t, &w, &s, &[1, 2, 3, 4, 5], 0), 0.7);
    }

    #[test]
    fn weight_sharing_perturbs_both_directions_equally() {
        let t = Topology::new(vec![3, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = WeightStore::glorot(&t, &mut rng);
        let s = NetworkState::new(&t, &HyperParams::default());
        let (hidden, out) = (4, 8); // hidden local 1, output local 1
        let base_up = gather_current(&t, &w, &s, &[hidden], out);
        let base_down = gather_current(&t, &w, &s, &[out], hidden);
        let mut w2 = w.clone();
        w2.blocks[1].add(1, 1, 0.125);
        let up = gather_current(&t, &w2, &s, &[hidden], out) - base_up;
        let down = gather_current(&t, &w2, &s, &[out], hidden) - base_down;
        assert_eq!(up, down);
        assert_eq!(up, 0.125);
    }

    #[test]
    fn clamp_shape_error() {
        let (t, _) = tiny();
        let mut net = Network::new(t, HyperParams::default());
        assert!(matches!(net.clamp_inputs(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_image_is_silent() {
        let t = Topology::new(vec![4, 3, 2]).unwrap();
        let w = WeightStore::zeros(&t);
        let mut net = Network::new(t, HyperParams::default());
        net.clamp_inputs(&[0.0; 4]).unwrap();
        for _ in 0..500 {
            net.step(&w, None).unwrap();
            assert!(net.spiking_global().is_empty());
        }
        assert!(net.output_rates().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn single_saturated_pixel() {
        let p = HyperParams::default();
        let t = Topology::new(vec![4, 3, 2]).unwrap();
        let w = WeightStore::zeros(&t);
        let i_max = super::super::neuron::saturating_current(&p, 1e-9);
        let mut net = Network::new(t, p);
        net.clamp_inputs(&[0.0, i_max, 0.0, 0.0]).unwrap();
        let mut counts = [0usize; 4];
        let steps = 1000;
        for _ in 0..steps {
            net.step(&w, None).unwrap();
            for &i in net.spikes(0) {
                counts[i] += 1;
            }
        }
        assert_eq!(counts, [0, steps / p.t_refract as usize, 0, 0]);
    }

    #[test]
    fn event_driven_currents_match_gather_current() {
        let t = Topology::new(vec![6, 5, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = WeightStore::uniform_scaled(&t, 3.0, &mut rng);
        for b in w.biases.iter_mut().skip(1) {
            b.iter_mut().for_each(|x| *x = 0.1);
        }
        let mut net = Network::new(t.clone(), HyperParams::default());
        net.clamp_inputs(&[1.2, 0.0, 0.4, 0.9, 0.0, 0.3]).unwrap();
        for _ in 0..200 {
            net.step(&w, None).unwrap();
            let spiking = net.spiking_global();
            let fast = net.pending_currents(&w);
            for g in 0..t.total_neurons() {
                let slow = gather_current(&t, &w, &net.state, &spiking, g);
                assert!((fast[g] - slow).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_replay() {
        let t = Topology::new(vec![6, 5, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = WeightStore::uniform_scaled(&t, 3.0, &mut rng);
        let run = || {
            let mut net = Network::new(t.clone(), HyperParams::default());
            net.clamp_inputs(&[1.2, 0.0, 0.4, 0.9, 0.7, 0.3]).unwrap();
            let mut trace = Vec::new();
            for step in 0..300 {
                net.step(&w, None).unwrap();
                trace.extend(net.spiking_global().into_iter().map(|g| (step, g)));
            }
            (trace, net.state.clone())
        };
        assert_eq!(run(), run());
    }
}
