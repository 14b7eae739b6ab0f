//! Per-image EqSpike procedure (free phase, gated nudging phase with
//! continual spike-triggered updates) and the online epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, InputEncoder};
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::readout::argmax;
use crate::snn::{Network, SpikeLog, Topology, WeightStore};

/// Which output rates drive the nudge force during the nudging phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NudgeRates {
    /// Recomputed every step from the output trackers.
    #[default]
    Instantaneous,
    /// Frozen at the end of the free phase.
    FreePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub hyper: HyperParams,
    /// Target rate (spikes per step) of the labelled class.
    pub target_rate_hi: f64,
    /// Target rate of every other class.
    pub target_rate_lo: f64,
    /// Nudge only when some output misses its target by more than this
    /// fraction of the maximum rate.
    pub skip_threshold: f64,
    /// When false every image is nudged.
    pub skip_nudge: bool,
    pub nudge_rates: NudgeRates,
    /// Multiplier on the `sqrt(6 / (fan_in + fan_out))` init bound.
    pub init_gain: f64,
    /// Learning rates of epoch `k` (counting from 0) are scaled by
    /// `lr_decay^k`.
    pub lr_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainerConfig {
    pub fn new(hyper: HyperParams) -> Self {
        Self {
            target_rate_hi: hyper.max_rate(),
            target_rate_lo: 0.0,
            skip_threshold: 0.01,
            skip_nudge: true,
            nudge_rates: NudgeRates::Instantaneous,
            init_gain: 1.0,
            lr_decay: 1.0,
            epochs: 10,
            seed: 0,
            hyper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let max = self.hyper.max_rate();
        if !(0.0..=max).contains(&self.target_rate_hi) || !(0.0..=max).contains(&self.target_rate_lo) {
            return Err(Error::Config(format!(
                "target rates must lie in [0, {max}] spikes per step"
            )));
        }
        if !(self.skip_threshold >= 0.0) {
            return Err(Error::Config("skip_threshold must be non-negative".into()));
        }
        if !(self.init_gain.is_finite() && self.init_gain >= 0.0) {
            return Err(Error::Config("init_gain must be non-negative".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        Ok(())
    }

    /// One-hot rate targets for `label`.
    pub fn targets(&self, label: usize, n_classes: usize) -> Vec<f64> {
        (0..n_classes)
            .map(|k| {
                if k == label {
                    self.target_rate_hi
                } else {
                    self.target_rate_lo
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Free,
    Nudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Synapse {
    /// `blocks[block]` entry `(i, j)`, local indices in the lower and upper layer.
    Weight { block: usize, i: usize, j: usize },
    Bias { layer: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateEntry {
    pub step: u64,
    pub synapse: Synapse,
    /// Global index of the neuron whose spike triggered the update (`None`
    /// for bias updates).
    pub trigger: Option<u32>,
    pub delta: f64,
    pub phase: Phase,
}

/// Record of applied updates, optionally restricted to one weight block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateLog {
    pub entries: Vec<UpdateEntry>,
    pub only_block: Option<usize>,
    /// Keep only synapses whose upper-layer neuron has a local index below
    /// this bound.
    pub max_upper: Option<usize>,
    pub include_biases: bool,
}

impl UpdateLog {
    pub fn new() -> Self {
        Self {
            include_biases: true,
            ..Self::default()
        }
    }

    /// Log restricted to `blocks[block]`, without biases.
    pub fn for_block(block: usize) -> Self {
        Self {
            entries: Vec::new(),
            only_block: Some(block),
            max_upper: None,
            include_biases: false,
        }
    }

    fn wants(&self, block: usize, j: usize) -> bool {
        self.only_block.map_or(true, |b| b == block) && self.max_upper.map_or(true, |m| j < m)
    }

    /// Sum of logged deltas per synapse, as a weight store of `topology`.
    pub fn accumulate(&self, topology: &Topology) -> WeightStore {
        let mut w = WeightStore::zeros(topology);
        for e in &self.entries {
            match e.synapse {
                Synapse::Weight { block, i, j } => w.blocks[block].add(i, j, e.delta),
                Synapse::Bias { layer, j } => w.biases[layer][j] += e.delta,
            }
        }
        w
    }
}

/// Runs the free phase from rest: `t_free` steps with the image clamped, no
/// nudge and no learning. Returns the output tracker rates.
pub fn free_phase(net: &mut Network, weights: &WeightStore, currents: &[f64]) -> Result<Vec<f64>> {
    net.reset();
    net.clamp_inputs(currents)?;
    for _ in 0..net.params().t_free {
        net.step(weights, None)?;
    }
    Ok(net.output_rates())
}

/// Gradient of `1/2 sum (rho_o - target_o)^2` with respect to the rates.
pub fn compute_error_gradient(rates: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    if rates.len() != targets.len() {
        return Err(Error::Shape {
            what: "targets",
            expected: rates.len(),
            actual: targets.len(),
        });
    }
    Ok(rates.iter().zip(targets).map(|(r, t)| r - t).collect())
}

/// `max_k |target_k - rate_k| > skip_threshold * max_rate`.
pub fn should_nudge(rates: &[f64], targets: &[f64], skip_threshold: f64, max_rate: f64) -> bool {
    let worst = rates
        .iter()
        .zip(targets)
        .map(|(r, t)| (t - r).abs())
        .fold(0.0, f64::max);
    worst > skip_threshold * max_rate
}

/// Applies the spike-triggered updates of the step just simulated.
///
/// A spike of neuron `j` moves every incident weight by `eta_r` times the
/// smoothed derivative signal of the neuron at the other end. Synapses from
/// the clamped input layer are unidirectional and only move on input
/// spikes, with `eta_r` scaled by `input_lr_scale`. Biases follow the same
/// rule with a pseudo-pre unit firing at the maximum rate, whose weight acts
/// as a bias of `max_rate * w`; so a bias moves by `eta_r * max_rate^2`
/// times its neuron's signal every step.
fn apply_updates(net: &Network, weights: &mut WeightStore, mut log: Option<&mut UpdateLog>) {
    let topo = net.topology();
    let params = net.params();
    let eta = params.eta_r;
    let rbar = net.smoothed();
    let step = net.step_count() - 1;
    let n_layers = topo.n_layers();

    for layer in 0..n_layers {
        let off = topo.offset(layer);
        for &s in net.spikes(layer) {
            let trigger = Some((off + s) as u32);
            if layer + 1 < n_layers {
                let upper = &rbar[topo.layer_range(layer + 1)];
                let row = weights.blocks[layer].row_mut(s);
                let eta = if layer == 0 { eta * params.input_lr_scale } else { eta };
                for (j, (w, &r)) in row.iter_mut().zip(upper).enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let delta = eta * r;
                    *w += delta;
                    if let Some(log) = log.as_deref_mut() {
                        if log.wants(layer, j) {
                            log.entries.push(UpdateEntry {
                                step,
                                synapse: Synapse::Weight { block: layer, i: s, j },
                                trigger,
                                delta,
                                phase: Phase::Nudge,
                            });
                        }
                    }
                }
            }
            // clamped inputs have a constant rate, so the input block only
            // learns from input spikes
            if layer > 1 {
                let block = layer - 1;
                let lower = &rbar[topo.layer_range(block)];
                let b = &mut weights.blocks[block];
                for (i, &r) in lower.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let delta = eta * r;
                    b.add(i, s, delta);
                    if let Some(log) = log.as_deref_mut() {
                        if log.wants(block, s) {
                            log.entries.push(UpdateEntry {
                                step,
                                synapse: Synapse::Weight { block, i, j: s },
                                trigger,
                                delta,
                                phase: Phase::Nudge,
                            });
                        }
                    }
                }
            }
        }
    }

    let eta_bias = eta * params.max_rate() * params.max_rate();
    for layer in 1..n_layers {
        let r = &rbar[topo.layer_range(layer)];
        for (j, (b, &rj)) in weights.biases[layer].iter_mut().zip(r).enumerate() {
            if rj == 0.0 {
                continue;
            }
            let delta = eta_bias * rj;
            *b += delta;
            if let Some(log) = log.as_deref_mut() {
                if log.include_biases {
                    log.entries.push(UpdateEntry {
                        step,
                        synapse: Synapse::Bias { layer, j },
                        trigger: None,
                        delta,
                        phase: Phase::Nudge,
                    });
                }
            }
        }
    }
}

/// Runs `t_nudge` nudged steps continuing from the free phase, updating
/// `weights` after every step.
///
/// `free_rates` are the output rates at the end of the free phase; they
/// drive the nudge when `nudge_rates` is [`NudgeRates::FreePhase`].
pub fn nudging_phase(
    net: &mut Network,
    weights: &mut WeightStore,
    targets: &[f64],
    free_rates: &[f64],
    nudge_rates: NudgeRates,
    mut log: Option<&mut UpdateLog>,
) -> Result<()> {
    let frozen = compute_error_gradient(free_rates, targets)?;
    for _ in 0..net.params().t_nudge {
        let grad = match nudge_rates {
            NudgeRates::Instantaneous => compute_error_gradient(&net.output_rates(), targets)?,
            NudgeRates::FreePhase => frozen.clone(),
        };
        net.step(weights, Some(&grad))?;
        apply_updates(net, weights, log.as_deref_mut());
    }
    Ok(())
}

/// Outcome of presenting one training image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub free_rates: Vec<f64>,
    pub predicted: usize,
    pub nudged: bool,
}

/// Free phase, skip-nudge gate and (if needed) nudging phase on one image.
pub fn train_image(
    net: &mut Network,
    weights: &mut WeightStore,
    currents: &[f64],
    label: usize,
    cfg: &TrainerConfig,
    log: Option<&mut UpdateLog>,
) -> Result<ImageOutcome> {
    let free_rates = free_phase(net, weights, currents)?;
    let targets = cfg.targets(label, free_rates.len());
    let nudged = !cfg.skip_nudge
        || should_nudge(&free_rates, &targets, cfg.skip_threshold, cfg.hyper.max_rate());
    if nudged {
        nudging_phase(net, weights, &targets, &free_rates, cfg.nudge_rates, log)?;
    }
    Ok(ImageOutcome {
        predicted: argmax(&free_rates),
        free_rates,
        nudged,
    })
}

/// Class predicted from the output rates at the end of a free phase.
pub fn predict(net: &mut Network, weights: &WeightStore, currents: &[f64]) -> Result<usize> {
    Ok(argmax(&free_phase(net, weights, currents)?))
}

/// Free-phase accuracy over `data`, evaluated in parallel on a frozen snapshot.
pub fn evaluate(
    topology: &Topology,
    params: &HyperParams,
    encoder: &InputEncoder,
    weights: &WeightStore,
    data: &Dataset,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let correct = (0..data.len())
        .into_par_iter()
        .map_init(
            || Network::new(topology.clone(), *params),
            |net, i| {
                predict(net, weights, &encoder.encode_raw(data.raw(i))).map(|p| (p == data.label(i)) as usize)
            },
        )
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub nudged_images: usize,
    pub spikes_per_neuron_per_image: f64,
    pub synops_cumulative: u64,
}

/// What to record during [`Trainer::run_epoch_recorded`].
#[derive(Debug, Clone)]
pub struct RecordRequest {
    pub images: usize,
    /// Filter settings of the update log (its entries are ignored).
    pub updates: UpdateLog,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingRecord {
    pub spikes: SpikeLog,
    pub updates: UpdateLog,
    pub images: usize,
}

/// Online trainer state: weights, RNG and counters carried across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub topology: Topology,
    pub config: TrainerConfig,
    pub encoder: InputEncoder,
    pub weights: WeightStore,
    pub rng: ChaCha8Rng,
    /// Epochs completed so far.
    pub epoch: usize,
    pub synops_cumulative: u64,
}

impl Trainer {
    /// Fresh trainer with weights drawn from the seeded RNG.
    pub fn new(topology: Topology, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = WeightStore::uniform_scaled(&topology, config.init_gain, &mut rng);
        Ok(Self {
            encoder: InputEncoder::calibrate(&config.hyper),
            topology,
            config,
            weights,
            rng,
            epoch: 0,
            synops_cumulative: 0,
        })
    }

    /// Trains one epoch over `train` in a freshly shuffled order, then
    /// evaluates on `test`.
    pub fn run_epoch(&mut self, train: &Dataset, test: &Dataset) -> Result<EpochMetrics> {
        self.run_epoch_recorded(train, test, None).map(|(m, _)| m)
    }

    /// Like [`run_epoch`](Self::run_epoch), additionally recording the
    /// spikes and the updates accepted by `request.updates` for the first
    /// `request.images` images of the epoch. Image `k` occupies steps
    /// `k * (t_free + t_nudge)` onwards in both logs.
    pub fn run_epoch_recorded(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        request: Option<RecordRequest>,
    ) -> Result<(EpochMetrics, Option<TrainingRecord>)> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if train.dim() != self.topology.layer_size(0) {
            return Err(Error::Shape {
                what: "image size vs input layer",
                expected: self.topology.layer_size(0),
                actual: train.dim(),
            });
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let seg = self.config.hyper.steps_per_image() as u64;
        let mut record = request.as_ref().map(|r| TrainingRecord {
            spikes: SpikeLog {
                segment_len: Some(seg),
                ..SpikeLog::new()
            },
            updates: UpdateLog {
                entries: Vec::new(),
                ..r.updates.clone()
            },
            images: 0,
        });
        let n_record = request.as_ref().map_or(0, |r| r.images);

        let mut hyper = self.config.hyper;
        hyper.eta_r *= self.config.lr_decay.powi(self.epoch as i32);
        let mut net = Network::new(self.topology.clone(), hyper);
        let mut correct = 0usize;
        let mut nudged = 0usize;
        for (k, &i) in order.iter().enumerate() {
            let currents = self.encoder.encode_raw(train.raw(i));
            let label = train.label(i);
            let out = match record.as_mut().filter(|_| k < n_record) {
                None => train_image(&mut net, &mut self.weights, &currents, label, &self.config, None)?,
                Some(rec) => {
                    net.record_spikes(true);
                    let mut ulog = UpdateLog {
                        entries: Vec::new(),
                        ..rec.updates.clone()
                    };
                    let out = train_image(&mut net, &mut self.weights, &currents, label, &self.config, Some(&mut ulog))?;
                    let mut spikes = net.take_spike_log().unwrap_or_default();
                    net.record_spikes(false);
                    spikes.n_steps = seg;
                    let shift = k as u64 * seg;
                    rec.spikes.append_shifted(&spikes);
                    rec.updates.entries.extend(ulog.entries.into_iter().map(|mut e| {
                        e.step += shift;
                        e
                    }));
                    rec.images += 1;
                    out
                }
            };
            correct += (out.predicted == label) as usize;
            nudged += out.nudged as usize;
        }
        let counts = net.layer_spike_counts();
        let spikes: u64 = counts.iter().sum();
        let synops: u64 = counts
            .iter()
            .enumerate()
            .map(|(l, &c)| c * self.topology.fan_out(l) as u64)
            .sum();
        self.synops_cumulative += synops;
        self.epoch += 1;

        let test_acc = evaluate(&self.topology, &self.config.hyper, &self.encoder, &self.weights, test)?;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            train_acc: correct as f64 / train.len() as f64,
            test_acc,
            nudged_images: nudged,
            spikes_per_neuron_per_image: spikes as f64
                / (self.topology.total_neurons() as f64 * train.len() as f64),
            synops_cumulative: self.synops_cumulative,
        };
        Ok((metrics, record))
    }

    /// Runs the remaining epochs up to `config.epochs`, calling `on_epoch`
    /// after each one.
    pub fn train<F>(&mut self, train: &Dataset, test: &Dataset, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
    where
        F: FnMut(&Trainer, &EpochMetrics) -> Result<()>,
    {
        let mut all = Vec::new();
        while self.epoch < self.config.epochs {
            let m = self.run_epoch(train, test)?;
            on_epoch(self, &m)?;
            all.push(m);
        }
        Ok(all)
    }
}
