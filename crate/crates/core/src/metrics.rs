//! SynOps and energy accounting, spike statistics and STDP-like curves.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::snn::{SpikeLog, Topology};
use crate::trainer::{Synapse, UpdateLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub pj_per_synop: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { pj_per_synop: 10.0 }
    }
}

impl EnergyModel {
    pub fn new(pj_per_synop: f64) -> Result<Self> {
        if !(pj_per_synop > 0.0 && pj_per_synop.is_finite()) {
            return Err(Error::Config(format!("energy per SynOp must be positive, got {pj_per_synop}")));
        }
        Ok(Self { pj_per_synop })
    }
}

/// Sum over spikes of the fan-out of the spiking neuron. Input spikes only
/// reach the first hidden layer; other neurons reach both neighbours.
pub fn count_synops(log: &SpikeLog, topology: &Topology) -> u64 {
    let fan: Vec<u64> = (0..topology.n_layers()).map(|l| topology.fan_out(l) as u64).collect();
    log.events
        .iter()
        .map(|e| fan[topology.layer_of(e.neuron as usize)])
        .sum()
}

/// Energy in joules. Division by the exact power of ten keeps round figures
/// such as 1.5e5 SynOps at 10 pJ exactly representable.
pub fn energy_estimate(synops: u64, model: &EnergyModel) -> f64 {
    synops as f64 * model.pj_per_synop / 1e12
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeStats {
    pub total_spikes: u64,
    pub synops: u64,
    pub spikes_per_neuron_per_image: f64,
    pub input_layer_spike_fraction: f64,
    pub input_block_synop_fraction: f64,
}

pub fn spike_stats(log: &SpikeLog, topology: &Topology, n_images: usize) -> Result<SpikeStats> {
    if n_images == 0 {
        return Err(Error::Config("spike statistics need at least one image".into()));
    }
    let inputs = topology.input_range();
    let total = log.len() as u64;
    let from_inputs = log.events.iter().filter(|e| inputs.contains(&(e.neuron as usize))).count() as u64;
    let synops = count_synops(log, topology);
    let input_synops = from_inputs * topology.fan_out(0) as u64;
    let frac = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(SpikeStats {
        total_spikes: total,
        synops,
        spikes_per_neuron_per_image: total as f64 / (topology.total_neurons() * n_images) as f64,
        input_layer_spike_fraction: frac(from_inputs, total),
        input_block_synop_fraction: frac(input_synops, synops),
    })
}

impl SpikeStats {
    pub fn to_csv(&self, model: &EnergyModel) -> String {
        format!(
            "total_spikes,synops,energy_j,spikes_per_neuron_per_image,input_spike_fraction,input_synop_fraction\n\
             {},{},{:e},{},{},{}\n",
            self.total_spikes,
            self.synops,
            energy_estimate(self.synops, model),
            self.spikes_per_neuron_per_image,
            self.input_layer_spike_fraction,
            self.input_block_synop_fraction
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpBin {
    pub dt_center: f64,
    pub mean_delta_w: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StdpCurve {
    pub bins: Vec<StdpBin>,
    pub window: u64,
    /// Rate floor as a fraction of the maximum rate.
    pub rate_floor: f64,
    pub beta_used: f64,
}

pub const STDP_BINS: usize = 20;

impl StdpCurve {
    /// Largest absolute bin mean.
    pub fn peak(&self) -> f64 {
        self.bins.iter().map(|b| b.mean_delta_w.abs()).fold(0.0, f64::max)
    }

    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dt_center_steps,mean_delta_w,count\n");
        for b in &self.bins {
            let _ = writeln!(s, "{},{:e},{}", b.dt_center, b.mean_delta_w, b.count);
        }
        s
    }
}

/// Spike times of one neuron with prefix sums for O(log n) window means.
struct Train {
    times: Vec<u64>,
    prefix: Vec<u64>,
}

impl Train {
    fn new(times: Vec<u64>) -> Self {
        let mut prefix = Vec::with_capacity(times.len() + 1);
        prefix.push(0);
        for &t in &times {
            prefix.push(prefix.last().unwrap() + t);
        }
        Self { times, prefix }
    }

    /// (count, sum of times) of spikes in `range`.
    fn window(&self, range: Range<u64>) -> (u64, u64) {
        let a = self.times.partition_point(|&t| t < range.start);
        let b = self.times.partition_point(|&t| t < range.end);
        ((b - a) as u64, self.prefix[b] - self.prefix[a])
    }
}

/// Average first-block weight change as a function of the post-minus-pre
/// spike time difference.
///
/// For an update triggered by a post spike at `t`, the time difference is
/// `t` minus the mean pre spike time in `[t - window, t)`. For an update
/// triggered by a pre spike at `t`, it is the mean post spike time in
/// `[t - window, t + window]` minus `t`, so an accelerating post neuron
/// (more spikes after than before) gives a positive value. Updates whose
/// pre neuron fired below `rate_floor * max_rate` in the trailing window are
/// dropped, as are those whose post neuron did (a neuron starting from
/// silence has a large, uninformative derivative). Windows never cross a
/// segment boundary of the spike log.
pub fn stdp_curve(
    spikes: &SpikeLog,
    updates: &UpdateLog,
    topology: &Topology,
    block: usize,
    window: u64,
    rate_floor: f64,
    params: &HyperParams,
) -> Result<StdpCurve> {
    if block >= topology.n_blocks() {
        return Err(Error::Config(format!("block {block} out of range")));
    }
    if window == 0 {
        return Err(Error::Config("STDP window must be positive".into()));
    }
    let lower = topology.layer_range(block);
    let upper = topology.layer_range(block + 1);
    let mut per_neuron: Vec<Vec<u64>> = vec![Vec::new(); topology.total_neurons()];
    for e in &spikes.events {
        let n = e.neuron as usize;
        if lower.contains(&n) || upper.contains(&n) {
            per_neuron[n].push(e.step);
        }
    }
    let trains: Vec<Train> = per_neuron.into_iter().map(Train::new).collect();
    let floor = rate_floor * params.max_rate();
    let bounds = |t: u64| match spikes.segment_len {
        Some(len) if len > 0 => (t / len * len, t / len * len + len),
        _ => (0, spikes.n_steps.max(t + 1)),
    };
    let rate = |train: &Train, r: Range<u64>| {
        let len = r.end.saturating_sub(r.start);
        if len == 0 {
            0.0
        } else {
            train.window(r).0 as f64 / len as f64
        }
    };

    let width = 2.0 * window as f64 / STDP_BINS as f64;
    let mut sums = [0.0f64; STDP_BINS];
    let mut counts = [0u64; STDP_BINS];
    for u in &updates.entries {
        let Synapse::Weight { block: b, i, j } = u.synapse else {
            continue;
        };
        let Some(trigger) = u.trigger else {
            continue;
        };
        if b != block {
            continue;
        }
        let (pre, post) = (lower.start + i, upper.start + j);
        let t = u.step;
        let (lo, hi) = bounds(t);
        let back = t.saturating_sub(window).max(lo)..t;
        if rate(&trains[pre], back.clone()) < floor || rate(&trains[post], back.clone()) < floor {
            continue;
        }
        let dt = if trigger as usize == post {
            let (n, sum) = trains[pre].window(back);
            if n == 0 {
                continue;
            }
            t as f64 - sum as f64 / n as f64
        } else if trigger as usize == pre {
            let (n, sum) = trains[post].window(t.saturating_sub(window).max(lo)..(t + window + 1).min(hi));
            if n == 0 {
                continue;
            }
            sum as f64 / n as f64 - t as f64
        } else {
            continue;
        };
        let k = (((dt + window as f64) / width).floor().max(0.0) as usize).min(STDP_BINS - 1);
        sums[k] += u.delta;
        counts[k] += 1;
    }
    let bins = (0..STDP_BINS)
        .map(|k| StdpBin {
            dt_center: -(window as f64) + (k as f64 + 0.5) * width,
            mean_delta_w: if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 },
            count: counts[k],
        })
        .collect();
    Ok(StdpCurve {
        bins,
        window,
        rate_floor,
        beta_used: params.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{Phase, UpdateEntry};
    use proptest::prelude::*;

    fn topo() -> Topology {
        Topology::new(vec![4, 3, 2]).unwrap()
    }

    #[test]
    fn synops_by_layer() {
        let t = topo();
        assert_eq!(count_synops(&SpikeLog::new(), &t), 0);
        let mut log = SpikeLog::new();
        log.push(0, 0); // input -> 3
        log.push(0, 5); // hidden -> 4 + 2
        log.push(1, 8); // output -> 3
        assert_eq!(count_synops(&log, &t), 3 + 6 + 3);
        let big = Topology::new(vec![784, 100, 10]).unwrap();
        let mut one = SpikeLog::new();
        one.push(0, 800);
        assert_eq!(count_synops(&one, &big), 784 + 10);
    }

    #[test]
    fn energy_figures() {
        let m = EnergyModel::default();
        assert_eq!(energy_estimate(0, &m), 0.0);
        assert_eq!(energy_estimate(150_000, &m), 1.5e-6);
        assert_eq!(energy_estimate(4_230_000_000_000, &m), 42.3);
        assert!(EnergyModel::new(0.0).is_err());
    }

    #[test]
    fn stats_single_spike() {
        let t = topo();
        let mut log = SpikeLog::new();
        log.push(3, 6);
        let s = spike_stats(&log, &t, 1).unwrap();
        assert_eq!(s.spikes_per_neuron_per_image, 1.0 / 9.0);
        assert_eq!(s.input_layer_spike_fraction, 0.0);
        assert!(spike_stats(&log, &t, 0).is_err());
    }

    #[test]
    fn empty_logs_give_empty_curve() {
        let p = HyperParams::default();
        let c = stdp_curve(&SpikeLog::new(), &UpdateLog::new(), &topo(), 0, 200, 0.05, &p).unwrap();
        assert_eq!(c.bins.len(), STDP_BINS);
        assert_eq!(c.total_count(), 0);
        assert!(c.bins.windows(2).all(|w| w[0].dt_center < w[1].dt_center));
    }

    fn entry(step: u64, trigger: usize, delta: f64) -> UpdateEntry {
        UpdateEntry {
            step,
            synapse: Synapse::Weight { block: 0, i: 0, j: 0 },
            trigger: Some(trigger as u32),
            delta,
            phase: Phase::Nudge,
        }
    }

    #[test]
    fn pre_triggered_timing() {
        // pre = neuron 0, post = neuron 4; post fires only after the pre spike
        let p = HyperParams::default();
        let mut log = SpikeLog::new();
        for s in 0..40 {
            log.push(s * 2, 0);
            if s >= 10 {
                log.push(s * 2 + 1, 4);
            }
        }
        let mut upd = UpdateLog::for_block(0);
        upd.entries.push(entry(40, 0, 1e-3));
        let c = stdp_curve(&log, &upd, &topo(), 0, 10, 0.0, &p).unwrap();
        // post spikes on odd steps 31..=49 fall in [30, 50]: mean 40, dt 0
        let (n, sum) = (10u64, (31..=49).step_by(2).sum::<u64>());
        let dt = sum as f64 / n as f64 - 40.0;
        let k = c.bins.iter().position(|b| b.count == 1).unwrap();
        assert!((c.bins[k].dt_center - dt).abs() <= 0.5);
        assert_eq!(c.bins[k].mean_delta_w, 1e-3);
    }

    #[test]
    fn post_triggered_and_floor() {
        let p = HyperParams::default();
        let mut log = SpikeLog::new();
        log.push(10, 0);
        log.push(20, 0);
        log.push(30, 4);
        let mut upd = UpdateLog::for_block(0);
        upd.entries.push(entry(30, 4, 2.0));
        // mean pre time in [0, 30) is 15 → dt 15
        let c = stdp_curve(&log, &upd, &topo(), 0, 30, 0.0, &p).unwrap();
        let hit = c.bins.iter().find(|b| b.count == 1).unwrap();
        assert!(hit.dt_center - 15.0 <= 3.0 && hit.dt_center <= 15.0 + 3.0);
        // 2 spikes in 30 steps is 0.067 spikes/step, below 0.2 of the max rate
        let c = stdp_curve(&log, &upd, &topo(), 0, 30, 0.2, &p).unwrap();
        assert_eq!(c.total_count(), 0);
    }

    #[test]
    fn windows_respect_segments() {
        let p = HyperParams::default();
        let mut log = SpikeLog::new();
        log.push(95, 4);
        log.push(101, 0);
        log.push(103, 4);
        log.segment_len = Some(100);
        log.n_steps = 200;
        let mut upd = UpdateLog::for_block(0);
        upd.entries.push(entry(101, 0, 1.0));
        let c = stdp_curve(&log, &upd, &topo(), 0, 20, 0.0, &p).unwrap();
        // the post spike at 95 belongs to the previous image
        let hit = c.bins.iter().find(|b| b.count == 1).unwrap();
        assert!((hit.dt_center - 2.0).abs() <= 1.0);
    }

    proptest! {
        #[test]
        fn synops_additive(a in proptest::collection::vec((0u64..50, 0usize..9), 0..40),
                           b in proptest::collection::vec((0u64..50, 0usize..9), 0..40)) {
            let t = topo();
            let build = |v: &[(u64, usize)]| {
                let mut v = v.to_vec();
                v.sort();
                let mut l = SpikeLog::new();
                for (s, n) in v { l.push(s, n); }
                l.n_steps = 50;
                l
            };
            let (la, lb) = (build(&a), build(&b));
            let mut joined = la.clone();
            joined.append_shifted(&lb);
            prop_assert_eq!(count_synops(&joined, &t), count_synops(&la, &t) + count_synops(&lb, &t));
        }

        #[test]
        fn energy_linear(s in 0u64..1_000_000_000, k in 1u64..100, pj in 0.1f64..100.0) {
            let m = EnergyModel::new(pj).unwrap();
            let e = energy_estimate(s, &m);
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            prop_assert!(rel(energy_estimate(s * k, &m), e * k as f64));
            prop_assert!(rel(energy_estimate(s, &EnergyModel::new(pj * 2.0).unwrap()), 2.0 * e));
        }
    }
}
