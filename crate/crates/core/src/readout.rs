//! Class decisions from output spikes: rate counting and first spike.

use std::ops::Range;

use rayon::prelude::*;

use crate::data::{Dataset, InputEncoder};
use crate::error::Result;
use crate::params::HyperParams;
use crate::snn::{Network, SpikeLog, Topology, WeightStore};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Counts output spikes over the trailing `window` steps of the log and
/// returns the busiest output (lowest index on ties). `None` when no output
/// neuron spiked in the window.
pub fn rate_readout(log: &SpikeLog, outputs: Range<usize>, window: u64) -> Option<usize> {
    let end = log.n_steps;
    let start = end.saturating_sub(window.max(1));
    let mut counts = vec![0u64; outputs.len()];
    for e in log.in_steps(start..end) {
        let n = e.neuron as usize;
        if outputs.contains(&n) {
            counts[n - outputs.start] += 1;
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return None;
    }
    counts.iter().position(|&c| c == best)
}

/// Class and step of the earliest output spike (lowest index among
/// simultaneous ones). `None` when no output neuron spiked.
pub fn first_spike_readout(log: &SpikeLog, outputs: Range<usize>) -> Option<(usize, u64)> {
    // events within a step are in ascending neuron order
    log.events
        .iter()
        .find(|e| outputs.contains(&(e.neuron as usize)))
        .map(|e| (e.neuron as usize - outputs.start, e.step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub rate_class: Option<usize>,
    pub first_spike: Option<(usize, u64)>,
    pub log: SpikeLog,
}

/// Runs `steps` free steps from rest with `currents` clamped, recording all
/// spikes. Only `net` is touched; `weights` are read-only.
pub fn infer(net: &mut Network, weights: &WeightStore, currents: &[f64], steps: u64) -> Result<InferenceResult> {
    net.record_spikes(true);
    net.reset();
    net.clamp_inputs(currents)?;
    for _ in 0..steps {
        net.step(weights, None)?;
    }
    let log = net.take_spike_log().unwrap_or_default();
    net.record_spikes(false);
    let outputs = net.topology().output_range();
    Ok(InferenceResult {
        rate_class: rate_readout(&log, outputs.clone(), steps),
        first_spike: first_spike_readout(&log, outputs),
        log,
    })
}

/// Accuracy of both readouts at one inference horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub horizon: u64,
    pub t_times_fmax: f64,
    pub rate_acc: f64,
    pub first_spike_acc: f64,
    pub mean_synops: f64,
    pub mean_spikes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub points: Vec<CurvePoint>,
    /// Mean step of the first output spike over images that produced one.
    pub mean_first_spike_step: Option<f64>,
    /// Mean number of spikes (whole network) strictly before the first
    /// output spike, over images that produced one.
    pub mean_spikes_before_first_output: Option<f64>,
    pub n_images: usize,
}

/// Runs every image once up to the largest horizon and scores both
/// readouts on the log truncated at each horizon.
///
/// `window` bounds the rate-readout count to the trailing steps of each
/// truncated log; `None` counts from the start.
pub fn accuracy_vs_time(
    topology: &Topology,
    params: &HyperParams,
    encoder: &InputEncoder,
    weights: &WeightStore,
    data: &Dataset,
    horizons: &[u64],
    window: Option<u64>,
) -> Result<AccuracyCurve> {
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let outputs = topology.output_range();
    let fan: Vec<u64> = (0..topology.n_layers()).map(|l| topology.fan_out(l) as u64).collect();

    struct PerImage {
        rate_ok: Vec<bool>,
        first_ok: Vec<bool>,
        synops: Vec<u64>,
        spikes: Vec<u64>,
        first: Option<(u64, u64)>,
    }

    let per: Vec<PerImage> = (0..data.len())
        .into_par_iter()
        .map_init(
            || Network::new(topology.clone(), *params),
            |net, i| -> Result<PerImage> {
                let label = data.label(i);
                let res = infer(net, weights, &encoder.encode_raw(data.raw(i)), max_h)?;
                let mut out = PerImage {
                    rate_ok: Vec::with_capacity(horizons.len()),
                    first_ok: Vec::with_capacity(horizons.len()),
                    synops: Vec::with_capacity(horizons.len()),
                    spikes: Vec::with_capacity(horizons.len()),
                    first: None,
                };
                let first = first_spike_readout(&res.log, outputs.clone());
                if let Some((_, step)) = first {
                    out.first = Some((step, res.log.before(step).len() as u64));
                }
                for &h in horizons {
                    let cut = res.log.truncated(h);
                    let w = window.map_or(h, |w| w.min(h));
                    out.rate_ok.push(h > 0 && rate_readout(&cut, outputs.clone(), w) == Some(label));
                    out.first_ok.push(matches!(first, Some((c, s)) if c == label && s < h));
                    out.spikes.push(cut.len() as u64);
                    out.synops.push(
                        cut.events
                            .iter()
                            .map(|e| fan[topology.layer_of(e.neuron as usize)])
                            .sum(),
                    );
                }
                Ok(out)
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let n = data.len().max(1) as f64;
    let points = horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| CurvePoint {
            horizon: h,
            t_times_fmax: params.steps_to_t_fmax(h as usize),
            rate_acc: per.iter().filter(|p| p.rate_ok[k]).count() as f64 / n,
            first_spike_acc: per.iter().filter(|p| p.first_ok[k]).count() as f64 / n,
            mean_synops: per.iter().map(|p| p.synops[k]).sum::<u64>() as f64 / n,
            mean_spikes: per.iter().map(|p| p.spikes[k]).sum::<u64>() as f64 / n,
        })
        .collect();
    let firsts: Vec<(u64, u64)> = per.iter().filter_map(|p| p.first).collect();
    let mean = |f: fn(&(u64, u64)) -> u64| {
        (!firsts.is_empty()).then(|| firsts.iter().map(f).sum::<u64>() as f64 / firsts.len() as f64)
    };
    Ok(AccuracyCurve {
        points,
        mean_first_spike_step: mean(|x| x.0),
        mean_spikes_before_first_output: mean(|x| x.1),
        n_images: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(events: &[(u64, usize)], n_steps: u64) -> SpikeLog {
        let mut l = SpikeLog::new();
        for &(s, n) in events {
            l.push(s, n);
        }
        l.n_steps = n_steps;
        l
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.1, 0.4, 0.2, 0.4]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn rate_readout_cases() {
        // outputs are neurons 10..20
        assert_eq!(rate_readout(&log(&[(1, 13), (5, 13), (6, 2)], 10), 10..20, 10), Some(3));
        let tie = log(&[(1, 11), (2, 14), (3, 14), (4, 11)], 10);
        assert_eq!(rate_readout(&tie, 10..20, 10), Some(1));
        assert_eq!(rate_readout(&log(&[(1, 2)], 10), 10..20, 10), None);
        // trailing window drops the early spikes
        let late = log(&[(0, 10), (1, 10), (8, 12)], 10);
        assert_eq!(rate_readout(&late, 10..20, 3), Some(2));
    }

    #[test]
    fn first_spike_cases() {
        assert_eq!(first_spike_readout(&log(&[(3, 1), (7, 12)], 20), 10..20), Some((2, 7)));
        assert_eq!(first_spike_readout(&log(&[(3, 1)], 20), 10..20), None);
        let simultaneous = log(&[(4, 13), (4, 15)], 20);
        assert_eq!(first_spike_readout(&simultaneous, 10..20), Some((3, 4)));
    }

    #[test]
    fn single_spiking_output_readouts_agree() {
        let l = log(&[(2, 0), (3, 17), (9, 17), (12, 17)], 20);
        let r = rate_readout(&l, 10..20, 20);
        let f = first_spike_readout(&l, 10..20).map(|x| x.0);
        assert_eq!(r, f);
    }

    #[test]
    fn inference_leaves_weights_untouched() {
        use rand::SeedableRng;
        let t = Topology::new(vec![3, 4, 2]).unwrap();
        let p = HyperParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let w = WeightStore::uniform_scaled(&t, 4.0, &mut rng);
        let snapshot = w.clone();
        let mut net = Network::new(t, p);
        let a = infer(&mut net, &w, &[1.1, 0.5, 0.0], 100).unwrap();
        let b = infer(&mut net, &w, &[1.1, 0.5, 0.0], 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(w, snapshot);
        assert_eq!(a.log.n_steps, 100);
    }
}
