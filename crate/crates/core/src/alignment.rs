//! Small-network validation: spiking updates against the rate oracle, and
//! the oracle against finite differences.

use rayon::prelude::*;

use crate::data::InputEncoder;
use crate::error::Result;
use crate::oracle::{
    block_vec, compare_updates, equivalent_beta, finite_diff_gradient, relax, two_point_update, Comparison,
    Instance, RateProblem, RelaxOptions, DEFAULT_NOISE_FLOOR,
};
use crate::params::HyperParams;
use crate::snn::Network;
use crate::trainer::{train_image, TrainerConfig};

pub const MIN_SIGN_AGREEMENT: f64 = 0.8;
pub const MIN_COSINE: f64 = 0.6;
pub const MIN_ORACLE_COSINE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSettings {
    pub params: HyperParams,
    pub layers: Vec<usize>,
    pub instances: usize,
    pub first_seed: u64,
    /// Rate-domain weights are drawn uniformly in `[-w_eq, w_eq]`.
    pub w_eq: f64,
    pub bias_eq: (f64, f64),
    /// Nudge of the oracle-vs-finite-difference comparison.
    pub oracle_beta: f64,
    pub fd_epsilon: f64,
}

impl Default for AlignmentSettings {
    fn default() -> Self {
        Self {
            params: HyperParams {
                beta: 2.0,
                t_free: 1000,
                t_nudge: 1000,
                ..HyperParams::default()
            },
            layers: vec![5, 8, 3],
            instances: 10,
            first_seed: 0,
            w_eq: 0.3,
            bias_eq: (0.1, 0.4),
            oracle_beta: 0.1,
            fd_epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAlignment {
    pub seed: u64,
    pub label: usize,
    /// Spiking nudging-phase change vs the two-point oracle, per block.
    pub blocks: Vec<Comparison>,
    /// Two-point oracle vs minus the finite-difference loss gradient.
    pub oracle_vs_fd: Comparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub instances: Vec<InstanceAlignment>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl AlignmentReport {
    /// Mean over instances of the spiking-vs-oracle cosine of `block`
    /// (undefined comparisons count as 0).
    pub fn mean_cosine(&self, block: usize) -> f64 {
        mean(self.instances.iter().map(|i| i.blocks[block].cosine.unwrap_or(0.0)))
    }

    pub fn mean_sign_agreement(&self, block: usize) -> f64 {
        mean(self.instances.iter().map(|i| i.blocks[block].sign_agreement.unwrap_or(0.0)))
    }

    pub fn min_oracle_cosine(&self) -> f64 {
        self.instances
            .iter()
            .map(|i| i.oracle_vs_fd.cosine.unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn n_blocks(&self) -> usize {
        self.instances.first().map_or(0, |i| i.blocks.len())
    }

    pub fn spiking_passes(&self) -> bool {
        (0..self.n_blocks())
            .all(|b| self.mean_cosine(b) >= MIN_COSINE && self.mean_sign_agreement(b) >= MIN_SIGN_AGREEMENT)
    }

    pub fn oracle_passes(&self) -> bool {
        !self.instances.is_empty() && self.min_oracle_cosine() >= MIN_ORACLE_COSINE
    }
}

fn flat(w: &crate::snn::WeightStore) -> Vec<f64> {
    w.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect()
}

/// Runs one spiking presentation (skip gate off) and the oracle updates on
/// each random instance.
pub fn run_alignment(settings: &AlignmentSettings) -> Result<AlignmentReport> {
    let p = settings.params;
    p.validate()?;
    let enc = InputEncoder::calibrate(&p);
    let relax_opts = RelaxOptions::default();
    let fd_opts = RelaxOptions {
        step_size: 0.5,
        tol: 1e-13,
        ..RelaxOptions::default()
    };
    let seeds: Vec<u64> = (0..settings.instances as u64).map(|k| settings.first_seed + k).collect();
    let instances = seeds
        .par_iter()
        .map(|&seed| -> Result<InstanceAlignment> {
            let inst = Instance::random(&settings.layers, &p, settings.w_eq, settings.bias_eq, enc.i_max, seed)?;
            let cfg = TrainerConfig {
                skip_nudge: false,
                ..TrainerConfig::new(p)
            };
            let mut w = inst.weights.clone();
            let mut net = Network::new(inst.topology.clone(), p);
            train_image(&mut net, &mut w, &inst.currents, inst.label, &cfg, None)?;
            let dw = w.difference(&inst.weights);

            let prob = RateProblem::from_spiking(&inst.topology, &inst.weights, &inst.currents, &p)?;
            let targets = inst.targets();
            let free = relax(&prob, &prob.initial_state(), 0.0, &targets, &relax_opts, None)?.state;
            let beta = equivalent_beta(&p);
            let nudged = relax(&prob, &free, beta, &targets, &relax_opts, None)?.state;
            let tp = two_point_update(&inst.topology, &free.rho(), &nudged.rho(), beta)?;
            let blocks = (0..inst.topology.n_blocks())
                .map(|b| compare_updates(block_vec(&dw, b), block_vec(&tp, b), DEFAULT_NOISE_FLOOR))
                .collect::<Result<Vec<_>>>()?;

            let small = relax(&prob, &free, settings.oracle_beta, &targets, &relax_opts, None)?.state;
            let tp_small = two_point_update(&inst.topology, &free.rho(), &small.rho(), settings.oracle_beta)?;
            let fd = finite_diff_gradient(&prob, &targets, settings.fd_epsilon, &fd_opts)?;
            let minus_fd: Vec<f64> = flat(&fd).iter().map(|g| -g).collect();
            let oracle_vs_fd = compare_updates(&flat(&tp_small), &minus_fd, DEFAULT_NOISE_FLOOR)?;
            Ok(InstanceAlignment {
                seed,
                label: inst.label,
                blocks,
                oracle_vs_fd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignmentReport { instances })
}
