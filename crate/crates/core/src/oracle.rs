//! Rate-based reference: Equilibrium Propagation on a hard-sigmoid network
//! (two-point and continual update forms) and a finite-difference gradient
//! of the fixed-point loss.
//!
//! The rate network lives in normalised units: activations `rho` in
//! `[0, 1]`, where 1 stands for the maximum spiking rate. [`RateProblem::from_spiking`]
//! maps a spiking network onto these units so that the two can be compared
//! on identical weights and inputs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::snn::{energy, fi_curve, hard_sigmoid, Topology, WeightStore};

/// Continuous state of the rate network (global indexing, inputs included).
#[derive(Debug, Clone, PartialEq)]
pub struct RateNetworkState {
    pub u: Vec<f64>,
}

impl RateNetworkState {
    pub fn rho(&self) -> Vec<f64> {
        self.u.iter().map(|&x| hard_sigmoid(x)).collect()
    }
}

/// Weights, biases and clamped input activations of a rate network.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProblem {
    pub topology: Topology,
    pub weights: WeightStore,
    pub inputs: Vec<f64>,
}

/// Rate-domain weights of a spiking network: a presynaptic neuron at
/// activation `rho` fires `rho * max_rate` spikes per step, each adding `W`
/// to a membrane whose scale is `u_th`.
pub fn equivalent_weights(weights: &WeightStore, params: &HyperParams) -> WeightStore {
    let wk = params.max_rate() / params.u_th;
    let mut out = weights.clone();
    for b in &mut out.blocks {
        b.as_mut_slice().iter_mut().for_each(|w| *w *= wk);
    }
    for layer in out.biases.iter_mut() {
        layer.iter_mut().for_each(|b| *b /= params.u_th);
    }
    out
}

/// Nudging strength in the rate domain: the spiking nudge `beta * (r - r_hat)`
/// acts on a membrane of scale `u_th` with rates measured in spikes per step.
pub fn equivalent_beta(params: &HyperParams) -> f64 {
    params.beta * params.max_rate() / params.u_th
}

impl RateProblem {
    pub fn new(topology: Topology, weights: WeightStore, inputs: Vec<f64>) -> Result<Self> {
        weights.check_matches(&topology)?;
        if inputs.len() != topology.layer_size(0) {
            return Err(Error::Shape {
                what: "input activations",
                expected: topology.layer_size(0),
                actual: inputs.len(),
            });
        }
        Ok(Self {
            topology,
            weights,
            inputs,
        })
    }

    /// Rate problem equivalent to a spiking network with clamped `currents`.
    /// Input activations are the measured firing rates of the clamped input
    /// neurons relative to the maximum rate.
    pub fn from_spiking(
        topology: &Topology,
        weights: &WeightStore,
        currents: &[f64],
        params: &HyperParams,
    ) -> Result<Self> {
        let duration = 20_000;
        let inputs = currents
            .iter()
            .map(|&c| fi_curve(params, c, duration) / params.max_rate())
            .collect();
        Self::new(topology.clone(), equivalent_weights(weights, params), inputs)
    }

    /// State at rest with the inputs clamped.
    pub fn initial_state(&self) -> RateNetworkState {
        let mut u = vec![0.0; self.topology.total_neurons()];
        u[self.topology.input_range()].copy_from_slice(&self.inputs);
        RateNetworkState { u }
    }

    /// Net drive `sum_k W_jk rho_k + b_j` of every non-input neuron (zero on inputs).
    fn drive(&self, rho: &[f64]) -> Vec<f64> {
        let t = &self.topology;
        let mut d = vec![0.0; t.total_neurons()];
        for layer in 1..t.n_layers() {
            let off = t.offset(layer);
            for (j, &b) in self.weights.biases[layer].iter().enumerate() {
                d[off + j] = b;
            }
        }
        for (blk, block) in self.weights.blocks.iter().enumerate() {
            let lo = t.layer_range(blk);
            let hi = t.layer_range(blk + 1);
            for (i, gi) in lo.clone().enumerate() {
                let row = block.row(i);
                let ri = rho[gi];
                if ri != 0.0 {
                    for (j, gj) in hi.clone().enumerate() {
                        d[gj] += row[j] * ri;
                    }
                }
                if blk > 0 {
                    // downward contribution to layer `blk` from the layer above
                    d[gi] += row.iter().zip(&rho[hi.clone()]).map(|(w, r)| w * r).sum::<f64>();
                }
            }
        }
        d
    }

    /// `dF/du` for the total energy `F = E + beta * C`, with
    /// `C = 1/2 sum_o (rho_o - target_o)^2`. Zero on the clamped inputs.
    pub fn gradient(&self, u: &[f64], beta: f64, targets: &[f64]) -> Vec<f64> {
        let rho: Vec<f64> = u.iter().map(|&x| hard_sigmoid(x)).collect();
        let drive = self.drive(&rho);
        let t = &self.topology;
        let mut g = vec![0.0; u.len()];
        for n in t.layer_size(0)..u.len() {
            let slope = if (0.0..=1.0).contains(&u[n]) { 1.0 } else { 0.0 };
            g[n] = u[n] - slope * drive[n];
        }
        if beta != 0.0 {
            let out = t.output_range();
            for (k, n) in out.enumerate() {
                let slope = if (0.0..=1.0).contains(&u[n]) { 1.0 } else { 0.0 };
                g[n] += beta * slope * (rho[n] - targets[k]);
            }
        }
        g
    }

    /// Total energy `E(u) + beta * C(u)`.
    pub fn total_energy(&self, u: &[f64], beta: f64, targets: &[f64]) -> f64 {
        let e = energy(u, &self.topology, &self.weights);
        if beta == 0.0 {
            return e;
        }
        let out = self.topology.output_range();
        let c: f64 = u[out]
            .iter()
            .zip(targets)
            .map(|(&x, t)| (hard_sigmoid(x) - t).powi(2))
            .sum();
        e + 0.5 * beta * c
    }

    /// Largest stationarity violation: the gradient norm, with components
    /// pushing against an active box bound discounted.
    pub fn stationarity(&self, u: &[f64], beta: f64, targets: &[f64]) -> f64 {
        let g = self.gradient(u, beta, targets);
        g.iter()
            .zip(u)
            .map(|(&gi, &ui)| {
                if (ui <= 0.0 && gi > 0.0) || (ui >= 1.0 && gi < 0.0) {
                    0.0
                } else {
                    gi.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Output-layer loss `1/2 sum (target - rho_o)^2`.
    pub fn loss(&self, state: &RateNetworkState, targets: &[f64]) -> f64 {
        let out = self.topology.output_range();
        0.5 * state.u[out]
            .iter()
            .zip(targets)
            .map(|(&x, t)| (t - hard_sigmoid(x)).powi(2))
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop once `max |delta u|` of a step falls below this.
    pub tol: f64,
    /// Keep `u` inside `[0, 1]` after every step.
    pub project: bool,
    /// `|u|` beyond this counts as divergence.
    pub bound: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_steps: 200_000,
            tol: 1e-7,
            project: true,
            bound: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxReport {
    pub state: RateNetworkState,
    pub steps: usize,
    /// Whether the step tolerance was met before the step cap.
    pub converged: bool,
}

/// Euler integration of `du/dt = -dF/du` with the inputs clamped. When
/// `trajectory` is given every visited state (starting one included) is
/// appended to it.
pub fn relax(
    problem: &RateProblem,
    start: &RateNetworkState,
    beta: f64,
    targets: &[f64],
    opts: &RelaxOptions,
    mut trajectory: Option<&mut Vec<RateNetworkState>>,
) -> Result<RelaxReport> {
    let out_len = problem.topology.layer_size(problem.topology.output_layer());
    if targets.len() != out_len {
        return Err(Error::Shape {
            what: "targets",
            expected: out_len,
            actual: targets.len(),
        });
    }
    if !(opts.step_size > 0.0) {
        return Err(Error::Config("relaxation step size must be positive".into()));
    }
    let mut u = start.u.clone();
    u[problem.topology.input_range()].copy_from_slice(&problem.inputs);
    if let Some(tr) = trajectory.as_deref_mut() {
        tr.push(RateNetworkState { u: u.clone() });
    }
    let n_in = problem.topology.layer_size(0);
    for step in 1..=opts.max_steps {
        let g = problem.gradient(&u, beta, targets);
        let mut max_du = 0.0f64;
        let mut max_u = 0.0f64;
        for n in n_in..u.len() {
            let mut next = u[n] - opts.step_size * g[n];
            if opts.project {
                next = next.clamp(0.0, 1.0);
            }
            max_du = max_du.max((next - u[n]).abs());
            max_u = max_u.max(next.abs());
            u[n] = next;
        }
        if !max_u.is_finite() || max_u > opts.bound {
            return Err(Error::Instability {
                steps: step,
                magnitude: max_u,
            });
        }
        if let Some(tr) = trajectory.as_deref_mut() {
            tr.push(RateNetworkState { u: u.clone() });
        }
        if max_du < opts.tol {
            return Ok(RelaxReport {
                state: RateNetworkState { u },
                steps: step,
                converged: true,
            });
        }
    }
    Ok(RelaxReport {
        state: RateNetworkState { u },
        steps: opts.max_steps,
        converged: false,
    })
}

fn connected_products(topology: &Topology, rho: &[f64], out: &mut WeightStore, scale: f64) {
    for (b, block) in out.blocks.iter_mut().enumerate() {
        let lo = &rho[topology.layer_range(b)];
        let hi = &rho[topology.layer_range(b + 1)];
        for (i, &ri) in lo.iter().enumerate() {
            for (w, &rj) in block.row_mut(i).iter_mut().zip(hi) {
                *w += scale * ri * rj;
            }
        }
    }
    for l in 1..topology.n_layers() {
        for (b, &r) in out.biases[l].iter_mut().zip(&rho[topology.layer_range(l)]) {
            *b += scale * r;
        }
    }
}

/// `(rho_i rho_j |nudge - rho_i rho_j |free) / beta` on connected pairs; the
/// bias entries use a pseudo-pre activation of 1.
pub fn two_point_update(topology: &Topology, rho_free: &[f64], rho_nudge: &[f64], beta: f64) -> Result<WeightStore> {
    if beta == 0.0 {
        return Err(Error::DivisionByZero("two-point update with beta = 0"));
    }
    let mut dw = WeightStore::zeros(topology);
    connected_products(topology, rho_nudge, &mut dw, 1.0 / beta);
    connected_products(topology, rho_free, &mut dw, -1.0 / beta);
    Ok(dw)
}

/// Left-Riemann accumulation of `rho_i d(rho_j) + rho_j d(rho_i)` (and
/// `d(rho_j)` for biases) along a recorded nudging trajectory, divided by
/// `beta`.
pub fn continual_update_trace(topology: &Topology, trajectory: &[RateNetworkState], beta: f64) -> Result<WeightStore> {
    if beta == 0.0 {
        return Err(Error::DivisionByZero("continual update with beta = 0"));
    }
    let mut dw = WeightStore::zeros(topology);
    for pair in trajectory.windows(2) {
        let r0 = pair[0].rho();
        let r1 = pair[1].rho();
        let d: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| a - b).collect();
        for (b, block) in dw.blocks.iter_mut().enumerate() {
            let lo = topology.layer_range(b);
            let hi = topology.layer_range(b + 1);
            for (i, gi) in lo.enumerate() {
                for (w, gj) in block.row_mut(i).iter_mut().zip(hi.clone()) {
                    *w += (r0[gi] * d[gj] + r0[gj] * d[gi]) / beta;
                }
            }
        }
        for l in 1..topology.n_layers() {
            for (b, g) in dw.biases[l].iter_mut().zip(topology.layer_range(l)) {
                *b += d[g] / beta;
            }
        }
    }
    Ok(dw)
}

/// Central-difference gradient of the free-fixed-point loss with respect to
/// every weight and bias. Each perturbed relaxation is warm-started from the
/// unperturbed free fixed point.
pub fn finite_diff_gradient(problem: &RateProblem, targets: &[f64], epsilon: f64, opts: &RelaxOptions) -> Result<WeightStore> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("finite-difference epsilon must be positive".into()));
    }
    let base = relax(problem, &problem.initial_state(), 0.0, targets, opts, None)?.state;
    let loss_at = |p: &RateProblem| -> Result<f64> {
        let s = relax(p, &base, 0.0, targets, opts, None)?.state;
        Ok(p.loss(&s, targets))
    };
    let mut grad = WeightStore::zeros(&problem.topology);
    let mut probe = problem.clone();
    for b in 0..grad.blocks.len() {
        for k in 0..grad.blocks[b].as_slice().len() {
            let w0 = problem.weights.blocks[b].as_slice()[k];
            probe.weights.blocks[b].as_mut_slice()[k] = w0 + epsilon;
            let up = loss_at(&probe)?;
            probe.weights.blocks[b].as_mut_slice()[k] = w0 - epsilon;
            let dn = loss_at(&probe)?;
            probe.weights.blocks[b].as_mut_slice()[k] = w0;
            grad.blocks[b].as_mut_slice()[k] = (up - dn) / (2.0 * epsilon);
        }
    }
    for l in 1..problem.topology.n_layers() {
        for j in 0..grad.biases[l].len() {
            let b0 = problem.weights.biases[l][j];
            probe.weights.biases[l][j] = b0 + epsilon;
            let up = loss_at(&probe)?;
            probe.weights.biases[l][j] = b0 - epsilon;
            let dn = loss_at(&probe)?;
            probe.weights.biases[l][j] = b0;
            grad.biases[l][j] = (up - dn) / (2.0 * epsilon);
        }
    }
    Ok(grad)
}

/// Agreement between two update vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `None` when either vector is zero.
    pub cosine: Option<f64>,
    /// Fraction of entries with matching sign among those where both
    /// magnitudes exceed the noise floor; `None` if there are none.
    pub sign_agreement: Option<f64>,
    /// `|a| / |b|`; `None` when `b` is zero.
    pub scale_ratio: Option<f64>,
}

pub const DEFAULT_NOISE_FLOOR: f64 = 1e-6;

pub fn compare_updates(a: &[f64], b: &[f64], noise_floor: f64) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what: "compared updates",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut agree, mut total) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        if x.abs() > noise_floor && y.abs() > noise_floor {
            total += 1;
            agree += (x.signum() == y.signum()) as usize;
        }
    }
    Ok(Comparison {
        cosine: (na > 0.0 && nb > 0.0).then(|| dot / (na * nb)),
        sign_agreement: (total > 0).then(|| agree as f64 / total as f64),
        scale_ratio: (nb > 0.0).then(|| na / nb),
    })
}

/// Flattened weights of one block.
pub fn block_vec(w: &WeightStore, block: usize) -> &[f64] {
    w.blocks[block].as_slice()
}

/// A small random spiking instance: weights, clamped input currents and a
/// one-hot target class.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub topology: Topology,
    pub weights: WeightStore,
    pub currents: Vec<f64>,
    pub label: usize,
}

impl Instance {
    /// Weights drawn so that the rate-domain weights are uniform in
    /// `[-w_eq, w_eq]` and the rate-domain biases uniform in `bias_eq`,
    /// input currents uniform up to `i_max`, random label.
    pub fn random(
        layers: &[usize],
        params: &HyperParams,
        w_eq: f64,
        bias_eq: (f64, f64),
        i_max: f64,
        seed: u64,
    ) -> Result<Self> {
        let topology = Topology::new(layers.to_vec())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = WeightStore::zeros(&topology);
        let scale = params.u_th / params.max_rate();
        for b in &mut weights.blocks {
            for w in b.as_mut_slice() {
                *w = rng.gen_range(-w_eq..=w_eq) * scale;
            }
        }
        for layer in weights.biases.iter_mut().skip(1) {
            for b in layer {
                *b = rng.gen_range(bias_eq.0..=bias_eq.1) * params.u_th;
            }
        }
        let currents = (0..layers[0]).map(|_| rng.gen_range(0.0..=i_max)).collect();
        let label = rng.gen_range(0..*layers.last().unwrap_or(&1));
        Ok(Self {
            topology,
            weights,
            currents,
            label,
        })
    }

    pub fn targets(&self) -> Vec<f64> {
        let n = self.topology.layer_size(self.topology.output_layer());
        (0..n).map(|k| if k == self.label { 1.0 } else { 0.0 }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(seed: u64) -> (RateProblem, Vec<f64>) {
        let p = HyperParams::default();
        let inst = Instance::random(&[5, 8, 3], &p, 0.3, (0.1, 0.4), 1.0, seed).unwrap();
        let prob = RateProblem::from_spiking(&inst.topology, &inst.weights, &inst.currents, &p).unwrap();
        (prob, inst.targets())
    }

    #[test]
    fn zero_problem_rests_at_zero() {
        let t = Topology::new(vec![3, 4, 2]).unwrap();
        let prob = RateProblem::new(t.clone(), WeightStore::zeros(&t), vec![0.0; 3]).unwrap();
        let r = relax(&prob, &prob.initial_state(), 0.0, &[0.0, 0.0], &RelaxOptions::default(), None).unwrap();
        assert!(r.converged);
        assert!(r.state.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn free_fixed_point_is_stationary() {
        for seed in 0..5 {
            let (prob, tg) = toy(seed);
            let r = relax(&prob, &prob.initial_state(), 0.0, &tg, &RelaxOptions::default(), None).unwrap();
            assert!(r.converged);
            assert!(prob.stationarity(&r.state.u, 0.0, &tg) < 1e-5);
        }
    }

    #[test]
    fn energy_descends_along_flow() {
        let (prob, tg) = toy(3);
        let opts = RelaxOptions {
            step_size: 0.01,
            max_steps: 3000,
            ..RelaxOptions::default()
        };
        for beta in [0.0, 0.5] {
            let mut traj = Vec::new();
            relax(&prob, &prob.initial_state(), beta, &tg, &opts, Some(&mut traj)).unwrap();
            let e: Vec<f64> = traj.iter().map(|s| prob.total_energy(&s.u, beta, &tg)).collect();
            for w in e.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn unprojected_large_steps_diverge() {
        let (prob, tg) = toy(1);
        let opts = RelaxOptions {
            step_size: 2.5,
            project: false,
            ..RelaxOptions::default()
        };
        let err = relax(&prob, &prob.initial_state(), 0.0, &tg, &opts, None).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }

    #[test]
    fn two_point_trivial_cases() {
        let t = Topology::new(vec![2, 2]).unwrap();
        let rho = [0.3, 0.6, 0.2, 0.9];
        let dw = two_point_update(&t, &rho, &rho, 0.1).unwrap();
        assert_eq!(dw.l1_norm(), 0.0);
        assert!(matches!(two_point_update(&t, &rho, &rho, 0.0), Err(Error::DivisionByZero(_))));
        let nudged = [0.3, 0.6, 0.4, 0.9];
        let dw = two_point_update(&t, &rho, &nudged, 0.5).unwrap();
        // only pairs touching neuron 2 (upper 0) change: 0.3 * 0.2 / 0.5, 0.6 * 0.2 / 0.5
        assert!((dw.blocks[0].get(0, 0) - 0.12).abs() < 1e-12);
        assert!((dw.blocks[0].get(1, 0) - 0.24).abs() < 1e-12);
        assert_eq!(dw.blocks[0].get(0, 1), 0.0);
        assert!((dw.biases[1][0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stationary_trajectory_accumulates_nothing() {
        let t = Topology::new(vec![2, 2]).unwrap();
        let s = RateNetworkState {
            u: vec![0.3, 0.4, 0.5, 0.6],
        };
        let dw = continual_update_trace(&t, &[s.clone(), s.clone(), s], 0.2).unwrap();
        assert_eq!(dw.l1_norm(), 0.0);
    }

    fn rel_frobenius(a: &WeightStore, b: &WeightStore) -> f64 {
        let d = a.difference(b);
        let sq = |w: &WeightStore| {
            w.blocks
                .iter()
                .flat_map(|b| b.as_slice())
                .chain(w.biases.iter().flatten())
                .map(|x| x * x)
                .sum::<f64>()
        };
        (sq(&d) / sq(b)).sqrt()
    }

    fn continual_vs_two_point(prob: &RateProblem, tg: &[f64], step: f64) -> f64 {
        let beta = 0.5;
        let opts = RelaxOptions {
            step_size: step,
            tol: 1e-10,
            ..RelaxOptions::default()
        };
        let free = relax(prob, &prob.initial_state(), 0.0, tg, &opts, None).unwrap().state;
        let mut traj = Vec::new();
        let nudged = relax(prob, &free, beta, tg, &opts, Some(&mut traj)).unwrap().state;
        let tp = two_point_update(&prob.topology, &free.rho(), &nudged.rho(), beta).unwrap();
        let ct = continual_update_trace(&prob.topology, &traj, beta).unwrap();
        rel_frobenius(&ct, &tp)
    }

    #[test]
    fn continual_converges_to_two_point() {
        let (prob, tg) = toy(4);
        let coarse = continual_vs_two_point(&prob, &tg, 0.02);
        let fine = continual_vs_two_point(&prob, &tg, 0.01);
        assert!(fine <= 0.05, "relative difference {fine}");
        assert!(fine < coarse);
    }

    #[test]
    fn beta_normalised_update_converges() {
        let (prob, tg) = toy(2);
        let opts = RelaxOptions {
            tol: 1e-12,
            ..RelaxOptions::default()
        };
        let free = relax(&prob, &prob.initial_state(), 0.0, &tg, &opts, None).unwrap().state;
        let upd = |beta: f64| {
            let n = relax(&prob, &free, beta, &tg, &opts, None).unwrap().state;
            two_point_update(&prob.topology, &free.rho(), &n.rho(), beta).unwrap()
        };
        let a = upd(0.1);
        let b = upd(0.05);
        assert!(rel_frobenius(&a, &b) <= 0.10);
    }

    #[test]
    fn compare_trivial_cases() {
        let a = [0.5, -0.2, 0.0, 1e-3];
        let c = compare_updates(&a, &a, DEFAULT_NOISE_FLOOR).unwrap();
        assert!((c.cosine.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.sign_agreement, Some(1.0));
        assert!((c.scale_ratio.unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let c = compare_updates(&a, &neg, DEFAULT_NOISE_FLOOR).unwrap();
        assert!((c.cosine.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(c.sign_agreement, Some(0.0));
        let c = compare_updates(&a, &[0.0; 4], DEFAULT_NOISE_FLOOR).unwrap();
        assert_eq!(c.cosine, None);
    }

    /// Implicit differentiation on a 2-2-1 network whose hidden and output
    /// units all sit strictly inside `(0, 1)`, where the fixed point solves
    /// the linear system `(I - A) h = c`.
    #[test]
    fn finite_difference_matches_implicit_gradient() {
        let t = Topology::new(vec![2, 2, 1]).unwrap();
        let mut w = WeightStore::zeros(&t);
        let w1 = [[0.3, 0.1], [0.2, 0.4]];
        let w2 = [0.5, 0.25];
        for i in 0..2 {
            for j in 0..2 {
                w.blocks[0].set(i, j, w1[i][j]);
            }
            w.blocks[1].set(i, 0, w2[i]);
        }
        w.biases[1] = vec![0.05, -0.02];
        w.biases[2] = vec![0.1];
        let x = [0.6, 0.8];
        let target = [1.0];
        let prob = RateProblem::new(t.clone(), w.clone(), x.to_vec()).unwrap();

        // unknowns s = (h0, h1, o): s = M s + c
        let m = [[0.0, 0.0, w2[0]], [0.0, 0.0, w2[1]], [w2[0], w2[1], 0.0]];
        let c = [
            w1[0][0] * x[0] + w1[1][0] * x[1] + w.biases[1][0],
            w1[0][1] * x[0] + w1[1][1] * x[1] + w.biases[1][1],
            w.biases[2][0],
        ];
        let solve = |rhs: [f64; 3]| {
            // (I - M) s = rhs via Cramer's rule
            let a = [
                [1.0 - m[0][0], -m[0][1], -m[0][2]],
                [-m[1][0], 1.0 - m[1][1], -m[1][2]],
                [-m[2][0], -m[2][1], 1.0 - m[2][2]],
            ];
            let det = |a: [[f64; 3]; 3]| {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            };
            let d = det(a);
            let mut s = [0.0; 3];
            for k in 0..3 {
                let mut ak = a;
                for r in 0..3 {
                    ak[r][k] = rhs[r];
                }
                s[k] = det(ak) / d;
            }
            s
        };
        let s = solve(c);
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
        // adjoint: lambda solves (I - M)^T lambda = dL/ds = (0, 0, o - target); M is symmetric
        let lam = solve([0.0, 0.0, s[2] - target[0]]);
        let fd = finite_diff_gradient(
            &prob,
            &target,
            1e-4,
            &RelaxOptions {
                step_size: 0.5,
                tol: 1e-14,
                ..RelaxOptions::default()
            },
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let analytic = lam[j] * x[i];
                assert!((fd.blocks[0].get(i, j) - analytic).abs() < 1e-4);
            }
            // hidden-output weight appears in both the hidden and the output equation
            let analytic = lam[2] * s[i] + lam[i] * s[2];
            assert!((fd.blocks[1].get(i, 0) - analytic).abs() < 1e-4);
            assert!((fd.biases[1][i] - lam[i]).abs() < 1e-4);
        }
        assert!((fd.biases[2][0] - lam[2]).abs() < 1e-4);
    }

    #[test]
    fn finite_difference_zero_loss_and_epsilon_robustness() {
        let (prob, _) = toy(5);
        let opts = RelaxOptions {
            step_size: 0.5,
            tol: 1e-14,
            ..RelaxOptions::default()
        };
        let free = relax(&prob, &prob.initial_state(), 0.0, &[0.0; 3], &opts, None).unwrap().state;
        let at_fixed_point = free.rho()[prob.topology.output_range()].to_vec();
        let g = finite_diff_gradient(&prob, &at_fixed_point, 1e-4, &opts).unwrap();
        assert!(g.l1_norm() < 1e-8 * 75.0);

        let tg = [1.0, 0.0, 0.0];
        let g1 = finite_diff_gradient(&prob, &tg, 1e-4, &opts).unwrap();
        let g2 = finite_diff_gradient(&prob, &tg, 5e-5, &opts).unwrap();
        let d = g1.difference(&g2).l1_norm();
        assert!(d <= 1e-3 * g1.l1_norm());
    }
}
