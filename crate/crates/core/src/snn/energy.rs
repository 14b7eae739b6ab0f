use super::{Topology, WeightStore};

/// Hard sigmoid `clamp(u, 0, 1)`.
#[inline]
pub fn hard_sigmoid(u: f64) -> f64 {
    u.clamp(0.0, 1.0)
}

/// Hopfield-like energy
///
/// ```text
/// E(u) = 1/2 sum_i u_i^2 - sum_{(i,j) connected} W_ij rho(u_i) rho(u_j) - sum_i b_i rho(u_i)
/// ```
///
/// over every neuron of the network (inputs included), with `rho` the hard
/// sigmoid. `u` is indexed globally.
pub fn energy(u: &[f64], topology: &Topology, weights: &WeightStore) -> f64 {
    debug_assert_eq!(u.len(), topology.total_neurons());
    let rho: Vec<f64> = u.iter().map(|&x| hard_sigmoid(x)).collect();
    let quadratic = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    let mut pairwise = 0.0;
    for (b, block) in weights.blocks.iter().enumerate() {
        let lo = &rho[topology.layer_range(b)];
        let hi = &rho[topology.layer_range(b + 1)];
        for (i, &ri) in lo.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let row = block.row(i);
            pairwise += ri * row.iter().zip(hi).map(|(w, rj)| w * rj).sum::<f64>();
        }
    }
    let mut bias = 0.0;
    for l in 1..topology.n_layers() {
        let r = &rho[topology.layer_range(l)];
        bias += weights.biases[l].iter().zip(r).map(|(b, x)| b * x).sum::<f64>();
    }
    quadratic - pairwise - bias
}
