//! Leaky integrate-and-fire neuron.
//!
//! Discrete dynamics, one call per step:
//!
//! ```text
//! refractory:   refract_remaining -= 1, membrane held
//! otherwise:    u <- (1 - gamma_lif) * u + I
//!               if u > u_th { spike; u <- 0; refract_remaining <- t_refract - 1 }
//! ```
//!
//! A spike silences the neuron for `t_refract - 1` steps, so the shortest
//! inter-spike interval is `t_refract` steps and the rate saturates at
//! `1 / t_refract` spikes per step.

use crate::error::{Error, Result};
use crate::params::HyperParams;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeuronState {
    pub u: f64,
    pub refract_remaining: u32,
    /// Static input current; only set on input neurons.
    pub clamped_current: Option<f64>,
}

/// Advances one neuron by one step. Returns whether it spiked.
#[inline]
pub fn step_membrane(state: &mut NeuronState, input_current: f64, params: &HyperParams) -> Result<bool> {
    if !input_current.is_finite() {
        return Err(Error::NumericFault(format!(
            "non-finite input current {input_current}"
        )));
    }
    if state.refract_remaining > 0 {
        state.refract_remaining -= 1;
        return Ok(false);
    }
    state.u = (1.0 - params.gamma_lif) * state.u + input_current;
    if state.u > params.u_th {
        state.u = 0.0;
        state.refract_remaining = params.t_refract - 1;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Empirical firing rate (spikes per step) of an isolated neuron starting at
/// rest under a constant current, counted over `duration` steps.
///
/// Saturates at exactly `1 / t_refract` when `duration` is a multiple of
/// `t_refract`.
pub fn fi_curve(params: &HyperParams, current: f64, duration: usize) -> f64 {
    if duration == 0 {
        return 0.0;
    }
    let mut state = NeuronState::default();
    let mut count = 0usize;
    for _ in 0..duration {
        // a finite current cannot fail
        if step_membrane(&mut state, current, params).unwrap_or(false) {
            count += 1;
        }
    }
    count as f64 / duration as f64
}

/// Smallest current (to within `tol`) at which [`fi_curve`] reaches the
/// saturation rate `1 / t_refract`.
pub fn saturating_current(params: &HyperParams, tol: f64) -> f64 {
    let duration = 100 * params.t_refract as usize;
    let target = params.max_rate();
    let saturated = |i: f64| fi_curve(params, i, duration) >= target;
    let mut lo = 0.0;
    let mut hi = params.u_th.max(1.0);
    while !saturated(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if saturated(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar recurrence oracle: integration steps needed from rest to exceed
    /// the threshold under current `i`.
    fn ramp_steps(i: f64, p: &HyperParams) -> Option<usize> {
        let mut u = 0.0;
        for n in 1..100_000 {
            u = (1.0 - p.gamma_lif) * u + i;
            if u > p.u_th {
                return Some(n);
            }
        }
        None
    }

    #[test]
    fn rest_is_fixed_point() {
        let p = HyperParams::default();
        let mut s = NeuronState::default();
        assert!(!step_membrane(&mut s, 0.0, &p).unwrap());
        assert_eq!(s.u, 0.0);
    }

    #[test]
    fn non_finite_current_rejected() {
        let p = HyperParams::default();
        let mut s = NeuronState::default();
        assert!(matches!(
            step_membrane(&mut s, f64::NAN, &p),
            Err(Error::NumericFault(_))
        ));
        assert!(step_membrane(&mut s, f64::INFINITY, &p).is_err());
    }

    #[test]
    fn interspike_interval_matches_geometric_ramp() {
        let p = HyperParams::default();
        for &i in &[0.06, 0.1, 0.2, 0.35, 0.5, 0.75, 1.5] {
            // closed form: u_n = I (1 - (1-g)^n) / g crosses u_th at real x
            let g = p.gamma_lif;
            let x = (1.0 - p.u_th * g / i).ln() / (1.0 - g).ln();
            let n = ramp_steps(i, &p).unwrap();
            assert!(n as f64 >= x && (n as f64) < x + 1.0 + 1e-9, "I={i} n={n} x={x}");

            let mut s = NeuronState::default();
            let spikes: Vec<usize> = (0..2000)
                .filter(|_| step_membrane(&mut s, i, &p).unwrap())
                .collect();
            assert_eq!(spikes[0] + 1, n);
            let expected_isi = p.t_refract as usize - 1 + n;
            for w in spikes.windows(2) {
                assert_eq!(w[1] - w[0], expected_isi, "I={i}");
            }
        }
    }

    #[test]
    fn refractory_blocks_spikes() {
        let p = HyperParams {
            t_refract: 4,
            ..HyperParams::default()
        };
        let mut s = NeuronState {
            u: p.u_th * 0.999,
            ..Default::default()
        };
        assert!(step_membrane(&mut s, 0.1, &p).unwrap());
        for _ in 0..p.t_refract - 1 {
            assert!(!step_membrane(&mut s, 100.0, &p).unwrap());
            assert_eq!(s.u, 0.0);
        }
        assert!(step_membrane(&mut s, 100.0, &p).unwrap());
    }

    #[test]
    fn fi_curve_limits() {
        let p = HyperParams::default();
        assert_eq!(fi_curve(&p, 0.0, 1000), 0.0);
        assert_eq!(fi_curve(&p, 50.0, 1000), 1.0 / p.t_refract as f64);
        // below gamma * u_th the membrane never reaches threshold
        assert_eq!(fi_curve(&p, 0.049, 5000), 0.0);
    }

    #[test]
    fn fi_curve_mid_range_matches_closed_form() {
        let p = HyperParams::default();
        let duration = 4000;
        for &i in &[0.08, 0.15, 0.3, 0.6] {
            let n = ramp_steps(i, &p).unwrap();
            let isi = (p.t_refract as usize - 1 + n) as f64;
            let rate = fi_curve(&p, i, duration);
            assert!((rate - 1.0 / isi).abs() <= 1.0 / duration as f64, "I={i}");
        }
    }

    #[test]
    fn saturating_current_is_minimal() {
        let p = HyperParams::default();
        let i_max = saturating_current(&p, 1e-9);
        assert!(i_max > p.u_th && i_max < p.u_th + 1e-6);
        assert_eq!(fi_curve(&p, i_max, 1000), 0.5);
        assert!(fi_curve(&p, i_max - 1e-6, 1000) < 0.5);
    }
}
