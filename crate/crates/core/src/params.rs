//! Scalar knobs of the spiking simulation and of the learning rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The one learning-rate value that is fixed rather than tuned.
pub const DEFAULT_LEARNING_RATE: f64 = 1.5e-3;

/// Every scalar parameter of the per-image EqSpike procedure.
///
/// Rates throughout the crate are expressed in spikes per simulation step;
/// the maximum rate is `1 / t_refract`. Time is counted in steps, and `dt`
/// only converts steps into the `t * f_max` axis used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Per-step membrane leak fraction.
    pub gamma_lif: f64,
    /// Per-step leak fraction of the rate-tracking leaky integrator.
    pub gamma_li: f64,
    /// Spike threshold.
    pub u_th: f64,
    /// Output nudging strength.
    pub beta: f64,
    /// Per-spike update coefficient.
    pub eta_r: f64,
    /// Delay (steps) of the derivative estimator.
    pub tau: usize,
    /// Moving-average window (steps) of the derivative estimator.
    pub n_filt: usize,
    pub t_free: usize,
    pub t_nudge: usize,
    /// Refractory period in steps; the fastest a neuron can fire is once
    /// every `t_refract` steps.
    pub t_refract: u32,
    /// Step duration in time units.
    pub dt: f64,
    /// Multiplier of `eta_r` for the synapses leaving the input layer.
    pub input_lr_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        let gamma_li = 0.01;
        let tau = 20;
        Self {
            gamma_lif: 0.05,
            gamma_li,
            u_th: 1.0,
            beta: 0.5,
            eta_r: DEFAULT_LEARNING_RATE * gamma_li / tau as f64,
            tau,
            n_filt: 20,
            t_free: 400,
            t_nudge: 200,
            t_refract: 2,
            dt: 0.5,
            input_lr_scale: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie strictly inside (0, 1), got {x}")))
            }
        };
        in_unit("gamma_lif", self.gamma_lif)?;
        in_unit("gamma_li", self.gamma_li)?;
        if !(self.u_th.is_finite() && self.u_th > 0.0) {
            return Err(Error::Config(format!("u_th must be positive, got {}", self.u_th)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.tau == 0 || self.n_filt == 0 || self.t_refract == 0 {
            return Err(Error::Config(
                "tau, n_filt and t_refract must be at least one step".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.input_lr_scale.is_finite() && self.input_lr_scale > 0.0) {
            return Err(Error::Config(format!(
                "input_lr_scale must be positive, got {}",
                self.input_lr_scale
            )));
        }
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!(
                "effective learning rate eta_r * tau / gamma_li must be positive, got {lr}"
            )));
        }
        Ok(())
    }

    /// Effective learning rate `l_r = eta_r * tau / gamma_li`.
    pub fn learning_rate(&self) -> f64 {
        self.eta_r * self.tau as f64 / self.gamma_li
    }

    /// Sets `eta_r` so that [`learning_rate`](Self::learning_rate) equals `lr`.
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.eta_r = lr * self.gamma_li / self.tau as f64;
        self
    }

    /// Maximum firing rate in spikes per step.
    pub fn max_rate(&self) -> f64 {
        1.0 / self.t_refract as f64
    }

    /// Maximum firing rate in inverse time units, `1 / (t_refract * dt)`.
    pub fn f_max(&self) -> f64 {
        1.0 / (self.t_refract as f64 * self.dt)
    }

    /// Converts a step count to the dimensionless `t * f_max` axis.
    pub fn steps_to_t_fmax(&self, steps: usize) -> f64 {
        steps as f64 * self.dt * self.f_max()
    }

    /// Inverse of [`steps_to_t_fmax`](Self::steps_to_t_fmax), rounded to the nearest step.
    pub fn t_fmax_to_steps(&self, t_fmax: f64) -> usize {
        (t_fmax / (self.dt * self.f_max())).round().max(0.0) as usize
    }

    /// Total steps spent on one image when it is nudged.
    pub fn steps_per_image(&self) -> usize {
        self.t_free + self.t_nudge
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pin_learning_rate() {
        let p = HyperParams::default();
        p.validate().unwrap();
        assert!((p.learning_rate() - 1.5e-3).abs() < 1e-15);
        assert_eq!(p.max_rate(), 0.5);
        assert_eq!(p.f_max(), 1.0);
    }

    #[test]
    fn with_learning_rate_roundtrips() {
        let p = HyperParams {
            tau: 7,
            gamma_li: 0.03,
            ..HyperParams::default()
        }
        .with_learning_rate(2e-3);
        assert!((p.learning_rate() - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn leak_outside_unit_interval_rejected() {
        for g in [0.0, 1.0, -0.1, f64::NAN] {
            let p = HyperParams {
                gamma_lif: g,
                ..HyperParams::default()
            };
            assert!(matches!(p.validate(), Err(Error::Config(_))));
        }
        let p = HyperParams {
            eta_r: 0.0,
            ..HyperParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn time_axis_conversion() {
        let p = HyperParams::default();
        assert_eq!(p.steps_to_t_fmax(100), 50.0);
        assert_eq!(p.t_fmax_to_steps(10.0), 20);
    }
}
