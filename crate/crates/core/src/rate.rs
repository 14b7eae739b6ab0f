//! Per-neuron rate-derivative estimator.
//!
//! The spike train feeds a leaky integrator `v`, whose value tracks
//! `rate / gamma_li`. The derivative is estimated as `v(t) - v(t - tau)` and
//! smoothed by an `n_filt`-step moving average. The smoothed signal is
//! roughly `(tau / gamma_li) * d(rate)/dt`, which is what a spike of a
//! neighbouring neuron turns into a weight update.
//!
//! Before `tau` (resp. `n_filt`) samples have been recorded the missing
//! history is taken to be the earliest recorded value, so a freshly reset
//! tracker reports a derivative of zero rather than a spurious jump.

use crate::params::HyperParams;

/// Fixed-length delay line pre-filled with its first sample.
#[derive(Debug, Clone, PartialEq)]
struct DelayLine {
    buf: Vec<f64>,
    head: usize,
    primed: bool,
}

impl DelayLine {
    fn new(len: usize) -> Self {
        Self {
            buf: vec![0.0; len],
            head: 0,
            primed: false,
        }
    }

    fn reset(&mut self) {
        self.buf.iter_mut().for_each(|x| *x = 0.0);
        self.head = 0;
        self.primed = false;
    }

    /// Stores `x` and returns the sample recorded `len` pushes ago (or the
    /// earliest one during warm-up).
    #[inline]
    fn push(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.buf.iter_mut().for_each(|b| *b = x);
            self.primed = true;
        }
        let old = self.buf[self.head];
        self.buf[self.head] = x;
        self.head += 1;
        if self.head == self.buf.len() {
            self.head = 0;
        }
        old
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTracker {
    gamma_li: f64,
    v_li: f64,
    delay: DelayLine,
    window: DelayLine,
    window_sum: f64,
    n_filt: usize,
    diff: f64,
    deriv_smoothed: f64,
}

impl RateTracker {
    pub fn new(params: &HyperParams) -> Self {
        Self {
            gamma_li: params.gamma_li,
            v_li: 0.0,
            delay: DelayLine::new(params.tau),
            window: DelayLine::new(params.n_filt),
            window_sum: 0.0,
            n_filt: params.n_filt,
            diff: 0.0,
            deriv_smoothed: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.v_li = 0.0;
        self.delay.reset();
        self.window.reset();
        self.window_sum = 0.0;
        self.diff = 0.0;
        self.deriv_smoothed = 0.0;
    }

    /// Leaky integration of this step's spike indicator.
    #[inline]
    pub fn li_step(&mut self, spiked: bool) {
        self.v_li = (1.0 - self.gamma_li) * self.v_li + if spiked { 1.0 } else { 0.0 };
    }

    /// Records `v_li` in the delay line and returns `v(t) - v(t - tau)`.
    #[inline]
    fn push_difference(&mut self) -> f64 {
        let lagged = self.delay.push(self.v_li);
        self.diff = self.v_li - lagged;
        self.diff
    }

    /// Folds the latest difference into the moving average.
    #[inline]
    fn push_smoothed(&mut self) -> f64 {
        if !self.window.primed {
            self.window_sum = self.diff * self.n_filt as f64;
        }
        let evicted = self.window.push(self.diff);
        self.window_sum += self.diff - evicted;
        self.deriv_smoothed = self.window_sum / self.n_filt as f64;
        self.deriv_smoothed
    }

    /// One full pipeline step: integrate, delay-difference, smooth.
    /// Returns the smoothed derivative signal.
    #[inline]
    pub fn update(&mut self, spiked: bool) -> f64 {
        self.li_step(spiked);
        self.push_difference();
        self.push_smoothed()
    }

    pub fn v_li(&self) -> f64 {
        self.v_li
    }

    /// `v(t) - v(t - tau)` as of the last update.
    pub fn delayed_difference(&self) -> f64 {
        self.diff
    }

    /// Moving average of the delayed differences as of the last update.
    pub fn smoothed(&self) -> f64 {
        self.deriv_smoothed
    }

    /// Instantaneous rate estimate in spikes per step, `v_li * gamma_li`.
    pub fn rate(&self) -> f64 {
        self.v_li * self.gamma_li
    }
}
