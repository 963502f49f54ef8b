use crate::error::{Error, Result};

/// Default number of integration steps per period.
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 256;

/// Uniform time grid over one period `[0, T]`.
///
/// All propagation, quadrature and feedback sampling in this crate happens on
/// this grid (or integer multiples of it), so Gramian quadrature nodes and
/// Riccati sweeps are exactly co-located.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    period: f64,
    samples_per_period: usize,
}

impl TimeGrid {
    pub fn new(period: f64, samples_per_period: usize) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidPeriod(period));
        }
        if samples_per_period < 8 {
            return Err(Error::GridTooCoarse(samples_per_period));
        }
        Ok(Self {
            period,
            samples_per_period,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples_per_period(&self) -> usize {
        self.samples_per_period
    }

    /// Step size `h = T / samples_per_period`.
    pub fn step(&self) -> f64 {
        self.period / self.samples_per_period as f64
    }

    /// Nodes `0, h, 2h, ..., T` (strictly increasing, `samples_per_period + 1` of them).
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.samples_per_period)
            .map(|i| {
                if i == self.samples_per_period {
                    self.period
                } else {
                    i as f64 * h
                }
            })
            .collect()
    }

    /// True when `t` lies on a grid node (relative tolerance `1e-9 * T`).
    pub fn is_node(&self, t: f64) -> bool {
        let h = self.step();
        let k = (t / h).round();
        (t - k * h).abs() <= 1e-9 * self.period
    }
}
