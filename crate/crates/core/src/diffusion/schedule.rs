use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear beta schedule over `T` training steps.
///
/// Steps are 1-based: `beta(t)` and `alpha_bar(t)` are defined for
/// `t in 1..=T`, and `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 2e-2,
        }
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::param("T", format!("need at least 2 steps, got {steps}")));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::param(
                "beta",
                format!("require 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"),
            ));
        }
        let span = (steps - 1) as f64;
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / span)
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self {
            beta_min,
            beta_max,
            betas,
            alpha_bars,
        })
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::linear(p.steps, p.beta_min, p.beta_max)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            steps: self.steps(),
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }

    /// `T`
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub(crate) fn check_step(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.steps() {
            return Err(Error::StepRange {
                t,
                lo,
                hi: self.steps(),
            });
        }
        Ok(())
    }

    /// Uniform descending subsequence of `n` steps ending with 0, e.g. for
    /// `T = 1000, n = 50`: `[1000, 980, ..., 20, 0]`.
    pub fn ddim_subsequence(&self, n: usize) -> Result<Vec<usize>> {
        let t_max = self.steps();
        if n == 0 || n > t_max {
            return Err(Error::param("ddim_steps", format!("must be in [1, {t_max}], got {n}")));
        }
        let mut seq: Vec<usize> = (1..=n).rev().map(|k| (k * t_max) / n).collect();
        seq.dedup();
        seq.push(0);
        Ok(seq)
    }

    /// Every step `[T, T-1, ..., 1, 0]`.
    pub fn full_subsequence(&self) -> Vec<usize> {
        (0..=self.steps()).rev().collect()
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::from_params(ScheduleParams::default()).expect("default schedule is valid")
    }
}
