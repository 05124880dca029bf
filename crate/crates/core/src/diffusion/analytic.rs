//! Gaussian motion prior with a closed-form denoiser.
//!
//! Every channel (agent, joint, coordinate) is an independent Gaussian
//! process over frames with a squared-exponential kernel, so the prior
//! covariance is `I_channels ⊗ K`. Under the forward process the exact
//! posterior mean is
//!
//! `E[x0 | x_t] = m + sqrt(abar) K (abar K + (1 - abar) I)^-1 (x_t - sqrt(abar) m)`
//!
//! which, with `K = U diag(lambda) U^T`, is a per-eigenmode gain
//! `sqrt(abar) lambda / (abar lambda + 1 - abar)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sampler::{Denoiser, DiffusionState};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::motion::{ConditionLabel, MotionLayout};

/// Relative diagonal jitter keeping the kernel strictly positive definite.
pub const KERNEL_JITTER: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AnalyticGaussianPrior {
    layout: MotionLayout,
    mean: Vec<f64>,
    length_scale: f64,
    variance: f64,
    kernel: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: Vec<f64>,
    schedule: NoiseSchedule,
}

/// Squared-exponential kernel over `frames` integer time points.
pub fn temporal_kernel(frames: usize, length_scale: f64, variance: f64) -> DMatrix<f64> {
    DMatrix::from_fn(frames, frames, |i, j| {
        let d = i as f64 - j as f64;
        let k = variance * (-(d * d) / (2.0 * length_scale * length_scale)).exp();
        if i == j {
            k + KERNEL_JITTER * variance
        } else {
            k
        }
    })
}

impl AnalyticGaussianPrior {
    pub fn new(
        layout: MotionLayout,
        mean: Vec<f64>,
        length_scale: f64,
        variance: f64,
        schedule: NoiseSchedule,
    ) -> Result<Self> {
        if mean.len() != layout.len() {
            return Err(Error::Shape {
                what: "prior mean",
                expected: layout.len(),
                got: mean.len(),
            });
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::param("length_scale", format!("must be > 0, got {length_scale}")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::param("variance", format!("must be > 0, got {variance}")));
        }
        let kernel = temporal_kernel(layout.frames, length_scale, variance);
        let eig = SymmetricEigen::new(kernel.clone());
        let eigvals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        // the jitter bounds the spectrum away from zero; roundoff may not
        assert!(
            eigvals.iter().all(|&l| l > 0.0),
            "kernel lost positive definiteness (min eigenvalue {:e})",
            eigvals.iter().cloned().fold(f64::INFINITY, f64::min)
        );
        Ok(Self {
            layout,
            mean,
            length_scale,
            variance,
            kernel,
            eigvecs: eig.eigenvectors,
            eigvals,
            schedule,
        })
    }

    /// Defaults: length scale 10 frames, variance 0.25 m².
    pub fn with_defaults(layout: MotionLayout, mean: Vec<f64>, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(layout, mean, 10.0, 0.25, schedule)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Per-channel temporal covariance `K`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn channels(&self) -> usize {
        self.layout.len() / self.layout.frames
    }

    /// Frame-by-channel view of a flat tensor.
    fn to_columns(&self, flat: &[f64]) -> DMatrix<f64> {
        let frames = self.layout.frames;
        let per_frame = self.layout.joints * 3;
        let agent_len = self.layout.agent_len();
        DMatrix::from_fn(frames, self.channels(), |f, ch| {
            let (agent, within) = (ch / per_frame, ch % per_frame);
            flat[agent * agent_len + f * per_frame + within]
        })
    }

    fn scatter_columns(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        let per_frame = self.layout.joints * 3;
        let agent_len = self.layout.agent_len();
        for ch in 0..m.ncols() {
            let (agent, within) = (ch / per_frame, ch % per_frame);
            for f in 0..m.nrows() {
                out[agent * agent_len + f * per_frame + within] = m[(f, ch)];
            }
        }
    }

    /// Exact posterior mean for signal level `alpha_bar` in `[0, 1]`.
    pub fn predict_at(&self, x_t: &[f64], alpha_bar: f64) -> Vec<f64> {
        assert_eq!(x_t.len(), self.layout.len(), "x_t shape");
        let s = alpha_bar.sqrt();
        let resid: Vec<f64> = x_t.iter().zip(&self.mean).map(|(x, m)| x - s * m).collect();
        let d = self.to_columns(&resid);
        let mut proj = self.eigvecs.transpose() * d;
        for (k, &lambda) in self.eigvals.iter().enumerate() {
            let denom = alpha_bar * lambda + (1.0 - alpha_bar);
            let gain = if denom > 0.0 { s * lambda / denom } else { 0.0 };
            proj.row_mut(k).scale_mut(gain);
        }
        let y = &self.eigvecs * proj;
        let mut out = self.mean.clone();
        let mut delta = vec![0.0; out.len()];
        self.scatter_columns(&y, &mut delta);
        for (o, d) in out.iter_mut().zip(delta) {
            *o += d;
        }
        out
    }

    /// Posterior mean at step `t` (`t = 0` means no noise).
    pub fn predict_step(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.schedule.check_step(t, 0)?;
        Ok(self.predict_at(x_t, self.schedule.alpha_bar(t)))
    }
}

impl Denoiser for AnalyticGaussianPrior {
    fn layout(&self) -> MotionLayout {
        self.layout
    }

    fn predict_x0(&self, state: &DiffusionState, _condition: &ConditionLabel) -> Vec<f64> {
        self.predict_at(&state.x, self.schedule.alpha_bar(state.t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::noise::{chain_rng, NoiseSource};
    use nalgebra::DVector;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = chain_rng(seed, 0);
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    /// Dense `N x N` route: full covariance, LU solve.
    fn brute_force(prior: &AnalyticGaussianPrior, x_t: &[f64], ab: f64) -> Vec<f64> {
        let layout = prior.layout;
        let n = layout.len();
        let per_frame = layout.joints * 3;
        let k = prior.kernel();
        // same channel, any two frames
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (ai, fi, ci) = (i / layout.agent_len(), (i % layout.agent_len()) / per_frame, i % per_frame);
            let (aj, fj, cj) = (j / layout.agent_len(), (j % layout.agent_len()) / per_frame, j % per_frame);
            if ai == aj && ci == cj {
                k[(fi, fj)]
            } else {
                0.0
            }
        });
        let s = ab.sqrt();
        let a = &cov * ab + DMatrix::identity(n, n) * (1.0 - ab);
        let r = DVector::from_iterator(n, x_t.iter().zip(prior.mean()).map(|(x, m)| x - s * m));
        let sol = a.lu().solve(&r).expect("SPD system");
        let y = &cov * sol * s;
        prior.mean().iter().zip(y.iter()).map(|(m, v)| m + v).collect()
    }

    #[test]
    fn eigen_route_matches_dense_solve() {
        let s = NoiseSchedule::default();
        for (frames, joints, seed) in [(8, 2, 1u64), (5, 1, 2), (8, 1, 3), (3, 2, 4)] {
            let layout = MotionLayout::new(frames, joints);
            let prior =
                AnalyticGaussianPrior::new(layout, random_vec(layout.len(), seed), 2.5, 0.25, s.clone()).unwrap();
            let x = random_vec(layout.len(), seed + 100);
            for t in [1, 50, 300, 700, 1000] {
                let fast = prior.predict_step(&x, t).unwrap();
                let slow = brute_force(&prior, &x, s.alpha_bar(t));
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-8, "t={t}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn noise_free_limit_returns_input() {
        let layout = MotionLayout::new(6, 2);
        let prior = AnalyticGaussianPrior::new(layout, random_vec(layout.len(), 9), 3.0, 0.25, NoiseSchedule::default())
            .unwrap();
        let x = random_vec(layout.len(), 10);
        let out = prior.predict_step(&x, 0).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_noise_limit_returns_mean() {
        let layout = MotionLayout::new(6, 2);
        let mean = random_vec(layout.len(), 9);
        let prior = AnalyticGaussianPrior::new(layout, mean.clone(), 3.0, 0.25, NoiseSchedule::default()).unwrap();
        let out = prior.predict_at(&random_vec(layout.len(), 10), 0.0);
        assert_eq!(out, mean);
    }

    #[test]
    fn white_kernel_reduces_to_scalar_shrinkage() {
        let layout = MotionLayout::new(7, 2);
        let mean = random_vec(layout.len(), 4);
        let var = 0.25;
        // length scale so small that off-diagonal entries underflow to zero
        let prior = AnalyticGaussianPrior::new(layout, mean.clone(), 1e-3, var, NoiseSchedule::default()).unwrap();
        let sigma2 = var * (1.0 + KERNEL_JITTER);
        let x = random_vec(layout.len(), 5);
        for t in [10, 400, 900] {
            let ab = prior.schedule().alpha_bar(t);
            let out = prior.predict_step(&x, t).unwrap();
            let gain = ab.sqrt() * sigma2 / (ab * sigma2 + 1.0 - ab);
            for i in 0..x.len() {
                let expect = mean[i] + gain * (x[i] - ab.sqrt() * mean[i]);
                assert!((out[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let layout = MotionLayout::new(4, 1);
        let mean = vec![0.0; layout.len()];
        assert!(AnalyticGaussianPrior::new(layout, mean.clone(), 0.0, 0.25, NoiseSchedule::default()).is_err());
        assert!(AnalyticGaussianPrior::new(layout, mean.clone(), 1.0, -1.0, NoiseSchedule::default()).is_err());
        assert!(AnalyticGaussianPrior::new(layout, vec![0.0; 3], 1.0, 1.0, NoiseSchedule::default()).is_err());
    }
}
