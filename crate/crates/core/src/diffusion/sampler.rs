//! Forward noising, reverse steps and the hooked sampling loop.

use super::noise::NoiseSource;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::motion::{ConditionLabel, MotionLayout, TwoAgentMotion};

/// Noisy two-agent tensor at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub x: Vec<f64>,
    pub t: usize,
}

/// A model mapping `x_t` to an estimate of the clean motion `x_0`.
pub trait Denoiser: Sync {
    fn layout(&self) -> MotionLayout;

    /// Must return a tensor of the same length as `state.x`, deterministically.
    fn predict_x0(&self, state: &DiffusionState, condition: &ConditionLabel) -> Vec<f64>;
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    schedule.check_step(t, 1)?;
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().map(|&v| s * v + n * noise.standard_normal()).collect())
}

/// Mean and variance of `q(x_s | x_t, x_0)` for `s < t`. With `s = t - 1`
/// this is the usual DDPM posterior with variance `beta_tilde_t`.
pub fn posterior_coefficients(schedule: &NoiseSchedule, t: usize, s: usize) -> (f64, f64, f64) {
    let ab_t = schedule.alpha_bar(t);
    let ab_s = schedule.alpha_bar(s);
    let beta = 1.0 - ab_t / ab_s;
    let alpha = ab_t / ab_s;
    let c_x0 = ab_s.sqrt() * beta / (1.0 - ab_t);
    let c_xt = alpha.sqrt() * (1.0 - ab_s) / (1.0 - ab_t);
    let var = (1.0 - ab_s) / (1.0 - ab_t) * beta;
    (c_x0, c_xt, var)
}

/// Posterior mean of `q(x_s | x_t, x_0)`.
pub fn posterior_mean(x0_pred: &[f64], x_t: &[f64], t: usize, s: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    if s == 0 {
        return x0_pred.to_vec();
    }
    let (a, b, _) = posterior_coefficients(schedule, t, s);
    x0_pred.iter().zip(x_t).map(|(&x0, &xt)| a * x0 + b * xt).collect()
}

/// One ancestral step `x_t -> x_{t-1}`.
pub fn posterior_step(
    x0_pred: &[f64],
    x_t: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    posterior_step_to(x0_pred, x_t, t, t - 1, schedule, noise)
}

/// Ancestral step `x_t -> x_s` for an arbitrary earlier step `s`.
pub fn posterior_step_to(
    x0_pred: &[f64],
    x_t: &[f64],
    t: usize,
    s: usize,
    schedule: &NoiseSchedule,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    schedule.check_step(t, 1)?;
    check_order(t, s)?;
    check_len(x0_pred.len(), x_t.len())?;
    let mut out = posterior_mean(x0_pred, x_t, t, s, schedule);
    if s > 0 {
        let sd = posterior_coefficients(schedule, t, s).2.sqrt();
        for v in &mut out {
            *v += sd * noise.standard_normal();
        }
    }
    Ok(out)
}

/// Deterministic DDIM update (eta = 0) from `t` to `t_prev`.
pub fn ddim_step(
    x0_pred: &[f64],
    x_t: &[f64],
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t, 1)?;
    check_order(t, t_prev)?;
    check_len(x0_pred.len(), x_t.len())?;
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    let (sp, np) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    Ok(x0_pred
        .iter()
        .zip(x_t)
        .map(|(&x0, &xt)| {
            let eps = (xt - s * x0) / n;
            sp * x0 + np * eps
        })
        .collect())
}

fn check_order(t: usize, t_prev: usize) -> Result<()> {
    if t_prev >= t {
        return Err(Error::param(
            "t_prev",
            format!("must be below t = {t}, got {t_prev}"),
        ));
    }
    Ok(())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            what: "x0 prediction vs x_t",
            expected: b,
            got: a,
        });
    }
    Ok(())
}

/// Where a hook is being called from.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub t: usize,
    pub t_prev: usize,
    pub schedule: &'a NoiseSchedule,
    pub layout: MotionLayout,
}

/// Intervention points inside the reverse loop. Both default to identity.
pub trait SamplerHook: Sync {
    /// Called on `x_t` before the denoiser sees it.
    fn pre_step(&self, x_t: Vec<f64>, _ctx: &StepContext<'_>, _noise: &mut dyn NoiseSource) -> Vec<f64> {
        x_t
    }

    /// Called on the denoiser's `x_0` estimate before the update.
    fn post_predict(&self, x0_pred: Vec<f64>, _ctx: &StepContext<'_>) -> Vec<f64> {
        x0_pred
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Deterministic DDIM with eta = 0.
    #[default]
    Ddim,
    /// Stochastic draw from the Gaussian posterior.
    Ancestral,
}

/// Which `x_0` the update's implied noise estimate is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseEstimate {
    /// The hooked `x_0`; the update is a plain function of `(x_0, x_t)`.
    Hooked,
    /// The denoiser's own `x_0`. Hook edits then carry through the update
    /// at full signal weight instead of being absorbed by the noise term.
    #[default]
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub noise_estimate: NoiseEstimate,
}

/// Runs the reverse process over `steps` (descending, ending at 0) from a
/// standard-normal `x_T` and returns the final flat tensor.
#[allow(clippy::too_many_arguments)]
pub fn sample_flat(
    denoiser: &dyn Denoiser,
    condition: &ConditionLabel,
    schedule: &NoiseSchedule,
    steps: &[usize],
    hooks: &[&dyn SamplerHook],
    config: SamplerConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    if steps.len() < 2 || *steps.last().unwrap() != 0 || steps.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::param("steps", "must be strictly descending and end at 0"));
    }
    schedule.check_step(steps[0], 1)?;
    let layout = denoiser.layout();
    let n = layout.len();
    let mut x = vec![0.0; n];
    noise.fill(&mut x);

    for w in steps.windows(2) {
        let (t, t_prev) = (w[0], w[1]);
        let ctx = StepContext {
            t,
            t_prev,
            schedule,
            layout,
        };
        for h in hooks {
            x = h.pre_step(x, &ctx, noise);
            check_hook_len(x.len(), n)?;
        }
        let state = DiffusionState { x, t };
        let x0_model = denoiser.predict_x0(&state, condition);
        check_hook_len(x0_model.len(), n)?;
        let mut x_t = state.x;
        let mut x0 = x0_model.clone();
        for h in hooks {
            x0 = h.post_predict(x0, &ctx);
            check_hook_len(x0.len(), n)?;
        }
        if config.noise_estimate == NoiseEstimate::Model {
            // shift x_t so that (x_t, x0) imply the model's noise estimate
            let s = schedule.alpha_bar(t).sqrt();
            for ((xt, &a), &b) in x_t.iter_mut().zip(&x0).zip(&x0_model) {
                *xt += s * (a - b);
            }
        }
        x = match config.kind {
            SamplerKind::Ddim => ddim_step(&x0, &x_t, t, t_prev, schedule)?,
            SamplerKind::Ancestral => posterior_step_to(&x0, &x_t, t, t_prev, schedule, noise)?,
        };
    }
    Ok(x)
}

fn check_hook_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape {
            what: "sampler tensor after hook",
            expected,
            got,
        });
    }
    Ok(())
}

/// [`sample_flat`] reshaped into a motion.
#[allow(clippy::too_many_arguments)]
pub fn sample(
    denoiser: &dyn Denoiser,
    condition: &ConditionLabel,
    schedule: &NoiseSchedule,
    steps: &[usize],
    hooks: &[&dyn SamplerHook],
    config: SamplerConfig,
    fps: f64,
    noise: &mut dyn NoiseSource,
) -> Result<TwoAgentMotion> {
    let flat = sample_flat(denoiser, condition, schedule, steps, hooks, config, noise)?;
    TwoAgentMotion::from_flat(denoiser.layout(), fps, &flat)
}
