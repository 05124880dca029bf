//! Leader trajectory guidance.
//!
//! Inside the guidance window every reverse step (1) overwrites the targeted
//! agent's root ground-plane channels of `x_t` with the target trajectory and
//! (2) pulls the same channels of the predicted `x_0` toward the target by
//! gradient descent on the per-frame squared error. Nothing outside those
//! channels is ever written.

use std::fmt;
use std::str::FromStr;

use crate::diffusion::{
    forward_noise, sample, Denoiser, NoiseSchedule, NoiseSource, SamplerConfig, SamplerHook, StepContext,
};
use crate::error::{Error, Result};
use crate::motion::{Agent, ConditionLabel, MotionLayout, Trajectory, TwoAgentMotion};

/// Fractions of `T` bounding the guided steps; `start` is the noisier end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceWindow {
    start: f64,
    end: f64,
}

impl GuidanceWindow {
    /// `start == end` is accepted and yields a window that may contain no
    /// traversed step at all.
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start <= 1.0 && start >= end && end >= 0.0) {
            return Err(Error::param(
                "window",
                format!("require 1 >= start >= end >= 0, got ({start}, {end})"),
            ));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Inclusive step bounds `(lo, hi)`, floored.
    pub fn step_bounds(&self, total_steps: usize) -> (usize, usize) {
        // the epsilon absorbs representation error such as 0.7 * 1000 = 699.999..
        let floor = |f: f64| (f * total_steps as f64 + 1e-9).floor() as usize;
        (floor(self.end), floor(self.start))
    }

    pub fn contains(&self, t: usize, total_steps: usize) -> bool {
        let (lo, hi) = self.step_bounds(total_steps);
        lo <= t && t <= hi
    }
}

impl Default for GuidanceWindow {
    fn default() -> Self {
        Self { start: 0.7, end: 0.3 }
    }
}

/// True iff `floor(end * T) <= t <= floor(start * T)`.
pub fn in_window(t: usize, total_steps: usize, window: &GuidanceWindow) -> bool {
    window.contains(t, total_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InjectionMode {
    /// Target forward-noised to the current step.
    #[default]
    Noised,
    /// Target written verbatim.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetAgent {
    #[default]
    A,
    B,
    Both,
}

impl TargetAgent {
    pub fn agents(self) -> &'static [Agent] {
        match self {
            TargetAgent::A => &[Agent::A],
            TargetAgent::B => &[Agent::B],
            TargetAgent::Both => &[Agent::A, Agent::B],
        }
    }
}

macro_rules! impl_enum_str {
    ($ty:ty, $kind:literal, $($variant:path => $name:literal),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Unknown { kind: $kind, name: other.to_string() }),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name,)+ })
            }
        }
    };
}

impl_enum_str!(InjectionMode, "injection mode", InjectionMode::Noised => "noised", InjectionMode::Raw => "raw");
impl_enum_str!(TargetAgent, "target agent", TargetAgent::A => "a", TargetAgent::B => "b", TargetAgent::Both => "both");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaceConfig {
    pub window: GuidanceWindow,
    /// Fraction of the residual removed per refinement step; 1.0 lands on the target.
    pub grad_step_size: f64,
    pub grad_steps: usize,
    pub injection_mode: InjectionMode,
    pub target_agent: TargetAgent,
}

impl Default for PaceConfig {
    fn default() -> Self {
        Self {
            window: GuidanceWindow::default(),
            grad_step_size: 0.5,
            grad_steps: 1,
            injection_mode: InjectionMode::Noised,
            target_agent: TargetAgent::A,
        }
    }
}

impl PaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_step_size > 0.0 && self.grad_step_size <= 1.0) {
            return Err(Error::param(
                "grad_step_size",
                format!("must be in (0, 1], got {}", self.grad_step_size),
            ));
        }
        if self.grad_steps == 0 {
            return Err(Error::param("grad_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Flat indices of the channels a trajectory constrains: root axes 0 and 2
/// per frame, plus axis 1 when the trajectory carries height.
pub fn trajectory_channels(layout: &MotionLayout, agent: Agent, root: usize, with_height: bool) -> Vec<usize> {
    if !with_height {
        return layout.root_ground_channels(agent, root);
    }
    (0..layout.frames)
        .flat_map(|f| (0..3).map(move |c| layout.index(agent, f, root, c)))
        .collect()
}

/// Target values in the same order as [`trajectory_channels`].
fn target_values(target: &Trajectory) -> Vec<f64> {
    match target.heights() {
        None => target.points().iter().flatten().copied().collect(),
        Some(h) => target
            .points()
            .iter()
            .zip(h)
            .flat_map(|(p, &y)| [p[0], y, p[1]])
            .collect(),
    }
}

fn check_target(layout: &MotionLayout, target: &Trajectory) -> Result<()> {
    if target.len() != layout.frames {
        return Err(Error::Shape {
            what: "target trajectory length",
            expected: layout.frames,
            got: target.len(),
        });
    }
    Ok(())
}

/// Overwrites `agent`'s trajectory channels of `x_t` with the target, either
/// verbatim or forward-noised to step `t`.
#[allow(clippy::too_many_arguments)]
pub fn inject_trajectory(
    mut x_t: Vec<f64>,
    layout: &MotionLayout,
    agent: Agent,
    root: usize,
    target: &Trajectory,
    t: usize,
    schedule: &NoiseSchedule,
    mode: InjectionMode,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<f64>> {
    check_target(layout, target)?;
    let channels = trajectory_channels(layout, agent, root, target.heights().is_some());
    let values = target_values(target);
    let values = match mode {
        InjectionMode::Raw => values,
        InjectionMode::Noised => forward_noise(&values, t, schedule, noise)?,
    };
    for (&i, v) in channels.iter().zip(values) {
        x_t[i] = v;
    }
    Ok(x_t)
}

/// Mean per-frame squared distance between the agent's root channels and the target.
pub fn trajectory_mse(x0: &[f64], layout: &MotionLayout, agent: Agent, root: usize, target: &Trajectory) -> f64 {
    let with_height = target.heights().is_some();
    let channels = trajectory_channels(layout, agent, root, with_height);
    let sq: f64 = channels
        .iter()
        .zip(target_values(target))
        .map(|(&i, v)| (x0[i] - v).powi(2))
        .sum();
    sq / layout.frames as f64
}

/// Gradient descent on `(1/L) sum_f |root_f - target_f|^2` over the targeted
/// channels only. The analytic gradient is `(2/L)(root - target)`; the step is
/// scaled by `L/2` so that `step_size = 1` is an exact projection.
pub fn refine_x0(
    mut x0: Vec<f64>,
    layout: &MotionLayout,
    agent: Agent,
    root: usize,
    target: &Trajectory,
    step_size: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    check_target(layout, target)?;
    let channels = trajectory_channels(layout, agent, root, target.heights().is_some());
    let values = target_values(target);
    let frames = layout.frames as f64;
    let lr = step_size * frames / 2.0;
    for _ in 0..steps {
        for (&i, v) in channels.iter().zip(&values) {
            let grad = 2.0 / frames * (x0[i] - v);
            x0[i] -= lr * grad;
        }
    }
    Ok(x0)
}

/// Sampler hook applying injection before and refinement after each
/// prediction, at steps inside the window.
#[derive(Debug, Clone)]
pub struct PaceController {
    config: PaceConfig,
    root: usize,
    targets: Vec<(Agent, Trajectory)>,
}

impl PaceController {
    /// `targets` must hold exactly the agents selected by `config.target_agent`.
    pub fn new(config: PaceConfig, root: usize, targets: Vec<(Agent, Trajectory)>) -> Result<Self> {
        config.validate()?;
        let wanted = config.target_agent.agents();
        if targets.len() != wanted.len() || wanted.iter().any(|a| !targets.iter().any(|(b, _)| a == b)) {
            return Err(Error::param(
                "targets",
                format!("target agent `{}` needs {} trajectories", config.target_agent, wanted.len()),
            ));
        }
        Ok(Self { config, root, targets })
    }

    /// Single-target controller guiding the leader.
    pub fn leader(config: PaceConfig, root: usize, target: Trajectory) -> Result<Self> {
        Self::new(
            PaceConfig {
                target_agent: TargetAgent::A,
                ..config
            },
            root,
            vec![(Agent::A, target)],
        )
    }

    pub fn config(&self) -> &PaceConfig {
        &self.config
    }

    pub fn targets(&self) -> &[(Agent, Trajectory)] {
        &self.targets
    }

    pub fn root(&self) -> usize {
        self.root
    }

    fn active(&self, ctx: &StepContext<'_>) -> bool {
        self.config.window.contains(ctx.t, ctx.schedule.steps())
    }
}

impl SamplerHook for PaceController {
    fn pre_step(&self, mut x_t: Vec<f64>, ctx: &StepContext<'_>, noise: &mut dyn NoiseSource) -> Vec<f64> {
        if !self.active(ctx) {
            return x_t;
        }
        for (agent, target) in &self.targets {
            x_t = inject_trajectory(
                x_t,
                &ctx.layout,
                *agent,
                self.root,
                target,
                ctx.t,
                ctx.schedule,
                self.config.injection_mode,
                noise,
            )
            .expect("target length checked at construction");
        }
        x_t
    }

    fn post_predict(&self, mut x0: Vec<f64>, ctx: &StepContext<'_>) -> Vec<f64> {
        if !self.active(ctx) {
            return x0;
        }
        for (agent, target) in &self.targets {
            x0 = refine_x0(
                x0,
                &ctx.layout,
                *agent,
                self.root,
                target,
                self.config.grad_step_size,
                self.config.grad_steps,
            )
            .expect("target length checked at construction");
        }
        x0
    }
}

/// Samples with the controller as the only hook.
#[allow(clippy::too_many_arguments)]
pub fn guided_sample(
    denoiser: &dyn Denoiser,
    condition: &ConditionLabel,
    controller: &PaceController,
    schedule: &NoiseSchedule,
    steps: &[usize],
    sampler: SamplerConfig,
    fps: f64,
    noise: &mut dyn NoiseSource,
) -> Result<TwoAgentMotion> {
    let layout = denoiser.layout();
    for (_, tr) in controller.targets() {
        check_target(&layout, tr)?;
    }
    sample(denoiser, condition, schedule, steps, &[controller], sampler, fps, noise)
}
