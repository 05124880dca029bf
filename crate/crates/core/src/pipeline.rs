//! End-to-end generation: sampler plus optional controller and adapter hooks.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::diffusion::{chain_rng, sample, AnalyticGaussianPrior, Denoiser, NoiseSchedule, SamplerConfig, SamplerHook};
use crate::error::{Error, Result};
use crate::motion::{Agent, ConditionLabel, MotionLayout, SkeletonSpec, Trajectory, TwoAgentMotion};
use crate::pace::{GuidanceWindow, PaceConfig, PaceController};
use crate::sync::{AdapterConfig, AdapterHook};
use crate::synth::generate_scenario;

pub const DEFAULT_DDIM_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    /// Shared by the controller and the adapter's step placement.
    pub window: GuidanceWindow,
    pub pace: Option<PaceConfig>,
    pub adapter: Option<AdapterConfig>,
    pub sampler: SamplerConfig,
    pub ddim_steps: usize,
    pub fps: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            window: GuidanceWindow::default(),
            pace: Some(PaceConfig::default()),
            adapter: Some(AdapterConfig::default()),
            sampler: SamplerConfig::default(),
            ddim_steps: DEFAULT_DDIM_STEPS,
            fps: 30.0,
        }
    }
}

impl GenerationConfig {
    /// Both hooks off.
    pub fn unguided() -> Self {
        Self {
            pace: None,
            adapter: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub motion: TwoAgentMotion,
    /// `(step, conflicting frames)` per adapter invocation.
    pub adapter_trace: Vec<(usize, usize)>,
    pub elapsed: Duration,
}

/// One chain seeded by `seed`. `targets` is ignored when the controller is off.
pub fn generate(
    denoiser: &dyn Denoiser,
    condition: &ConditionLabel,
    schedule: &NoiseSchedule,
    skeleton: &SkeletonSpec,
    targets: &[(Agent, Trajectory)],
    config: &GenerationConfig,
    seed: u64,
) -> Result<Generation> {
    let start = Instant::now();
    let steps = schedule.ddim_subsequence(config.ddim_steps)?;
    let controller = match &config.pace {
        Some(p) => Some(PaceController::new(
            PaceConfig {
                window: config.window,
                ..*p
            },
            skeleton.root_index(),
            targets.to_vec(),
        )?),
        None => None,
    };
    if let Some(c) = &controller {
        let layout = denoiser.layout();
        for (_, tr) in c.targets() {
            if tr.len() != layout.frames {
                return Err(Error::Shape {
                    what: "target trajectory length",
                    expected: layout.frames,
                    got: tr.len(),
                });
            }
        }
    }
    let adapter = match &config.adapter {
        Some(a) => Some(AdapterHook::new(a.clone(), skeleton.clone(), &config.window, schedule.steps(), &steps)?.traced()),
        None => None,
    };
    let mut hooks: Vec<&dyn SamplerHook> = Vec::new();
    if let Some(c) = &controller {
        hooks.push(c);
    }
    if let Some(a) = &adapter {
        hooks.push(a);
    }
    let mut rng = chain_rng(seed, 0);
    let motion = sample(denoiser, condition, schedule, &steps, &hooks, config.sampler, config.fps, &mut rng)?;
    Ok(Generation {
        motion,
        adapter_trace: adapter.map(|a| a.trace()).unwrap_or_default(),
        elapsed: start.elapsed(),
    })
}

/// [`generate`] over many seeds in parallel; results follow `seeds` order.
pub fn generate_batch(
    denoiser: &dyn Denoiser,
    condition: &ConditionLabel,
    schedule: &NoiseSchedule,
    skeleton: &SkeletonSpec,
    targets: &[(Agent, Trajectory)],
    config: &GenerationConfig,
    seeds: &[u64],
) -> Result<Vec<Generation>> {
    seeds
        .par_iter()
        .map(|&s| generate(denoiser, condition, schedule, skeleton, targets, config, s))
        .collect()
}

/// Analytic prior centred on one procedural scenario.
pub fn scenario_prior(
    kind: crate::synth::ScenarioKind,
    frames: usize,
    fps: f64,
    scenario_seed: u64,
    skeleton: &SkeletonSpec,
    schedule: &NoiseSchedule,
) -> Result<(AnalyticGaussianPrior, TwoAgentMotion, ConditionLabel)> {
    let (motion, label) = generate_scenario(kind, frames, fps, scenario_seed, skeleton)?;
    let layout = MotionLayout::new(frames, skeleton.joint_count());
    let prior = AnalyticGaussianPrior::with_defaults(layout, motion.to_flat(), schedule.clone())?;
    Ok((prior, motion, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{project_root_trajectory, InteractionKind};
    use crate::synth::{generate_trajectory_condition, TrajectoryShape};

    fn setup(frames: usize) -> (AnalyticGaussianPrior, ConditionLabel, NoiseSchedule, SkeletonSpec) {
        let s = SkeletonSpec::default();
        let sched = NoiseSchedule::default();
        let (p, _, l) = scenario_prior(InteractionKind::MirrorWalk, frames, 30.0, 3, &s, &sched).unwrap();
        (p, l, sched, s)
    }

    #[test]
    fn unguided_equals_plain_sample() {
        let (p, l, sched, s) = setup(16);
        let g = generate(&p, &l, &sched, &s, &[], &GenerationConfig::unguided(), 9).unwrap();
        let steps = sched.ddim_subsequence(50).unwrap();
        let plain = sample(&p, &l, &sched, &steps, &[], SamplerConfig::default(), 30.0, &mut chain_rng(9, 0)).unwrap();
        assert_eq!(g.motion, plain);
        assert!(g.adapter_trace.is_empty());
    }

    #[test]
    fn batch_matches_individual_runs() {
        let (p, l, sched, s) = setup(12);
        let tr = generate_trajectory_condition(TrajectoryShape::Line, 12, 2.0, 30.0).unwrap();
        let cfg = GenerationConfig::default();
        let targets = [(Agent::A, tr)];
        let batch = generate_batch(&p, &l, &sched, &s, &targets, &cfg, &[4, 5]).unwrap();
        let one = generate(&p, &l, &sched, &s, &targets, &cfg, 5).unwrap();
        assert_eq!(batch[1].motion, one.motion);
        assert_eq!(batch[0].adapter_trace.len(), 3);
    }

    #[test]
    fn target_length_checked() {
        let (p, l, sched, s) = setup(12);
        let tr = generate_trajectory_condition(TrajectoryShape::Line, 10, 2.0, 30.0).unwrap();
        assert!(generate(&p, &l, &sched, &s, &[(Agent::A, tr)], &GenerationConfig::default(), 0).is_err());
        assert!(generate(&p, &l, &sched, &s, &[], &GenerationConfig::default(), 0).is_err());
    }

    #[test]
    fn guidance_pulls_leader_toward_target() {
        let (p, l, sched, s) = setup(24);
        let tr = generate_trajectory_condition(TrajectoryShape::Circle, 24, 3.0, 30.0).unwrap();
        let cfg = GenerationConfig {
            adapter: None,
            ..GenerationConfig::default()
        };
        let g = generate(&p, &l, &sched, &s, &[(Agent::A, tr.clone())], &cfg, 1).unwrap();
        let u = generate(&p, &l, &sched, &s, &[], &GenerationConfig::unguided(), 1).unwrap();
        let rmse = |m: &TwoAgentMotion| crate::metrics::trajectory_rmse(&m.agent_a, &tr, &s).unwrap();
        assert!(rmse(&g.motion) < rmse(&u.motion));
        let _ = project_root_trajectory(&g.motion.agent_a, &s).unwrap();
    }
}
