//! Conflict-gated follower correction.

use std::sync::Mutex;

use super::capsule::{frame_conflicts, norm, poses_overlap, Conflict};
use super::loss::{joint_loss_grad_b, joint_loss_slices, velocity_loss_grad_b, velocity_loss_slices, VelocityLossForm};
use crate::diffusion::{SamplerHook, StepContext};
use crate::error::{Error, Result};
use crate::motion::{Agent, MotionLayout, SkeletonSpec, TwoAgentMotion, Vec3};
use crate::pace::GuidanceWindow;

/// Steps at which the adapter fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterSteps {
    /// `n` traversed steps spread evenly across the guidance window,
    /// including both of its ends.
    Evenly(usize),
    /// Exactly these step indices.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    /// Hinge margin on inter-agent joint distance, meters.
    pub delta: f64,
    pub w_joint: f64,
    pub w_vel: f64,
    pub steps: AdapterSteps,
    pub grad_step_size: f64,
    pub grad_iters: usize,
    /// Speed below which a velocity term is ignored, meters per frame.
    pub vel_epsilon: f64,
    pub vel_form: VelocityLossForm,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            delta: 0.10,
            w_joint: 1.0,
            w_vel: 0.1,
            steps: AdapterSteps::Evenly(3),
            grad_step_size: 0.1,
            grad_iters: 5,
            vel_epsilon: 1e-6,
            vel_form: VelocityLossForm::Cosine,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::param("delta", format!("must be > 0, got {}", self.delta)));
        }
        if self.w_joint < 0.0 || self.w_vel < 0.0 {
            return Err(Error::param("weights", "must be >= 0"));
        }
        if let AdapterSteps::Evenly(0) = self.steps {
            return Err(Error::param("adapter_steps", "must be at least 1"));
        }
        if self.grad_step_size.is_nan() || self.grad_step_size <= 0.0 {
            return Err(Error::param("grad_step_size", "must be > 0"));
        }
        Ok(())
    }

    /// Combined loss `w_joint * L_joint + w_vel * L_velocity` on follower positions.
    pub fn combined_loss(&self, leader: &[Vec3], follower: &[Vec3], joints: usize) -> f64 {
        self.w_joint * joint_loss_slices(leader, follower, self.delta)
            + self.w_vel * velocity_loss_slices(leader, follower, joints, self.vel_epsilon, self.vel_form)
    }

    pub fn combined_grad(&self, leader: &[Vec3], follower: &[Vec3], joints: usize) -> Vec<Vec3> {
        let gj = joint_loss_grad_b(leader, follower, self.delta);
        let gv = velocity_loss_grad_b(leader, follower, joints, self.vel_epsilon, self.vel_form);
        gj.iter()
            .zip(&gv)
            .map(|(a, b)| {
                [
                    self.w_joint * a[0] + self.w_vel * b[0],
                    self.w_joint * a[1] + self.w_vel * b[1],
                    self.w_joint * a[2] + self.w_vel * b[2],
                ]
            })
            .collect()
    }
}

/// Search limits for rigid separation.
pub const SEPARATION_CAP: f64 = 2.0;
pub const SEPARATION_TOL: f64 = 1e-4;
const SEPARATION_SCAN: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeparationReport {
    /// `(frame, displacement)` for every frame that was moved.
    pub moved: Vec<(usize, f64)>,
    /// Frames still overlapping at the displacement cap.
    pub unresolved: Vec<usize>,
}

/// Horizontal unit vector from the leader root to the follower root; `+x`
/// when the roots coincide horizontally.
pub fn separation_direction(leader: &[Vec3], follower: &[Vec3], root: usize) -> Vec3 {
    let d = [follower[root][0] - leader[root][0], 0.0, follower[root][2] - leader[root][2]];
    let n = norm(d);
    if n < 1e-9 {
        [1.0, 0.0, 0.0]
    } else {
        [d[0] / n, 0.0, d[2] / n]
    }
}

fn shifted(pose: &[Vec3], dir: Vec3, s: f64) -> Vec<Vec3> {
    pose.iter()
        .map(|p| [p[0] + dir[0] * s, p[1] + dir[1] * s, p[2] + dir[2] * s])
        .collect()
}

/// Smallest displacement along `dir` (to `SEPARATION_TOL`) at which the
/// follower pose no longer overlaps the leader, or `None` within the cap.
pub fn clearing_displacement(leader: &[Vec3], follower: &[Vec3], dir: Vec3, skeleton: &SkeletonSpec) -> Option<f64> {
    let overlaps = |s: f64| poses_overlap(leader, &shifted(follower, dir, s), skeleton);
    if !overlaps(0.0) {
        return Some(0.0);
    }
    // coarse scan for the first clear sample, then bisect the bracket
    let mut lo = 0.0;
    let mut hi = None;
    let mut s = SEPARATION_SCAN;
    while s <= SEPARATION_CAP + 1e-12 {
        if !overlaps(s) {
            hi = Some(s);
            break;
        }
        lo = s;
        s += SEPARATION_SCAN;
    }
    let mut hi = hi?;
    while hi - lo > SEPARATION_TOL {
        let mid = 0.5 * (lo + hi);
        if overlaps(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Rigidly translates the follower, frame by frame, just far enough along
/// the horizontal root-to-root direction to clear every capsule overlap.
/// Frames without conflict are left untouched.
pub fn separate_collision(
    follower: &mut [Vec3],
    leader: &[Vec3],
    joints: usize,
    skeleton: &SkeletonSpec,
    conflicts: &[Conflict],
) -> SeparationReport {
    let root = skeleton.root_index();
    let mut report = SeparationReport::default();
    for (f, c) in conflicts.iter().enumerate() {
        if !c.is_conflict() {
            continue;
        }
        let range = f * joints..(f + 1) * joints;
        let lp = &leader[range.clone()];
        let fp = &follower[range.clone()];
        let dir = separation_direction(lp, fp, root);
        match clearing_displacement(lp, fp, dir, skeleton) {
            Some(s) => {
                let moved = shifted(fp, dir, s);
                follower[range].copy_from_slice(&moved);
                report.moved.push((f, s));
            }
            None => report.unresolved.push(f),
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub x0: Vec<f64>,
    pub conflict_frames: usize,
    pub separation: SeparationReport,
    /// Combined loss before and after each accepted gradient iteration.
    pub loss_trace: Vec<f64>,
}

fn read_agent(x: &[f64], layout: &MotionLayout, agent: Agent) -> Vec<Vec3> {
    x[layout.agent_range(agent)]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect()
}

/// Applies the adapter to a predicted clean tensor. Returns the input
/// untouched when no frame conflicts; otherwise separates colliding frames
/// and runs backtracking gradient descent on the follower's channels.
pub fn adapt_follower(
    x0: Vec<f64>,
    layout: &MotionLayout,
    skeleton: &SkeletonSpec,
    config: &AdapterConfig,
) -> Result<AdaptOutcome> {
    if x0.len() != layout.len() {
        return Err(Error::Shape {
            what: "adapter input",
            expected: layout.len(),
            got: x0.len(),
        });
    }
    if layout.joints != skeleton.joint_count() {
        return Err(Error::Shape {
            what: "adapter skeleton joints",
            expected: skeleton.joint_count(),
            got: layout.joints,
        });
    }
    let motion = TwoAgentMotion::from_flat(*layout, 30.0, &x0)?;
    let conflicts = frame_conflicts(&motion, skeleton);
    let conflict_frames = conflicts.iter().filter(|c| c.is_conflict()).count();
    if conflict_frames == 0 {
        return Ok(AdaptOutcome {
            x0,
            conflict_frames,
            separation: SeparationReport::default(),
            loss_trace: Vec::new(),
        });
    }
    let leader = read_agent(&x0, layout, Agent::A);
    let mut follower = read_agent(&x0, layout, Agent::B);
    let separation = separate_collision(&mut follower, &leader, layout.joints, skeleton, &conflicts);

    let joints = layout.joints;
    let mut loss = config.combined_loss(&leader, &follower, joints);
    let mut trace = vec![loss];
    for _ in 0..config.grad_iters {
        let grad = config.combined_grad(&leader, &follower, joints);
        let mut step = config.grad_step_size;
        let mut accepted = None;
        for _ in 0..=5 {
            let trial: Vec<Vec3> = follower
                .iter()
                .zip(&grad)
                .map(|(p, g)| [p[0] - step * g[0], p[1] - step * g[1], p[2] - step * g[2]])
                .collect();
            let l = config.combined_loss(&leader, &trial, joints);
            if l <= loss {
                accepted = Some((trial, l));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, l)) => {
                follower = trial;
                loss = l;
                trace.push(l);
            }
            None => break,
        }
    }

    let mut out = x0;
    let range = layout.agent_range(Agent::B);
    for (chunk, p) in out[range].chunks_exact_mut(3).zip(&follower) {
        chunk.copy_from_slice(p);
    }
    Ok(AdaptOutcome {
        x0: out,
        conflict_frames,
        separation,
        loss_trace: trace,
    })
}

/// Resolves which traversed steps the adapter fires at.
pub fn adapter_fire_steps(steps: &AdapterSteps, window: &GuidanceWindow, total: usize, traversed: &[usize]) -> Vec<usize> {
    match steps {
        AdapterSteps::Explicit(v) => {
            let mut v = v.clone();
            v.sort_unstable_by(|a, b| b.cmp(a));
            v.dedup();
            v
        }
        AdapterSteps::Evenly(n) => {
            let inside: Vec<usize> = traversed
                .iter()
                .copied()
                .filter(|&t| t > 0 && window.contains(t, total))
                .collect();
            if inside.is_empty() || *n == 0 {
                return Vec::new();
            }
            let mut picked: Vec<usize> = if *n == 1 {
                vec![inside[inside.len() / 2]]
            } else {
                (0..*n)
                    .map(|k| {
                        let pos = (k as f64 * (inside.len() - 1) as f64 / (*n - 1) as f64).round() as usize;
                        inside[pos]
                    })
                    .collect()
            };
            picked.dedup();
            picked
        }
    }
}

/// Post-predict hook that runs [`adapt_follower`] at selected steps.
#[derive(Debug)]
pub struct AdapterHook {
    config: AdapterConfig,
    skeleton: SkeletonSpec,
    fire_steps: Vec<usize>,
    trace: Option<Mutex<Vec<(usize, usize)>>>,
}

impl AdapterHook {
    pub fn new(
        config: AdapterConfig,
        skeleton: SkeletonSpec,
        window: &GuidanceWindow,
        total_steps: usize,
        traversed: &[usize],
    ) -> Result<Self> {
        config.validate()?;
        let fire_steps = adapter_fire_steps(&config.steps, window, total_steps, traversed);
        Ok(Self {
            config,
            skeleton,
            fire_steps,
            trace: None,
        })
    }

    /// Records `(step, conflicting frames)` for every invocation.
    pub fn traced(mut self) -> Self {
        self.trace = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn fire_steps(&self) -> &[usize] {
        &self.fire_steps
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn trace(&self) -> Vec<(usize, usize)> {
        self.trace
            .as_ref()
            .map(|m| m.lock().unwrap().clone())
            .unwrap_or_default()
    }
}

impl SamplerHook for AdapterHook {
    fn post_predict(&self, x0: Vec<f64>, ctx: &StepContext<'_>) -> Vec<f64> {
        if !self.fire_steps.contains(&ctx.t) {
            return x0;
        }
        let out = adapt_follower(x0, &ctx.layout, &self.skeleton, &self.config)
            .expect("layout validated by sampler");
        if let Some(m) = &self.trace {
            m.lock().unwrap().push((ctx.t, out.conflict_frames));
        }
        out.x0
    }
}
