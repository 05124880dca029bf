#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use duet_guidance::diffusion::{AnalyticGaussianPrior, NoiseSchedule, NoiseSource, SamplerHook, StepContext};
use duet_guidance::motion::{ConditionLabel, InteractionKind, MotionLayout, SkeletonSpec, Vec3};
use duet_guidance::pace::{trajectory_channels, PaceController};
use duet_guidance::pipeline::scenario_prior;
use rand::Rng;

pub struct Bed {
    pub prior: AnalyticGaussianPrior,
    pub label: ConditionLabel,
    pub schedule: NoiseSchedule,
    pub skeleton: SkeletonSpec,
}

pub fn bed(kind: InteractionKind, frames: usize, scenario_seed: u64) -> Bed {
    let skeleton = SkeletonSpec::default();
    let schedule = NoiseSchedule::default();
    let (prior, _, label) = scenario_prior(kind, frames, 30.0, scenario_seed, &skeleton, &schedule).unwrap();
    Bed {
        prior,
        label,
        schedule,
        skeleton,
    }
}

/// Wraps a controller and checks every untargeted channel bit for bit.
pub struct Audited<'a> {
    inner: &'a PaceController,
    layout: MotionLayout,
    pub calls: AtomicUsize,
    pub violations: AtomicUsize,
}

impl<'a> Audited<'a> {
    pub fn new(inner: &'a PaceController, layout: MotionLayout) -> Self {
        Self {
            inner,
            layout,
            calls: AtomicUsize::new(0),
            violations: AtomicUsize::new(0),
        }
    }

    fn audit(&self, before: &[f64], after: &[f64]) {
        let mut open = vec![false; self.layout.len()];
        for (agent, _) in self.inner.targets() {
            for i in trajectory_channels(&self.layout, *agent, self.inner.root(), false) {
                open[i] = true;
            }
        }
        let bad = before
            .iter()
            .zip(after)
            .zip(&open)
            .filter(|((a, b), &o)| !o && a.to_bits() != b.to_bits())
            .count();
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.violations.fetch_add(bad, Ordering::Relaxed);
    }
}

impl SamplerHook for Audited<'_> {
    fn pre_step(&self, x_t: Vec<f64>, ctx: &StepContext<'_>, noise: &mut dyn NoiseSource) -> Vec<f64> {
        let before = x_t.clone();
        let out = self.inner.pre_step(x_t, ctx, noise);
        self.audit(&before, &out);
        out
    }

    fn post_predict(&self, x0: Vec<f64>, ctx: &StepContext<'_>) -> Vec<f64> {
        let before = x0.clone();
        let out = self.inner.post_predict(x0, ctx);
        self.audit(&before, &out);
        out
    }
}

pub fn random_points(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
            ]
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub mod oracles {
    use duet_guidance::diffusion::{chain_rng, MlpArchitecture, MlpDenoiser, NoiseSchedule};
    use duet_guidance::motion::{SkeletonSpec, Vec3, REST_PELVIS_HEIGHT};
    use duet_guidance::sync::{
        joint_loss_grad_b, joint_loss_slices, pose_to_capsules, velocity_loss_grad_b, velocity_loss_slices,
        VelocityLossForm,
    };
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use super::random_points;

    pub const FD_STEP: f64 = 1e-6;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Norm-wise relative error between an analytic and a numeric gradient.
    pub fn grad_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
        norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
    }

    fn central_diff(b: &[Vec3], f: impl Fn(&[Vec3]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(b.len() * 3);
        let mut work = b.to_vec();
        for i in 0..b.len() {
            for c in 0..3 {
                let orig = work[i][c];
                work[i][c] = orig + FD_STEP;
                let up = f(&work);
                work[i][c] = orig - FD_STEP;
                let down = f(&work);
                work[i][c] = orig;
                out.push((up - down) / (2.0 * FD_STEP));
            }
        }
        out
    }

    /// Leader/follower pair of `frames * joints` points with most joint
    /// pairs inside the hinge margin.
    pub fn close_pair(rng: &mut ChaCha8Rng, frames: usize, joints: usize, delta: f64) -> (Vec<Vec3>, Vec<Vec3>) {
        let a = random_points(rng, frames * joints, 1.0);
        let b = a
            .iter()
            .map(|p| {
                let r = 0.9 * delta;
                [
                    p[0] + rng.gen_range(-r..r),
                    p[1] + rng.gen_range(-r..r),
                    p[2] + rng.gen_range(-r..r),
                ]
            })
            .collect();
        (a, b)
    }

    pub fn joint_grad_error(rng: &mut ChaCha8Rng) -> f64 {
        let delta = 0.1;
        let (a, b) = close_pair(rng, 6, 4, delta);
        let g: Vec<f64> = joint_loss_grad_b(&a, &b, delta).into_iter().flatten().collect();
        let n = central_diff(&b, |x| joint_loss_slices(&a, x, delta));
        grad_rel_err(&g, &n)
    }

    pub fn velocity_grad_error(rng: &mut ChaCha8Rng, form: VelocityLossForm) -> f64 {
        let a = random_points(rng, 24, 1.0);
        let b = random_points(rng, 24, 1.0);
        let g: Vec<f64> = velocity_loss_grad_b(&a, &b, 4, 1e-6, form).into_iter().flatten().collect();
        let n = central_diff(&b, |x| velocity_loss_slices(&a, x, 4, 1e-6, form));
        grad_rel_err(&g, &n)
    }

    /// Directional derivative of the training loss along a random direction,
    /// analytic against central differences.
    pub fn mlp_probe_error(seed: u64) -> f64 {
        let mut rng = chain_rng(seed, 0);
        let arch = MlpArchitecture {
            frames: 3,
            joints: 2,
            hidden: 16,
            hidden_layers: 3,
            time_dim: 8,
            cond_dim: 4,
        };
        let mut model = MlpDenoiser::init(arch, NoiseSchedule::default(), &mut rng);
        let batch = 5;
        let input = DMatrix::from_fn(arch.input_dim(), batch, |_, _| rng.gen_range(-1.0..1.0));
        let target = DMatrix::from_fn(arch.layout().len(), batch, |_, _| rng.gen_range(-1.0..1.0));
        let params = model.params();
        let dir: Vec<f64> = (0..params.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grads) = model.loss_and_grad(&input, &target);
        let analytic: f64 = grads.flatten().iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut at = |s: f64| {
            let p: Vec<f64> = params.iter().zip(&dir).map(|(p, d)| p + s * d).collect();
            model.set_params(&p).unwrap();
            model.loss_and_grad(&input, &target).0
        };
        let h = 1e-5;
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
    }

    fn sample_axis(p: Vec3, q: Vec3, spacing: f64) -> Vec<Vec3> {
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
        let n = (len / spacing).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1]), p[2] + s * (q[2] - p[2])]
            })
            .collect()
    }

    /// Overlap verdict from points sampled along every capsule axis at
    /// `spacing`, plus whether any bone pair sits within `band` of touching.
    pub fn point_sampled_overlap(a: &[Vec3], b: &[Vec3], skeleton: &SkeletonSpec, spacing: f64, band: f64) -> (bool, bool) {
        let ca = pose_to_capsules(a, skeleton).unwrap().capsules;
        let cb = pose_to_capsules(b, skeleton).unwrap().capsules;
        let pa: Vec<Vec<Vec3>> = ca.iter().map(|c| sample_axis(c.p, c.q, spacing)).collect();
        let pb: Vec<Vec<Vec3>> = cb.iter().map(|c| sample_axis(c.p, c.q, spacing)).collect();
        let (mut overlap, mut marginal) = (false, false);
        for (i, x) in ca.iter().enumerate() {
            for (j, y) in cb.iter().enumerate() {
                let reach = x.radius + y.radius;
                // bounding-sphere rejection
                let mid = |c: &duet_guidance::sync::Capsule| [(c.p[0] + c.q[0]) / 2.0, (c.p[1] + c.q[1]) / 2.0, (c.p[2] + c.q[2]) / 2.0];
                let half = |c: &duet_guidance::sync::Capsule| {
                    ((c.q[0] - c.p[0]).powi(2) + (c.q[1] - c.p[1]).powi(2) + (c.q[2] - c.p[2]).powi(2)).sqrt() / 2.0
                };
                let (mx, my) = (mid(x), mid(y));
                let centre = ((mx[0] - my[0]).powi(2) + (mx[1] - my[1]).powi(2) + (mx[2] - my[2]).powi(2)).sqrt();
                if centre - half(x) - half(y) > reach + band {
                    continue;
                }
                let mut best = f64::INFINITY;
                for p in &pa[i] {
                    for q in &pb[j] {
                        best = best.min((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2));
                    }
                }
                let depth = reach - best.sqrt();
                if depth > band {
                    return (true, false);
                }
                overlap |= depth > 0.0;
                marginal |= depth.abs() <= band;
            }
        }
        (overlap, marginal)
    }

    /// Two jittered rest poses with a random horizontal offset between them.
    pub fn random_pose_pair(rng: &mut ChaCha8Rng, skeleton: &SkeletonSpec) -> (Vec<Vec3>, Vec<Vec3>) {
        let pose = |at: [f64; 2], rng: &mut ChaCha8Rng| -> Vec<Vec3> {
            skeleton
                .rest_offsets()
                .iter()
                .map(|o| {
                    [
                        o[0] + at[0] + rng.gen_range(-0.15..0.15),
                        o[1] + REST_PELVIS_HEIGHT + rng.gen_range(-0.15..0.15),
                        o[2] + at[1] + rng.gen_range(-0.15..0.15),
                    ]
                })
                .collect()
        };
        let a = pose([0.0, 0.0], rng);
        let at = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
        let b = pose(at, rng);
        (a, b)
    }
}
