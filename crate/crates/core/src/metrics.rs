//! Evaluation metrics: trajectory adherence, interpenetration, tail velocity
//! similarity, diversity and jerk.

use rand::Rng;

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, SkeletonSpec, Trajectory, TwoAgentMotion};
use crate::sync::{frame_conflicts, velocity_loss_slices, VelocityLossForm};

/// Speed below which a velocity counts as zero, meters per frame.
pub const VELOCITY_EPSILON: f64 = 1e-6;

/// Root-mean-square ground-plane distance between the root path and the target.
pub fn trajectory_rmse(motion: &MotionSequence, target: &Trajectory, skeleton: &SkeletonSpec) -> Result<f64> {
    motion.check_skeleton(skeleton)?;
    if motion.frames() != target.len() {
        return Err(Error::Shape {
            what: "trajectory length",
            expected: motion.frames(),
            got: target.len(),
        });
    }
    let root = skeleton.root_index();
    let sq: f64 = target
        .points()
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let r = motion.joint(f, root);
            (r[0] - p[0]).powi(2) + (r[2] - p[1]).powi(2)
        })
        .sum();
    Ok((sq / target.len() as f64).sqrt())
}

/// Frames at which the agents' capsules overlap.
pub fn penetration_frames(x: &TwoAgentMotion, skeleton: &SkeletonSpec) -> usize {
    frame_conflicts(x, skeleton).iter().filter(|c| c.is_conflict()).count()
}

/// Mean per-joint cosine similarity of the two agents' velocities over the
/// last `tail` velocity frames.
pub fn final_velocity_similarity(x: &TwoAgentMotion, tail: usize) -> Result<f64> {
    let frames = x.frames();
    if tail == 0 || tail > frames - 1 {
        return Err(Error::param("K", format!("must be in [1, {}], got {tail}", frames - 1)));
    }
    let joints = x.agent_a.joints();
    let start = (frames - 1 - tail) * joints;
    let a = &x.agent_a.positions()[start..];
    let b = &x.agent_b.positions()[start..];
    let total = velocity_loss_slices(a, b, joints, VELOCITY_EPSILON, VelocityLossForm::Cosine);
    Ok(total / (tail * joints) as f64)
}

fn flat_distance(a: &TwoAgentMotion, b: &TwoAgentMotion) -> f64 {
    a.to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Mean flat Euclidean distance over `n_pairs` random distinct pairs.
pub fn diversity(motions: &[TwoAgentMotion], n_pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    if motions.len() < 2 {
        return Err(Error::param("motions", "diversity needs at least 2 motions"));
    }
    if n_pairs == 0 {
        return Err(Error::param("n_pairs", "must be positive"));
    }
    let n = motions.len();
    let total: f64 = (0..n_pairs)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            flat_distance(&motions[i], &motions[j])
        })
        .sum();
    Ok(total / n_pairs as f64)
}

/// Mean flat distance over every unordered pair.
pub fn diversity_exhaustive(motions: &[TwoAgentMotion]) -> Result<f64> {
    if motions.len() < 2 {
        return Err(Error::param("motions", "diversity needs at least 2 motions"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..motions.len() {
        for j in i + 1..motions.len() {
            total += flat_distance(&motions[i], &motions[j]);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean norm of the third finite difference over joints and frames (m/frame³).
pub fn smoothness(motion: &MotionSequence) -> Result<f64> {
    let frames = motion.frames();
    if frames < 4 {
        return Err(Error::param("frames", format!("jerk needs at least 4 frames, got {frames}")));
    }
    let joints = motion.joints();
    let mut total = 0.0;
    for f in 0..frames - 3 {
        for j in 0..joints {
            let p: Vec<_> = (0..4).map(|k| motion.joint(f + k, j)).collect();
            let jerk: f64 = (0..3)
                .map(|c| (p[3][c] - 3.0 * p[2][c] + 3.0 * p[1][c] - p[0][c]).powi(2))
                .sum::<f64>()
                .sqrt();
            total += jerk;
        }
    }
    Ok(total / ((frames - 3) * joints) as f64)
}

/// Jerk averaged over both agents.
pub fn pair_smoothness(x: &TwoAgentMotion) -> Result<f64> {
    Ok(0.5 * (smoothness(&x.agent_a)? + smoothness(&x.agent_b)?))
}
