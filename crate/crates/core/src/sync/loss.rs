//! Inter-agent losses on joint positions and their analytic gradients with
//! respect to the follower.
//!
//! Positions are frame-major slices (`frame * joints + joint`).

use std::fmt;
use std::str::FromStr;

use super::capsule::{dot, norm, scale, sub};
use crate::error::{Error, Result};
use crate::motion::{MotionSequence, Vec3};

/// Sum over frames and joints of `max(0, delta - |p_a - p_b|)^2`.
pub fn joint_loss_slices(a: &[Vec3], b: &[Vec3], delta: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&pa, &pb)| {
            let h = delta - norm(sub(pa, pb));
            if h > 0.0 {
                h * h
            } else {
                0.0
            }
        })
        .sum()
}

/// Gradient of [`joint_loss_slices`] with respect to `b`. Coincident joints
/// have no defined direction and contribute zero.
pub fn joint_loss_grad_b(a: &[Vec3], b: &[Vec3], delta: f64) -> Vec<Vec3> {
    a.iter()
        .zip(b)
        .map(|(&pa, &pb)| {
            let diff = sub(pb, pa);
            let d = norm(diff);
            let h = delta - d;
            if h > 0.0 && d > 0.0 {
                scale(diff, -2.0 * h / d)
            } else {
                [0.0; 3]
            }
        })
        .collect()
}

pub fn joint_loss(seq_a: &MotionSequence, seq_b: &MotionSequence, delta: f64) -> Result<f64> {
    check_pair(seq_a, seq_b)?;
    Ok(joint_loss_slices(seq_a.positions(), seq_b.positions(), delta))
}

/// How corresponding joint velocities are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityLossForm {
    /// `cos(v_a, v_b)`, scale-free.
    #[default]
    Cosine,
    /// Raw `v_a · v_b`.
    Dot,
}

impl FromStr for VelocityLossForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "dot" => Ok(Self::Dot),
            other => Err(Error::Unknown {
                kind: "velocity loss form",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for VelocityLossForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Dot => "dot",
        })
    }
}

fn velocities(p: &[Vec3], joints: usize) -> Vec<Vec3> {
    let frames = p.len() / joints;
    let mut v = Vec::with_capacity((frames.saturating_sub(1)) * joints);
    for f in 0..frames.saturating_sub(1) {
        for j in 0..joints {
            v.push(sub(p[(f + 1) * joints + j], p[f * joints + j]));
        }
    }
    v
}

/// Sum over consecutive-frame velocities of the per-joint similarity.
/// Cosine terms where either speed is below `eps` contribute 0.
pub fn velocity_loss_slices(a: &[Vec3], b: &[Vec3], joints: usize, eps: f64, form: VelocityLossForm) -> f64 {
    let va = velocities(a, joints);
    let vb = velocities(b, joints);
    va.iter()
        .zip(&vb)
        .map(|(&x, &y)| match form {
            VelocityLossForm::Dot => dot(x, y),
            VelocityLossForm::Cosine => {
                let (nx, ny) = (norm(x), norm(y));
                if nx < eps || ny < eps {
                    0.0
                } else {
                    dot(x, y) / (nx * ny)
                }
            }
        })
        .sum()
}

/// Gradient of [`velocity_loss_slices`] with respect to `b`, chained through
/// the forward difference.
pub fn velocity_loss_grad_b(a: &[Vec3], b: &[Vec3], joints: usize, eps: f64, form: VelocityLossForm) -> Vec<Vec3> {
    let va = velocities(a, joints);
    let vb = velocities(b, joints);
    let mut grad = vec![[0.0; 3]; b.len()];
    for (k, (&x, &y)) in va.iter().zip(&vb).enumerate() {
        let g = match form {
            VelocityLossForm::Dot => x,
            VelocityLossForm::Cosine => {
                let (nx, ny) = (norm(x), norm(y));
                if nx < eps || ny < eps {
                    continue;
                }
                let c = dot(x, y) / (nx * ny);
                sub(scale(x, 1.0 / (nx * ny)), scale(y, c / (ny * ny)))
            }
        };
        // v[f] = b[f + 1] - b[f]
        let (f, j) = (k / joints, k % joints);
        let next = (f + 1) * joints + j;
        let cur = f * joints + j;
        for c in 0..3 {
            grad[next][c] += g[c];
            grad[cur][c] -= g[c];
        }
    }
    grad
}

pub fn velocity_loss(seq_a: &MotionSequence, seq_b: &MotionSequence, eps: f64, form: VelocityLossForm) -> Result<f64> {
    check_pair(seq_a, seq_b)?;
    Ok(velocity_loss_slices(seq_a.positions(), seq_b.positions(), seq_a.joints(), eps, form))
}

fn check_pair(a: &MotionSequence, b: &MotionSequence) -> Result<()> {
    if a.positions().len() != b.positions().len() || a.joints() != b.joints() {
        return Err(Error::Shape {
            what: "sequence pair size",
            expected: a.positions().len(),
            got: b.positions().len(),
        });
    }
    Ok(())
}
