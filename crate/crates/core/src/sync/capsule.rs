//! Bone capsules and inter-agent overlap tests.

use rayon::prelude::*;

use crate::error::Result;
use crate::motion::{SkeletonSpec, TwoAgentMotion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub p: Vec3,
    pub q: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapsuleSet {
    pub capsules: Vec<Capsule>,
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared distance between segments `[p1, q1]` and `[p2, q2]`. Degenerate
/// (zero-length) segments are treated as points.
pub fn segment_distance_sq(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    const EPS: f64 = 1e-18;
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return dot(r, r);
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = add(p1, scale(d1, s));
    let c2 = add(p2, scale(d2, t));
    let d = sub(c1, c2);
    dot(d, d)
}

/// One capsule per bone, spanning the bone's joints.
pub fn pose_to_capsules(pose: &[Vec3], skeleton: &SkeletonSpec) -> Result<CapsuleSet> {
    if pose.len() != skeleton.joint_count() {
        return Err(crate::error::Error::Shape {
            what: "pose joints vs skeleton",
            expected: skeleton.joint_count(),
            got: pose.len(),
        });
    }
    Ok(CapsuleSet {
        capsules: capsules_unchecked(pose, skeleton),
    })
}

fn capsules_unchecked(pose: &[Vec3], skeleton: &SkeletonSpec) -> Vec<Capsule> {
    skeleton
        .bones()
        .iter()
        .zip(skeleton.radii())
        .map(|(&(p, c), &radius)| Capsule {
            p: pose[p],
            q: pose[c],
            radius,
        })
        .collect()
}

/// An overlapping inter-agent capsule pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub bone_a: usize,
    pub bone_b: usize,
    /// `r_a + r_b - distance`, positive.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Conflict {
    pub contacts: Vec<Contact>,
}

impl Conflict {
    pub fn is_conflict(&self) -> bool {
        !self.contacts.is_empty()
    }
}

fn bounds(caps: &[Capsule]) -> (Vec3, Vec3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in caps {
        for k in 0..3 {
            lo[k] = lo[k].min(c.p[k].min(c.q[k]) - c.radius);
            hi[k] = hi[k].max(c.p[k].max(c.q[k]) + c.radius);
        }
    }
    (lo, hi)
}

fn boxes_overlap(a: &(Vec3, Vec3), b: &(Vec3, Vec3)) -> bool {
    (0..3).all(|k| a.0[k] <= b.1[k] && b.0[k] <= a.1[k])
}

fn contacts_between(a: &[Capsule], b: &[Capsule], first_only: bool) -> Vec<Contact> {
    let mut out = Vec::new();
    if !boxes_overlap(&bounds(a), &bounds(b)) {
        return out;
    }
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            let reach = ca.radius + cb.radius;
            let d2 = segment_distance_sq(ca.p, ca.q, cb.p, cb.q);
            if d2 < reach * reach {
                out.push(Contact {
                    bone_a: i,
                    bone_b: j,
                    depth: reach - d2.sqrt(),
                });
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

/// Every inter-agent capsule pair closer than the sum of radii.
pub fn detect_conflict(pose_a: &[Vec3], pose_b: &[Vec3], skeleton: &SkeletonSpec) -> Conflict {
    let a = capsules_unchecked(pose_a, skeleton);
    let b = capsules_unchecked(pose_b, skeleton);
    Conflict {
        contacts: contacts_between(&a, &b, false),
    }
}

/// Cheaper boolean form of [`detect_conflict`].
pub fn poses_overlap(pose_a: &[Vec3], pose_b: &[Vec3], skeleton: &SkeletonSpec) -> bool {
    let a = capsules_unchecked(pose_a, skeleton);
    let b = capsules_unchecked(pose_b, skeleton);
    !contacts_between(&a, &b, true).is_empty()
}

/// Per-frame conflicts of a two-agent motion, in frame order.
pub fn frame_conflicts(x: &TwoAgentMotion, skeleton: &SkeletonSpec) -> Vec<Conflict> {
    (0..x.frames())
        .into_par_iter()
        .map(|f| detect_conflict(x.agent_a.frame(f), x.agent_b.frame(f), skeleton))
        .collect()
}
