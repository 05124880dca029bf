//! Skeletal motion types: single-agent sequences, the leader/follower pair,
//! ground-plane trajectories and categorical condition labels.
//!
//! Coordinates are meters with the ground plane spanned by axes 0 and 2 and
//! axis 1 pointing up.

mod io;
mod skeleton;

pub use io::{load_motion, load_trajectory, save_motion, save_trajectory, MOTION_FORMAT_VERSION};
pub use skeleton::{SkeletonSpec, DEFAULT_JOINT_NAMES, REST_PELVIS_HEIGHT};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Index arithmetic for the flattened two-agent tensor, ordered
/// `[agent][frame][joint][coord]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionLayout {
    pub frames: usize,
    pub joints: usize,
}

impl MotionLayout {
    pub fn new(frames: usize, joints: usize) -> Self {
        Self { frames, joints }
    }

    pub fn agent_len(&self) -> usize {
        self.frames * self.joints * 3
    }

    pub fn len(&self) -> usize {
        2 * self.agent_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, agent: Agent, frame: usize, joint: usize, coord: usize) -> usize {
        ((agent.index() * self.frames + frame) * self.joints + joint) * 3 + coord
    }

    pub fn agent_range(&self, agent: Agent) -> std::ops::Range<usize> {
        let start = agent.index() * self.agent_len();
        start..start + self.agent_len()
    }

    /// Flat indices of an agent's root ground-plane channels, frame-major,
    /// two entries (axis 0, axis 2) per frame.
    pub fn root_ground_channels(&self, agent: Agent, root: usize) -> Vec<usize> {
        (0..self.frames)
            .flat_map(|f| [self.index(agent, f, root, 0), self.index(agent, f, root, 2)])
            .collect()
    }
}

/// Which of the two agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Agent {
    /// Leader, `x_a`.
    A,
    /// Follower, `x_b`.
    B,
}

impl Agent {
    pub fn index(self) -> usize {
        match self {
            Agent::A => 0,
            Agent::B => 1,
        }
    }

    pub fn other(self) -> Agent {
        match self {
            Agent::A => Agent::B,
            Agent::B => Agent::A,
        }
    }
}

/// A fixed-framerate sequence of poses for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    joints: usize,
    fps: f64,
    positions: Vec<Vec3>,
}

impl MotionSequence {
    /// `positions` is frame-major: `positions[frame * joints + joint]`.
    pub fn new(joints: usize, fps: f64, positions: Vec<Vec3>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Motion("joint count must be positive".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Motion(format!("fps must be positive, got {fps}")));
        }
        if !positions.len().is_multiple_of(joints) {
            return Err(Error::Motion(format!(
                "{} positions is not a whole number of {joints}-joint frames",
                positions.len()
            )));
        }
        let frames = positions.len() / joints;
        if frames < 2 {
            return Err(Error::Motion(format!("need at least 2 frames, got {frames}")));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Motion("non-finite coordinate".into()));
        }
        Ok(Self {
            joints,
            fps,
            positions,
        })
    }

    pub fn frames(&self) -> usize {
        self.positions.len() / self.joints
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    #[inline]
    pub fn joint(&self, frame: usize, joint: usize) -> Vec3 {
        self.positions[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vec3] {
        &self.positions[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn check_skeleton(&self, skeleton: &SkeletonSpec) -> Result<()> {
        if self.joints != skeleton.joint_count() {
            return Err(Error::Shape {
                what: "motion joints vs skeleton",
                expected: skeleton.joint_count(),
                got: self.joints,
            });
        }
        Ok(())
    }

    /// Same motion translated by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
            .collect();
        Self {
            positions,
            ..self.clone()
        }
    }

    pub(crate) fn from_flat(joints: usize, fps: f64, flat: &[f64]) -> Result<Self> {
        let positions = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(joints, fps, positions)
    }

    pub(crate) fn write_flat(&self, out: &mut [f64]) {
        for (chunk, p) in out.chunks_exact_mut(3).zip(&self.positions) {
            chunk.copy_from_slice(p);
        }
    }
}

/// The ordered pair `{leader, follower}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAgentMotion {
    pub agent_a: MotionSequence,
    pub agent_b: MotionSequence,
}

impl TwoAgentMotion {
    pub fn new(agent_a: MotionSequence, agent_b: MotionSequence) -> Result<Self> {
        if agent_a.frames() != agent_b.frames() {
            return Err(Error::Shape {
                what: "agent frame count",
                expected: agent_a.frames(),
                got: agent_b.frames(),
            });
        }
        if agent_a.joints() != agent_b.joints() {
            return Err(Error::Shape {
                what: "agent joint count",
                expected: agent_a.joints(),
                got: agent_b.joints(),
            });
        }
        if agent_a.fps() != agent_b.fps() {
            return Err(Error::Motion(format!(
                "agents disagree on fps ({} vs {})",
                agent_a.fps(),
                agent_b.fps()
            )));
        }
        Ok(Self { agent_a, agent_b })
    }

    pub fn layout(&self) -> MotionLayout {
        MotionLayout::new(self.agent_a.frames(), self.agent_a.joints())
    }

    pub fn frames(&self) -> usize {
        self.agent_a.frames()
    }

    pub fn fps(&self) -> f64 {
        self.agent_a.fps()
    }

    pub fn agent(&self, agent: Agent) -> &MotionSequence {
        match agent {
            Agent::A => &self.agent_a,
            Agent::B => &self.agent_b,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut out = vec![0.0; layout.len()];
        self.agent_a.write_flat(&mut out[layout.agent_range(Agent::A)]);
        self.agent_b.write_flat(&mut out[layout.agent_range(Agent::B)]);
        out
    }

    pub fn from_flat(layout: MotionLayout, fps: f64, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::Shape {
                what: "flat motion tensor",
                expected: layout.len(),
                got: flat.len(),
            });
        }
        let a = MotionSequence::from_flat(layout.joints, fps, &flat[layout.agent_range(Agent::A)])?;
        let b = MotionSequence::from_flat(layout.joints, fps, &flat[layout.agent_range(Agent::B)])?;
        Self::new(a, b)
    }
}

/// Exchanges leader and follower. Two-person interaction is order-invariant,
/// so every symmetric metric is unchanged by this.
pub fn swap_agents(x: &TwoAgentMotion) -> TwoAgentMotion {
    TwoAgentMotion {
        agent_a: x.agent_b.clone(),
        agent_b: x.agent_a.clone(),
    }
}

/// Per-frame ground-plane positions, optionally with height.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    fps: f64,
    points: Vec<[f64; 2]>,
    heights: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn planar(fps: f64, points: Vec<[f64; 2]>) -> Result<Self> {
        Self::build(fps, points, None)
    }

    pub fn with_height(fps: f64, points: Vec<Vec3>) -> Result<Self> {
        let heights = points.iter().map(|p| p[1]).collect();
        let planar = points.iter().map(|p| [p[0], p[2]]).collect();
        Self::build(fps, planar, Some(heights))
    }

    fn build(fps: f64, points: Vec<[f64; 2]>, heights: Option<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Motion(format!(
                "trajectory needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().chain(heights.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Motion("non-finite trajectory value".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Motion(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            fps,
            points,
            heights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn heights(&self) -> Option<&[f64]> {
        self.heights.as_deref()
    }

    pub fn translated(&self, dx: f64, dz: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] + dx, p[1] + dz]).collect(),
            ..self.clone()
        }
    }
}

/// Root joint projected onto the ground plane, one point per frame.
pub fn project_root_trajectory(motion: &MotionSequence, skeleton: &SkeletonSpec) -> Result<Trajectory> {
    motion.check_skeleton(skeleton)?;
    let root = skeleton.root_index();
    let points = (0..motion.frames())
        .map(|f| {
            let p = motion.joint(f, root);
            [p[0], p[2]]
        })
        .collect();
    Trajectory::planar(motion.fps(), points)
}

/// Root joint path including height.
pub fn project_root_trajectory_3d(motion: &MotionSequence, skeleton: &SkeletonSpec) -> Result<Trajectory> {
    motion.check_skeleton(skeleton)?;
    let root = skeleton.root_index();
    let points = (0..motion.frames()).map(|f| motion.joint(f, root)).collect();
    Trajectory::with_height(motion.fps(), points)
}

/// Registered interaction categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InteractionKind {
    CircleDuet,
    ApproachCollide,
    MirrorWalk,
    Orbit,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 4] = [
        InteractionKind::CircleDuet,
        InteractionKind::ApproachCollide,
        InteractionKind::MirrorWalk,
        InteractionKind::Orbit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InteractionKind::CircleDuet => "circle-duet",
            InteractionKind::ApproachCollide => "approach-collide",
            InteractionKind::MirrorWalk => "mirror-walk",
            InteractionKind::Orbit => "orbit",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "interaction kind",
                name: s.to_string(),
            })
    }
}

/// Categorical conditioning signal with its one-hot embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConditionLabel {
    pub category: InteractionKind,
}

impl ConditionLabel {
    pub const EMBEDDING_DIM: usize = InteractionKind::ALL.len();

    pub fn new(category: InteractionKind) -> Self {
        Self { category }
    }

    pub fn embedding(&self) -> [f64; Self::EMBEDDING_DIM] {
        let mut e = [0.0; Self::EMBEDDING_DIM];
        e[self.category.index()] = 1.0;
        e
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_pair(frames: usize, joints: usize, seed: u64) -> TwoAgentMotion {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut seq = || {
            let pos = (0..frames * joints)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.0)])
                .collect();
            MotionSequence::new(joints, 30.0, pos).unwrap()
        };
        let a = seq();
        let b = seq();
        TwoAgentMotion::new(a, b).unwrap()
    }

    #[test]
    fn constant_root_projects_to_constant_trajectory() {
        let s = SkeletonSpec::default();
        let m = MotionSequence::new(22, 30.0, vec![[0.0; 3]; 22 * 5]).unwrap();
        let tr = project_root_trajectory(&m, &s).unwrap();
        assert_eq!(tr.len(), 5);
        assert!(tr.points().iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn linear_root_projects_to_line() {
        let s = SkeletonSpec::default();
        let frames = 11;
        let mut pos = vec![[0.0; 3]; 22 * frames];
        for f in 0..frames {
            pos[f * 22] = [2.0 * f as f64 / (frames - 1) as f64, 0.0, 0.0];
        }
        let m = MotionSequence::new(22, 30.0, pos).unwrap();
        let tr = project_root_trajectory(&m, &s).unwrap();
        assert_eq!(tr.points()[0], [0.0, 0.0]);
        assert_eq!(tr.points()[frames - 1], [2.0, 0.0]);
        for (f, p) in tr.points().iter().enumerate() {
            assert!((p[0] - 0.2 * f as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_matches_direct_indexing() {
        let s = SkeletonSpec::default();
        let x = random_pair(17, 22, 3);
        let tr = project_root_trajectory(&x.agent_a, &s).unwrap();
        let flat = x.to_flat();
        let layout = x.layout();
        for f in 0..17 {
            assert_eq!(tr.points()[f][0], flat[layout.index(Agent::A, f, 0, 0)]);
            assert_eq!(tr.points()[f][1], flat[layout.index(Agent::A, f, 0, 2)]);
        }
    }

    #[test]
    fn projection_rejects_joint_mismatch() {
        let m = MotionSequence::new(4, 30.0, vec![[0.0; 3]; 8]).unwrap();
        assert!(project_root_trajectory(&m, &SkeletonSpec::default()).is_err());
    }

    #[test]
    fn swap_is_an_involution() {
        let x = random_pair(6, 22, 9);
        assert_eq!(swap_agents(&swap_agents(&x)), x);
        assert_eq!(swap_agents(&x).agent_a, x.agent_b);
    }

    #[test]
    fn single_frame_rejected() {
        assert!(MotionSequence::new(2, 30.0, vec![[0.0; 3]; 2]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let x = random_pair(5, 3, 1);
        let back = TwoAgentMotion::from_flat(x.layout(), 30.0, &x.to_flat()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn kind_names_parse() {
        for k in InteractionKind::ALL {
            assert_eq!(k.name().parse::<InteractionKind>().unwrap(), k);
        }
        assert!("tango".parse::<InteractionKind>().is_err());
        assert_eq!(ConditionLabel::new(InteractionKind::MirrorWalk).embedding(), [0.0, 0.0, 1.0, 0.0]);
    }
}
