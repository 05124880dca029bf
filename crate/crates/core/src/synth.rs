//! Procedural two-agent motion families and trajectory conditions.
//!
//! Root paths are exact closed-form curves; limbs get a sinusoidal gait plus
//! seeded smooth noise. The root's ground-plane channels carry no noise, so
//! the construction geometry (crossing frame, lane spacing, orbit radius)
//! holds exactly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::motion::{
    ConditionLabel, InteractionKind, MotionSequence, SkeletonSpec, Trajectory, TwoAgentMotion, Vec3,
    REST_PELVIS_HEIGHT,
};

pub type ScenarioKind = InteractionKind;

pub const DEFAULT_FRAMES: usize = 210;
pub const DEFAULT_FPS: f64 = 30.0;

/// splitmix64 finaliser, used to derive independent per-item seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct AgentPath {
    root: Vec<[f64; 2]>,
    heading: Vec<[f64; 2]>,
    gait: f64,
}

fn normalize2(v: [f64; 2], fallback: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n < 1e-12 {
        fallback
    } else {
        [v[0] / n, v[1] / n]
    }
}

fn headings_from_motion(root: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = root.len();
    let mut out = Vec::with_capacity(n);
    let mut last = [0.0, 1.0];
    for f in 0..n {
        let (a, b) = if f + 1 < n { (f, f + 1) } else { (f - 1, f) };
        let h = normalize2([root[b][0] - root[a][0], root[b][1] - root[a][1]], last);
        last = h;
        out.push(h);
    }
    out
}

fn facing(from: &[[f64; 2]], to: &[[f64; 2]]) -> Vec<[f64; 2]> {
    from.iter()
        .zip(to)
        .map(|(a, b)| normalize2([b[0] - a[0], b[1] - a[1]], [0.0, 1.0]))
        .collect()
}

fn rotate2(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

fn root_paths(kind: ScenarioKind, frames: usize, rng: &mut ChaCha8Rng) -> (AgentPath, AgentPath) {
    let u = |f: usize| f as f64 / (frames - 1) as f64;
    let spin = rng.gen_range(0.0..2.0 * PI);
    match kind {
        InteractionKind::CircleDuet => {
            let radius = 1.5;
            let sweep = rng.gen_range(0.5..1.0) * PI;
            let a: Vec<_> = (0..frames)
                .map(|f| {
                    let th = spin + sweep * u(f);
                    [radius * th.cos(), radius * th.sin()]
                })
                .collect();
            let b: Vec<_> = a.iter().map(|p| [-p[0], -p[1]]).collect();
            let (ha, hb) = (headings_from_motion(&a), headings_from_motion(&b));
            (
                AgentPath { root: a, heading: ha, gait: 1.0 },
                AgentPath { root: b, heading: hb, gait: 1.0 },
            )
        }
        InteractionKind::ApproachCollide => {
            let half = rng.gen_range(1.5..2.5);
            let lateral = rng.gen_range(0.0..0.1);
            let mid = (frames / 2) as f64 / (frames - 1) as f64;
            // both roots pass the origin region at frame L/2
            let a: Vec<_> = (0..frames)
                .map(|f| rotate2([half * 2.0 * (u(f) - mid), 0.0], spin))
                .collect();
            let b: Vec<_> = (0..frames)
                .map(|f| rotate2([-half * 2.0 * (u(f) - mid), lateral], spin))
                .collect();
            let (ha, hb) = (headings_from_motion(&a), headings_from_motion(&b));
            (
                AgentPath { root: a, heading: ha, gait: 1.0 },
                AgentPath { root: b, heading: hb, gait: 1.0 },
            )
        }
        InteractionKind::MirrorWalk => {
            let length = rng.gen_range(2.0..4.0);
            let a: Vec<_> = (0..frames).map(|f| rotate2([0.0, length * u(f)], spin)).collect();
            let b: Vec<_> = (0..frames).map(|f| rotate2([1.0, length * u(f)], spin)).collect();
            let (ha, hb) = (headings_from_motion(&a), headings_from_motion(&b));
            (
                AgentPath { root: a, heading: ha, gait: 1.0 },
                AgentPath { root: b, heading: hb, gait: 1.0 },
            )
        }
        InteractionKind::Orbit => {
            let center = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let sweep = rng.gen_range(1.0..2.0) * PI;
            let a = vec![center; frames];
            let b: Vec<_> = (0..frames)
                .map(|f| {
                    let th = spin + sweep * u(f);
                    [center[0] + th.cos(), center[1] + th.sin()]
                })
                .collect();
            let ha = facing(&a, &b);
            let hb = headings_from_motion(&b);
            (
                AgentPath { root: a, heading: ha, gait: 0.3 },
                AgentPath { root: b, heading: hb, gait: 1.0 },
            )
        }
    }
}

/// Smooth per-joint noise: a few low-frequency sinusoids per coordinate.
struct SmoothNoise {
    terms: Vec<[(f64, f64, f64); 3]>,
}

impl SmoothNoise {
    fn new(joints: usize, rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..joints * 3)
            .map(|_| {
                let mut t = [(0.0, 0.0, 0.0); 3];
                for slot in &mut t {
                    *slot = (rng.gen_range(0.0..0.01), rng.gen_range(0.2..1.5), rng.gen_range(0.0..2.0 * PI));
                }
                t
            })
            .collect();
        Self { terms }
    }

    fn at(&self, joint: usize, coord: usize, seconds: f64) -> f64 {
        self.terms[joint * 3 + coord]
            .iter()
            .map(|&(a, hz, ph)| a * (2.0 * PI * hz * seconds + ph).sin())
            .sum()
    }
}

/// Gait offsets in the body frame (x lateral, y up, z forward).
fn gait_offset(joint: usize, phase: f64, amp: f64) -> Vec3 {
    let s = phase.sin();
    let lift = 0.03 * amp * phase.sin().max(0.0);
    let lift_r = 0.03 * amp * (-phase.sin()).max(0.0);
    match joint {
        4 => [0.0, 0.0, 0.08 * amp * s],
        5 => [0.0, 0.0, -0.08 * amp * s],
        7 | 10 => [0.0, lift, 0.15 * amp * s],
        8 | 11 => [0.0, lift_r, -0.15 * amp * s],
        18 => [0.0, 0.0, -0.08 * amp * s],
        19 => [0.0, 0.0, 0.08 * amp * s],
        20 => [0.0, 0.02 * amp * s.abs(), -0.15 * amp * s],
        21 => [0.0, 0.02 * amp * s.abs(), 0.15 * amp * s],
        _ => [0.0; 3],
    }
}

fn build_agent(
    path: &AgentPath,
    skeleton: &SkeletonSpec,
    fps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MotionSequence> {
    let joints = skeleton.joint_count();
    let rest = skeleton.rest_offsets();
    let root = skeleton.root_index();
    let feet = skeleton.foot_joints();
    let noise = SmoothNoise::new(joints, rng);
    let cadence = rng.gen_range(0.8..1.2);
    let phase0 = rng.gen_range(0.0..2.0 * PI);
    let mut positions = Vec::with_capacity(path.root.len() * joints);
    for (f, (r, h)) in path.root.iter().zip(&path.heading).enumerate() {
        let secs = f as f64 / fps;
        let phase = phase0 + 2.0 * PI * cadence * secs;
        let bob = 0.01 * path.gait * (2.0 * phase).sin();
        // body x axis -> (h.z, -h.x), body z axis -> (h.x, h.z)
        let to_world = |l: Vec3| [l[0] * h[1] + l[2] * h[0], l[1], -l[0] * h[0] + l[2] * h[1]];
        for (j, rj) in rest.iter().enumerate().take(joints) {
            if j == root {
                positions.push([r[0], REST_PELVIS_HEIGHT + bob, r[1]]);
                continue;
            }
            let g = gait_offset(j, phase, path.gait);
            let lift = if feet.contains(&j) { 0.0 } else { bob };
            let mut local = [rj[0] + g[0], rj[1] + g[1] + lift, rj[2] + g[2]];
            for (c, v) in local.iter_mut().enumerate() {
                if c == 1 && feet.contains(&j) {
                    continue;
                }
                *v += noise.at(j, c, secs);
            }
            let w = to_world(local);
            positions.push([r[0] + w[0], REST_PELVIS_HEIGHT + w[1], r[1] + w[2]]);
        }
    }
    MotionSequence::new(joints, fps, positions)
}

/// One procedural scenario; a pure function of its arguments.
pub fn generate_scenario(
    kind: ScenarioKind,
    frames: usize,
    fps: f64,
    seed: u64,
    skeleton: &SkeletonSpec,
) -> Result<(TwoAgentMotion, ConditionLabel)> {
    if frames < 2 {
        return Err(Error::param("frames", format!("need at least 2, got {frames}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pa, pb) = root_paths(kind, frames, &mut rng);
    let a = build_agent(&pa, skeleton, fps, &mut rng)?;
    let b = build_agent(&pb, skeleton, fps, &mut rng)?;
    Ok((TwoAgentMotion::new(a, b)?, ConditionLabel::new(kind)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryShape {
    Line,
    Circle,
    SCurve,
}

impl TrajectoryShape {
    pub const ALL: [TrajectoryShape; 3] = [TrajectoryShape::Line, TrajectoryShape::Circle, TrajectoryShape::SCurve];
}

impl FromStr for TrajectoryShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Self::Line),
            "circle" => Ok(Self::Circle),
            "s-curve" => Ok(Self::SCurve),
            other => Err(Error::Unknown {
                kind: "trajectory shape",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for TrajectoryShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Line => "line",
            Self::Circle => "circle",
            Self::SCurve => "s-curve",
        })
    }
}

/// Resamples a dense polyline at `n` points evenly spaced in arc length.
fn resample_by_arc_length(dense: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let w = if span > 0.0 { ((s - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (dense[seg], dense[seg + 1]);
        out.push([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]);
    }
    out
}

/// `frames` ground-plane points along a named shape, evenly spaced in arc
/// length. Lines run from the origin along +x; circles are centered on the
/// origin and start at `(scale, 0)`; the s-curve advances monotonically in x.
pub fn generate_trajectory_condition(shape: TrajectoryShape, frames: usize, scale: f64, fps: f64) -> Result<Trajectory> {
    if frames < 2 {
        return Err(Error::param("frames", format!("need at least 2, got {frames}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", format!("must be > 0, got {scale}")));
    }
    let points = match shape {
        TrajectoryShape::Line => (0..frames)
            .map(|i| [scale * i as f64 / (frames - 1) as f64, 0.0])
            .collect(),
        TrajectoryShape::Circle => (0..frames)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / frames as f64;
                [scale * th.cos(), scale * th.sin()]
            })
            .collect(),
        TrajectoryShape::SCurve => {
            let dense: Vec<[f64; 2]> = (0..=4000)
                .map(|i| {
                    let x = scale * i as f64 / 4000.0;
                    [x, 0.25 * scale * (2.0 * PI * x / scale).sin()]
                })
                .collect();
            resample_by_arc_length(&dense, frames)
        }
    };
    Trajectory::planar(fps, points)
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub motion: TwoAgentMotion,
    pub label: ConditionLabel,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn pairs(&self) -> Vec<(TwoAgentMotion, ConditionLabel)> {
        self.items.iter().map(|i| (i.motion.clone(), i.label)).collect()
    }

    /// Elementwise mean of the flattened motions, optionally restricted to one kind.
    pub fn mean(&self, kind: Option<ScenarioKind>) -> Result<Vec<f64>> {
        let selected: Vec<&DatasetItem> = self
            .items
            .iter()
            .filter(|i| kind.is_none_or(|k| i.label.category == k))
            .collect();
        let first = selected.first().ok_or_else(|| Error::param("dataset", "no items of the requested kind"))?;
        let mut acc = vec![0.0; first.motion.layout().len()];
        for item in &selected {
            for (a, v) in acc.iter_mut().zip(item.motion.to_flat()) {
                *a += v;
            }
        }
        let n = selected.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}

/// `n_per_kind` scenarios of each kind with derived per-item seeds.
pub fn build_dataset(
    n_per_kind: usize,
    kinds: &[ScenarioKind],
    frames: usize,
    fps: f64,
    seed: u64,
    skeleton: &SkeletonSpec,
) -> Result<Dataset> {
    if n_per_kind == 0 {
        return Err(Error::param("n_per_kind", "must be at least 1"));
    }
    let mut items = Vec::with_capacity(n_per_kind * kinds.len());
    for &kind in kinds {
        for i in 0..n_per_kind {
            let item_seed = derive_seed(seed, ((kind.index() as u64) << 32) | i as u64);
            let (motion, label) = generate_scenario(kind, frames, fps, item_seed, skeleton)?;
            items.push(DatasetItem {
                motion,
                label,
                seed: item_seed,
            });
        }
    }
    Ok(Dataset { items })
}
