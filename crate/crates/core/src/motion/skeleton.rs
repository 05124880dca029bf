use crate::error::{Error, Result};

/// Joint names of the default 22-joint skeleton, in index order.
pub const DEFAULT_JOINT_NAMES: [&str; 22] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

const DEFAULT_PARENTS: [usize; 22] = [
    0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

/// Rest pose offsets from the pelvis, facing +z with +y up. The pelvis sits
/// at `REST_PELVIS_HEIGHT` above the ground.
const DEFAULT_REST: [[f64; 3]; 22] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.10, -0.01],
    [0.10, -0.46, 0.01],
    [-0.10, -0.46, 0.01],
    [0.0, 0.23, -0.01],
    [0.10, -0.86, -0.02],
    [-0.10, -0.86, -0.02],
    [0.0, 0.35, 0.0],
    [0.10, -0.93, 0.10],
    [-0.10, -0.93, 0.10],
    [0.0, 0.55, 0.0],
    [0.07, 0.47, 0.0],
    [-0.07, 0.47, 0.0],
    [0.0, 0.72, 0.03],
    [0.18, 0.45, 0.0],
    [-0.18, 0.45, 0.0],
    [0.21, 0.18, -0.01],
    [-0.21, 0.18, -0.01],
    [0.23, -0.07, 0.03],
    [-0.23, -0.07, 0.03],
];

pub const REST_PELVIS_HEIGHT: f64 = 0.95;

/// A skeleton is a tree of joints; every bone carries a capsule radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpec {
    joint_count: usize,
    bones: Vec<(usize, usize)>,
    radii: Vec<f64>,
    root_index: usize,
    rest_offsets: Vec<[f64; 3]>,
}

impl SkeletonSpec {
    /// Builds a skeleton, checking that the bones form a tree rooted at `root_index`.
    pub fn new(
        joint_count: usize,
        bones: Vec<(usize, usize)>,
        radii: Vec<f64>,
        root_index: usize,
    ) -> Result<Self> {
        if joint_count == 0 {
            return Err(Error::Skeleton("joint_count must be positive".into()));
        }
        if root_index >= joint_count {
            return Err(Error::Skeleton(format!(
                "root index {root_index} >= joint count {joint_count}"
            )));
        }
        if radii.len() != bones.len() {
            return Err(Error::Skeleton(format!(
                "{} radii for {} bones",
                radii.len(),
                bones.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Skeleton(format!("capsule radius {r} must be > 0")));
        }
        if bones.len() + 1 != joint_count {
            return Err(Error::Skeleton(format!(
                "a tree over {joint_count} joints needs {} bones, got {}",
                joint_count - 1,
                bones.len()
            )));
        }
        let mut parent = vec![None; joint_count];
        for &(p, c) in &bones {
            if p >= joint_count || c >= joint_count {
                return Err(Error::Skeleton(format!(
                    "bone ({p}, {c}) references a joint >= {joint_count}"
                )));
            }
            if c == root_index || parent[c].is_some() || p == c {
                return Err(Error::Skeleton(format!(
                    "bone ({p}, {c}) breaks the tree structure"
                )));
            }
            parent[c] = Some(p);
        }
        // every joint must reach the root without cycles
        for start in 0..joint_count {
            let mut j = start;
            let mut hops = 0;
            while j != root_index {
                j = parent[j].ok_or_else(|| {
                    Error::Skeleton(format!("joint {start} is not connected to the root"))
                })?;
                hops += 1;
                if hops > joint_count {
                    return Err(Error::Skeleton("bones contain a cycle".into()));
                }
            }
        }
        Ok(Self {
            joint_count,
            bones,
            radii,
            root_index,
            rest_offsets: vec![[0.0; 3]; joint_count],
        })
    }

    /// The canonical 22-joint skeleton with uniform capsule radius.
    pub fn with_radius(radius: f64) -> Result<Self> {
        let bones: Vec<_> = (1..22).map(|c| (DEFAULT_PARENTS[c], c)).collect();
        let radii = vec![radius; bones.len()];
        let mut s = Self::new(22, bones, radii, 0)?;
        s.rest_offsets = DEFAULT_REST.to_vec();
        Ok(s)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    /// Rest-pose joint offsets relative to the root (all zero for custom skeletons).
    pub fn rest_offsets(&self) -> &[[f64; 3]] {
        &self.rest_offsets
    }

    pub fn with_rest_offsets(mut self, offsets: Vec<[f64; 3]>) -> Result<Self> {
        if offsets.len() != self.joint_count {
            return Err(Error::Shape {
                what: "rest offsets",
                expected: self.joint_count,
                got: offsets.len(),
            });
        }
        self.rest_offsets = offsets;
        Ok(self)
    }

    /// Indices of the foot joints of the default skeleton, if present.
    pub fn foot_joints(&self) -> Vec<usize> {
        if self.joint_count == 22 {
            vec![10, 11]
        } else {
            Vec::new()
        }
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::with_radius(0.06).expect("default skeleton is valid")
    }
}
