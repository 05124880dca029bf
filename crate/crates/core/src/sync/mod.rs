//! Follower correction: capsule conflict detection, rigid separation and
//! gradient descent on joint-distance and velocity-similarity losses.

mod adapter;
mod capsule;
mod loss;

pub use adapter::{
    adapt_follower, adapter_fire_steps, clearing_displacement, separate_collision, separation_direction,
    AdaptOutcome, AdapterConfig, AdapterHook, AdapterSteps, SeparationReport, SEPARATION_CAP, SEPARATION_TOL,
};
pub use capsule::{
    detect_conflict, frame_conflicts, pose_to_capsules, poses_overlap, segment_distance_sq, Capsule, CapsuleSet,
    Conflict, Contact,
};
pub use loss::{
    joint_loss, joint_loss_grad_b, joint_loss_slices, velocity_loss, velocity_loss_grad_b, velocity_loss_slices,
    VelocityLossForm,
};
