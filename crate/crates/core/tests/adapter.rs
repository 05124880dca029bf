mod common;

use duet_guidance::diffusion::chain_rng;
use duet_guidance::metrics::penetration_frames;
use duet_guidance::motion::{Agent, InteractionKind, MotionLayout, SkeletonSpec, TwoAgentMotion, Vec3};
use duet_guidance::pipeline::{generate, GenerationConfig};
use duet_guidance::sync::{
    adapt_follower, detect_conflict, frame_conflicts, separate_collision, AdapterConfig, AdapterSteps,
    VelocityLossForm,
};
use duet_guidance::synth::generate_scenario;
use proptest::prelude::*;

use common::oracles::{joint_grad_error, point_sampled_overlap, random_pose_pair, velocity_grad_error};
use common::bed;

fn collide_scenario(seed: u64) -> (TwoAgentMotion, SkeletonSpec) {
    let s = SkeletonSpec::default();
    let (m, _) = generate_scenario(InteractionKind::ApproachCollide, 120, 30.0, seed, &s).unwrap();
    (m, s)
}

fn bone_lengths(pose: &[Vec3], s: &SkeletonSpec) -> Vec<f64> {
    s.bones()
        .iter()
        .map(|&(p, c)| (0..3).map(|k| (pose[p][k] - pose[c][k]).powi(2)).sum::<f64>().sqrt())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn joint_gradient_matches_central_differences(seed in any::<u64>()) {
        prop_assert!(joint_grad_error(&mut chain_rng(seed, 0)) < 1e-4);
    }

    #[test]
    fn velocity_gradients_match_central_differences(seed in any::<u64>()) {
        let mut rng = chain_rng(seed, 0);
        prop_assert!(velocity_grad_error(&mut rng, VelocityLossForm::Cosine) < 1e-4);
        prop_assert!(velocity_grad_error(&mut rng, VelocityLossForm::Dot) < 1e-4);
    }
}

#[test]
fn detection_agrees_with_point_sampling() {
    let s = SkeletonSpec::default();
    let mut rng = chain_rng(77, 0);
    let (mut overlapping, mut decided) = (0, 0);
    for _ in 0..60 {
        let (a, b) = random_pose_pair(&mut rng, &s);
        let (oracle, marginal) = point_sampled_overlap(&a, &b, &s, 1e-3, 1e-3);
        if marginal {
            continue;
        }
        decided += 1;
        overlapping += oracle as usize;
        assert_eq!(detect_conflict(&a, &b, &s).is_conflict(), oracle);
    }
    assert!(decided > 40 && overlapping > 5 && overlapping < decided, "{overlapping}/{decided}");
}

#[test]
fn adapter_keeps_leader_and_reduces_penetration() {
    for seed in 0..3 {
        let (m, s) = collide_scenario(seed);
        let layout = m.layout();
        let before = penetration_frames(&m, &s);
        assert!(before > 0);
        let out = adapt_follower(m.to_flat(), &layout, &s, &AdapterConfig::default()).unwrap();
        let after = TwoAgentMotion::from_flat(layout, m.fps(), &out.x0).unwrap();
        assert_eq!(after.agent_a, m.agent_a);
        assert_eq!(out.conflict_frames, before);
        assert!(out.separation.unresolved.is_empty());
        let left = penetration_frames(&after, &s);
        assert!(left < before, "seed {seed}: {before} -> {left}");
        assert!(out.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn separation_is_rigid_and_clears_every_frame() {
    let (m, s) = collide_scenario(4);
    let joints = s.joint_count();
    let conflicts = frame_conflicts(&m, &s);
    let mut follower = m.agent_b.positions().to_vec();
    let report = separate_collision(&mut follower, m.agent_a.positions(), joints, &s, &conflicts);
    assert!(!report.moved.is_empty());
    for (f, conflict) in conflicts.iter().enumerate() {
        let range = f * joints..(f + 1) * joints;
        let (old, new) = (&m.agent_b.positions()[range.clone()], &follower[range.clone()]);
        let (lo, ln) = (bone_lengths(old, &s), bone_lengths(new, &s));
        assert!(lo.iter().zip(&ln).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(!detect_conflict(&m.agent_a.positions()[range], new, &s).is_conflict());
        if !conflict.is_conflict() {
            assert_eq!(old, new);
        }
    }
}

#[test]
fn conflict_free_input_is_returned_bit_identical() {
    let s = SkeletonSpec::default();
    let (m, _) = generate_scenario(InteractionKind::MirrorWalk, 40, 30.0, 2, &s).unwrap();
    assert_eq!(penetration_frames(&m, &s), 0);
    let x = m.to_flat();
    let out = adapt_follower(x.clone(), &m.layout(), &s, &AdapterConfig::default()).unwrap();
    assert_eq!(out.x0, x);
    assert!(out.loss_trace.is_empty());
}

#[test]
fn rejects_mismatched_shapes() {
    let s = SkeletonSpec::default();
    let layout = MotionLayout::new(4, 22);
    assert!(adapt_follower(vec![0.0; 10], &layout, &s, &AdapterConfig::default()).is_err());
    let small = MotionLayout::new(4, 5);
    assert!(adapt_follower(vec![0.0; small.len()], &small, &s, &AdapterConfig::default()).is_err());
}

#[test]
fn hook_fires_three_times_inside_the_window() {
    let b = bed(InteractionKind::ApproachCollide, 90, 1);
    let cfg = GenerationConfig {
        pace: None,
        ..GenerationConfig::default()
    };
    for seed in 0..2 {
        let g = generate(&b.prior, &b.label, &b.schedule, &b.skeleton, &[], &cfg, seed).unwrap();
        let steps: Vec<usize> = g.adapter_trace.iter().map(|&(t, _)| t).collect();
        assert_eq!(steps, vec![700, 500, 300]);
    }
}

#[test]
fn steps_off_the_traversed_grid_are_a_no_op() {
    let b = bed(InteractionKind::ApproachCollide, 90, 1);
    let off = GenerationConfig {
        pace: None,
        adapter: Some(AdapterConfig {
            steps: AdapterSteps::Explicit(vec![701, 333, 1]),
            ..AdapterConfig::default()
        }),
        ..GenerationConfig::default()
    };
    let g = generate(&b.prior, &b.label, &b.schedule, &b.skeleton, &[], &off, 3).unwrap();
    let u = generate(&b.prior, &b.label, &b.schedule, &b.skeleton, &[], &GenerationConfig::unguided(), 3).unwrap();
    assert!(g.adapter_trace.is_empty());
    assert_eq!(g.motion, u.motion);
}

#[test]
fn adapter_hook_changes_only_the_follower() {
    let b = bed(InteractionKind::ApproachCollide, 90, 2);
    let cfg = GenerationConfig {
        pace: None,
        ..GenerationConfig::default()
    };
    let g = generate(&b.prior, &b.label, &b.schedule, &b.skeleton, &[], &cfg, 5).unwrap();
    let u = generate(&b.prior, &b.label, &b.schedule, &b.skeleton, &[], &GenerationConfig::unguided(), 5).unwrap();
    assert!(g.adapter_trace.iter().any(|&(_, n)| n > 0));
    assert_eq!(g.motion.agent(Agent::A), u.motion.agent(Agent::A));
    assert_ne!(g.motion.agent_b, u.motion.agent_b);
}
