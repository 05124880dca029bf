mod common;

use duet_guidance::diffusion::{
    chain_rng, sample, sample_flat, train_mlp_denoiser, AnalyticGaussianPrior, Denoiser, DiffusionState, NoiseSchedule,
    NoiseSource, SamplerConfig, SamplerHook, SamplerKind, StepContext, TrainConfig,
};
use duet_guidance::motion::{ConditionLabel, InteractionKind, MotionLayout, MotionSequence, TwoAgentMotion};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Posterior mean from one dense solve over every coordinate.
fn dense_posterior_mean(layout: MotionLayout, mean: &[f64], ell: f64, var: f64, x_t: &[f64], ab: f64) -> Vec<f64> {
    let n = layout.len();
    let per_frame = layout.joints * 3;
    let frame_of = |i: usize| (i % layout.agent_len()) / per_frame;
    let channel_of = |i: usize| (i / layout.agent_len(), i % per_frame);
    let cov = DMatrix::from_fn(n, n, |a, b| {
        if channel_of(a) != channel_of(b) {
            return 0.0;
        }
        let d = frame_of(a) as f64 - frame_of(b) as f64;
        let k = var * (-(d * d) / (2.0 * ell * ell)).exp();
        if a == b {
            k + 1e-6 * var
        } else {
            k
        }
    });
    let s = ab.sqrt();
    let sys = &cov * ab + DMatrix::identity(n, n) * (1.0 - ab);
    let resid = DVector::from_iterator(n, x_t.iter().zip(mean).map(|(x, m)| x - s * m));
    let solved = sys.lu().solve(&resid).unwrap();
    let out = &cov * solved * s;
    out.iter().zip(mean).map(|(d, m)| m + d).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn posterior_mean_matches_dense_solve(
        frames in 1usize..=8,
        joints in 1usize..=2,
        ell in 0.5f64..12.0,
        var in 0.01f64..1.0,
        ab in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let layout = MotionLayout::new(frames, joints);
        let mut rng = chain_rng(seed, 0);
        let mean: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_t: Vec<f64> = (0..layout.len()).map(|_| rng.standard_normal()).collect();
        let prior = AnalyticGaussianPrior::new(layout, mean.clone(), ell, var, NoiseSchedule::default()).unwrap();
        let fast = prior.predict_at(&x_t, ab);
        let dense = dense_posterior_mean(layout, &mean, ell, var, &x_t, ab);
        for (a, b) in fast.iter().zip(&dense) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn alpha_bar_strictly_decreasing() {
    let s = NoiseSchedule::default();
    assert_eq!(s.alpha_bar(0), 1.0);
    assert!((1..=s.steps()).all(|t| s.alpha_bar(t) < s.alpha_bar(t - 1)));
}

fn small_prior(seed: u64) -> (AnalyticGaussianPrior, ConditionLabel) {
    let layout = MotionLayout::new(6, 2);
    let mut rng = chain_rng(seed, 1);
    let mean: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let prior = AnalyticGaussianPrior::with_defaults(layout, mean, NoiseSchedule::default()).unwrap();
    (prior, ConditionLabel::new(InteractionKind::Orbit))
}

struct Identity;

impl SamplerHook for Identity {}

struct Truncate;

impl SamplerHook for Truncate {
    fn post_predict(&self, mut x0: Vec<f64>, _ctx: &StepContext<'_>) -> Vec<f64> {
        x0.pop();
        x0
    }
}

/// Counts calls and keeps the tensor shape it is shown.
struct ShapeProbe(std::sync::Mutex<Vec<usize>>);

impl SamplerHook for ShapeProbe {
    fn pre_step(&self, x_t: Vec<f64>, _ctx: &StepContext<'_>, _noise: &mut dyn NoiseSource) -> Vec<f64> {
        self.0.lock().unwrap().push(x_t.len());
        x_t
    }
}

#[test]
fn identity_hooks_are_neutral_and_runs_repeat() {
    let (p, l) = small_prior(2);
    let s = NoiseSchedule::default();
    let steps = s.ddim_subsequence(50).unwrap();
    for kind in [SamplerKind::Ddim, SamplerKind::Ancestral] {
        let cfg = SamplerConfig {
            kind,
            ..SamplerConfig::default()
        };
        let plain = sample_flat(&p, &l, &s, &steps, &[], cfg, &mut chain_rng(5, 0)).unwrap();
        let again = sample_flat(&p, &l, &s, &steps, &[], cfg, &mut chain_rng(5, 0)).unwrap();
        let hooked = sample_flat(&p, &l, &s, &steps, &[&Identity, &Identity], cfg, &mut chain_rng(5, 0)).unwrap();
        assert_eq!(plain, again);
        assert_eq!(plain, hooked);
    }
}

#[test]
fn shape_is_preserved_and_bad_hooks_fail() {
    let (p, l) = small_prior(3);
    let s = NoiseSchedule::default();
    let steps = s.ddim_subsequence(25).unwrap();
    let probe = ShapeProbe(Default::default());
    let m = sample(&p, &l, &s, &steps, &[&probe], SamplerConfig::default(), 30.0, &mut chain_rng(0, 0)).unwrap();
    assert_eq!(m.layout(), p.layout());
    let seen = probe.0.into_inner().unwrap();
    assert_eq!(seen.len(), 25);
    assert!(seen.iter().all(|&n| n == p.layout().len()));
    assert!(sample_flat(&p, &l, &s, &steps, &[&Truncate], SamplerConfig::default(), &mut chain_rng(0, 0)).is_err());
    assert!(sample_flat(&p, &l, &s, &[500, 600, 0], &[], SamplerConfig::default(), &mut chain_rng(0, 0)).is_err());
    assert!(sample_flat(&p, &l, &s, &[500, 10], &[], SamplerConfig::default(), &mut chain_rng(0, 0)).is_err());
}

#[test]
fn mlp_memorizes_a_single_motion() {
    let layout = MotionLayout::new(4, 2);
    let label = ConditionLabel::new(InteractionKind::MirrorWalk);
    let pos: Vec<[f64; 3]> = (0..8).map(|i| [0.2 * i as f64 - 0.5, 1.0, 0.1 * i as f64]).collect();
    let seq = MotionSequence::new(2, 30.0, pos).unwrap();
    let motion = TwoAgentMotion::new(seq.clone(), seq.translated([1.0, 0.0, 0.0])).unwrap();
    let data = vec![(motion.clone(), label); 16];
    let cfg = TrainConfig {
        hidden: 64,
        hidden_layers: 2,
        epochs: 400,
        batch_size: 16,
        learning_rate: 1e-3,
    };
    let schedule = NoiseSchedule::default();
    let (model, report) = train_mlp_denoiser(&data, &schedule, &cfg, &mut chain_rng(8, 0)).unwrap();
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
    let target = motion.to_flat();
    let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rng = chain_rng(9, 0);
    for t in [700, 850, 1000] {
        let x: Vec<f64> = target
            .iter()
            .map(|v| schedule.alpha_bar(t).sqrt() * v + (1.0 - schedule.alpha_bar(t)).sqrt() * rng.standard_normal())
            .collect();
        let pred = model.predict_x0(&DiffusionState { x, t }, &label);
        let err = pred.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
        assert!(err < 0.1, "t {t}: relative error {err}");
    }
    assert_eq!(model.layout(), layout);
}

#[test]
fn ddim_contracts_gaussian_modes_by_the_closed_form_factor() {
    let layout = MotionLayout::new(1, 1);
    let (var, mean) = (2.0, 0.4);
    let prior = AnalyticGaussianPrior::new(layout, vec![mean; 6], 10.0, var, NoiseSchedule::default()).unwrap();
    let s = NoiseSchedule::default();
    let lambda = var * (1.0 + 1e-6);
    for (t, t_prev) in [(1000, 980), (500, 480), (40, 20), (20, 0)] {
        let (a, b) = (s.alpha_bar(t), s.alpha_bar(t_prev));
        let x_t = vec![1.3; 6];
        let x0 = prior.predict_step(&x_t, t).unwrap();
        let out = duet_guidance::diffusion::ddim_step(&x0, &x_t, t, t_prev, &s).unwrap();
        let factor = ((a * b).sqrt() * lambda + ((1.0 - a) * (1.0 - b)).sqrt()) / (a * lambda + 1.0 - a);
        let expected = b.sqrt() * mean + factor * (1.3 - a.sqrt() * mean);
        assert!((out[0] - expected).abs() < 1e-12, "{t}: {} vs {expected}", out[0]);
        let kept = factor * factor * (a * lambda + 1.0 - a);
        assert!(kept <= b * lambda + 1.0 - b + 1e-15);
    }
}
