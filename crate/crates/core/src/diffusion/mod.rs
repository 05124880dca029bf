//! Noise schedule, forward process, reverse samplers and denoisers.

mod analytic;
mod mlp;
mod noise;
mod sampler;
mod schedule;

pub use analytic::{temporal_kernel, AnalyticGaussianPrior, KERNEL_JITTER};
pub use mlp::{
    make_batch, time_embedding, train_mlp_denoiser, Gradients, MlpArchitecture, MlpDenoiser, TrainConfig,
    TrainReport,
};
pub use noise::{chain_rng, ChainRng, NoiseSource, ZeroNoise};
pub use sampler::{
    ddim_step, forward_noise, posterior_coefficients, posterior_mean, posterior_step, posterior_step_to, sample,
    sample_flat, Denoiser, DiffusionState, NoiseEstimate, SamplerConfig, SamplerHook, SamplerKind, StepContext,
};
pub use schedule::{NoiseSchedule, ScheduleParams};
