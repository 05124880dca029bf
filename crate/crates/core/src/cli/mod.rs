//! `duet` command-line interface.

mod settings;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    chain_rng, train_mlp_denoiser, AnalyticGaussianPrior, Denoiser, MlpDenoiser, NoiseEstimate, NoiseSchedule,
    SamplerConfig, SamplerKind, TrainConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{
    diversity_exhaustive, final_velocity_similarity, pair_smoothness, penetration_frames, trajectory_rmse,
};
use crate::motion::{
    load_motion, load_trajectory, project_root_trajectory, save_motion, Agent, ConditionLabel, InteractionKind,
    MotionLayout, SkeletonSpec, Trajectory, TwoAgentMotion,
};
use crate::pace::{GuidanceWindow, InjectionMode, PaceConfig, TargetAgent};
use crate::pipeline::{generate, GenerationConfig};
use crate::plot::overhead_svg;
use crate::sync::{AdapterConfig, AdapterSteps, VelocityLossForm};
use crate::synth::{build_dataset, derive_seed, generate_scenario, generate_trajectory_condition, TrajectoryShape};

pub use settings::{ConfigFile, KNOWN_KEYS};

#[derive(Debug, Parser)]
#[command(name = "duet", version, about = "Leader-follower guidance for two-agent motion diffusion")]
pub struct Cli {
    /// Master seed; every subcommand is a pure function of it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` file mirroring flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// `analytic` or `checkpoint:<path>`.
    #[arg(long, global = true)]
    pub denoiser: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural dataset and its manifest.
    MakeData(MakeDataArgs),
    /// Train the MLP denoiser on a dataset directory.
    Train(TrainArgs),
    /// Sample one interaction, optionally guided.
    Generate(GenerateArgs),
    /// Compare guidance windows over a seed batch.
    AblateWindow(AblateArgs),
    /// Controller x adapter grid with timings.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct MakeDataArgs {
    #[arg(long)]
    pub per_kind: Option<usize>,
    /// Comma-separated kinds; all four by default.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub fps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `make-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct GuidanceFlags {
    #[arg(long)]
    pub window_start: Option<f64>,
    #[arg(long)]
    pub window_end: Option<f64>,
    #[arg(long)]
    pub grad_step: Option<f64>,
    #[arg(long)]
    pub grad_iters: Option<usize>,
    /// `noised` or `raw`.
    #[arg(long)]
    pub inject_mode: Option<String>,
    /// `a`, `b` or `both`.
    #[arg(long)]
    pub target_agent: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub w_joint: Option<f64>,
    #[arg(long)]
    pub w_vel: Option<f64>,
    /// A count (spread over the window) or a comma-separated step list.
    #[arg(long)]
    pub adapter_steps: Option<String>,
    #[arg(long)]
    pub adapter_grad_step: Option<f64>,
    #[arg(long)]
    pub adapter_grad_iters: Option<usize>,
    /// `cosine` or `dot`.
    #[arg(long)]
    pub vel_loss_form: Option<String>,
    #[arg(long)]
    pub no_adapter: bool,
    #[arg(long)]
    pub no_controller: bool,
    /// `ddim` or `ancestral`.
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub ddim_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Target for the guided agent (agent A when `--target-agent both`).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Target for agent B when `--target-agent both`.
    #[arg(long)]
    pub trajectory_b: Option<PathBuf>,
    /// Procedural target instead of a file: `line`, `circle`, `s-curve`.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Condition label.
    #[arg(long)]
    pub kind: Option<String>,
    /// Only needed without a trajectory file.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also write an overhead SVG.
    #[arg(long)]
    pub plot: bool,
    #[command(flatten)]
    pub guidance: GuidanceFlags,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// `start:end` pairs, comma-separated.
    #[arg(long)]
    pub windows: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[command(flatten)]
    pub guidance: GuidanceFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[command(flatten)]
    pub guidance: GuidanceFlags,
}

pub const DEFAULT_WINDOWS: [(f64, f64); 3] = [(0.8, 0.2), (0.7, 0.3), (0.6, 0.4)];
const TAIL_FRAMES: usize = 20;

/// Everything resolved from flags, config file and defaults.
struct Context {
    seed: u64,
    out_dir: PathBuf,
    denoiser: DenoiserChoice,
    config: ConfigFile,
    skeleton: SkeletonSpec,
    schedule: NoiseSchedule,
}

fn parse_denoiser(s: &str) -> Result<DenoiserChoice> {
    match s {
        "analytic" => Ok(DenoiserChoice::Analytic),
        _ => match s.strip_prefix("checkpoint:") {
            Some(p) if !p.is_empty() => Ok(DenoiserChoice::Checkpoint(PathBuf::from(p))),
            _ => Err(Error::Unknown {
                kind: "denoiser (use `analytic` or `checkpoint:<path>`)",
                name: s.to_string(),
            }),
        },
    }
}

/// Parses and runs; returns the text printed to stdout.
pub fn run(cli: Cli) -> Result<String> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = config.pick(cli.seed, "seed", 0)?;
    let out_dir = config.pick(cli.out_dir.clone(), "out-dir", PathBuf::from("out"))?;
    let denoiser = parse_denoiser(&config.pick(cli.denoiser.clone(), "denoiser", "analytic".to_string())?)?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let ctx = Context {
        seed,
        out_dir,
        denoiser,
        config,
        skeleton: SkeletonSpec::default(),
        schedule: NoiseSchedule::default(),
    };
    match &cli.command {
        Command::MakeData(a) => cmd_make_data(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::AblateWindow(a) => cmd_ablate_window(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|p| p.trim().parse()).collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- make-data

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub joint_count: usize,
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestItem {
    pub file: String,
    pub kind: String,
    pub seed: u64,
}

fn cmd_make_data(ctx: &Context, a: &MakeDataArgs) -> Result<String> {
    let c = &ctx.config;
    let per_kind = c.pick(a.per_kind, "per-kind", 8)?;
    let kinds: Vec<InteractionKind> = match c.pick_opt(a.kinds.clone(), "kinds")? {
        Some(s) => parse_list(&s)?,
        None => InteractionKind::ALL.to_vec(),
    };
    let frames = c.pick(a.frames, "frames", crate::synth::DEFAULT_FRAMES)?;
    let fps = c.pick(a.fps, "fps", crate::synth::DEFAULT_FPS)?;
    let data = build_dataset(per_kind, &kinds, frames, fps, ctx.seed, &ctx.skeleton)?;
    let mut items = Vec::with_capacity(data.len());
    let mut counters = [0usize; 4];
    for item in &data.items {
        let k = item.label.category;
        let file = format!("{}_{:03}.json", k.name(), counters[k.index()]);
        counters[k.index()] += 1;
        save_motion(&item.motion, &ctx.out_dir.join(&file))?;
        items.push(ManifestItem {
            file,
            kind: k.name().to_string(),
            seed: item.seed,
        });
    }
    let manifest = Manifest {
        version: 1,
        seed: ctx.seed,
        frames,
        fps,
        joint_count: ctx.skeleton.joint_count(),
        items,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&ctx.out_dir.join(MANIFEST_NAME), &text)?;
    Ok(format!("wrote {} motions to {}\n", data.len(), ctx.out_dir.display()))
}

/// Reads a `make-data` directory back.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<(TwoAgentMotion, ConditionLabel)>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.is_file() {
        return Err(Error::Parse {
            field: "dataset".into(),
            reason: format!("{} not found; create it with `duet make-data`", path.display()),
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: MANIFEST_NAME.into(),
        reason: e.to_string(),
    })?;
    manifest
        .items
        .iter()
        .map(|it| {
            let kind: InteractionKind = it.kind.parse()?;
            Ok((load_motion(&dir.join(&it.file))?, ConditionLabel::new(kind)))
        })
        .collect()
}

// -------------------------------------------------------------------- train

pub const CHECKPOINT_NAME: &str = "denoiser.json";

fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<String> {
    let c = &ctx.config;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: c.pick(a.epochs, "epochs", d.epochs)?,
        learning_rate: c.pick(a.lr, "lr", d.learning_rate)?,
        batch_size: c.pick(a.batch, "batch", d.batch_size)?,
        hidden: c.pick(a.hidden, "hidden", d.hidden)?,
        hidden_layers: c.pick(a.layers, "layers", d.hidden_layers)?,
    };
    let data = load_dataset_dir(&a.data)?;
    let mut rng = chain_rng(ctx.seed, 0);
    let (model, report) = train_mlp_denoiser(&data, &ctx.schedule, &cfg, &mut rng)?;
    let mut log = String::from("epoch\tloss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        log::info!("epoch {i}: loss {l:.6}");
        writeln!(log, "{i}\t{l:.9e}").unwrap();
    }
    write_file(&ctx.out_dir.join("train_log.tsv"), &log)?;
    let path = ctx.out_dir.join(CHECKPOINT_NAME);
    model.save(&path)?;
    let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "trained on {} motions: loss {first:.6} -> {last:.6}; checkpoint {}\n",
        data.len(),
        path.display()
    ))
}

// ----------------------------------------------------------------- guidance

fn resolve_generation(c: &ConfigFile, g: &GuidanceFlags) -> Result<GenerationConfig> {
    let pd = PaceConfig::default();
    let ad = AdapterConfig::default();
    let dw = GuidanceWindow::default();
    let window = GuidanceWindow::new(
        c.pick(g.window_start, "window-start", dw.start())?,
        c.pick(g.window_end, "window-end", dw.end())?,
    )?;
    let pace = PaceConfig {
        window,
        grad_step_size: c.pick(g.grad_step, "grad-step", pd.grad_step_size)?,
        grad_steps: c.pick(g.grad_iters, "grad-iters", pd.grad_steps)?,
        injection_mode: c.pick(g.inject_mode.clone(), "inject-mode", pd.injection_mode.to_string())?.parse::<InjectionMode>()?,
        target_agent: c.pick(g.target_agent.clone(), "target-agent", pd.target_agent.to_string())?.parse::<TargetAgent>()?,
    };
    pace.validate()?;
    let steps = match c.pick_opt(g.adapter_steps.clone(), "adapter-steps")? {
        None => ad.steps.clone(),
        Some(s) if s.contains(',') => AdapterSteps::Explicit(
            s.split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| Error::Parse {
                        field: "adapter-steps".into(),
                        reason: format!("`{p}` is not a step index"),
                    })
                })
                .collect::<Result<_>>()?,
        ),
        Some(s) => AdapterSteps::Evenly(s.trim().parse().map_err(|_| Error::Parse {
            field: "adapter-steps".into(),
            reason: format!("`{s}` is neither a count nor a step list"),
        })?),
    };
    let adapter = AdapterConfig {
        delta: c.pick(g.delta, "delta", ad.delta)?,
        w_joint: c.pick(g.w_joint, "w-joint", ad.w_joint)?,
        w_vel: c.pick(g.w_vel, "w-vel", ad.w_vel)?,
        steps,
        grad_step_size: c.pick(g.adapter_grad_step, "adapter-grad-step", ad.grad_step_size)?,
        grad_iters: c.pick(g.adapter_grad_iters, "adapter-grad-iters", ad.grad_iters)?,
        vel_epsilon: ad.vel_epsilon,
        vel_form: c.pick(g.vel_loss_form.clone(), "vel-loss-form", ad.vel_form.to_string())?.parse::<VelocityLossForm>()?,
    };
    adapter.validate()?;
    let kind = match c.pick(g.sampler.clone(), "sampler", "ddim".to_string())?.as_str() {
        "ddim" => SamplerKind::Ddim,
        "ancestral" => SamplerKind::Ancestral,
        other => {
            return Err(Error::Unknown {
                kind: "sampler",
                name: other.to_string(),
            })
        }
    };
    Ok(GenerationConfig {
        window,
        pace: (!c.switch(g.no_controller, "no-controller")?).then_some(pace),
        adapter: (!c.switch(g.no_adapter, "no-adapter")?).then_some(adapter),
        sampler: SamplerConfig {
            kind,
            noise_estimate: NoiseEstimate::default(),
        },
        ddim_steps: c.pick(g.ddim_steps, "ddim-steps", crate::pipeline::DEFAULT_DDIM_STEPS)?,
        fps: crate::synth::DEFAULT_FPS,
    })
}

fn make_denoiser(
    ctx: &Context,
    kind: InteractionKind,
    frames: usize,
    scenario_seed: u64,
) -> Result<(Box<dyn Denoiser>, TwoAgentMotion)> {
    ctx.denoiser.build(kind, frames, scenario_seed, &ctx.skeleton, &ctx.schedule)
}

/// Agents the controller writes, paired with their targets.
fn assign_targets(agent: TargetAgent, a: Trajectory, b: Option<Trajectory>) -> Result<Vec<(Agent, Trajectory)>> {
    Ok(match agent {
        TargetAgent::A => vec![(Agent::A, a)],
        TargetAgent::B => vec![(Agent::B, a)],
        TargetAgent::Both => {
            let b = b.ok_or_else(|| Error::param("trajectory-b", "required with `--target-agent both`"))?;
            vec![(Agent::A, a), (Agent::B, b)]
        }
    })
}

/// Stable FNV-1a hash used to label configurations in tables.
fn config_hash(cfg: &GenerationConfig) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in format!("{cfg:?}").bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{:08x}", h >> 32)
}

// ----------------------------------------------------------------- generate

fn cmd_generate(ctx: &Context, a: &GenerateArgs) -> Result<String> {
    let c = &ctx.config;
    let cfg = resolve_generation(c, &a.guidance)?;
    let kind: InteractionKind = c.pick(a.kind.clone(), "kind", "circle-duet".to_string())?.parse()?;
    let scale = c.pick(a.scale, "scale", 3.0)?;
    let shape = c.pick_opt(a.shape.clone(), "shape")?;
    let target_a = match (&a.trajectory, shape) {
        (Some(p), _) => Some(load_trajectory(p)?),
        (None, Some(s)) => {
            let frames = c.pick(a.frames, "frames", crate::synth::DEFAULT_FRAMES)?;
            Some(generate_trajectory_condition(s.parse()?, frames, scale, crate::synth::DEFAULT_FPS)?)
        }
        (None, None) => None,
    };
    let target_b = a.trajectory_b.as_deref().map(load_trajectory).transpose()?;
    let frames = match &target_a {
        Some(t) => t.len(),
        None => c.pick(a.frames, "frames", crate::synth::DEFAULT_FRAMES)?,
    };
    let targets = match (&cfg.pace, target_a.clone()) {
        (Some(p), Some(t)) => assign_targets(p.target_agent, t, target_b)?,
        (Some(_), None) => {
            return Err(Error::param(
                "trajectory",
                "the controller needs `--trajectory <file>` or `--shape`; pass `--no-controller` to sample unguided",
            ))
        }
        (None, _) => Vec::new(),
    };
    let (denoiser, _) = make_denoiser(ctx, kind, frames, derive_seed(ctx.seed, 1))?;
    let g = generate(
        denoiser.as_ref(),
        &ConditionLabel::new(kind),
        &ctx.schedule,
        &ctx.skeleton,
        &targets,
        &cfg,
        ctx.seed,
    )?;
    let motion_path = ctx.out_dir.join("motion.json");
    save_motion(&g.motion, &motion_path)?;
    let mut out = format!("wrote {}\n", motion_path.display());
    for (agent, t) in &targets {
        let rmse = trajectory_rmse(g.motion.agent(*agent), t, &ctx.skeleton)?;
        writeln!(out, "agent {agent:?} trajectory rmse {rmse:.4} m").unwrap();
    }
    writeln!(out, "penetration frames {}", penetration_frames(&g.motion, &ctx.skeleton)).unwrap();
    if a.plot {
        let trs: Vec<Trajectory> = targets.iter().map(|(_, t)| t.clone()).collect();
        let svg = overhead_svg(&g.motion, &trs, &ctx.skeleton)?;
        let p = ctx.out_dir.join("plot.svg");
        write_file(&p, &svg)?;
        writeln!(out, "wrote {}", p.display()).unwrap();
    }
    Ok(out)
}

// ------------------------------------------------------------ ablate-window

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub rmse: f64,
    pub smoothness: f64,
    pub penetration: f64,
}

fn parse_windows(s: &str) -> Result<Vec<GuidanceWindow>> {
    s.split(',')
        .map(|w| {
            let (a, b) = w.split_once(':').ok_or_else(|| Error::Parse {
                field: "windows".into(),
                reason: format!("expected `start:end`, got `{w}`"),
            })?;
            let num = |x: &str| {
                x.trim().parse::<f64>().map_err(|e| Error::Parse {
                    field: "windows".into(),
                    reason: format!("`{x}`: {e}"),
                })
            };
            GuidanceWindow::new(num(a)?, num(b)?)
        })
        .collect()
}

fn cmd_ablate_window(ctx: &Context, a: &AblateArgs) -> Result<String> {
    let c = &ctx.config;
    let base = resolve_generation(c, &a.guidance)?;
    let windows = match c.pick_opt(a.windows.clone(), "windows")? {
        Some(s) => parse_windows(&s)?,
        None => DEFAULT_WINDOWS
            .iter()
            .map(|&(s, e)| GuidanceWindow::new(s, e))
            .collect::<Result<_>>()?,
    };
    let n_seeds = c.pick(a.seeds, "seeds", 8)?;
    let shape: TrajectoryShape = c.pick(a.shape.clone(), "shape", "s-curve".to_string())?.parse()?;
    let scale = c.pick(a.scale, "scale", 3.0)?;
    let frames = c.pick(a.frames, "frames", crate::synth::DEFAULT_FRAMES)?;
    let target = generate_trajectory_condition(shape, frames, scale, crate::synth::DEFAULT_FPS)?;
    let pace = base.pace.unwrap_or_default();
    let targets = assign_targets(pace.target_agent, target.clone(), Some(target.clone()))?;
    let dir = ctx.out_dir.join("ablate");
    mkdir(&dir)?;

    let mut configs: Vec<(String, GenerationConfig)> = vec![(
        "unguided".into(),
        GenerationConfig {
            pace: None,
            adapter: None,
            ..base.clone()
        },
    )];
    for w in &windows {
        configs.push((
            format!("{:.2}-{:.2}", w.start(), w.end()),
            GenerationConfig {
                window: *w,
                pace: Some(PaceConfig { window: *w, ..pace }),
                adapter: None,
                ..base.clone()
            },
        ));
    }
    let rows = run_rows(ctx, &configs, n_seeds, frames, &targets, &dir, |i| InteractionKind::ALL[i % 4])?;
    let mut table = String::from("window\ttrajectory_rmse\tsmoothness\tpenetration_frames\n");
    for r in &rows {
        writeln!(table, "{}\t{:.6}\t{:.6}\t{:.2}", r.label, r.rmse, r.smoothness, r.penetration).unwrap();
    }
    write_file(&ctx.out_dir.join("ablation.tsv"), &table)?;
    Ok(table)
}

/// Runs every configuration over the same seeds and averages metrics.
fn run_rows(
    ctx: &Context,
    configs: &[(String, GenerationConfig)],
    n_seeds: usize,
    frames: usize,
    targets: &[(Agent, Trajectory)],
    dir: &Path,
    kind_of: impl Fn(usize) -> InteractionKind + Sync,
) -> Result<Vec<AblationRow>> {
    use rayon::prelude::*;
    let per_seed: Vec<Vec<(f64, f64, f64)>> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let kind = kind_of(i);
            let run_seed = derive_seed(ctx.seed, i as u64);
            let (den, _) = make_denoiser(ctx, kind, frames, derive_seed(run_seed, 1))?;
            configs
                .iter()
                .map(|(label, cfg)| {
                    let g = generate(den.as_ref(), &ConditionLabel::new(kind), &ctx.schedule, &ctx.skeleton, targets, cfg, run_seed)?;
                    save_motion(&g.motion, &dir.join(format!("{label}_s{i:03}.json")))?;
                    let (agent, tr) = &targets[0];
                    Ok((
                        trajectory_rmse(g.motion.agent(*agent), tr, &ctx.skeleton)?,
                        pair_smoothness(&g.motion)?,
                        penetration_frames(&g.motion, &ctx.skeleton) as f64,
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = n_seeds.max(1) as f64;
    Ok(configs
        .iter()
        .enumerate()
        .map(|(k, (label, _))| {
            let sum = per_seed.iter().fold((0.0, 0.0, 0.0), |acc, s| {
                (acc.0 + s[k].0, acc.1 + s[k].1, acc.2 + s[k].2)
            });
            AblationRow {
                label: label.clone(),
                rmse: sum.0 / n,
                smoothness: sum.1 / n,
                penetration: sum.2 / n,
            }
        })
        .collect())
}

// ----------------------------------------------------------------- evaluate

#[derive(Debug, Clone)]
pub struct EvaluationRow {
    pub controller: bool,
    pub adapter: bool,
    pub hash: String,
    pub rmse: f64,
    pub penetration: f64,
    pub velocity_similarity: f64,
    pub smoothness: f64,
    pub diversity: f64,
    pub mean_time: Duration,
}

/// The 2 x 2 controller/adapter grid over `n` scenarios of `kind`, each
/// guided toward its own leader path. Runs are sequential so timings are
/// not distorted by contention.
#[allow(clippy::too_many_arguments)]
pub fn evaluation_grid(
    base: &GenerationConfig,
    denoiser: &DenoiserChoice,
    kind: InteractionKind,
    n: usize,
    frames: usize,
    seed: u64,
    skeleton: &SkeletonSpec,
    schedule: &NoiseSchedule,
    motion_dir: Option<&Path>,
) -> Result<(Vec<EvaluationRow>, String)> {
    let grid = [(true, true), (true, false), (false, true), (false, false)];
    let mut rows = Vec::new();
    let mut runs = String::from("scenario\tconfig\tcontroller\tadapter\ttrajectory_rmse\tpenetration_frames\tvelocity_similarity\tsmoothness\ttime_ms\n");
    let pace = base.pace.unwrap_or_default();
    let adapter = base.adapter.clone().unwrap_or_default();
    let scenarios: Vec<_> = (0..n)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let den = denoiser.build(kind, frames, derive_seed(s, 1), skeleton, schedule)?;
            Ok((s, den))
        })
        .collect::<Result<_>>()?;
    for (controller, adapter_on) in grid {
        let cfg = GenerationConfig {
            pace: controller.then_some(PaceConfig {
                target_agent: TargetAgent::A,
                ..pace
            }),
            adapter: adapter_on.then(|| adapter.clone()),
            ..base.clone()
        };
        let hash = config_hash(&cfg);
        let mut acc = [0.0; 4];
        let mut time = Duration::ZERO;
        let mut motions = Vec::new();
        for (i, (s, (den, scenario))) in scenarios.iter().enumerate() {
            let target = project_root_trajectory(&scenario.agent_a, skeleton)?;
            let targets = [(Agent::A, target.clone())];
            let g = generate(den.as_ref(), &ConditionLabel::new(kind), schedule, skeleton, &targets, &cfg, *s)?;
            let m = [
                trajectory_rmse(&g.motion.agent_a, &target, skeleton)?,
                penetration_frames(&g.motion, skeleton) as f64,
                final_velocity_similarity(&g.motion, TAIL_FRAMES.min(frames - 1))?,
                pair_smoothness(&g.motion)?,
            ];
            for k in 0..4 {
                acc[k] += m[k];
            }
            time += g.elapsed;
            writeln!(
                runs,
                "{}-{i:03}\t{hash}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.3}",
                kind.name(),
                on_off(controller),
                on_off(adapter_on),
                m[0],
                m[1],
                m[2],
                m[3],
                g.elapsed.as_secs_f64() * 1e3
            )
            .unwrap();
            if let Some(dir) = motion_dir {
                save_motion(&g.motion, &dir.join(format!("{}_{}_s{i:03}.json", on_off(controller), on_off(adapter_on))))?;
            }
            motions.push(g.motion);
        }
        let nf = n as f64;
        rows.push(EvaluationRow {
            controller,
            adapter: adapter_on,
            hash,
            rmse: acc[0] / nf,
            penetration: acc[1] / nf,
            velocity_similarity: acc[2] / nf,
            smoothness: acc[3] / nf,
            diversity: if motions.len() >= 2 { diversity_exhaustive(&motions)? } else { 0.0 },
            mean_time: time / n as u32,
        });
    }
    Ok((rows, runs))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Denoiser source resolvable per scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserChoice {
    Analytic,
    Checkpoint(PathBuf),
}

impl DenoiserChoice {
    /// The denoiser for one run plus a procedural scenario of `kind`; the
    /// analytic prior is centred on that scenario.
    pub fn build(
        &self,
        kind: InteractionKind,
        frames: usize,
        scenario_seed: u64,
        skeleton: &SkeletonSpec,
        schedule: &NoiseSchedule,
    ) -> Result<(Box<dyn Denoiser>, TwoAgentMotion)> {
        let (scenario, _) = generate_scenario(kind, frames, crate::synth::DEFAULT_FPS, scenario_seed, skeleton)?;
        match self {
            DenoiserChoice::Analytic => {
                let layout = MotionLayout::new(frames, skeleton.joint_count());
                let prior = AnalyticGaussianPrior::with_defaults(layout, scenario.to_flat(), schedule.clone())?;
                Ok((Box::new(prior), scenario))
            }
            DenoiserChoice::Checkpoint(p) => {
                let m = MlpDenoiser::load(p)?;
                let layout = m.layout();
                if layout.frames != frames || layout.joints != skeleton.joint_count() {
                    return Err(Error::Shape {
                        what: "checkpoint frames",
                        expected: frames,
                        got: layout.frames,
                    });
                }
                Ok((Box::new(m), scenario))
            }
        }
    }
}

pub fn format_evaluation(rows: &[EvaluationRow]) -> String {
    let mut t = String::from(
        "controller\tadapter\tconfig\ttrajectory_rmse\tpenetration_frames\tvelocity_similarity\tsmoothness\tdiversity\tmean_time_s\n",
    );
    for r in rows {
        writeln!(
            t,
            "{}\t{}\t{}\t{:.6}\t{:.2}\t{:.6}\t{:.6}\t{:.4}\t{:.4}",
            on_off(r.controller),
            on_off(r.adapter),
            r.hash,
            r.rmse,
            r.penetration,
            r.velocity_similarity,
            r.smoothness,
            r.diversity,
            r.mean_time.as_secs_f64()
        )
        .unwrap();
    }
    t
}

fn cmd_evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<String> {
    let c = &ctx.config;
    let base = resolve_generation(c, &a.guidance)?;
    let n = c.pick(a.scenarios, "scenarios", 8)?;
    if n == 0 {
        return Err(Error::param("scenarios", "must be at least 1"));
    }
    let kind: InteractionKind = c.pick(a.kind.clone(), "kind", "approach-collide".to_string())?.parse()?;
    let frames = c.pick(a.frames, "frames", crate::synth::DEFAULT_FRAMES)?;
    let dir = ctx.out_dir.join("evaluate");
    mkdir(&dir)?;
    let (rows, runs) = evaluation_grid(&base, &ctx.denoiser, kind, n, frames, ctx.seed, &ctx.skeleton, &ctx.schedule, Some(&dir))?;
    let table = format_evaluation(&rows);
    write_file(&ctx.out_dir.join("evaluate_runs.tsv"), &runs)?;
    write_file(&ctx.out_dir.join("evaluate.tsv"), &table)?;
    Ok(table)
}
