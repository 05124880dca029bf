//! Small feed-forward x0-prediction denoiser with hand-written backprop.
//!
//! Input is `x_t ⊕ sinusoidal(t) ⊕ one-hot(condition)`, hidden layers use
//! SiLU, the output layer is linear and has the shape of the motion tensor.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::{ChainRng, NoiseSource};
use super::sampler::{forward_noise, Denoiser, DiffusionState};
use super::schedule::{NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::motion::{ConditionLabel, MotionLayout, TwoAgentMotion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub frames: usize,
    pub joints: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
}

impl MlpArchitecture {
    pub fn for_layout(layout: MotionLayout, hidden: usize, hidden_layers: usize) -> Self {
        Self {
            frames: layout.frames,
            joints: layout.joints,
            hidden,
            hidden_layers,
            time_dim: 32,
            cond_dim: ConditionLabel::EMBEDDING_DIM,
        }
    }

    pub fn layout(&self) -> MotionLayout {
        MotionLayout::new(self.frames, self.joints)
    }

    pub fn input_dim(&self) -> usize {
        self.layout().len() + self.time_dim + self.cond_dim
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            dims.push((self.hidden, fan_in));
            fan_in = self.hidden;
        }
        dims.push((self.layout().len(), fan_in));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            hidden_layers: 3,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// Trained (or freshly initialised) network plus the schedule it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    arch: MlpArchitecture,
    layers: Vec<Linear>,
    schedule: NoiseSchedule,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal embedding of the step index.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10_000f64.ln()) * k as f64 / half.max(1) as f64).exp();
        out[k] = (t as f64 * freq).sin();
        out[half + k] = (t as f64 * freq).cos();
    }
    out
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    layers: Vec<Linear>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Linear]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        for r in 0..l.w.nrows() {
            for c in 0..l.w.ncols() {
                out.push(l.w[(r, c)]);
            }
        }
        out.extend(l.b.iter());
    }
    out
}

impl MlpDenoiser {
    pub fn init(arch: MlpArchitecture, schedule: NoiseSchedule, rng: &mut impl Rng) -> Self {
        let dims = arch.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &(out, inp))| {
                let mut bound = (6.0 / (inp + out) as f64).sqrt();
                if i == last {
                    bound *= 0.1;
                }
                Linear {
                    w: DMatrix::from_fn(out, inp, |_, _| rng.gen_range(-bound..bound)),
                    b: DVector::zeros(out),
                }
            })
            .collect();
        Self {
            arch,
            layers,
            schedule,
        }
    }

    pub fn architecture(&self) -> MlpArchitecture {
        self.arch
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Feature vector for one `(x_t, t, condition)`.
    pub fn features(&self, x_t: &[f64], t: usize, condition: &ConditionLabel) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.arch.input_dim());
        v.extend_from_slice(x_t);
        v.extend(time_embedding(t, self.arch.time_dim));
        v.extend(condition.embedding());
        v
    }

    /// Forward pass over a batch (one sample per column); returns the
    /// pre-activations and activations of every layer.
    fn forward(&self, input: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = vec![input.clone()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * act.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            let a = if i == last { z.clone() } else { z.map(silu) };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    pub fn predict_batch(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(input).1.pop().unwrap()
    }

    /// Mean squared error `sum (pred - target)^2 / (batch * outputs)` and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(&self, input: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, Gradients) {
        let (pre, act) = self.forward(input);
        let pred = act.last().unwrap();
        let scale = 1.0 / (pred.len() as f64);
        let diff = pred - target;
        let loss = diff.norm_squared() * scale;
        let mut delta = diff * (2.0 * scale);
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                delta.zip_apply(&pre[i], |d, z| *d *= silu_grad(z));
            }
            let gw = &delta * act[i].transpose();
            let gb = delta.column_sum();
            if i > 0 {
                delta = self.layers[i].w.transpose() * &delta;
            }
            grads.push(Linear { w: gw, b: gb });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    pub fn params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.arch.param_count() {
            return Err(Error::Shape {
                what: "parameter vector",
                expected: self.arch.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    l.w[(r, c)] = it.next().unwrap();
                }
            }
            for v in l.b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            float_width: 64,
            weight_order: "per layer: weight matrix row-major (out x in), then bias".into(),
            architecture: self.arch,
            schedule: self.schedule.params(),
            weights: self.params(),
        };
        let text = serde_json::to_string(&ck).expect("checkpoint serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            field: "checkpoint".into(),
            reason: e.to_string(),
        })?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse {
                field: "format".into(),
                reason: format!("expected `{CHECKPOINT_FORMAT}`, got `{}`", ck.format),
            });
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: ck.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if ck.float_width != 64 {
            return Err(Error::Parse {
                field: "float_width".into(),
                reason: format!("only 64-bit weights are supported, got {}", ck.float_width),
            });
        }
        let schedule = NoiseSchedule::from_params(ck.schedule)?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = Self::init(ck.architecture, schedule, &mut rng);
        model.set_params(&ck.weights)?;
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: &str = "duet-mlp-denoiser";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    float_width: u32,
    weight_order: String,
    architecture: MlpArchitecture,
    schedule: ScheduleParams,
    weights: Vec<f64>,
}

impl Denoiser for MlpDenoiser {
    fn layout(&self) -> MotionLayout {
        self.arch.layout()
    }

    fn predict_x0(&self, state: &DiffusionState, condition: &ConditionLabel) -> Vec<f64> {
        let f = self.features(&state.x, state.t, condition);
        let input = DMatrix::from_column_slice(f.len(), 1, &f);
        self.predict_batch(&input).as_slice().to_vec()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean minibatch loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Builds one noised minibatch: random step per item, forward-noised input,
/// clean motion as target.
pub fn make_batch(
    model: &MlpDenoiser,
    items: &[&(TwoAgentMotion, ConditionLabel)],
    rng: &mut ChainRng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_out = model.arch.layout().len();
    let n_in = model.arch.input_dim();
    let mut input = DMatrix::zeros(n_in, items.len());
    let mut target = DMatrix::zeros(n_out, items.len());
    let steps = model.schedule.steps();
    for (col, (motion, label)) in items.iter().enumerate() {
        let x0 = motion.to_flat();
        if x0.len() != n_out {
            return Err(Error::Shape {
                what: "training motion",
                expected: n_out,
                got: x0.len(),
            });
        }
        let t = rng.gen_range(1..=steps);
        let xt = forward_noise(&x0, t, &model.schedule, &mut *rng as &mut dyn NoiseSource)?;
        input.set_column(col, &DVector::from_vec(model.features(&xt, t, label)));
        target.set_column(col, &DVector::from_vec(x0));
    }
    Ok((input, target))
}

/// Fits an [`MlpDenoiser`] with Adam on the x0-prediction MSE.
pub fn train_mlp_denoiser(
    dataset: &[(TwoAgentMotion, ConditionLabel)],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut ChainRng,
) -> Result<(MlpDenoiser, TrainReport)> {
    let first = dataset.first().ok_or_else(|| Error::param("dataset", "is empty"))?;
    let layout = first.0.layout();
    if let Some((m, _)) = dataset.iter().find(|(m, _)| m.layout() != layout) {
        return Err(Error::Shape {
            what: "dataset motion size",
            expected: layout.len(),
            got: m.layout().len(),
        });
    }
    if config.batch_size == 0 || config.epochs == 0 || config.hidden == 0 {
        return Err(Error::param("train config", "batch size, epochs and width must be positive"));
    }
    let arch = MlpArchitecture::for_layout(layout, config.hidden, config.hidden_layers);
    let mut model = MlpDenoiser::init(arch, schedule.clone(), rng);
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let items: Vec<_> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (input, target) = make_batch(&model, &items, rng)?;
            let (loss, grads) = model.loss_and_grad(&input, &target);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            adam.update(&mut params, &grads.flatten());
            model.set_params(&params)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok((model, report))
}
