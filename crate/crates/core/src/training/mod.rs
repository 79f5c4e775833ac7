//! Trajectory-MSE training with Adam, global-norm clipping, best-validation
//! checkpointing and patience-based early stopping.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod gradcheck;

pub use gradcheck::{gradcheck_model, ModelGradCheck, GRADCHECK_MAX_PARAMS};

use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::hydrodata::Trajectory;
use crate::layers::ParamRegistry;
use crate::models::{checkpoint_save, ForecastModel, ModelError, Normalizer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Invalid(String),
    #[error("the training set is empty")]
    EmptyTrainSet,
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    Diverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; `f64::INFINITY` disables clipping.
    pub grad_clip_norm: f64,
    pub early_stop_patience: usize,
    /// Refit the model's normalizer on the training set before the first
    /// step.
    pub fit_normalizer: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            max_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip_norm: 1.0,
            early_stop_patience: 20,
            fit_normalizer: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.max_steps != Some(0)
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.epsilon > 0.0
            && self.grad_clip_norm > 0.0
            && self.early_stop_patience > 0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Invalid(format!("train config out of range: {self:?}")))
        }
    }
}

/// Adam moments per named parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
}

/// Mean squared difference over every element.
pub fn mse_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>, TensorError> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    pred.sub(target)?.square().mean_all()
}

/// Value-only counterpart of [`mse_loss`].
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    if pred.numel() == 0 {
        return Err(TensorError::EmptyReduction);
    }
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(s / pred.numel() as f64)
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_gradients(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// One bias-corrected Adam update after global-norm clipping. Nothing is
/// modified if any gradient is non-finite.
pub fn adam_step(
    params: &mut ParamRegistry,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
        match params.get(name) {
            Some(p) if p.shape() == g.shape() => {}
            Some(p) => {
                return Err(TrainError::Invalid(format!(
                    "gradient for {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )))
            }
            None => return Err(TrainError::Invalid(format!("gradient for unknown parameter {name}"))),
        }
    }
    let mut grads = grads.clone();
    clip_gradients(&mut grads, config.grad_clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, p) in params.iter_mut() {
        let zeros = || Tensor::zeros(p.shape());
        let m = state.m.entry(name.clone()).or_insert_with(zeros);
        let v = state.v.entry(name.clone()).or_insert_with(zeros);
        let g = grads.get(name);
        for i in 0..p.numel() {
            let gi = g.map_or(0.0, |g| g.data()[i]);
            let mi = b1 * m.data()[i] + (1.0 - b1) * gi;
            let vi = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            p.data_mut()[i] -= config.learning_rate * (mi / c1) / ((vi / c2).sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MaxSteps,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub wall_ms: f64,
    pub stop_reason: StopReason,
    pub checkpoint: Option<PathBuf>,
}

/// Where `train` writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Best-validation checkpoint, rewritten on every improvement.
    pub checkpoint: PathBuf,
    /// JSON-lines epoch log.
    pub log: PathBuf,
}

impl TrainOutput {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            checkpoint: dir.join("model.ckpt"),
            log: dir.join("train_log.jsonl"),
        }
    }
}

/// Stacked `(conditions [B,N,n], F0 [B,f], forces [B,N,f])`.
pub fn stack_batch(batch: &[&Trajectory]) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let x: Vec<Tensor> = batch.iter().map(|t| t.conditions.clone()).collect();
    let f0: Vec<Tensor> = batch.iter().map(|t| t.initial.clone()).collect();
    let y: Vec<Tensor> = batch.iter().map(|t| t.forces.clone()).collect();
    Ok((Tensor::stack(&x)?, Tensor::stack(&f0)?, Tensor::stack(&y)?))
}

fn check_dims(model: &ForecastModel, set: &[Trajectory], what: &str) -> Result<(), TrainError> {
    let c = model.config();
    let len = set.first().map(|t| t.conditions.shape()[0]);
    for t in set {
        let (n, f) = (t.conditions.shape()[1], t.forces.shape()[1]);
        if n != c.n_in || f != c.f_out {
            return Err(TrainError::Invalid(format!(
                "{what} trajectory {} has n = {n}, f = {f}; model expects n_in = {}, f_out = {}",
                t.id, c.n_in, c.f_out
            )));
        }
        if Some(t.conditions.shape()[0]) != len {
            return Err(TrainError::Invalid(format!("{what} trajectories differ in length")));
        }
    }
    Ok(())
}

/// Mean squared error of `model` over `set`, evaluated in batches.
pub fn evaluate_mse(model: &ForecastModel, set: &[Trajectory], batch_size: usize) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in set.chunks(batch_size.max(1)) {
        let refs: Vec<&Trajectory> = chunk.iter().collect();
        let (x, f0, y) = stack_batch(&refs)?;
        let pred = model.predict(&x, &f0)?;
        total += mse(&pred, &y)? * y.numel() as f64;
        count += y.numel();
    }
    if count == 0 {
        return Err(TrainError::Invalid("empty evaluation set".into()));
    }
    Ok(total / count as f64)
}

/// Loss and parameter gradients for one batch.
pub fn batch_gradients(
    model: &ForecastModel,
    batch: &[&Trajectory],
) -> Result<(f64, BTreeMap<String, Tensor>), TrainError> {
    let (x, f0, y) = stack_batch(batch)?;
    let steps = x.shape()[1];
    let grid = model.grid(steps)?;
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let pred = model.forward(&tape, &p, &x, &f0, &grid)?;
    let loss = mse_loss(pred, tape.constant(y))?;
    let value = loss.item();
    let grads = tape.backward(loss)?;
    Ok((value, p.gradients(&grads)))
}

fn append_log(path: &Path, record: &EpochRecord) -> Result<(), TrainError> {
    let io = |e: std::io::Error| TrainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(f, "{line}").map_err(io)
}

/// Trains `model` in place. On return the model holds the parameters with
/// the lowest validation loss seen (training loss when `val` is empty).
/// Sequential and deterministic for a given `config.seed`.
pub fn train(
    model: &mut ForecastModel,
    train_set: &[Trajectory],
    val_set: &[Trajectory],
    config: &TrainConfig,
    output: Option<&TrainOutput>,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    check_dims(model, train_set, "training")?;
    check_dims(model, val_set, "validation")?;
    if config.fit_normalizer {
        let n = Normalizer::fit(
            train_set.iter().map(|t| &t.conditions),
            train_set.iter().map(|t| &t.forces),
        )?;
        model.set_normalizer(n)?;
    }
    if let Some(out) = output {
        if out.log.exists() {
            std::fs::remove_file(&out.log).map_err(|e| TrainError::Io {
                path: out.log.display().to_string(),
                message: e.to_string(),
            })?;
        }
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, ParamRegistry)> = None;
    let mut records = Vec::new();
    let mut steps = 0usize;
    let mut last_finite = None;
    let mut stop_reason = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=config.max_epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradients(model, &batch)?;
            if !loss.is_finite() {
                return Err(diverged(model, best, epoch, last_finite));
            }
            match adam_step(model.params_mut(), &grads, &mut adam, config) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient(_)) => return Err(diverged(model, best, epoch, last_finite)),
                Err(e) => return Err(e),
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            steps += 1;
            if config.max_steps.is_some_and(|m| steps >= m) {
                stop_reason = StopReason::MaxSteps;
                break;
            }
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_mse(model, val_set, config.batch_size)?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged(model, best, epoch, last_finite));
        }
        last_finite = Some(epoch);
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_ms: epoch_start.elapsed().as_secs_f64() * 1e3,
            lr: config.learning_rate,
        };
        if let Some(out) = output {
            append_log(&out.log, &record)?;
        }
        records.push(record);
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, model.params().clone()));
            if let Some(out) = output {
                checkpoint_save(model, &out.checkpoint)?;
            }
        }
        if stop_reason == StopReason::MaxSteps {
            break 'epochs;
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.early_stop_patience {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch ran");
    *model.params_mut() = params;
    Ok(TrainReport {
        epochs: records,
        best_epoch,
        best_val_loss,
        steps,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        stop_reason,
        checkpoint: output.map(|o| o.checkpoint.clone()),
    })
}

/// Restores the best parameters seen so far and builds the divergence
/// error.
fn diverged(
    model: &mut ForecastModel,
    best: Option<(usize, f64, ParamRegistry)>,
    epoch: usize,
    last_finite_epoch: Option<usize>,
) -> TrainError {
    if let Some((_, _, params)) = best {
        *model.params_mut() = params;
    }
    TrainError::Diverged {
        epoch,
        last_finite_epoch,
    }
}

#[cfg(test)]
mod tests;
