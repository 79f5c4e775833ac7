//! Force-forecasting models: Attention-ODE, MLP-ODE and an LSTM baseline.
//!
//! Every model maps a condition sequence `X: [N, n_in]` and the measured
//! initial force `F0: [f_out]` to a predicted trajectory `[N, f_out]`, where
//! row `i` is the force at `t0 + (i + 1)·dt`. Batched inputs `[B, N, n_in]`
//! with `F0: [B, f_out]` are supported throughout.
//!
//! For the ODE variants the encoder produces one latent vector per step,
//! which is held fixed over the matching integration interval, and the
//! kernel sees the evolving force:
//!
//! ```text
//! dF/dt = σ_F ⊙ kernel([(F − μ_F) / σ_F, h_i (, t)])
//! ```
//!
//! The kernel's final layer starts at zero, so an untrained model predicts
//! `F(t) = F0` exactly.

mod checkpoint;

pub use checkpoint::{checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{concat, Tape, Tensor, TensorError, Var};
use crate::layers::{
    count_params, init_params, Activation, BoundParams, LayerError, Linear, LstmStack, Mlp, MultiHeadSelfAttention,
    ParamRegistry, ParamSpec,
};
use crate::odeint::{integrate, OdeError, Solver, TimeGrid, VectorField};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input mismatch: {0}")]
    Input(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Attention,
    Mlp,
    /// The recurrent baseline; no ODE solve.
    Lstm,
}

impl EncoderKind {
    /// Display name used in reports (`Attention-ODE`, `MLP-ODE`, `LSTM`).
    pub fn model_name(self) -> &'static str {
        match self {
            EncoderKind::Attention => "Attention-ODE",
            EncoderKind::Mlp => "MLP-ODE",
            EncoderKind::Lstm => "LSTM",
        }
    }

    /// Command-line spelling (`attention-ode`, `mlp-ode`, `lstm`).
    pub fn cli_name(self) -> &'static str {
        match self {
            EncoderKind::Attention => "attention-ode",
            EncoderKind::Mlp => "mlp-ode",
            EncoderKind::Lstm => "lstm",
        }
    }

    pub fn is_ode(self) -> bool {
        self != EncoderKind::Lstm
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "attention" | "attention-ode" => Ok(EncoderKind::Attention),
            "mlp" | "mlp-ode" => Ok(EncoderKind::Mlp),
            "lstm" => Ok(EncoderKind::Lstm),
            other => Err(format!("unknown model {other:?} (expected attention-ode, mlp-ode or lstm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub n_in: usize,
    pub f_out: usize,
    pub d_model: usize,
    pub heads: usize,
    pub latent: usize,
    pub kernel_hidden: Vec<usize>,
    pub solver: Solver,
    pub dt: f64,
    pub substeps: usize,
    /// Feed the absolute time `t` to the kernel as an extra input.
    pub time_input: bool,
    pub positional_encoding: bool,
    pub layer_norm: bool,
    pub causal: bool,
    pub activation: Activation,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Attention,
            n_in: 4,
            f_out: 2,
            d_model: 64,
            heads: 4,
            latent: 64,
            kernel_hidden: vec![64, 64, 64],
            solver: Solver::Euler,
            dt: 0.02,
            substeps: 1,
            time_input: false,
            positional_encoding: false,
            layer_norm: false,
            causal: false,
            activation: Activation::Tanh,
            lstm_hidden: 64,
            lstm_layers: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Laptop-sized defaults.
    pub fn desk(encoder: EncoderKind, n_in: usize, f_out: usize) -> Self {
        Self {
            encoder,
            n_in,
            f_out,
            ..Self::default()
        }
    }

    /// Kernel `[512, 512, 512]`, 4 heads, LSTM hidden 256.
    pub fn paper(encoder: EncoderKind, n_in: usize, f_out: usize) -> Self {
        Self {
            d_model: 128,
            latent: 128,
            kernel_hidden: vec![512, 512, 512],
            lstm_hidden: 256,
            ..Self::desk(encoder, n_in, f_out)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.n_in == 0 || self.f_out == 0 {
            return bad(format!("n_in {} and f_out {} must be positive", self.n_in, self.f_out));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.substeps == 0 {
            return bad(format!("dt {} / substeps {} must be positive", self.dt, self.substeps));
        }
        match self.encoder {
            EncoderKind::Lstm => {
                if self.lstm_hidden == 0 || self.lstm_layers == 0 {
                    return bad("lstm_hidden and lstm_layers must be positive".into());
                }
            }
            kind => {
                if self.d_model == 0 || self.latent == 0 {
                    return bad("d_model and latent must be positive".into());
                }
                if self.kernel_hidden.contains(&0) {
                    return bad(format!("kernel widths must be positive, got {:?}", self.kernel_hidden));
                }
                if kind == EncoderKind::Attention && (self.heads == 0 || self.d_model % self.heads != 0) {
                    return bad(format!(
                        "d_model {} is not divisible by {} heads",
                        self.d_model, self.heads
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn kernel_input_dim(&self) -> usize {
        self.f_out + self.latent + usize::from(self.time_input)
    }
}

/// Per-axis affine normalization of conditions and forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub f_mean: Vec<f64>,
    pub f_std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n_in: usize, f_out: usize) -> Self {
        Self {
            x_mean: vec![0.0; n_in],
            x_std: vec![1.0; n_in],
            f_mean: vec![0.0; f_out],
            f_std: vec![1.0; f_out],
        }
    }

    /// Column statistics over every row of every `[N, n]` / `[N, f]`
    /// sequence. Axes with (near-)zero spread keep unit scale.
    pub fn fit<'a>(
        conditions: impl IntoIterator<Item = &'a Tensor>,
        forces: impl IntoIterator<Item = &'a Tensor>,
    ) -> Result<Self, ModelError> {
        let (x_mean, x_std) = column_stats(conditions)?;
        let (f_mean, f_std) = column_stats(forces)?;
        Ok(Self {
            x_mean,
            x_std,
            f_mean,
            f_std,
        })
    }

    fn check(&self, n_in: usize, f_out: usize) -> Result<(), ModelError> {
        let ok = self.x_mean.len() == n_in
            && self.x_std.len() == n_in
            && self.f_mean.len() == f_out
            && self.f_std.len() == f_out
            && self.x_std.iter().chain(&self.f_std).all(|s| *s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!(
                "normalizer does not fit n_in {n_in}, f_out {f_out} or has non-positive scales"
            )))
        }
    }
}

fn column_stats<'a>(rows: impl IntoIterator<Item = &'a Tensor>) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut sum: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mut width = None;
    let mut all = Vec::new();
    for t in rows {
        let w = *t.shape().last().unwrap_or(&0);
        if *width.get_or_insert(w) != w || w == 0 {
            return Err(ModelError::Input(format!("inconsistent column count {w}")));
        }
        all.push(t);
    }
    let w = width.ok_or_else(|| ModelError::Input("no data to fit a normalizer".into()))?;
    sum.resize(w, 0.0);
    sq.resize(w, 0.0);
    for t in &all {
        for row in t.data().chunks(w) {
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    for t in &all {
        for row in t.data().chunks(w) {
            for (j, v) in row.iter().enumerate() {
                sq[j] += (v - mean[j]).powi(2);
            }
        }
    }
    let std = sq
        .iter()
        .map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok((mean, std))
}

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Attention {
        embed: Linear,
        attention: MultiHeadSelfAttention,
        head: Mlp,
    },
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Ode { encoder: Encoder, kernel: Mlp },
    Lstm { lstm: LstmStack, head: Linear },
}

/// A built model: architecture, parameters and normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    config: ModelConfig,
    params: ParamRegistry,
    normalizer: Normalizer,
    body: Body,
}

fn architecture(config: &ModelConfig) -> Result<Body, ModelError> {
    config.validate()?;
    let act = config.activation;
    Ok(match config.encoder {
        EncoderKind::Lstm => Body::Lstm {
            lstm: LstmStack::new("lstm", config.n_in + config.f_out, config.lstm_hidden, config.lstm_layers)?,
            head: Linear::new("lstm.out", config.lstm_hidden, config.f_out)?,
        },
        kind => {
            let d = config.d_model;
            let encoder = if kind == EncoderKind::Attention {
                Encoder::Attention {
                    embed: Linear::new("encoder.embed", config.n_in, d)?,
                    attention: MultiHeadSelfAttention::new("encoder.attn", d, config.heads, config.causal)?,
                    head: Mlp::new("encoder.head", &[d, d, config.latent], act)?,
                }
            } else {
                Encoder::Mlp(Mlp::new("encoder.mlp", &[config.n_in, d, d, config.latent], act)?)
            };
            let mut widths = vec![config.kernel_input_dim()];
            widths.extend(&config.kernel_hidden);
            widths.push(config.f_out);
            Body::Ode {
                encoder,
                kernel: Mlp::new("kernel", &widths, act)?.zero_last(),
            }
        }
    })
}

fn body_specs(body: &Body) -> Vec<ParamSpec> {
    match body {
        Body::Ode { encoder, kernel } => {
            let mut specs = match encoder {
                Encoder::Attention { embed, attention, head } => {
                    let mut s = embed.param_specs();
                    s.extend(attention.param_specs());
                    s.extend(head.param_specs());
                    s
                }
                Encoder::Mlp(m) => m.param_specs(),
            };
            specs.extend(kernel.param_specs());
            specs
        }
        Body::Lstm { lstm, head } => {
            let mut s = lstm.param_specs();
            s.extend(head.param_specs());
            s
        }
    }
}

/// Closed-form parameter count for `config`.
pub fn expected_param_count(config: &ModelConfig) -> usize {
    let lin = |i: usize, o: usize| i * o + o;
    let c = config;
    match c.encoder {
        EncoderKind::Lstm => {
            let h = c.lstm_hidden;
            let first = (c.n_in + c.f_out + h) * 4 * h + 4 * h;
            let rest = (c.lstm_layers - 1) * ((2 * h) * 4 * h + 4 * h);
            first + rest + lin(h, c.f_out)
        }
        kind => {
            let d = c.d_model;
            let encoder = match kind {
                EncoderKind::Attention => lin(c.n_in, d) + 4 * lin(d, d) + lin(d, d) + lin(d, c.latent),
                _ => lin(c.n_in, d) + lin(d, d) + lin(d, c.latent),
            };
            let mut widths = vec![c.kernel_input_dim()];
            widths.extend(&c.kernel_hidden);
            widths.push(c.f_out);
            encoder + widths.windows(2).map(|w| lin(w[0], w[1])).sum::<usize>()
        }
    }
}

/// Deterministically builds a model from `config.seed`.
pub fn build_model(config: ModelConfig) -> Result<ForecastModel, ModelError> {
    let body = architecture(&config)?;
    let params = init_params(&body_specs(&body), config.seed)?;
    let normalizer = Normalizer::identity(config.n_in, config.f_out);
    Ok(ForecastModel {
        config,
        params,
        normalizer,
        body,
    })
}

/// Sinusoidal position code `[N, d]`.
fn positional_table(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / d as f64);
            let angle = pos as f64 * freq;
            out[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Broadcasts a per-axis vector to `[rows, len]`.
fn tile(v: &[f64], rows: usize) -> Tensor {
    let data = (0..rows).flat_map(|_| v.iter().copied()).collect();
    Tensor::new(vec![rows, v.len()], data).expect("tile shape")
}

/// The ODE right-hand side of a built model.
pub struct KernelField<'m> {
    kernel: &'m Mlp,
    f_mean: &'m [f64],
    inv_std: Vec<f64>,
    f_std: &'m [f64],
    time_input: bool,
    identity_scale: bool,
}

impl VectorField for KernelField<'_> {
    fn eval<'t>(&self, p: &BoundParams<'t>, state: Var<'t>, control: Var<'t>, t: f64) -> Result<Var<'t>, TensorError> {
        let tape = state.tape();
        let shape = state.shape();
        let batched = shape.len() == 2;
        let rows = if batched { shape[0] } else { 1 };
        let (s, c) = if batched {
            (state, control)
        } else {
            (state.reshape(&[1, shape[0]])?, control.reshape(&[1, control.shape()[0]])?)
        };
        let s = if self.identity_scale {
            s
        } else {
            s.sub(tape.constant(tile(self.f_mean, rows)))?
                .mul(tape.constant(tile(&self.inv_std, rows)))?
        };
        let mut parts = vec![s, c];
        if self.time_input {
            parts.push(tape.constant(Tensor::full(&[rows, 1], t)));
        }
        let mut d = self.kernel.forward(p, concat(&parts, 1)?)?;
        if !self.identity_scale {
            d = d.mul(tape.constant(tile(self.f_std, rows)))?;
        }
        if batched {
            Ok(d)
        } else {
            d.reshape(&shape)
        }
    }
}

/// Promotes `[N, k]` to `[1, N, k]`; returns whether it did.
fn batch3(x: &Tensor, width: usize, what: &str) -> Result<(Tensor, bool), ModelError> {
    match x.shape() {
        [_, w] if *w == width => Ok((x.reshape(&[1, x.shape()[0], *w])?, true)),
        [_, _, w] if *w == width => Ok((x.clone(), false)),
        s => Err(ModelError::Input(format!("{what} has shape {s:?}, expected [N, {width}] or [B, N, {width}]"))),
    }
}

impl ForecastModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamRegistry {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamRegistry {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<(), ModelError> {
        normalizer.check(self.config.n_in, self.config.f_out)?;
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        count_params(&self.params)
    }

    /// Observation grid for an `N`-step sequence.
    pub fn grid(&self, steps: usize) -> Result<TimeGrid, ModelError> {
        Ok(TimeGrid::with_substeps(0.0, self.config.dt, steps, self.config.substeps)?)
    }

    /// The kernel as a vector field (ODE variants only).
    pub fn kernel_field(&self) -> Option<KernelField<'_>> {
        match &self.body {
            Body::Ode { kernel, .. } => {
                let n = &self.normalizer;
                Some(KernelField {
                    kernel,
                    f_mean: &n.f_mean,
                    inv_std: n.f_std.iter().map(|s| 1.0 / s).collect(),
                    f_std: &n.f_std,
                    time_input: self.config.time_input,
                    identity_scale: n.f_mean.iter().all(|m| *m == 0.0) && n.f_std.iter().all(|s| *s == 1.0),
                })
            }
            Body::Lstm { .. } => None,
        }
    }

    fn normalized_conditions(&self, x: &Tensor) -> Tensor {
        let n = &self.normalizer;
        let w = self.config.n_in;
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(w) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - n.x_mean[j]) / n.x_std[j];
            }
        }
        out
    }

    /// Latent sequence `[B, N, latent]` for conditions `x: [B, N, n_in]`.
    pub fn encode<'t>(&self, tape: &'t Tape, p: &BoundParams<'t>, x: &Tensor) -> Result<Var<'t>, ModelError> {
        let (x, _) = batch3(x, self.config.n_in, "conditions")?;
        let Body::Ode { encoder, .. } = &self.body else {
            return Err(ModelError::InvalidConfig("the LSTM baseline has no latent encoder".into()));
        };
        let xn = tape.constant(self.normalized_conditions(&x));
        Ok(match encoder {
            Encoder::Mlp(m) => m.forward(p, xn)?,
            Encoder::Attention { embed, attention, head } => {
                let (b, n) = (x.shape()[0], x.shape()[1]);
                let d = self.config.d_model;
                let mut z = embed.forward(p, xn)?;
                if self.config.positional_encoding {
                    let pe = Tensor::new(vec![n, d], positional_table(n, d))?;
                    z = z.add(tape.constant(pe).expand_leading(&[b]))?;
                }
                let mut y = z.add(attention.forward(p, z)?)?;
                if self.config.layer_norm {
                    y = y.layer_norm_lastdim(1e-5)?;
                }
                head.forward(p, y)?
            }
        })
    }

    /// Differentiable prediction `[B, N, f_out]` (or `[N, f_out]` for an
    /// unbatched `x`). `grid` is ignored by the LSTM baseline.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &BoundParams<'t>,
        x: &Tensor,
        f0: &Tensor,
        grid: &TimeGrid,
    ) -> Result<Var<'t>, ModelError> {
        let (x3, unbatched) = batch3(x, self.config.n_in, "conditions")?;
        let (b, n) = (x3.shape()[0], x3.shape()[1]);
        let f = self.config.f_out;
        let f0 = match f0.shape() {
            [w] if *w == f && unbatched => f0.reshape(&[1, f])?,
            [bb, w] if *w == f && *bb == b && !unbatched => f0.clone(),
            s => {
                return Err(ModelError::Input(format!(
                    "initial force has shape {s:?}, expected {:?}",
                    if unbatched { vec![f] } else { vec![b, f] }
                )))
            }
        };
        if !f0.is_finite() {
            return Err(ModelError::Input("initial force is not finite".into()));
        }
        let out = match &self.body {
            Body::Ode { .. } => {
                if grid.steps != n {
                    return Err(OdeError::LengthMismatch {
                        what: "conditions",
                        expected: grid.steps,
                        got: n,
                    }
                    .into());
                }
                let h = self.encode(tape, p, &x3)?;
                let controls: Vec<Var<'t>> = (0..n).map(|i| h.select(1, i)).collect::<Result<_, _>>()?;
                let field = self.kernel_field().expect("ode body");
                let states = integrate(self.config.solver, tape.constant(f0), &field, p, grid, &controls)?;
                crate::autodiff::stack(&states, 1)?
            }
            Body::Lstm { lstm, head } => {
                let nz = &self.normalizer;
                let xn = self.normalized_conditions(&x3);
                let mut rows = Vec::with_capacity(b * n * (self.config.n_in + f));
                for bi in 0..b {
                    let f0n: Vec<f64> = (0..f).map(|j| (f0.data()[bi * f + j] - nz.f_mean[j]) / nz.f_std[j]).collect();
                    for row in xn.data()[bi * n * self.config.n_in..(bi + 1) * n * self.config.n_in].chunks(self.config.n_in) {
                        rows.extend_from_slice(row);
                        rows.extend_from_slice(&f0n);
                    }
                }
                let input = tape.constant(Tensor::new(vec![b, n, self.config.n_in + f], rows)?);
                let y = head.forward(p, lstm.forward(p, input)?)?;
                let scale = tape.constant(Tensor::new(vec![n, f], tile(&nz.f_std, n).into_data())?).expand_leading(&[b]);
                let shift = tape.constant(Tensor::new(vec![n, f], tile(&nz.f_mean, n).into_data())?).expand_leading(&[b]);
                y.mul(scale)?.add(shift)?
            }
        };
        Ok(if unbatched { out.reshape(&[n, f])? } else { out })
    }

    /// Inference with the config's own time grid.
    pub fn predict(&self, x: &Tensor, f0: &Tensor) -> Result<Tensor, ModelError> {
        let steps = match x.shape() {
            [n, _] | [_, n, _] => *n,
            s => return Err(ModelError::Input(format!("conditions have shape {s:?}"))),
        };
        let grid = self.grid(steps)?;
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        Ok(self.forward(&tape, &p, x, f0, &grid)?.value())
    }
}

/// Latent sequence for `x: [N, n_in]` (ODE variants).
pub fn encode_conditions(model: &ForecastModel, x: &Tensor) -> Result<Tensor, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::Input("conditions are not finite".into()));
    }
    let tape = Tape::new();
    let p = model.params.bind_frozen(&tape);
    let h = model.encode(&tape, &p, x)?.value();
    if x.ndim() == 2 {
        let s = h.shape().to_vec();
        Ok(h.reshape(&s[1..])?)
    } else {
        Ok(h)
    }
}

/// ODE prediction on an explicit grid (`grid.steps` must equal `N`).
pub fn predict_forces(model: &ForecastModel, x: &Tensor, f0: &Tensor, grid: &TimeGrid) -> Result<Tensor, ModelError> {
    if !model.config.encoder.is_ode() {
        return Err(ModelError::InvalidConfig("predict_forces needs an ODE model".into()));
    }
    let tape = Tape::new();
    let p = model.params.bind_frozen(&tape);
    Ok(model.forward(&tape, &p, x, f0, grid)?.value())
}

/// Baseline prediction: `F0` is appended to every condition row.
pub fn predict_forces_lstm(model: &ForecastModel, x: &Tensor, f0: &Tensor) -> Result<Tensor, ModelError> {
    if model.config.encoder != EncoderKind::Lstm {
        return Err(ModelError::InvalidConfig("predict_forces_lstm needs the LSTM baseline".into()));
    }
    model.predict(x, f0)
}

impl ForecastModel {
    /// Replaces the parameters, checking names and shapes against the
    /// architecture.
    pub(crate) fn with_params(config: ModelConfig, normalizer: Normalizer, params: ParamRegistry) -> Result<Self, ModelError> {
        let body = architecture(&config)?;
        normalizer.check(config.n_in, config.f_out)?;
        let specs = body_specs(&body);
        if specs.len() != params.len() {
            return Err(ModelError::Corrupt(format!(
                "expected {} tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for spec in &specs {
            match params.get(&spec.name) {
                None => return Err(ModelError::Corrupt(format!("missing tensor {}", spec.name))),
                Some(t) if t.shape() != spec.shape.as_slice() => {
                    return Err(ModelError::Corrupt(format!(
                        "tensor {} has shape {:?}, expected {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self {
            config,
            params,
            normalizer,
            body,
        })
    }
}
