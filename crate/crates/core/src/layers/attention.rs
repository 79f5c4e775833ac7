use super::{BoundParams, LayerError, Linear, ParamSpec};
use crate::autodiff::{concat, TensorError, Var};

/// Multi-head scaled dot-product self-attention, where queries, keys and
/// values are all projections of the same input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSelfAttention {
    pub d_model: usize,
    pub heads: usize,
    /// Restrict each query to keys at or before its own position.
    pub causal: bool,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadSelfAttention {
    pub fn new(name: &str, d_model: usize, heads: usize, causal: bool) -> Result<Self, LayerError> {
        if heads == 0 || d_model == 0 || d_model % heads != 0 {
            return Err(LayerError::InvalidDim(format!(
                "{name}: d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            d_model,
            heads,
            causal,
            query: Linear::new(format!("{name}.q"), d_model, d_model)?,
            key: Linear::new(format!("{name}.k"), d_model, d_model)?,
            value: Linear::new(format!("{name}.v"), d_model, d_model)?,
            output: Linear::new(format!("{name}.o"), d_model, d_model)?,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(Linear::param_specs)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        4 * self.query.num_params()
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        Ok(self.forward_with_weights(p, x)?.0)
    }

    /// Output `[..., N, d_model]` plus the per-head attention matrices
    /// `[..., N, N]` (rows index queries, columns keys).
    pub fn forward_with_weights<'t>(
        &self,
        p: &BoundParams<'t>,
        x: Var<'t>,
    ) -> Result<(Var<'t>, Vec<Var<'t>>), TensorError> {
        let shape = x.shape();
        if shape.len() < 2 || shape[shape.len() - 1] != self.d_model {
            return Err(TensorError::ShapeMismatch {
                op: "self_attention",
                left: shape,
                right: vec![self.d_model],
            });
        }
        let last = shape.len() - 1;
        let q = self.query.forward(p, x)?;
        let k = self.key.forward(p, x)?;
        let v = self.value.forward(p, x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice(last, h * dh, dh)?;
            let kh = k.slice(last, h * dh, dh)?;
            let vh = v.slice(last, h * dh, dh)?;
            let mut scores = qh.matmul(kh.transpose_last2()?)?.scale(scale);
            if self.causal {
                scores = scores.causal_mask()?;
            }
            let w = scores.softmax_lastdim()?;
            contexts.push(w.matmul(vh)?);
            weights.push(w);
        }
        let merged = if contexts.len() == 1 {
            contexts[0]
        } else {
            concat(&contexts, last)?
        };
        Ok((self.output.forward(p, merged)?, weights))
    }
}
