use serde::{Deserialize, Serialize};

use super::{BoundParams, Init, LayerError, ParamSpec};
use crate::autodiff::{TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

/// `y = x W + b` with `W: [in, out]`, `b: [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub zero_init: bool,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Result<Self, LayerError> {
        let name = name.into();
        if in_dim == 0 || out_dim == 0 {
            return Err(LayerError::InvalidDim(format!("{name}: {in_dim} -> {out_dim}")));
        }
        Ok(Self {
            name,
            in_dim,
            out_dim,
            zero_init: false,
        })
    }

    /// Same layer with weights initialized to zero instead of Xavier.
    pub fn zeroed(mut self) -> Self {
        self.zero_init = true;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let w_init = if self.zero_init {
            Init::Zeros
        } else {
            Init::XavierUniform {
                fan_in: self.in_dim,
                fan_out: self.out_dim,
            }
        };
        vec![
            ParamSpec::new(self.weight_name(), &[self.in_dim, self.out_dim], w_init),
            ParamSpec::new(self.bias_name(), &[self.out_dim], Init::Zeros),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    /// Applies the layer over the last axis of `x: [..., in]`.
    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let shape = x.shape();
        let last = shape.last().copied().unwrap_or(0);
        if last != self.in_dim {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                left: shape,
                right: vec![self.in_dim, self.out_dim],
            });
        }
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = if shape.len() == 2 { x } else { x.reshape(&[rows, self.in_dim])? };
        let y = flat
            .matmul(p[&self.weight_name()])?
            .add(p[&self.bias_name()].expand_leading(&[rows]))?;
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.push(self.out_dim);
        if out_shape.len() == 2 {
            Ok(y)
        } else {
            y.reshape(&out_shape)
        }
    }
}

/// Linear layers with an activation between consecutive layers (none after
/// the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`; layers are named `{prefix}.{i}`.
    pub fn new(prefix: &str, dims: &[usize], activation: Activation) -> Result<Self, LayerError> {
        if dims.len() < 2 {
            return Err(LayerError::InvalidDim(format!("{prefix}: need at least two widths, got {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(format!("{prefix}.{i}"), w[0], w[1]))
            .collect::<Result<_, _>>()?;
        Ok(Self { layers, activation })
    }

    /// Zero-initializes the weights of the final layer.
    pub fn zero_last(mut self) -> Self {
        if let Some(last) = self.layers.pop() {
            self.layers.push(last.zeroed());
        }
        self
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        self.layers.iter().flat_map(Linear::param_specs).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h)?;
            if i < last {
                h = self.activation.apply(h);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{GradCheck, Tape, Tensor};
    use crate::layers::{check_registry_gradients, count_params, init_params, ParamRegistry};

    fn registry(entries: &[(&str, Tensor)]) -> ParamRegistry {
        let mut r = ParamRegistry::new();
        for (k, v) in entries {
            r.insert(*k, v.clone()).unwrap();
        }
        r
    }

    #[test]
    fn xavier_bound_and_zero_bias() {
        let lin = Linear::new("l", 4, 8).unwrap();
        let reg = init_params(&lin.param_specs(), 9).unwrap();
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(reg.get("l.weight").unwrap().data().iter().all(|w| w.abs() < bound));
        assert!(reg.get("l.bias").unwrap().data().iter().all(|&b| b == 0.0));
        assert_eq!(count_params(&reg), 40);
        let again = init_params(&lin.param_specs(), 9).unwrap();
        assert_eq!(reg, again);
        assert!(Linear::new("z", 0, 8).is_err());
    }

    #[test]
    fn identity_and_constant_networks() {
        let mlp = Mlp::new("m", &[3, 3], Activation::Tanh).unwrap();
        let reg = registry(&[("m.0.weight", Tensor::identity(3)), ("m.0.bias", Tensor::zeros(&[3]))]);
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let y = mlp.forward(&p, tape.constant(x.clone())).unwrap();
        assert_eq!(y.value(), x);

        let b = Tensor::vector(vec![0.25, -0.5, 2.0]);
        let reg = registry(&[("m.0.weight", Tensor::zeros(&[3, 3])), ("m.0.bias", b.clone())]);
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        let y = mlp.forward(&p, tape.constant(x)).unwrap().value();
        assert_eq!(y.index_axis0(0), b);
        assert_eq!(y.index_axis0(1), b);
    }

    #[test]
    fn hand_computed_two_layer_tanh_network() {
        // hidden = tanh([1,-1] W1 + b1) with W1 = [[0.5,-0.25],[0.75,1.0]], b1 = [0.1,-0.2]
        //        = tanh([-0.15, -1.45]);  out = hidden · [2, -1] + 0.3
        let mlp = Mlp::new("m", &[2, 2, 1], Activation::Tanh).unwrap();
        let reg = registry(&[
            ("m.0.weight", Tensor::new(vec![2, 2], vec![0.5, -0.25, 0.75, 1.0]).unwrap()),
            ("m.0.bias", Tensor::vector(vec![0.1, -0.2])),
            ("m.1.weight", Tensor::new(vec![2, 1], vec![2.0, -1.0]).unwrap()),
            ("m.1.bias", Tensor::vector(vec![0.3])),
        ]);
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        let y = mlp
            .forward(&p, tape.constant(Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap()))
            .unwrap()
            .item();
        let expect = 2.0 * (-0.15f64).tanh() - (-1.45f64).tanh() + 0.3;
        assert!((y - expect).abs() < 1e-15);
        assert!((y - 0.897_922_806_6).abs() < 1e-9);
    }

    #[test]
    fn mlp_param_count_closed_form() {
        let mlp = Mlp::new("m", &[4, 64, 64, 2], Activation::Tanh).unwrap();
        let reg = init_params(&mlp.param_specs(), 0).unwrap();
        // 4·64+64 + 64·64+64 + 64·2+2
        assert_eq!(count_params(&reg), 4610);
        assert_eq!(mlp.num_params(), 4610);
        assert_eq!(count_params(&ParamRegistry::new()), 0);
    }

    #[test]
    fn input_width_is_checked() {
        let mlp = Mlp::new("m", &[3, 2], Activation::Relu).unwrap();
        let reg = init_params(&mlp.param_specs(), 1).unwrap();
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        assert!(mlp.forward(&p, tape.constant(Tensor::zeros(&[2, 4]))).is_err());
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mlp = Mlp::new("m", &[3, 5, 4, 2], Activation::Tanh).unwrap();
        let reg = init_params(&mlp.param_specs(), 7).unwrap();
        let x = Tensor::new(vec![2, 3, 3], (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (r, _) = check_registry_gradients(&reg, GradCheck::default(), |tape, p| {
            Ok(mlp.forward(p, tape.constant(x.clone()))?.square().sum_all())
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
