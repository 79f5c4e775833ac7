use super::{BoundParams, Init, LayerError, ParamSpec};
use crate::autodiff::{concat, stack, Tape, Tensor, TensorError, Var};

/// Stacked LSTM with gate order `(input, forget, cell, output)`.
///
/// Layer `l` owns `{name}.{l}.weight: [in_l + hidden, 4·hidden]` acting on
/// `[x_t, h_{t-1}]`, and `{name}.{l}.bias: [4·hidden]` whose forget slice
/// starts at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub name: String,
    pub input_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
}

impl LstmStack {
    pub fn new(name: impl Into<String>, input_size: usize, hidden_size: usize, layers: usize) -> Result<Self, LayerError> {
        let name = name.into();
        if input_size == 0 || hidden_size == 0 || layers == 0 {
            return Err(LayerError::InvalidDim(format!(
                "{name}: input {input_size}, hidden {hidden_size}, layers {layers}"
            )));
        }
        Ok(Self {
            name,
            input_size,
            hidden_size,
            layers,
        })
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    pub fn weight_name(&self, l: usize) -> String {
        format!("{}.{l}.weight", self.name)
    }

    pub fn bias_name(&self, l: usize) -> String {
        format!("{}.{l}.bias", self.name)
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let h = self.hidden_size;
        (0..self.layers)
            .flat_map(|l| {
                let fan_in = self.layer_input(l) + h;
                let mut bias = vec![0.0; 4 * h];
                bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
                [
                    ParamSpec::new(
                        self.weight_name(l),
                        &[fan_in, 4 * h],
                        Init::XavierUniform {
                            fan_in,
                            fan_out: 4 * h,
                        },
                    ),
                    ParamSpec::new(self.bias_name(l), &[4 * h], Init::Values(bias)),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        let h = self.hidden_size;
        (0..self.layers)
            .map(|l| (self.layer_input(l) + h) * 4 * h + 4 * h)
            .sum()
    }

    /// Top-layer hidden states for every step of `x: [B, N, in]` (or
    /// `[N, in]`), starting from zero state.
    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let shape = x.shape();
        let unbatched = shape.len() == 2;
        let x = if unbatched { x.reshape(&[1, shape[0], shape[1]])? } else { x };
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != self.input_size {
            return Err(TensorError::ShapeMismatch {
                op: "lstm",
                left: shape,
                right: vec![self.input_size, self.hidden_size],
            });
        }
        let (batch, steps) = (shape[0], shape[1]);
        let tape: &'t Tape = x.tape();
        let h = self.hidden_size;
        let zeros = || tape.constant(Tensor::zeros(&[batch, h]));
        let mut hidden: Vec<Var<'t>> = (0..self.layers).map(|_| zeros()).collect();
        let mut cell: Vec<Var<'t>> = (0..self.layers).map(|_| zeros()).collect();
        let weights: Vec<_> = (0..self.layers).map(|l| p[&self.weight_name(l)]).collect();
        let biases: Vec<_> = (0..self.layers)
            .map(|l| p[&self.bias_name(l)].expand_leading(&[batch]))
            .collect();
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut input = x.select(1, t)?;
            for l in 0..self.layers {
                let z = concat(&[input, hidden[l]], 1)?
                    .matmul(weights[l])?
                    .add(biases[l])?;
                let i = z.slice(1, 0, h)?.sigmoid();
                let f = z.slice(1, h, h)?.sigmoid();
                let g = z.slice(1, 2 * h, h)?.tanh();
                let o = z.slice(1, 3 * h, h)?.sigmoid();
                cell[l] = f.mul(cell[l])?.add(i.mul(g)?)?;
                hidden[l] = o.mul(cell[l].tanh())?;
                input = hidden[l];
            }
            outputs.push(input);
        }
        let out = stack(&outputs, 1)?;
        if unbatched {
            out.reshape(&[steps, h])
        } else {
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GradCheck;
    use crate::layers::{check_registry_gradients, count_params, init_params, ParamRegistry};

    #[test]
    fn zero_weights_give_zero_outputs() {
        let lstm = LstmStack::new("lstm", 3, 4, 2).unwrap();
        let mut reg = ParamRegistry::new();
        for spec in lstm.param_specs() {
            reg.insert(spec.name, Tensor::zeros(&spec.shape)).unwrap();
        }
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        let x = Tensor::full(&[6, 3], 0.7);
        let y = lstm.forward(&p, tape.constant(x)).unwrap().value();
        assert_eq!(y.shape(), &[6, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shapes_and_forget_bias() {
        let lstm = LstmStack::new("lstm", 3, 5, 2).unwrap();
        let reg = init_params(&lstm.param_specs(), 2).unwrap();
        let b = reg.get("lstm.0.bias").unwrap().data();
        assert!(b[5..10].iter().all(|&v| v == 1.0));
        assert!(b[..5].iter().chain(&b[10..]).all(|&v| v == 0.0));
        for n in [1, 50] {
            let tape = Tape::new();
            let p = reg.bind_frozen(&tape);
            let y = lstm.forward(&p, tape.constant(Tensor::full(&[n, 3], 0.1))).unwrap();
            assert_eq!(y.shape(), vec![n, 5]);
        }
        assert_eq!(count_params(&reg), lstm.num_params());
        assert_eq!(lstm.num_params(), (3 + 5) * 20 + 20 + (5 + 5) * 20 + 20);
    }

    #[test]
    fn single_cell_single_step_hand_computation() {
        // input 1, hidden 1: z = [x, h0] W + b, h0 = c0 = 0
        let lstm = LstmStack::new("c", 1, 1, 1).unwrap();
        let mut reg = ParamRegistry::new();
        // rows: x, h; columns: i, f, g, o
        reg.insert("c.0.weight", Tensor::new(vec![2, 4], vec![0.5, -1.0, 2.0, 1.5, 9.0, 9.0, 9.0, 9.0]).unwrap())
            .unwrap();
        reg.insert("c.0.bias", Tensor::vector(vec![0.1, 1.0, -0.2, 0.0])).unwrap();
        let tape = Tape::new();
        let p = reg.bind_frozen(&tape);
        let y = lstm
            .forward(&p, tape.constant(Tensor::new(vec![1, 1], vec![0.8]).unwrap()))
            .unwrap()
            .item();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * 0.8 + 0.1);
        let g = (2.0f64 * 0.8 - 0.2).tanh();
        let o = sig(1.5 * 0.8);
        let c = i * g; // forget gate multiplies c0 = 0
        let expect = o * c.tanh();
        assert!((y - expect).abs() < 1e-15, "{y} vs {expect}");
        // i = σ(0.5), g = tanh(1.4), o = σ(1.2)
        assert!((expect - 0.385_292_781_3).abs() < 1e-9, "{expect}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let lstm = LstmStack::new("lstm", 2, 3, 2).unwrap();
        let reg = init_params(&lstm.param_specs(), 6).unwrap();
        let x = Tensor::new(vec![2, 4, 2], (0..16).map(|i| (i as f64 * 0.61).cos()).collect()).unwrap();
        let (r, worst) = check_registry_gradients(&reg, GradCheck::default(), |tape, p| {
            Ok(lstm.forward(p, tape.constant(x.clone()))?.square().sum_all())
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?} at {worst:?}");
    }
}
