use std::collections::BTreeMap;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LayerError;
use crate::autodiff::{GradCheck, GradCheckReport, Gradients, Tape, Tensor, TensorError, Var};

/// How a parameter tensor is filled at construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    XavierUniform { fan_in: usize, fan_out: usize },
    Zeros,
    /// Explicit values, row-major.
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Named trainable tensors, iterated in sorted-name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamRegistry {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), LayerError> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(LayerError::DuplicateParam(name));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        self.bind_with(tape, true)
    }

    /// Records every tensor on `tape` as a constant (inference only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        self.bind_with(tape, false)
    }

    fn bind_with<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
            .collect();
        BoundParams { vars }
    }
}

/// Total number of scalar entries across all registered tensors.
pub fn count_params(registry: &ParamRegistry) -> usize {
    registry.iter().map(|(_, t)| t.numel()).sum()
}

/// Builds a registry from `specs`, drawing every random entry from one
/// ChaCha stream seeded by `seed`, in spec order.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> Result<ParamRegistry, LayerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reg = ParamRegistry::new();
    for spec in specs {
        if spec.shape.is_empty() || spec.shape.contains(&0) {
            return Err(LayerError::InvalidDim(format!(
                "{} has shape {:?}",
                spec.name, spec.shape
            )));
        }
        let n: usize = spec.shape.iter().product();
        let data = match &spec.init {
            Init::XavierUniform { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Values(v) => {
                if v.len() != n {
                    return Err(LayerError::InvalidDim(format!(
                        "{}: {} init values for {} entries",
                        spec.name,
                        v.len(),
                        n
                    )));
                }
                v.clone()
            }
        };
        reg.insert(spec.name.clone(), Tensor::new(spec.shape.clone(), data)?)?;
    }
    Ok(reg)
}

/// A registry recorded on a tape for one forward pass.
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    /// Binds already-recorded variables under the given names.
    pub fn from_vars(names: &[String], vars: &[Var<'t>]) -> Self {
        Self {
            vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<Var<'t>> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t>)> {
        self.vars.iter()
    }

    /// Gradient per parameter name; unreached parameters get zeros.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| (k.clone(), grads.wrt_or_zero(v)))
            .collect()
    }
}

impl<'t> Index<&str> for BoundParams<'t> {
    type Output = Var<'t>;

    fn index(&self, name: &str) -> &Var<'t> {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }
}

/// Runs a central-difference gradient check of `f` over every tensor in
/// `registry`. Returns the report and the name of the worst parameter.
pub fn check_registry_gradients<F>(
    registry: &ParamRegistry,
    check: GradCheck,
    f: F,
) -> Result<(GradCheckReport, Option<String>), TensorError>
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>) -> Result<Var<'t>, TensorError>,
{
    let names: Vec<String> = registry.names().cloned().collect();
    let params: Vec<Tensor> = registry.iter().map(|(_, t)| t.clone()).collect();
    let report = check.run(
        |tape, vars| f(tape, &BoundParams::from_vars(&names, vars)),
        &params,
    )?;
    let worst = report.worst.map(|(i, e)| format!("{}[{}]", names[i], e));
    Ok((report, worst))
}
