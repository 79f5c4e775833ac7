use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{mse_loss, TrainError};
use crate::autodiff::{GradCheck, Tensor};
use crate::layers::check_registry_gradients;
use crate::models::{build_model, ModelConfig, ModelError, Normalizer};

/// Models above this size are refused: central differences cost two forward
/// passes per parameter.
pub const GRADCHECK_MAX_PARAMS: usize = 5_000;

#[derive(Debug, Clone, Serialize)]
pub struct ModelGradCheck {
    pub max_rel_error: f64,
    pub worst_parameter: Option<String>,
    pub entries_checked: usize,
    pub num_params: usize,
    pub steps: usize,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], half_width: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-half_width..half_width)).collect())
        .expect("shape matches data")
}

/// Verifies reverse-mode gradients of the trajectory MSE with respect to
/// every parameter of a model built from `config`, against central
/// differences, on a random batch of two `steps`-long sequences.
///
/// Parameters are redrawn uniformly so that zero-initialized layers do not
/// hide errors, and a non-trivial normalizer is installed.
pub fn gradcheck_model(
    config: &ModelConfig,
    steps: usize,
    seed: u64,
    check: GradCheck,
) -> Result<ModelGradCheck, TrainError> {
    if steps == 0 {
        return Err(TrainError::Invalid("steps must be at least 1".into()));
    }
    let mut model = build_model(config.clone())?;
    if model.num_params() > GRADCHECK_MAX_PARAMS {
        return Err(TrainError::Invalid(format!(
            "model has {} parameters; gradcheck is limited to {GRADCHECK_MAX_PARAMS}",
            model.num_params()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in model.params_mut().iter_mut() {
        let shape = t.shape().to_vec();
        *t = uniform(&mut rng, &shape, 0.5);
    }
    let (n, f) = (config.n_in, config.f_out);
    model.set_normalizer(Normalizer {
        x_mean: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        x_std: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        f_mean: (0..f).map(|_| rng.random_range(-1.0..1.0)).collect(),
        f_std: (0..f).map(|_| rng.random_range(0.5..2.0)).collect(),
    })?;
    let x = uniform(&mut rng, &[2, steps, n], 1.0);
    let f0 = uniform(&mut rng, &[2, f], 1.0);
    let target = uniform(&mut rng, &[2, steps, f], 1.0);
    let grid = model.grid(steps)?;
    // surfaces configuration errors as model errors before the check runs
    model.predict(&x, &f0)?;

    let (report, worst) = check_registry_gradients(model.params(), check, |tape, p| {
        let pred = model.forward(tape, p, &x, &f0, &grid).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => unreachable!("forward failed after a successful preflight: {other}"),
        })?;
        mse_loss(pred, tape.constant(target.clone()))
    })?;
    Ok(ModelGradCheck {
        max_rel_error: report.max_rel_error,
        worst_parameter: worst,
        entries_checked: report.entries_checked,
        num_params: model.num_params(),
        steps,
    })
}
