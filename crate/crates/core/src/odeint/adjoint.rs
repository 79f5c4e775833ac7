use std::collections::BTreeMap;

use super::{OdeError, Solver, TimeGrid, VectorField};
use crate::autodiff::{Tape, Tensor};
use crate::layers::ParamRegistry;

/// Gradients recovered by integrating the adjoint system backward in time.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointGradients {
    /// `dL/dθ` for every tensor of the field's registry.
    pub params: BTreeMap<String, Tensor>,
    /// `dL/dF0`.
    pub initial: Tensor,
    /// `dL/dcontrol_i`, same shape as the controls.
    pub controls: Tensor,
}

struct Sensitivities {
    derivative: Tensor,
    state: Tensor,
    params: BTreeMap<String, Tensor>,
    control: Tensor,
}

/// `f(F)` together with the vector-Jacobian products `aᵀ∂f/∂F`, `aᵀ∂f/∂θ`
/// and `aᵀ∂f/∂control`.
fn vjp<K: VectorField + ?Sized>(
    field: &K,
    params: &ParamRegistry,
    state: &Tensor,
    control: &Tensor,
    t: f64,
    adjoint: &Tensor,
) -> Result<Sensitivities, OdeError> {
    let tape = Tape::new();
    let p = params.bind(&tape);
    let s = tape.param(state.clone());
    let c = tape.param(control.clone());
    let f = field.eval(&p, s, c, t)?;
    if f.shape() != state.shape() {
        return Err(OdeError::FieldShape {
            expected: state.shape().to_vec(),
            got: f.shape(),
        });
    }
    let loss = f.mul(tape.constant(adjoint.clone()))?.sum_all();
    let grads = tape.backward(loss)?;
    Ok(Sensitivities {
        derivative: f.value(),
        state: grads.wrt_or_zero(s),
        params: p.gradients(&grads),
        control: grads.wrt_or_zero(c),
    })
}

fn eval_field<K: VectorField + ?Sized>(
    field: &K,
    params: &ParamRegistry,
    state: &Tensor,
    control: &Tensor,
    t: f64,
) -> Result<Tensor, OdeError> {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let d = field.eval(&p, tape.constant(state.clone()), tape.constant(control.clone()), t)?;
    Ok(d.value())
}

fn axpy(y: &Tensor, a: f64, x: &Tensor) -> Tensor {
    let mut out = y.clone();
    out.data_mut()
        .iter_mut()
        .zip(x.data())
        .for_each(|(o, xi)| *o += a * xi);
    out
}

fn add_scaled_into(acc: &mut Tensor, a: f64, x: &Tensor) {
    acc.data_mut()
        .iter_mut()
        .zip(x.data())
        .for_each(|(o, xi)| *o += a * xi);
}

/// Backpropagates `dL/dtrajectory` through a forward solve by integrating
///
/// ```text
/// dF/dt = f,   da/dt = -aᵀ ∂f/∂F,   dg/dt = -aᵀ ∂f/∂θ
/// ```
///
/// from the final time back to `t0`, with the same solver as the forward
/// pass. Each interval restarts from the recorded forward state, and
/// `dL/dF_i` is added to `a` as an impulse at observation `i`.
///
/// RK4 integrates the augmented system backward with its own stages. Euler
/// evaluates each adjoint step at the substep's starting state, which is
/// the first-order partner scheme of forward Euler.
///
/// `trajectory`, `controls` and `dl_dtrajectory` all carry the step axis
/// first; `initial` has the state shape.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_backward<K: VectorField + ?Sized>(
    solver: Solver,
    field: &K,
    params: &ParamRegistry,
    trajectory: &Tensor,
    initial: &Tensor,
    grid: &TimeGrid,
    controls: &Tensor,
    dl_dtrajectory: &Tensor,
) -> Result<AdjointGradients, OdeError> {
    let steps = grid.steps;
    for (what, t) in [("trajectory", trajectory), ("controls", controls), ("loss gradient", dl_dtrajectory)] {
        let got = t.shape().first().copied().unwrap_or(0);
        if got != steps {
            return Err(OdeError::LengthMismatch {
                what,
                expected: steps,
                got,
            });
        }
    }
    if trajectory.shape()[1..] != *initial.shape() || dl_dtrajectory.shape() != trajectory.shape() {
        return Err(OdeError::FieldShape {
            expected: initial.shape().to_vec(),
            got: trajectory.shape()[1..].to_vec(),
        });
    }

    let h = grid.sub_dt();
    let mut param_grads: BTreeMap<String, Tensor> = params
        .iter()
        .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
        .collect();
    let mut control_grads = Vec::with_capacity(steps);
    let mut adjoint = Tensor::zeros(initial.shape());

    for i in (0..steps).rev() {
        add_scaled_into(&mut adjoint, 1.0, &dl_dtrajectory.index_axis0(i));
        let control = controls.index_axis0(i);
        let mut control_grad = Tensor::zeros(control.shape());
        if solver == Solver::Euler {
            // The adjoint step pairs the end-point costate with the state at
            // the start of each substep, recomputed from the recorded
            // observation. This makes the result coincide with
            // differentiating the Euler recursion itself.
            let mut states = Vec::with_capacity(grid.substeps);
            let mut state = if i == 0 { initial.clone() } else { trajectory.index_axis0(i - 1) };
            for s in 0..grid.substeps {
                let t = grid.time(i) + s as f64 * h;
                let d = eval_field(field, params, &state, &control, t)?;
                let next = axpy(&state, h, &d);
                states.push((t, std::mem::replace(&mut state, next)));
            }
            for (t, state) in states.iter().rev() {
                let k = vjp(field, params, state, &control, *t, &adjoint)?;
                adjoint = axpy(&adjoint, h, &k.state);
                for (name, g) in &k.params {
                    add_scaled_into(param_grads.get_mut(name).expect("registry name"), h, g);
                }
                add_scaled_into(&mut control_grad, h, &k.control);
            }
            control_grads.push(control_grad);
            continue;
        }
        let mut state = trajectory.index_axis0(i);
        for s in (0..grid.substeps).rev() {
            // integrate backward from t_end to t_end - h
            let t_end = grid.time(i) + (s + 1) as f64 * h;
            let k1 = vjp(field, params, &state, &control, t_end, &adjoint)?;
            let k2 = vjp(
                field,
                params,
                &axpy(&state, -h / 2.0, &k1.derivative),
                &control,
                t_end - h / 2.0,
                &axpy(&adjoint, h / 2.0, &k1.state),
            )?;
            let k3 = vjp(
                field,
                params,
                &axpy(&state, -h / 2.0, &k2.derivative),
                &control,
                t_end - h / 2.0,
                &axpy(&adjoint, h / 2.0, &k2.state),
            )?;
            let k4 = vjp(
                field,
                params,
                &axpy(&state, -h, &k3.derivative),
                &control,
                t_end - h,
                &axpy(&adjoint, h, &k3.state),
            )?;
            let mut new_state = state.clone();
            let mut new_adjoint = adjoint.clone();
            for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
                let c = w * h / 6.0;
                add_scaled_into(&mut new_state, -c, &k.derivative);
                add_scaled_into(&mut new_adjoint, c, &k.state);
                for (name, g) in &k.params {
                    add_scaled_into(param_grads.get_mut(name).expect("registry name"), c, g);
                }
                add_scaled_into(&mut control_grad, c, &k.control);
            }
            state = new_state;
            adjoint = new_adjoint;
        }
        control_grads.push(control_grad);
    }
    control_grads.reverse();
    Ok(AdjointGradients {
        params: param_grads,
        initial: adjoint,
        controls: Tensor::stack(&control_grads)?,
    })
}
