//! Fixed-step Euler / RK4 integration of learned vector fields.
//!
//! Integration runs on a [`Tape`], so gradients are available by
//! backpropagating through the unrolled steps. [`adjoint_backward`] offers the
//! alternative continuous-adjoint route.
//!
//! Controls are sampled per observation interval and held constant across
//! every stage and substep of that interval.

mod adjoint;

pub use adjoint::{adjoint_backward, AdjointGradients};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{stack, Tape, Tensor, TensorError, Var};
use crate::layers::{BoundParams, ParamRegistry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("{what}: expected {expected} steps, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("vector field output shape {got:?} differs from state shape {expected:?}")]
    FieldShape { expected: Vec<usize>, got: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Euler,
    Rk4,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Euler => "euler",
            Solver::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Solver::Euler),
            "rk4" => Ok(Solver::Rk4),
            other => Err(format!("unknown solver {other:?} (expected euler or rk4)")),
        }
    }
}

/// Uniform observation grid `t_i = t0 + i·dt`, `i = 1..=steps`, with
/// `substeps` solver steps per observation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    pub substeps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self, OdeError> {
        Self::with_substeps(t0, dt, steps, 1)
    }

    pub fn with_substeps(t0: f64, dt: f64, steps: usize, substeps: usize) -> Result<Self, OdeError> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(OdeError::InvalidGrid(format!("dt = {dt}, t0 = {t0}")));
        }
        if steps == 0 || substeps == 0 {
            return Err(OdeError::InvalidGrid(format!(
                "steps = {steps}, substeps = {substeps}"
            )));
        }
        Ok(Self {
            t0,
            dt,
            steps,
            substeps,
        })
    }

    /// Time of observation `i` (`i = 0` is the initial value).
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn sub_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// A parameterized right-hand side `dF/dt = f(F, control, t; θ)`.
pub trait VectorField {
    fn eval<'t>(
        &self,
        params: &BoundParams<'t>,
        state: Var<'t>,
        control: Var<'t>,
        t: f64,
    ) -> Result<Var<'t>, TensorError>;
}

fn eval_checked<'t, K: VectorField + ?Sized>(
    field: &K,
    params: &BoundParams<'t>,
    state: Var<'t>,
    control: Var<'t>,
    t: f64,
) -> Result<Var<'t>, OdeError> {
    let d = field.eval(params, state, control, t)?;
    let (ds, ss) = (d.shape(), state.shape());
    if ds != ss {
        return Err(OdeError::FieldShape {
            expected: ss,
            got: ds,
        });
    }
    Ok(d)
}

/// One solver step of size `h` from `(state, t)` with the control held fixed.
pub(crate) fn step<'t, K: VectorField + ?Sized>(
    solver: Solver,
    field: &K,
    params: &BoundParams<'t>,
    state: Var<'t>,
    control: Var<'t>,
    t: f64,
    h: f64,
) -> Result<Var<'t>, OdeError> {
    match solver {
        Solver::Euler => {
            let k1 = eval_checked(field, params, state, control, t)?;
            Ok(state.add(k1.scale(h))?)
        }
        Solver::Rk4 => {
            let k1 = eval_checked(field, params, state, control, t)?;
            let k2 = eval_checked(field, params, state.add(k1.scale(h / 2.0))?, control, t + h / 2.0)?;
            let k3 = eval_checked(field, params, state.add(k2.scale(h / 2.0))?, control, t + h / 2.0)?;
            let k4 = eval_checked(field, params, state.add(k3.scale(h))?, control, t + h)?;
            let sum = k1.add(k2.scale(2.0))?.add(k3.scale(2.0))?.add(k4)?;
            Ok(state.add(sum.scale(h / 6.0))?)
        }
    }
}

/// Integrates from `initial` over `grid`, returning the state at each of
/// the `grid.steps` observation times. `controls[i]` drives interval `i`.
pub fn integrate<'t, K: VectorField + ?Sized>(
    solver: Solver,
    initial: Var<'t>,
    field: &K,
    params: &BoundParams<'t>,
    grid: &TimeGrid,
    controls: &[Var<'t>],
) -> Result<Vec<Var<'t>>, OdeError> {
    if controls.len() != grid.steps {
        return Err(OdeError::LengthMismatch {
            what: "controls",
            expected: grid.steps,
            got: controls.len(),
        });
    }
    let h = grid.sub_dt();
    let mut state = initial;
    let mut out = Vec::with_capacity(grid.steps);
    for (i, &control) in controls.iter().enumerate() {
        for s in 0..grid.substeps {
            let t = grid.time(i) + s as f64 * h;
            state = step(solver, field, params, state, control, t, h)?;
        }
        out.push(state);
    }
    Ok(out)
}

/// Tensor-level integration without gradient tracking: `initial: [f]`,
/// `controls: [steps, ...]`, result `[steps, f]`.
pub fn integrate_tensor<K: VectorField + ?Sized>(
    solver: Solver,
    initial: &Tensor,
    field: &K,
    params: &ParamRegistry,
    grid: &TimeGrid,
    controls: &Tensor,
) -> Result<Tensor, OdeError> {
    let rows = controls.shape().first().copied().unwrap_or(0);
    if rows != grid.steps {
        return Err(OdeError::LengthMismatch {
            what: "controls",
            expected: grid.steps,
            got: rows,
        });
    }
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let ctrl = tape.constant(controls.clone());
    let ctrl: Vec<Var<'_>> = (0..rows).map(|i| ctrl.select(0, i)).collect::<Result<_, _>>()?;
    let traj = integrate(solver, tape.constant(initial.clone()), field, &p, grid, &ctrl)?;
    Ok(stack(&traj, 0)?.value())
}

/// Forward Euler: `F_{i+1} = F_i + dt·f(F_i, control_i, t_i)`.
pub fn euler_integrate<K: VectorField + ?Sized>(
    initial: &Tensor,
    field: &K,
    params: &ParamRegistry,
    grid: &TimeGrid,
    controls: &Tensor,
) -> Result<Tensor, OdeError> {
    integrate_tensor(Solver::Euler, initial, field, params, grid, controls)
}

/// Classic fourth-order Runge-Kutta with zero-order-hold controls.
pub fn rk4_integrate<K: VectorField + ?Sized>(
    initial: &Tensor,
    field: &K,
    params: &ParamRegistry,
    grid: &TimeGrid,
    controls: &Tensor,
) -> Result<Tensor, OdeError> {
    integrate_tensor(Solver::Rk4, initial, field, params, grid, controls)
}
