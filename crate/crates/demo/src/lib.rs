//! Browser bindings for three small interactive views of the library:
//! steady drag against towing speed, the measured-force relaxation after a
//! speed switch, and forward Euler against RK4 on `dF/dt = -F`.
//!
//! Every function returns a flat `Float64Array` of fixed-width records so
//! the page can plot it without further decoding. Errors surface as thrown
//! strings.

use wasm_bindgen::prelude::*;

use hydroode::autodiff::{TensorError, Tensor, Var};
use hydroode::hydrodata::{simulate_measured_wrench, steady_wrench, OracleParams, TowingCondition};
use hydroode::layers::{BoundParams, ParamRegistry};
use hydroode::odeint::{euler_integrate, rk4_integrate, TimeGrid, VectorField};

fn velocity(speed: f64, heading_deg: f64) -> [f64; 3] {
    let h = heading_deg.to_radians();
    [speed * h.cos(), speed * h.sin(), 0.0]
}

fn check_joints(q2: f64, q3: f64, p: &OracleParams) -> Result<(), String> {
    if !(q2.abs() <= p.joint_limit && q3.abs() <= p.joint_limit) {
        return Err(format!("joint angles must lie within ±{} rad", p.joint_limit));
    }
    Ok(())
}

/// Steady drag over `points` speeds from 0 to `v_max` (m/s) along
/// `heading_deg`, with every leg at `(q2, q3)`. Records are
/// `[speed, Fx, Fy]` in m/s and N.
#[wasm_bindgen]
pub fn drag_sweep(q2: f64, q3: f64, heading_deg: f64, v_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let p = OracleParams::default();
    check_joints(q2, q3, &p)?;
    if !(v_max > 0.0 && v_max.is_finite()) || !(2..=10_000).contains(&points) {
        return Err("need v_max > 0 and 2 to 10000 points".into());
    }
    let mut out = Vec::with_capacity(3 * points);
    for i in 0..points {
        let v = v_max * i as f64 / (points - 1) as f64;
        let w = steady_wrench(&TowingCondition::shared(q2, q3, velocity(v, heading_deg)), &p);
        out.extend([v, w[0], w[1]]);
    }
    Ok(out)
}

/// Measured force when the towing speed jumps from `v_before` to `v_after`
/// at `switch_at` seconds, with sensor time constant `tau` seconds.
/// Starts settled at the first speed. Records are
/// `[t, steady Fx, measured Fx, steady Fy, measured Fy]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn relaxation_trace(
    v_before: f64,
    v_after: f64,
    heading_deg: f64,
    q2: f64,
    q3: f64,
    tau: f64,
    switch_at: f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<f64>, String> {
    let p = OracleParams {
        tau_relax: tau,
        ..OracleParams::default()
    };
    check_joints(q2, q3, &p)?;
    if !(tau > 0.0 && dt > 0.0 && duration > dt && duration / dt <= 100_000.0) {
        return Err("need tau > 0, dt > 0 and duration > dt (at most 1e5 steps)".into());
    }
    let steps = (duration / dt).round() as usize;
    let conds: Vec<TowingCondition> = (0..steps)
        .map(|i| {
            let t = i as f64 * dt;
            let v = if t < switch_at { v_before } else { v_after };
            TowingCondition::shared(q2, q3, velocity(v, heading_deg))
        })
        .collect();
    let measured = simulate_measured_wrench(&conds, dt, &p, None);
    let mut out = Vec::with_capacity(5 * (steps + 1));
    let first = steady_wrench(&conds[0], &p);
    out.extend([0.0, first[0], first[0], first[1], first[1]]);
    for (i, (c, w)) in conds.iter().zip(&measured).enumerate() {
        let ss = steady_wrench(c, &p);
        out.extend([(i + 1) as f64 * dt, ss[0], w[0], ss[1], w[1]]);
    }
    Ok(out)
}

struct Decay;

impl VectorField for Decay {
    fn eval<'t>(&self, _: &BoundParams<'t>, state: Var<'t>, _: Var<'t>, _: f64) -> Result<Var<'t>, TensorError> {
        Ok(state.scale(-1.0))
    }
}

/// `dF/dt = -F`, `F(0) = 1` integrated to `t_end` with step `dt` by both
/// solvers. Records are `[t, exact, euler, rk4]`.
#[wasm_bindgen]
pub fn solver_comparison(dt: f64, t_end: f64) -> Result<Vec<f64>, String> {
    if !(dt > 0.0 && t_end >= dt && t_end / dt <= 100_000.0) {
        return Err("need 0 < dt <= t_end with at most 1e5 steps".into());
    }
    let steps = (t_end / dt).round() as usize;
    let grid = TimeGrid::new(0.0, dt, steps).map_err(|e| e.to_string())?;
    let f0 = Tensor::vector(vec![1.0]);
    let controls = Tensor::zeros(&[steps, 1]);
    let params = ParamRegistry::new();
    let euler = euler_integrate(&f0, &Decay, &params, &grid, &controls).map_err(|e| e.to_string())?;
    let rk4 = rk4_integrate(&f0, &Decay, &params, &grid, &controls).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * (steps + 1));
    out.extend([0.0, 1.0, 1.0, 1.0]);
    for i in 0..steps {
        let t = (i + 1) as f64 * dt;
        out.extend([t, (-t).exp(), euler.data()[i], rk4.data()[i]]);
    }
    Ok(out)
}
