//! Synthetic towing-tank oracle and dataset factory.
//!
//! The steady hydrodynamic wrench is quasi-static quadratic drag on a body
//! plus four legs whose frontal area depends on the joint angles. The
//! "measured" wrench relaxes toward it with a first-order lag, which gives
//! each force trajectory genuine ODE dynamics.

mod dataset;
mod io;

pub use dataset::{
    condition_grid, direction_of, gen_task1, gen_task2, split_dataset, Dataset, DatasetManifest, SplitAssignment,
    Task, Task1Variant, Trajectory, GRID_DIRECTIONS, GRID_SPEEDS,
};
pub use io::{read_dataset, write_dataset};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed dataset file {path}: {message}")]
    Format { path: String, message: String },
}

pub type Vec3 = [f64; 3];
/// `(Fx, Fy, Fz, Tx, Ty, Tz)` in N and N·m.
pub type Wrench = [f64; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Water density, kg/m³.
    pub rho: f64,
    /// Drag coefficient per body axis.
    pub cd: Vec3,
    /// Body frontal area per axis, m².
    pub body_area: Vec3,
    /// `(a0, a1, a2)` in `A = a0 + a1·|sin q2| + a2·|sin(q2 + q3)|`, m².
    pub leg_area_coeffs: Vec3,
    /// Leg attachment points relative to the body center, m.
    pub lever_arms: [Vec3; 4],
    /// Sensor relaxation time constant, s.
    pub tau_relax: f64,
    /// Symmetric joint-angle limit, rad.
    pub joint_limit: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            rho: 1000.0,
            cd: [1.1, 1.3, 0.9],
            body_area: [0.10, 0.25, 0.30],
            leg_area_coeffs: [0.01, 0.008, 0.006],
            lever_arms: [[0.3, 0.2, 0.0], [0.3, -0.2, 0.0], [-0.3, 0.2, 0.0], [-0.3, -0.2, 0.0]],
            tau_relax: 0.2,
            joint_limit: 2.6,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let areas_ok = self.body_area.iter().chain(&self.leg_area_coeffs).all(|a| *a >= 0.0);
        if !(self.rho > 0.0 && self.tau_relax > 0.0 && self.joint_limit > 0.0 && areas_ok) {
            return Err(DataError::Invalid(format!("oracle parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Kinematic state during towing. Joint angles are per leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowingCondition {
    pub q2: [f64; 4],
    pub q3: [f64; 4],
    pub v: Vec3,
    pub omega: Vec3,
}

impl TowingCondition {
    /// All legs share `(q2, q3)`; no rotation.
    pub fn shared(q2: f64, q3: f64, v: Vec3) -> Self {
        Self {
            q2: [q2; 4],
            q3: [q3; 4],
            v,
            omega: [0.0; 3],
        }
    }
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: Vec3) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quasi-static drag wrench on body and legs.
pub fn steady_wrench(cond: &TowingCondition, p: &OracleParams) -> Wrench {
    let drag = |area: Vec3, v: Vec3| -> Vec3 {
        let speed = norm(v);
        std::array::from_fn(|a| -0.5 * p.rho * p.cd[a] * area[a] * speed * v[a])
    };
    let body = drag(p.body_area, cond.v);
    let mut w = [body[0], body[1], body[2], 0.0, 0.0, 0.0];
    let [a0, a1, a2] = p.leg_area_coeffs;
    for (k, r) in p.lever_arms.iter().enumerate() {
        let area = a0 + a1 * cond.q2[k].sin().abs() + a2 * (cond.q2[k] + cond.q3[k]).sin().abs();
        let vk = std::array::from_fn(|a| cond.v[a] + cross(cond.omega, *r)[a]);
        let fk = drag([area; 3], vk);
        let tk = cross(*r, fk);
        for a in 0..3 {
            w[a] += fk[a];
            w[3 + a] += tk[a];
        }
    }
    w
}

/// Relaxes the sensor reading `dW/dt = (W_ss(cond_i) − W)/τ` over each
/// sampling interval with four RK4 substeps. `conditions[i]` holds on
/// `(t_i, t_{i+1}]`; entry `i` of the result is `W(t_{i+1})`.
/// `w_init = None` starts at the steady wrench of the first condition.
pub fn simulate_measured_wrench(
    conditions: &[TowingCondition],
    dt: f64,
    p: &OracleParams,
    w_init: Option<Wrench>,
) -> Vec<Wrench> {
    let Some(first) = conditions.first() else {
        return Vec::new();
    };
    let mut w = w_init.unwrap_or_else(|| steady_wrench(first, p));
    let h = dt / 4.0;
    let tau = p.tau_relax;
    conditions
        .iter()
        .map(|c| {
            let ss = steady_wrench(c, p);
            let f = |w: &Wrench| -> Wrench { std::array::from_fn(|a| (ss[a] - w[a]) / tau) };
            let add = |w: &Wrench, k: &Wrench, s: f64| -> Wrench { std::array::from_fn(|a| w[a] + s * k[a]) };
            for _ in 0..4 {
                let k1 = f(&w);
                let k2 = f(&add(&w, &k1, h / 2.0));
                let k3 = f(&add(&w, &k2, h / 2.0));
                let k4 = f(&add(&w, &k3, h));
                w = std::array::from_fn(|a| w[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]));
            }
            w
        })
        .collect()
}

#[cfg(test)]
mod tests;
