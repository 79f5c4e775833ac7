use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_measured_wrench, steady_wrench, DataError, OracleParams, TowingCondition, Vec3, Wrench};
use crate::autodiff::Tensor;

/// Towing speeds of the Task 1 grid, m/s.
pub const GRID_SPEEDS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
/// Towing directions of the Task 1 grid: X, Y and 45° between them.
pub const GRID_DIRECTIONS: [(f64, f64); 3] = [(1.0, 0.0), (0.0, 1.0), (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)];
const JOINT_VALUES: usize = 4;
const GRID_SIZE: usize = 192;
const SWITCH_SEGMENTS: usize = 5;
const TASK2_SEGMENTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task1Variant {
    Static,
    Switching,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Task1(Task1Variant),
    Task2,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::Task1(Task1Variant::Static),
        Task::Task1(Task1Variant::Switching),
        Task::Task1(Task1Variant::Noisy),
        Task::Task2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Task::Task1(Task1Variant::Static) => "1.1",
            Task::Task1(Task1Variant::Switching) => "1.2",
            Task::Task1(Task1Variant::Noisy) => "1.3",
            Task::Task2 => "2",
        }
    }

    /// `(n_in, f_out, default length)`.
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            Task::Task1(Task1Variant::Static) => (4, 2, 100),
            Task::Task1(_) => (4, 2, 50),
            Task::Task2 => (35, 6, 400),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| format!("unknown task {s:?} (expected 1.1, 1.2, 1.3 or 2)"))
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: String,
    pub n: usize,
    pub f: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub num_trajectories: usize,
    pub dt: f64,
    pub oracle: OracleParams,
    pub noise_fraction: f64,
    /// Per-axis standard deviation of the injected noise.
    pub noise_std: Vec<f64>,
    pub seed: u64,
    pub split: Option<SplitAssignment>,
}

impl DatasetManifest {
    pub fn task(&self) -> Result<Task, DataError> {
        self.task.parse().map_err(DataError::Invalid)
    }
}

/// One towing run. Row `i` of `conditions` holds over `(t_i, t_{i+1}]` and
/// row `i` of `forces` is the wrench at `times[i] = t_{i+1}`; `initial` is
/// the wrench at `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub times: Vec<f64>,
    pub conditions: Tensor,
    pub forces: Tensor,
    pub initial: Tensor,
    pub condition_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn trajectory(&self, id: usize) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Clones the trajectories with the given ids, in that order.
    pub fn subset(&self, ids: &[usize]) -> Result<Vec<Trajectory>, DataError> {
        ids.iter()
            .map(|&i| {
                self.trajectory(i)
                    .cloned()
                    .ok_or_else(|| DataError::Invalid(format!("no trajectory with id {i}")))
            })
            .collect()
    }

    /// `(train, val, test)` according to the manifest's split.
    pub fn splits(&self) -> Result<[Vec<Trajectory>; 3], DataError> {
        let s = self
            .manifest
            .split
            .as_ref()
            .ok_or_else(|| DataError::Invalid("manifest has no `split` field".into()))?;
        Ok([self.subset(&s.train)?, self.subset(&s.val)?, self.subset(&s.test)?])
    }
}

/// The 192 Task 1 conditions, indexed `(speed·3 + direction)·16 + joint`.
pub fn condition_grid(oracle: &OracleParams) -> Vec<TowingCondition> {
    let lim = oracle.joint_limit;
    let joint = |i: usize| -lim + 2.0 * lim * i as f64 / (JOINT_VALUES - 1) as f64;
    let mut out = Vec::with_capacity(GRID_SIZE);
    for &s in &GRID_SPEEDS {
        for &(dx, dy) in &GRID_DIRECTIONS {
            for a in 0..JOINT_VALUES {
                for b in 0..JOINT_VALUES {
                    out.push(TowingCondition::shared(joint(a), joint(b), [s * dx, s * dy, 0.0]));
                }
            }
        }
    }
    out
}

/// Direction index (0 = X, 1 = Y, 2 = diagonal) of a Task 1 grid id.
pub fn direction_of(condition_id: usize) -> usize {
    (condition_id / (JOINT_VALUES * JOINT_VALUES)) % GRID_DIRECTIONS.len()
}

/// Independent stream `stream` of the dataset seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn times(length: usize, dt: f64) -> Vec<f64> {
    (1..=length).map(|i| i as f64 * dt).collect()
}

fn check_common(count: usize, dt: f64, oracle: &OracleParams, noise: f64) -> Result<(), DataError> {
    oracle.validate()?;
    if count == 0 {
        return Err(DataError::Invalid("need at least one trajectory".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DataError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(DataError::Invalid(format!("noise fraction must be nonnegative, got {noise}")));
    }
    Ok(())
}

fn wrench_rows(ws: &[Wrench], axes: &[usize]) -> Tensor {
    let data = ws.iter().flat_map(|w| axes.iter().map(|&a| w[a])).collect();
    Tensor::new(vec![ws.len(), axes.len()], data).expect("wrench rows")
}

/// Adds zero-mean Gaussian noise with per-axis std `fraction · σ_axis`,
/// where `σ_axis` is the spread of that axis over all clean force rows.
/// Each trajectory draws from its own stream.
fn add_noise(trajectories: &mut [Trajectory], fraction: f64, seed: u64) -> Vec<f64> {
    let f = trajectories[0].forces.shape()[1];
    if fraction == 0.0 {
        return vec![0.0; f];
    }
    let mut sum = vec![0.0; f];
    let mut count = 0usize;
    for t in trajectories.iter() {
        for row in t.forces.data().chunks(f) {
            sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; f];
    for t in trajectories.iter() {
        for row in t.forces.data().chunks(f) {
            for a in 0..f {
                sq[a] += (row[a] - mean[a]).powi(2);
            }
        }
    }
    let sigma: Vec<f64> = sq.iter().map(|s| fraction * (s / count as f64).sqrt()).collect();
    trajectories.par_iter_mut().for_each(|t| {
        let mut rng = stream_rng(seed, 2 * t.id as u64 + 1);
        for row in t.forces.data_mut().chunks_mut(f) {
            for (a, v) in row.iter_mut().enumerate() {
                *v += sigma[a] * Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
            }
        }
    });
    sigma
}

/// Task 1 datasets over the 192-condition towing grid.
///
/// * `Static`: one grid condition per trajectory, towed from rest
///   (`W = 0` at `t_0`).
/// * `Switching`: five distinct conditions, each held for `length / 5`
///   steps, starting at the steady wrench of the first.
/// * `Noisy`: `Switching` with the same seed plus Gaussian measurement
///   noise of `noise_fraction` times each axis' spread.
///
/// Inputs are `(q2, q3, vx, vy)`, outputs `(Fx, Fy)`.
pub fn gen_task1(
    variant: Task1Variant,
    num_trajectories: usize,
    length: usize,
    dt: f64,
    seed: u64,
    oracle: &OracleParams,
    noise_fraction: f64,
) -> Result<Dataset, DataError> {
    check_common(num_trajectories, dt, oracle, noise_fraction)?;
    let grid = condition_grid(oracle);
    let segment = match variant {
        Task1Variant::Static if length >= 1 => length,
        Task1Variant::Switching | Task1Variant::Noisy if length >= SWITCH_SEGMENTS && length % SWITCH_SEGMENTS == 0 => {
            length / SWITCH_SEGMENTS
        }
        _ => {
            return Err(DataError::Invalid(format!(
                "length {length} is not valid for {variant:?} (switching needs a positive multiple of {SWITCH_SEGMENTS})"
            )))
        }
    };
    let mut trajectories: Vec<Trajectory> = (0..num_trajectories)
        .into_par_iter()
        .map(|id| {
            let (ids, w_init) = match variant {
                Task1Variant::Static => {
                    let g = if num_trajectories >= GRID_SIZE {
                        id % GRID_SIZE
                    } else {
                        id * GRID_SIZE / num_trajectories
                    };
                    (vec![g; length], Some([0.0; 6]))
                }
                _ => {
                    let mut rng = stream_rng(seed, 2 * id as u64);
                    let picks = sample(&mut rng, GRID_SIZE, SWITCH_SEGMENTS).into_vec();
                    (picks.iter().flat_map(|&g| std::iter::repeat_n(g, segment)).collect(), None)
                }
            };
            let conds: Vec<TowingCondition> = ids.iter().map(|&g| grid[g]).collect();
            let ws = simulate_measured_wrench(&conds, dt, oracle, w_init);
            let w0 = w_init.unwrap_or_else(|| steady_wrench(&conds[0], oracle));
            let x: Vec<f64> = conds.iter().flat_map(|c| [c.q2[0], c.q3[0], c.v[0], c.v[1]]).collect();
            Trajectory {
                id,
                times: times(length, dt),
                conditions: Tensor::new(vec![length, 4], x).expect("conditions"),
                forces: wrench_rows(&ws, &[0, 1]),
                initial: Tensor::vector(vec![w0[0], w0[1]]),
                condition_ids: ids,
            }
        })
        .collect();
    let fraction = if variant == Task1Variant::Noisy { noise_fraction } else { 0.0 };
    let noise_std = add_noise(&mut trajectories, fraction, seed);
    Ok(Dataset {
        manifest: DatasetManifest {
            task: Task::Task1(variant).tag().into(),
            n: 4,
            f: 2,
            length,
            num_trajectories,
            dt,
            oracle: oracle.clone(),
            noise_fraction: fraction,
            noise_std,
            seed,
            split: None,
        },
        trajectories,
    })
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotation by body rate `omega` over `dt`, as a unit quaternion.
fn quat_increment(omega: Vec3, dt: f64) -> [f64; 4] {
    let rate = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
    if rate == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let half = 0.5 * rate * dt;
    let s = half.sin() / rate;
    [half.cos(), omega[0] * s, omega[1] * s, omega[2] * s]
}

fn task2_trajectory(id: usize, length: usize, dt: f64, seed: u64, oracle: &OracleParams) -> Trajectory {
    let mut rng = stream_rng(seed, 2 * id as u64);
    let rho = rng.random_range(950.0..1050.0);
    let freq = rng.random_range(0.5..1.5);
    let base = [0.0, 0.6, -1.2];
    let amp: [f64; 3] = std::array::from_fn(|j| [0.3, 0.5, 0.5][j] * rng.random_range(0.8..1.2));
    // trot: diagonal legs in phase
    let phase: [f64; 4] = std::array::from_fn(|k| [0.0, PI, PI, 0.0][k] + rng.random_range(-0.2..0.2));
    let bounds: Vec<usize> = (0..=TASK2_SEGMENTS).map(|s| s * length / TASK2_SEGMENTS).collect();
    let segments: Vec<Vec3> = (0..TASK2_SEGMENTS)
        .map(|_| {
            let speed = rng.random_range(0.2..0.5);
            let heading: f64 = rng.random_range(0.0..2.0 * PI);
            [speed * heading.cos(), speed * heading.sin(), rng.random_range(-0.05..0.05)]
        })
        .collect();
    let step = Normal::new(0.0, 0.01).expect("normal");
    let mut omega: Vec3 = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    let yaw: f64 = rng.random_range(-PI..PI);
    let mut quat = [(yaw / 2.0).cos(), 0.0, 0.0, (yaw / 2.0).sin()];

    let mut x = Vec::with_capacity(length * 35);
    let mut conds = Vec::with_capacity(length);
    let mut ids = Vec::with_capacity(length);
    for i in 0..length {
        let t = i as f64 * dt;
        let seg = bounds.partition_point(|&b| b <= i) - 1;
        let v = segments[seg];
        let mut q = [[0.0; 3]; 4];
        let mut qd = [[0.0; 3]; 4];
        for k in 0..4 {
            for j in 0..3 {
                let arg = 2.0 * PI * freq * t + phase[k] + j as f64 * PI / 4.0;
                q[k][j] = (base[j] + amp[j] * arg.sin()).clamp(-oracle.joint_limit, oracle.joint_limit);
                qd[k][j] = amp[j] * 2.0 * PI * freq * arg.cos();
            }
        }
        x.extend(q.iter().flatten());
        x.extend(qd.iter().flatten());
        x.extend_from_slice(&quat);
        x.extend_from_slice(&omega);
        x.extend_from_slice(&v);
        x.push(rho);
        conds.push(TowingCondition {
            q2: std::array::from_fn(|k| q[k][1]),
            q3: std::array::from_fn(|k| q[k][2]),
            v,
            omega,
        });
        ids.push(seg);
        // advance attitude and body rate to the next sample
        quat = quat_mul(quat, quat_increment(omega, dt));
        let n = quat.iter().map(|c| c * c).sum::<f64>().sqrt();
        quat.iter_mut().for_each(|c| *c /= n);
        for w in omega.iter_mut() {
            *w = (*w + step.sample(&mut rng)).clamp(-0.3, 0.3);
        }
    }
    let local = OracleParams {
        rho,
        ..oracle.clone()
    };
    let ws = simulate_measured_wrench(&conds, dt, &local, None);
    let w0 = steady_wrench(&conds[0], &local);
    Trajectory {
        id,
        times: times(length, dt),
        conditions: Tensor::new(vec![length, 35], x).expect("conditions"),
        forces: wrench_rows(&ws, &[0, 1, 2, 3, 4, 5]),
        initial: Tensor::vector(w0.to_vec()),
        condition_ids: ids,
    }
}

/// Task 2: 35-dimensional gait conditions with 40 velocity switches and a
/// 6-axis wrench output.
///
/// Columns: 12 joint angles and 12 joint rates (leg-major), attitude
/// quaternion `(w, x, y, z)`, body rate, body velocity and water density.
/// Condition id is the velocity segment index.
pub fn gen_task2(
    num_trajectories: usize,
    length: usize,
    dt: f64,
    seed: u64,
    oracle: &OracleParams,
    noise_fraction: f64,
) -> Result<Dataset, DataError> {
    check_common(num_trajectories, dt, oracle, noise_fraction)?;
    if length < TASK2_SEGMENTS {
        return Err(DataError::Invalid(format!(
            "task 2 needs at least {TASK2_SEGMENTS} steps, got {length}"
        )));
    }
    let mut trajectories: Vec<Trajectory> = (0..num_trajectories)
        .into_par_iter()
        .map(|id| task2_trajectory(id, length, dt, seed, oracle))
        .collect();
    let noise_std = add_noise(&mut trajectories, noise_fraction, seed);
    Ok(Dataset {
        manifest: DatasetManifest {
            task: Task::Task2.tag().into(),
            n: 35,
            f: 6,
            length,
            num_trajectories,
            dt,
            oracle: oracle.clone(),
            noise_fraction,
            noise_std,
            seed,
            split: None,
        },
        trajectories,
    })
}

/// Whole-trajectory split. Validation and test sizes are
/// `floor(ratio · count)` (at least one each) and the remainder trains.
/// Task 1 sets are stratified by the direction of the first condition:
/// each stratum is shuffled and the strata are interleaved before the
/// split is cut, so every direction reaches every split.
pub fn split_dataset(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, DataError> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Invalid(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let count = dataset.trajectories.len();
    if count < 3 {
        return Err(DataError::Invalid(format!("{count} trajectories cannot fill three splits")));
    }
    let take = |r: f64| ((r * count as f64 + 1e-9).floor() as usize).max(1);
    let (n_val, n_test) = (take(ratios[1]), take(ratios[2]));
    if n_val + n_test >= count {
        return Err(DataError::Invalid(format!("{count} trajectories leave no training data")));
    }
    let stratified = dataset.manifest.task()? != Task::Task2;
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); if stratified { GRID_DIRECTIONS.len() } else { 1 }];
    for t in &dataset.trajectories {
        let s = if stratified { direction_of(t.condition_ids[0]) } else { 0 };
        strata[s].push(t.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in strata.iter_mut() {
        s.sort_unstable();
        for i in (1..s.len()).rev() {
            let j = rng.random_range(0..=i);
            s.swap(i, j);
        }
    }
    let longest = strata.iter().map(Vec::len).max().unwrap_or(0);
    let order: Vec<usize> = (0..longest)
        .flat_map(|i| strata.iter().filter_map(move |s| s.get(i).copied()))
        .collect();
    let mut val = order[..n_val].to_vec();
    let mut test = order[n_val..n_val + n_test].to_vec();
    let mut train = order[n_val + n_test..].to_vec();
    for v in [&mut train, &mut val, &mut test] {
        v.sort_unstable();
    }
    Ok(SplitAssignment {
        ratios,
        seed,
        train,
        val,
        test,
    })
}
