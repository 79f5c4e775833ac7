use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{compute_metrics, report, time_inference, EvalError};
use crate::autodiff::Tensor;
use crate::hydrodata::{gen_task1, gen_task2, split_dataset, Dataset, OracleParams, Task, Task1Variant, Trajectory};
use crate::models::{build_model, EncoderKind, ModelConfig};
use crate::odeint::Solver;
use crate::training::{stack_batch, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Task1,
    Task2,
    All,
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "task1" => Ok(Suite::Task1),
            "task2" => Ok(Suite::Task2),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite {s:?} (expected task1, task2 or all)")),
        }
    }
}

impl Suite {
    pub fn includes_task1(self) -> bool {
        matches!(self, Suite::Task1 | Suite::All)
    }

    pub fn includes_task2(self) -> bool {
        matches!(self, Suite::Task2 | Suite::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset {s:?} (expected desk or paper)")),
        }
    }
}

impl Preset {
    pub fn model_config(self, kind: EncoderKind, n_in: usize, f_out: usize) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(kind, n_in, f_out),
            Preset::Paper => ModelConfig::paper(kind, n_in, f_out),
        }
    }
}

/// One requested benchmark cell. `solver` is `None` for the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSpec {
    pub kind: EncoderKind,
    pub solver: Option<Solver>,
    pub task: Task,
}

impl CellSpec {
    pub fn solver_label(&self) -> &'static str {
        self.solver.map(Solver::name).unwrap_or("none")
    }

    pub fn label(&self) -> String {
        format!("{}-{}-task{}", self.kind.cli_name(), self.solver_label(), self.task.tag())
    }
}

/// Everything that determines a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub suite: Suite,
    pub preset: Preset,
    pub seed: u64,
    pub train: TrainConfig,
    pub task1_trajectories: usize,
    pub task2_trajectories: usize,
    pub task2_length: usize,
    pub dt: f64,
    pub noise_fraction: f64,
    pub split_ratios: [f64; 3],
    pub oracle: OracleParams,
    pub timing_repeats: usize,
    pub timing_warmup: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            preset: Preset::Desk,
            seed: 0,
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 16,
                max_epochs: 30,
                early_stop_patience: 10,
                ..TrainConfig::default()
            },
            task1_trajectories: 192,
            task2_trajectories: 40,
            task2_length: 400,
            dt: 0.02,
            noise_fraction: 0.1,
            split_ratios: [0.8, 0.1, 0.1],
            oracle: OracleParams::default(),
            timing_repeats: 100,
            timing_warmup: 10,
        }
    }
}

impl BenchSpec {
    /// Cells in run order: the Task 1 grid (two encoders, two solvers, three
    /// variants) then the Task 2 comparison (MLP-ODE, Attention-ODE, LSTM).
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        if self.suite.includes_task1() {
            for v in [Task1Variant::Static, Task1Variant::Switching, Task1Variant::Noisy] {
                for solver in [Solver::Euler, Solver::Rk4] {
                    for kind in [EncoderKind::Mlp, EncoderKind::Attention] {
                        out.push(CellSpec {
                            kind,
                            solver: Some(solver),
                            task: Task::Task1(v),
                        });
                    }
                }
            }
        }
        if self.suite.includes_task2() {
            for (kind, solver) in [
                (EncoderKind::Mlp, Some(Solver::Euler)),
                (EncoderKind::Attention, Some(Solver::Euler)),
                (EncoderKind::Lstm, None),
            ] {
                out.push(CellSpec {
                    kind,
                    solver,
                    task: Task::Task2,
                });
            }
        }
        out
    }

    pub fn generate(&self, task: Task) -> Result<Dataset, EvalError> {
        let (_, _, len) = task.dims();
        let data = match task {
            Task::Task1(v) => gen_task1(
                v,
                self.task1_trajectories,
                len,
                self.dt,
                self.seed,
                &self.oracle,
                self.noise_fraction,
            ),
            Task::Task2 => gen_task2(
                self.task2_trajectories,
                self.task2_length,
                self.dt,
                self.seed,
                &self.oracle,
                self.noise_fraction,
            ),
        };
        let mut data = data.map_err(|e| EvalError::Invalid(e.to_string()))?;
        let split = split_dataset(&data, self.split_ratios, self.seed).map_err(|e| EvalError::Invalid(e.to_string()))?;
        data.manifest.split = Some(split);
        Ok(data)
    }

    pub fn model_config(&self, cell: &CellSpec) -> ModelConfig {
        let (n, f, _) = cell.task.dims();
        let mut cfg = self.preset.model_config(cell.kind, n, f);
        if let Some(s) = cell.solver {
            cfg.solver = s;
        }
        cfg.dt = self.dt;
        cfg.seed = self.seed;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub mae_per_axis: Vec<f64>,
    pub rmse_per_axis: Vec<f64>,
    pub params: usize,
    pub time_ms_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOutcome {
    Done(CellMetrics),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub solver: String,
    pub task: String,
    pub seed: u64,
    pub outcome: CellOutcome,
}

/// First test trajectory of a cell with the model's prediction.
#[derive(Debug, Clone)]
pub struct CellTrace {
    pub label: String,
    pub times: Vec<f64>,
    pub truth: Tensor,
    pub pred: Tensor,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchRow>,
    #[serde(skip)]
    pub traces: Vec<CellTrace>,
}

impl BenchmarkTable {
    pub fn find(&self, model: &str, solver: &str, task: &str) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.solver == solver && r.task == task)
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| matches!(r.outcome, CellOutcome::Failed(_)))
    }
}

fn run_cell(spec: &BenchSpec, cell: &CellSpec, data: &Dataset) -> Result<(CellMetrics, CellTrace), EvalError> {
    let [tr, va, te] = data.splits().map_err(|e| EvalError::Invalid(e.to_string()))?;
    if te.is_empty() {
        return Err(EvalError::Invalid("empty test split".into()));
    }
    let mut model = build_model(spec.model_config(cell))?;
    let cfg = TrainConfig {
        seed: spec.seed,
        ..spec.train.clone()
    };
    train(&mut model, &tr, &va, &cfg, None).map_err(|e| EvalError::Invalid(format!("training failed: {e}")))?;

    let refs: Vec<&Trajectory> = te.iter().collect();
    let (x, f0, y) = stack_batch(&refs).map_err(|e| EvalError::Invalid(e.to_string()))?;
    let pred = model.predict(&x, &f0)?;
    let m = compute_metrics(&pred, &y)?;
    if !(m.mae.is_finite() && m.rmse.is_finite()) {
        return Err(EvalError::Invalid("non-finite test metrics".into()));
    }
    let first = &te[0];
    let timing = time_inference(
        &model,
        &first.conditions,
        &first.initial,
        spec.timing_repeats,
        spec.timing_warmup,
    )?;
    let trace = CellTrace {
        label: cell.label(),
        times: first.times.clone(),
        truth: first.forces.clone(),
        pred: model.predict(&first.conditions, &first.initial)?,
    };
    Ok((
        CellMetrics {
            mae: m.mae,
            rmse: m.rmse,
            mae_per_axis: m.mae_per_axis,
            rmse_per_axis: m.rmse_per_axis,
            params: model.num_params(),
            time_ms_mean: timing.mean_ms,
        },
        trace,
    ))
}

/// Trains and evaluates every cell of `spec` in order. A failing cell is
/// recorded with its reason and the run moves on. When `out` is given,
/// `results.csv` and `results.json` are rewritten atomically after each
/// cell so an interrupted run leaves a valid partial table.
pub fn run_benchmark(spec: &BenchSpec, out: Option<&Path>) -> Result<BenchmarkTable, EvalError> {
    let mut table = BenchmarkTable::default();
    let mut datasets: HashMap<&'static str, Result<Dataset, String>> = HashMap::new();
    for cell in spec.cells() {
        let data = datasets
            .entry(cell.task.tag())
            .or_insert_with(|| spec.generate(cell.task).map_err(|e| e.to_string()));
        let result = match data {
            Ok(d) => run_cell(spec, &cell, d).map_err(|e| e.to_string()),
            Err(e) => Err(format!("dataset generation failed: {e}")),
        };
        let outcome = match result {
            Ok((m, trace)) => {
                table.traces.push(trace);
                CellOutcome::Done(m)
            }
            Err(reason) => CellOutcome::Failed(reason),
        };
        table.rows.push(BenchRow {
            model: cell.kind.model_name().to_string(),
            solver: cell.solver_label().to_string(),
            task: cell.task.tag().to_string(),
            seed: spec.seed,
            outcome,
        });
        if let Some(dir) = out {
            report::write_results(dir, &table, spec)?;
        }
    }
    Ok(table)
}

fn fmt_cell(v: f64) -> String {
    format!("{v:.4e}")
}

fn metric(table: &BenchmarkTable, model: &str, solver: &str, task: &str, pick: fn(&CellMetrics) -> String) -> String {
    match table.find(model, solver, task) {
        Some(BenchRow {
            outcome: CellOutcome::Done(m),
            ..
        }) => pick(m),
        Some(BenchRow {
            outcome: CellOutcome::Failed(r),
            ..
        }) => format!("FAIL:{r}"),
        None => "FAIL:not run".to_string(),
    }
}

/// The Task 1 table: a header and four model rows, each with MAE and RMSE
/// for the static (S), switching (C) and noisy (N) variants.
pub fn table1_rows(table: &BenchmarkTable) -> Vec<Vec<String>> {
    let mut rows = vec![["model", "MAE-S", "RMSE-S", "MAE-C", "RMSE-C", "MAE-N", "RMSE-N"]
        .map(String::from)
        .to_vec()];
    for (kind, solver, suffix) in [
        (EncoderKind::Mlp, "euler", "euler"),
        (EncoderKind::Attention, "euler", "euler"),
        (EncoderKind::Mlp, "rk4", "RK4"),
        (EncoderKind::Attention, "rk4", "RK4"),
    ] {
        let name = kind.model_name();
        let mut row = vec![format!("{name}-{suffix}")];
        for task in ["1.1", "1.2", "1.3"] {
            row.push(metric(table, name, solver, task, |m| fmt_cell(m.mae)));
            row.push(metric(table, name, solver, task, |m| fmt_cell(m.rmse)));
        }
        rows.push(row);
    }
    rows
}

/// The Task 2 comparison: metric rows against the three model columns.
pub fn table4_columns(table: &BenchmarkTable) -> Vec<Vec<String>> {
    let cols = [
        (EncoderKind::Mlp, "euler"),
        (EncoderKind::Attention, "euler"),
        (EncoderKind::Lstm, "none"),
    ];
    let mut rows = vec![std::iter::once("metric".to_string())
        .chain(cols.iter().map(|(k, _)| k.model_name().to_string()))
        .collect::<Vec<_>>()];
    let picks: [(&str, fn(&CellMetrics) -> String); 4] = [
        ("Time (ms)", |m| format!("{:.3}", m.time_ms_mean)),
        ("Parameters", |m| m.params.to_string()),
        ("MAE", |m| fmt_cell(m.mae)),
        ("RMSE", |m| fmt_cell(m.rmse)),
    ];
    for (name, pick) in picks {
        let mut row = vec![name.to_string()];
        for (kind, solver) in cols {
            row.push(metric(table, kind.model_name(), solver, "2", pick));
        }
        rows.push(row);
    }
    rows
}
