//! Error metrics, inference timing and the benchmark harness.

mod bench;
mod report;
mod svg;

pub use bench::{
    run_benchmark, table1_rows, table4_columns, BenchRow, BenchSpec, BenchmarkTable, CellMetrics, CellOutcome,
    CellSpec, CellTrace, Preset, Suite,
};
pub use report::{emit_report, read_results_csv, write_results, RESULTS_CSV_HEADER};
pub use svg::{overlay_plot, trajectory_plot, Series};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::models::{ForecastModel, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction shape {pred:?} differs from truth shape {truth:?}")]
    ShapeMismatch { pred: Vec<usize>, truth: Vec<usize> },
    #[error("cannot compute metrics on empty input")]
    Empty,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub mae_per_axis: Vec<f64>,
    pub rmse_per_axis: Vec<f64>,
    pub num_samples: usize,
}

/// MAE and RMSE pooled over every element, and per output axis (the last
/// dimension) over all leading positions.
pub fn compute_metrics(pred: &Tensor, truth: &Tensor) -> Result<MetricsReport, EvalError> {
    if pred.shape() != truth.shape() {
        return Err(EvalError::ShapeMismatch {
            pred: pred.shape().to_vec(),
            truth: truth.shape().to_vec(),
        });
    }
    let f = pred.shape().last().copied().unwrap_or(0);
    if pred.numel() == 0 || f == 0 {
        return Err(EvalError::Empty);
    }
    let samples = pred.numel() / f;
    let mut abs = vec![0.0; f];
    let mut sq = vec![0.0; f];
    for (p, t) in pred.data().chunks(f).zip(truth.data().chunks(f)) {
        for a in 0..f {
            let e = p[a] - t[a];
            abs[a] += e.abs();
            sq[a] += e * e;
        }
    }
    let n = samples as f64;
    let report = MetricsReport {
        mae: abs.iter().sum::<f64>() / (n * f as f64),
        rmse: (sq.iter().sum::<f64>() / (n * f as f64)).sqrt(),
        mae_per_axis: abs.iter().map(|s| s / n).collect(),
        rmse_per_axis: sq.iter().map(|s| (s / n).sqrt()).collect(),
        num_samples: samples,
    };
    // power-mean inequality, up to rounding
    let holds = |mae: f64, rmse: f64| rmse >= mae * (1.0 - 1e-12);
    assert!(holds(report.mae, report.rmse), "rmse < mae: {report:?}");
    for (m, r) in report.mae_per_axis.iter().zip(&report.rmse_per_axis) {
        assert!(holds(*m, *r), "rmse < mae on an axis: {report:?}");
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub repeats: usize,
    pub warmup: usize,
    pub hardware: String,
    pub threads: usize,
}

/// CPU model from `/proc/cpuinfo` when available, else the architecture.
pub fn hardware_string() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

/// Summary statistics of wall-clock samples in milliseconds. The p95 is the
/// nearest-rank percentile.
pub fn summarize_timings(mut samples: Vec<f64>, warmup: usize) -> TimingReport {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    TimingReport {
        mean_ms: samples.iter().sum::<f64>() / n as f64,
        median_ms: median,
        p95_ms: samples[rank - 1],
        repeats: n,
        warmup,
        hardware: hardware_string(),
        threads: 1,
    }
}

/// Times full-sequence inference (encoding plus integration) on the calling
/// thread, excluding `warmup` untimed runs.
pub fn time_inference(
    model: &ForecastModel,
    conditions: &Tensor,
    initial: &Tensor,
    repeats: usize,
    warmup: usize,
) -> Result<TimingReport, EvalError> {
    if repeats == 0 {
        return Err(EvalError::Invalid("repeats must be at least 1".into()));
    }
    for _ in 0..warmup {
        model.predict(conditions, initial)?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = model.predict(conditions, initial)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    Ok(summarize_timings(samples, warmup))
}
