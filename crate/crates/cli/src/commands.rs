use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use hydroode::autodiff::{GradCheck, Tensor};
use hydroode::evalbench::{compute_metrics, emit_report, overlay_plot, run_benchmark, table1_rows, table4_columns, BenchSpec};
use hydroode::hydrodata::{gen_task1, gen_task2, read_dataset, split_dataset, write_dataset, Dataset, OracleParams, Task, Trajectory};
use hydroode::models::{build_model, checkpoint_load, checkpoint_save, EncoderKind, ForecastModel, ModelConfig};
use hydroode::odeint::Solver;
use hydroode::training::{gradcheck_model, stack_batch, train, TrainConfig, TrainOutput};

use crate::args::{
    BenchArgs, EvalArgs, GenDataArgs, GradcheckArgs, ModelArg, ModelFlags, PredictArgs, SplitArg, TrainArgs,
};
use crate::error::{exit, CliError};

/// `--out` if given, else `$HYDROODE_OUT/<command>`, else
/// `hydroode-out/<command>`.
fn out_dir(given: &Option<PathBuf>, command: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| {
        std::env::var_os("HYDROODE_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("hydroode-out"))
            .join(command)
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_resolved(dir: &Path, command: &str, threads: u32, args: &impl Serialize, extra: Value) -> Result<(), CliError> {
    let mut v = json!({
        "command": command,
        "threads": threads,
        "args": args,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    write_json(&dir.join("resolved_config.json"), &v)
}

pub fn gen_data(a: &GenDataArgs, threads: u32) -> Result<(), CliError> {
    let task: Task = a.task.parse().map_err(CliError::usage)?;
    let (_, _, default_len) = task.dims();
    let length = a.length.unwrap_or(default_len);
    let oracle = OracleParams::default();
    let mut data = match task {
        Task::Task1(v) => gen_task1(v, a.trajectories.unwrap_or(192), length, a.dt, a.seed, &oracle, a.noise)?,
        Task::Task2 => gen_task2(a.trajectories.unwrap_or(40), length, a.dt, a.seed, &oracle, a.noise)?,
    };
    let ratios = [a.split[0], a.split[1], a.split[2]];
    data.manifest.split = Some(split_dataset(&data, ratios, a.seed)?);
    let out = out_dir(&a.out, "gen-data");
    write_dataset(&out, &data)?;
    write_resolved(&out, "gen-data", threads, a, json!({ "oracle": oracle, "length": length }))?;
    println!(
        "wrote task {} dataset: {} trajectories of length {} to {}",
        task,
        data.trajectories.len(),
        length,
        out.display()
    );
    Ok(())
}

fn model_config(f: &ModelFlags, n: usize, fo: usize, dt: f64, seed: u64) -> Result<ModelConfig, CliError> {
    let kind = f.model.kind();
    if kind == EncoderKind::Lstm && f.solver.is_some() {
        return Err(CliError::usage("--solver does not apply to the lstm model"));
    }
    if let Some(n_in) = f.n_in.filter(|&v| v != n) {
        return Err(CliError::usage(format!(
            "dataset has n = {n} condition columns but the model expects n_in = {n_in}"
        )));
    }
    if let Some(f_out) = f.f_out.filter(|&v| v != fo) {
        return Err(CliError::usage(format!(
            "dataset has f = {fo} force columns but the model expects f_out = {f_out}"
        )));
    }
    let preset: hydroode::evalbench::Preset = f.preset.into();
    let mut c = preset.model_config(kind, n, fo);
    c.solver = f.solver.map(Solver::from).unwrap_or(Solver::Euler);
    c.dt = dt;
    c.seed = seed;
    c.d_model = f.d_model.unwrap_or(c.d_model);
    c.heads = f.heads.unwrap_or(c.heads);
    c.latent = f.latent.unwrap_or(c.latent);
    c.kernel_hidden = f.kernel_hidden.clone().unwrap_or(c.kernel_hidden);
    c.substeps = f.substeps.unwrap_or(c.substeps);
    c.lstm_hidden = f.lstm_hidden.unwrap_or(c.lstm_hidden);
    c.lstm_layers = f.lstm_layers.unwrap_or(c.lstm_layers);
    c.time_input |= f.time_input;
    c.positional_encoding |= f.positional_encoding;
    c.layer_norm |= f.layer_norm;
    c.causal |= f.causal;
    c.validate()?;
    Ok(c)
}

fn require_split(data: &Dataset, dir: &Path) -> Result<[Vec<Trajectory>; 3], CliError> {
    if data.manifest.split.is_none() {
        return Err(CliError::usage(format!(
            "{}: manifest field \"split\" is missing; regenerate the dataset with a split",
            dir.join("manifest.json").display()
        )));
    }
    Ok(data.splits()?)
}

pub fn train_cmd(a: &TrainArgs, threads: u32) -> Result<(), CliError> {
    let data = read_dataset(&a.data)?;
    let m = &data.manifest;
    let model_cfg = model_config(&a.model, m.n, m.f, m.dt, a.seed)?;
    let train_cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        max_steps: a.max_steps,
        early_stop_patience: a.patience,
        grad_clip_norm: a.grad_clip,
        seed: a.seed,
        ..TrainConfig::default()
    };
    train_cfg.validate()?;
    let [tr, va, _] = require_split(&data, &a.data)?;
    let out = out_dir(&a.out, "train");
    create_dir(&out)?;
    write_resolved(
        &out,
        "train",
        threads,
        a,
        json!({ "model_config": model_cfg, "train_config": train_cfg }),
    )?;
    let mut model = build_model(model_cfg)?;
    let files = TrainOutput::in_dir(&out);
    let report = train(&mut model, &tr, &va, &train_cfg, Some(&files))?;
    checkpoint_save(&model, &files.checkpoint)?;
    write_json(&out.join("train_report.json"), &report)?;
    println!(
        "trained {} ({} parameters): best epoch {} val mse {:.6e} after {} steps ({:?}); checkpoint {}",
        model.config().encoder.model_name(),
        model.num_params(),
        report.best_epoch,
        report.best_val_loss,
        report.steps,
        report.stop_reason,
        files.checkpoint.display()
    );
    Ok(())
}

fn select(data: &Dataset, dir: &Path, split: SplitArg) -> Result<Vec<Trajectory>, CliError> {
    Ok(match split {
        SplitArg::All => data.trajectories.clone(),
        s => {
            let [tr, va, te] = require_split(data, dir)?;
            match s {
                SplitArg::Train => tr,
                SplitArg::Val => va,
                _ => te,
            }
        }
    })
}

fn check_compatible(model: &ForecastModel, data: &Dataset) -> Result<(), CliError> {
    let c = model.config();
    if (c.n_in, c.f_out) != (data.manifest.n, data.manifest.f) {
        return Err(CliError::usage(format!(
            "checkpoint expects n_in = {}, f_out = {} but the dataset has n = {}, f = {}",
            c.n_in, c.f_out, data.manifest.n, data.manifest.f
        )));
    }
    Ok(())
}

fn write_predictions(dir: &Path, set: &[Trajectory], preds: &[Tensor]) -> Result<(), CliError> {
    for (t, p) in set.iter().zip(preds) {
        let f = p.shape()[1];
        let mut s = String::from("t");
        for j in 0..f {
            let _ = write!(s, ",F_{j}");
        }
        s.push('\n');
        for (time, row) in t.times.iter().zip(p.data().chunks(f)) {
            let _ = write!(s, "{time:.16e}");
            for v in row {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        let path = dir.join(format!("pred_{:04}.csv", t.id));
        fs::write(&path, s).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn predict_all(model: &ForecastModel, set: &[Trajectory]) -> Result<Vec<Tensor>, CliError> {
    set.iter()
        .map(|t| model.predict(&t.conditions, &t.initial).map_err(CliError::from))
        .collect()
}

pub fn predict_cmd(a: &PredictArgs, threads: u32) -> Result<(), CliError> {
    let model = checkpoint_load(&a.checkpoint)?;
    let data = read_dataset(&a.data)?;
    check_compatible(&model, &data)?;
    let set = select(&data, &a.data, a.split)?;
    let out = out_dir(&a.out, "predict");
    create_dir(&out)?;
    write_resolved(&out, "predict", threads, a, json!({ "model_config": model.config() }))?;
    let preds = predict_all(&model, &set)?;
    write_predictions(&out, &set, &preds)?;
    println!("wrote {} prediction files to {}", set.len(), out.display());
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs, threads: u32) -> Result<(), CliError> {
    let model = checkpoint_load(&a.checkpoint)?;
    let data = read_dataset(&a.data)?;
    check_compatible(&model, &data)?;
    let set = select(&data, &a.data, a.split)?;
    if set.is_empty() {
        return Err(CliError::usage("the selected split is empty"));
    }
    let out = out_dir(&a.out, "eval");
    create_dir(&out)?;
    write_resolved(&out, "eval", threads, a, json!({ "model_config": model.config() }))?;
    let refs: Vec<&Trajectory> = set.iter().collect();
    let (x, f0, y) = stack_batch(&refs).map_err(|e| CliError::new(exit::VERIFICATION, e.to_string()))?;
    let pred = model.predict(&x, &f0)?;
    let metrics = compute_metrics(&pred, &y)?;
    let preds = predict_all(&model, &set)?;
    write_predictions(&out, &set, &preds)?;
    let plots = out.join("plots");
    create_dir(&plots)?;
    for (t, p) in set.iter().zip(&preds).take(a.plots) {
        let title = format!("trajectory {} ({})", t.id, model.config().encoder.model_name());
        let path = plots.join(format!("traj_{:04}.svg", t.id));
        fs::write(&path, overlay_plot(&title, &t.times, &t.forces, p)).map_err(|e| CliError::io(&path, e))?;
    }
    write_json(
        &out.join("metrics.json"),
        &json!({ "split": a.split, "trajectories": set.len(), "metrics": metrics }),
    )?;
    println!(
        "{:?} split, {} trajectories: MAE {:.6e} RMSE {:.6e}",
        a.split,
        set.len(),
        metrics.mae,
        metrics.rmse
    );
    Ok(())
}

fn print_rows(title: &str, rows: &[Vec<String>]) {
    println!("{title}");
    for r in rows {
        println!("  {}", r.join(" | "));
    }
}

pub fn bench_cmd(a: &BenchArgs, threads: u32) -> Result<(), CliError> {
    let mut spec = BenchSpec {
        suite: a.suite.into(),
        preset: a.preset.into(),
        seed: a.seed,
        ..BenchSpec::default()
    };
    if let Some(e) = a.max_epochs {
        spec.train.max_epochs = e;
    }
    spec.task1_trajectories = a.task1_trajectories.unwrap_or(spec.task1_trajectories);
    spec.task2_trajectories = a.task2_trajectories.unwrap_or(spec.task2_trajectories);
    spec.task2_length = a.task2_length.unwrap_or(spec.task2_length);
    spec.timing_repeats = a.repeats.unwrap_or(spec.timing_repeats);
    let out = out_dir(&a.out, "bench");
    create_dir(&out)?;
    write_resolved(&out, "bench", threads, a, json!({ "bench_spec": spec }))?;
    let table = run_benchmark(&spec, Some(&out))?;
    emit_report(&table, &spec, &out)?;
    if spec.suite.includes_task1() {
        print_rows("Task 1", &table1_rows(&table));
    }
    if spec.suite.includes_task2() {
        print_rows("Task 2", &table4_columns(&table));
    }
    if table.all_failed() {
        return Err(CliError::new(exit::VERIFICATION, "every benchmark cell failed"));
    }
    println!("results in {}", out.display());
    Ok(())
}

pub fn gradcheck_cmd(a: &GradcheckArgs) -> Result<(), CliError> {
    if a.model == ModelArg::Lstm && a.solver.is_some() {
        return Err(CliError::usage("--solver does not apply to the lstm model"));
    }
    let cfg = ModelConfig {
        encoder: a.model.kind(),
        d_model: a.d_model,
        heads: 2,
        latent: a.latent,
        kernel_hidden: vec![8],
        solver: a.solver.map(Solver::from).unwrap_or(Solver::Euler),
        dt: 0.05,
        lstm_hidden: 4,
        lstm_layers: 2,
        seed: a.seed,
        ..ModelConfig::default()
    };
    let check = GradCheck {
        inject_fault: a.inject_fault,
        ..GradCheck::default()
    };
    let r = gradcheck_model(&cfg, a.steps, a.seed, check)?;
    let worst = r.worst_parameter.as_deref().unwrap_or("-");
    if r.max_rel_error < 1e-4 {
        println!(
            "gradcheck PASS: max relative error {:.3e} over {} entries ({} steps, worst {worst})",
            r.max_rel_error, r.entries_checked, r.steps
        );
        Ok(())
    } else {
        Err(CliError::new(
            exit::VERIFICATION,
            format!(
                "gradcheck FAIL: max relative error {:.3e} at parameter {worst}",
                r.max_rel_error
            ),
        ))
    }
}
