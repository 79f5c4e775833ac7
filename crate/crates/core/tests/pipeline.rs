use hydroode::evalbench::compute_metrics;
use hydroode::hydrodata::{gen_task1, read_dataset, split_dataset, write_dataset, OracleParams, Task1Variant, Trajectory};
use hydroode::models::{build_model, checkpoint_load, checkpoint_save, EncoderKind, ModelConfig};
use hydroode::odeint::Solver;
use hydroode::training::{evaluate_mse, stack_batch, train, TrainConfig};

fn small_config(encoder: EncoderKind, solver: Solver) -> ModelConfig {
    ModelConfig {
        encoder,
        solver,
        d_model: 8,
        heads: 2,
        latent: 8,
        kernel_hidden: vec![16],
        lstm_hidden: 8,
        ..ModelConfig::default()
    }
}

#[test]
fn dataset_train_checkpoint_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut data = gen_task1(Task1Variant::Switching, 30, 20, 0.02, 4, &OracleParams::default(), 0.1).unwrap();
    data.manifest.split = Some(split_dataset(&data, [0.8, 0.1, 0.1], 4).unwrap());
    write_dataset(&tmp.path().join("data"), &data).unwrap();
    let back = read_dataset(&tmp.path().join("data")).unwrap();
    assert_eq!(back.trajectories, data.trajectories);

    let [tr, va, te] = back.splits().unwrap();
    assert_eq!(tr.len() + va.len() + te.len(), 30);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    for (encoder, solver) in [(EncoderKind::Attention, Solver::Rk4), (EncoderKind::Mlp, Solver::Euler), (EncoderKind::Lstm, Solver::Euler)] {
        let mut model = build_model(small_config(encoder, solver)).unwrap();
        let report = train(&mut model, &tr, &va, &cfg, None).unwrap();
        assert!(report.best_val_loss.is_finite());

        let path = tmp.path().join(format!("{}.ckpt", encoder.cli_name()));
        checkpoint_save(&model, &path).unwrap();
        let loaded = checkpoint_load(&path).unwrap();
        let refs: Vec<&Trajectory> = te.iter().collect();
        let (x, f0, y) = stack_batch(&refs).unwrap();
        let (a, b) = (model.predict(&x, &f0).unwrap(), loaded.predict(&x, &f0).unwrap());
        assert_eq!(a, b, "{encoder:?}");

        let m = compute_metrics(&a, &y).unwrap();
        let mse = evaluate_mse(&loaded, &te, 4).unwrap();
        assert!((m.rmse - mse.sqrt()).abs() <= 1e-9 * m.rmse.max(1.0));
    }
}

#[test]
fn predictions_are_finite_with_batch_time_force_shape() {
    let data = gen_task1(Task1Variant::Static, 4, 10, 0.02, 0, &OracleParams::default(), 0.1).unwrap();
    let model = build_model(small_config(EncoderKind::Mlp, Solver::Euler)).unwrap();
    let refs: Vec<&Trajectory> = data.trajectories.iter().collect();
    let (x, f0, _) = stack_batch(&refs).unwrap();
    let pred = model.predict(&x, &f0).unwrap();
    assert_eq!(pred.shape(), &[4, 10, 2]);
    assert!(pred.data().iter().all(|v| v.is_finite()));
}
