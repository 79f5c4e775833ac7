use super::*;
use crate::hydrodata::{gen_task1, OracleParams, Task1Variant};
use crate::models::{build_model, checkpoint_load, EncoderKind, ModelConfig};
use crate::odeint::Solver;

fn one(name: &str, v: f64) -> ParamRegistry {
    let mut r = ParamRegistry::new();
    r.insert(name, Tensor::vector(vec![v])).unwrap();
    r
}

fn grads(name: &str, v: &[f64]) -> BTreeMap<String, Tensor> {
    BTreeMap::from([(name.to_string(), Tensor::vector(v.to_vec()))])
}

#[test]
fn mse_examples() {
    let z = Tensor::vector(vec![0.0, 0.0]);
    let t = Tensor::vector(vec![3.0, 4.0]);
    assert_eq!(mse(&t, &t).unwrap(), 0.0);
    assert_eq!(mse(&z, &t).unwrap(), 12.5);
    assert_eq!(mse(&z, &t.map(|v| 3.0 * v)).unwrap(), 9.0 * 12.5);
    assert!(mse(&z, &Tensor::vector(vec![1.0])).is_err());
    let tape = Tape::new();
    let l = mse_loss(tape.param(z.clone()), tape.constant(t.clone())).unwrap();
    assert_eq!(l.item(), 12.5);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.len(), 1);
}

#[test]
fn adam_first_step_is_learning_rate_sized() {
    let mut p = one("w", 0.0);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        grad_clip_norm: f64::INFINITY,
        ..TrainConfig::default()
    };
    let mut s = AdamState::default();
    adam_step(&mut p, &grads("w", &[1.0]), &mut s, &cfg).unwrap();
    let expect = -0.1 / (1.0 + 1e-8);
    assert!((p.get("w").unwrap().item() - expect).abs() < 1e-15);
    assert_eq!(s.step, 1);
}

#[test]
fn zero_gradient_leaves_parameters_and_decays_moments() {
    let mut p = one("w", 2.0);
    let cfg = TrainConfig::default();
    let mut s = AdamState::default();
    s.m.insert("w".into(), Tensor::vector(vec![0.0]));
    s.v.insert("w".into(), Tensor::vector(vec![0.0]));
    adam_step(&mut p, &grads("w", &[0.0]), &mut s, &cfg).unwrap();
    assert_eq!(p.get("w").unwrap().item(), 2.0);
    s.m.insert("w".into(), Tensor::vector(vec![0.5]));
    s.v.insert("w".into(), Tensor::vector(vec![0.25]));
    adam_step(&mut p, &grads("w", &[0.0]), &mut s, &cfg).unwrap();
    assert!((s.m["w"].item() - 0.45).abs() < 1e-15);
    assert!((s.v["w"].item() - 0.24975).abs() < 1e-15);
}

#[test]
fn clipping_scales_norm_and_preserves_direction() {
    let mut g = grads("w", &[6.0, 8.0]);
    let before = clip_gradients(&mut g, 1.0);
    assert_eq!(before, 10.0);
    let c = g["w"].data();
    assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    let cos = (6.0 * c[0] + 8.0 * c[1]) / (10.0 * (c[0] * c[0] + c[1] * c[1]).sqrt());
    assert!((cos - 1.0).abs() < 1e-12);

    let mut p = ParamRegistry::new();
    p.insert("w", Tensor::vector(vec![0.0, 0.0])).unwrap();
    let mut s = AdamState::default();
    adam_step(&mut p, &grads("w", &[6.0, 8.0]), &mut s, &TrainConfig::default()).unwrap();
    // first moment sees the clipped gradient
    assert!((s.m["w"].data()[0] - 0.1 * 0.6).abs() < 1e-15);
    assert!((s.m["w"].data()[1] - 0.1 * 0.8).abs() < 1e-15);
}

#[test]
fn adam_descends_a_quadratic() {
    let mut p = one("w", 1.0);
    let mut s = AdamState::default();
    let cfg = TrainConfig::default();
    let mut last = 1.0f64;
    for _ in 0..50 {
        let w = p.get("w").unwrap().item();
        adam_step(&mut p, &grads("w", &[w]), &mut s, &cfg).unwrap();
        let now = p.get("w").unwrap().item();
        assert!(now.abs() < last.abs());
        last = now;
    }
}

#[test]
fn non_finite_gradient_names_the_parameter() {
    let mut p = one("layer.bias", 1.0);
    let mut s = AdamState::default();
    let err = adam_step(&mut p, &grads("layer.bias", &[f64::NAN]), &mut s, &TrainConfig::default()).unwrap_err();
    assert!(err.to_string().contains("layer.bias"));
    assert_eq!(p.get("layer.bias").unwrap().item(), 1.0);
    assert_eq!(s.step, 0);
}

fn tiny_model() -> ForecastModel {
    build_model(ModelConfig {
        encoder: EncoderKind::Attention,
        d_model: 8,
        heads: 2,
        latent: 8,
        kernel_hidden: vec![16],
        solver: Solver::Euler,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn small_data() -> Vec<Trajectory> {
    gen_task1(Task1Variant::Static, 8, 20, 0.02, 1, &OracleParams::default(), 0.1)
        .unwrap()
        .trajectories
}

#[test]
fn rejects_empty_or_mismatched_data() {
    let mut m = tiny_model();
    let cfg = TrainConfig::default();
    assert!(matches!(train(&mut m, &[], &[], &cfg, None), Err(TrainError::EmptyTrainSet)));
    let mut wide = build_model(ModelConfig {
        n_in: 35,
        ..tiny_model().config().clone()
    })
    .unwrap();
    let err = train(&mut wide, &small_data(), &[], &cfg, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("n = 4") && msg.contains("n_in = 35"), "{msg}");
}

#[test]
fn training_reduces_loss_and_keeps_the_best_epoch() {
    let data = small_data();
    let mut m = tiny_model();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 4,
        max_epochs: 30,
        early_stop_patience: 5,
        ..TrainConfig::default()
    };
    let (tr, va) = data.split_at(6);
    let before = {
        let mut probe = m.clone();
        probe
            .set_normalizer(Normalizer::fit(tr.iter().map(|t| &t.conditions), tr.iter().map(|t| &t.forces)).unwrap())
            .unwrap();
        evaluate_mse(&probe, va, 4).unwrap()
    };
    let report = train(&mut m, tr, va, &cfg, None).unwrap();
    let best = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, best);
    assert_eq!(report.epochs[report.best_epoch - 1].val_loss, best);
    assert!(best < before, "{best} vs {before}");
    assert!((evaluate_mse(&m, va, 4).unwrap() - best).abs() < 1e-12);
    assert!(report.epochs.iter().all(|e| e.train_loss.is_finite() && e.train_loss >= 0.0));
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let data = small_data();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        batch_size: 3,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let mut bytes = Vec::new();
    for run in 0..2 {
        let out = TrainOutput::in_dir(&dir.path().join(run.to_string()));
        std::fs::create_dir_all(out.checkpoint.parent().unwrap()).unwrap();
        let mut m = tiny_model();
        let report = train(&mut m, &data[..6], &data[6..], &cfg, Some(&out)).unwrap();
        assert_eq!(report.epochs.len(), 3);
        let log = std::fs::read_to_string(&out.log).unwrap();
        assert_eq!(log.lines().count(), 3);
        for line in log.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for k in ["epoch", "train_loss", "val_loss", "wall_ms", "lr"] {
                assert!(v.get(k).is_some(), "{k}");
            }
        }
        let loaded = checkpoint_load(&out.checkpoint).unwrap();
        assert_eq!(loaded.params(), m.params());
        bytes.push(std::fs::read(&out.checkpoint).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn max_steps_caps_optimizer_updates() {
    let data = small_data();
    let mut m = tiny_model();
    let cfg = TrainConfig {
        batch_size: 2,
        max_steps: Some(5),
        ..TrainConfig::default()
    };
    let r = train(&mut m, &data, &[], &cfg, None).unwrap();
    assert_eq!(r.steps, 5);
    assert_eq!(r.stop_reason, StopReason::MaxSteps);
    assert_eq!(r.epochs.len(), 2);
}

#[test]
fn nan_targets_report_divergence() {
    let mut data = small_data();
    data[0].forces.data_mut()[3] = f64::NAN;
    let mut m = tiny_model();
    let cfg = TrainConfig {
        batch_size: 8,
        fit_normalizer: false,
        ..TrainConfig::default()
    };
    let err = train(&mut m, &data, &[], &cfg, None).unwrap_err();
    assert!(matches!(
        err,
        TrainError::Diverged {
            epoch: 1,
            last_finite_epoch: None
        }
    ));
}

#[test]
fn model_gradcheck_passes_and_negative_control_fails() {
    use crate::autodiff::GradCheck;
    let cfg = ModelConfig {
        d_model: 8,
        latent: 8,
        kernel_hidden: vec![8],
        heads: 2,
        ..ModelConfig::default()
    };
    for solver in [Solver::Euler, Solver::Rk4] {
        let c = ModelConfig { solver, ..cfg.clone() };
        let ok = gradcheck_model(&c, 4, 1, GradCheck::default()).unwrap();
        assert!(ok.max_rel_error < 1e-4, "{ok:?}");
        assert_eq!(ok.entries_checked, ok.num_params);
    }
    let bad = gradcheck_model(
        &cfg,
        4,
        1,
        GradCheck {
            inject_fault: true,
            ..GradCheck::default()
        },
    )
    .unwrap();
    assert!(bad.max_rel_error > 1e-4);
    assert!(bad.worst_parameter.is_some());
    let big = ModelConfig::desk(EncoderKind::Attention, 4, 2);
    assert!(gradcheck_model(&big, 4, 1, GradCheck::default()).is_err());
}
