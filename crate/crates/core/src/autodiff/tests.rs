use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn matmul_examples() {
    let tape = Tape::new();
    let a = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = tape.constant(Tensor::identity(2));
    assert_eq!(a.matmul(i).unwrap().value(), a.value());
    let ones = tape.constant(t2(&[&[1.0], &[1.0]]));
    assert_eq!(a.matmul(ones).unwrap().value().data(), &[3.0, 7.0]);
    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let y = tape.constant(Tensor::zeros(&[4, 5]));
    match x.matmul(y) {
        Err(TensorError::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![4, 5]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn batched_matmul_with_shared_and_batched_rhs() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let shared = tape.constant(t2(&[&[1.0], &[1.0]]));
    assert_eq!(a.matmul(shared).unwrap().value().data(), &[3.0, 7.0]);
    let per = tape.constant(Tensor::new(vec![2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    assert_eq!(a.matmul(per).unwrap().value().data(), &[1.0, 4.0]);
    let wrong = tape.constant(Tensor::zeros(&[3, 2, 1]));
    assert!(a.matmul(wrong).is_err());
}

#[test]
fn elementwise_examples() {
    let tape = Tape::new();
    let z = tape.param(Tensor::vector(vec![0.0]));
    let th = z.tanh();
    assert_eq!(th.item(), 0.0);
    let g = tape.backward(th.sum_all()).unwrap();
    assert_eq!(g.wrt(z).unwrap().data(), &[1.0]);

    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    assert_eq!(a.add(b).unwrap().value().data(), &[4.0, 6.0]);
    let c = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(a.add(c).is_err());
    let s = tape.constant(Tensor::scalar(10.0));
    assert_eq!(a.mul(s).unwrap().value().data(), &[10.0, 20.0]);

    let tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let g = tape.backward(x.square().sum_all()).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn softmax_examples() {
    let tape = Tape::new();
    let v = tape.constant(Tensor::vector(vec![0.0, 0.0])).softmax_lastdim().unwrap();
    assert_eq!(v.value().data(), &[0.5, 0.5]);
    let v = tape.constant(Tensor::vector(vec![-7.5])).softmax_lastdim().unwrap();
    assert_eq!(v.value().data(), &[1.0]);
    let v = tape.constant(Tensor::vector(vec![1000.0, 1000.0])).softmax_lastdim().unwrap();
    assert_eq!(v.value().data(), &[0.5, 0.5]);
    let empty = tape.constant(Tensor::new(vec![2, 0], vec![]).unwrap());
    assert!(empty.softmax_lastdim().is_err());
}

#[test]
fn reduce_examples() {
    let tape = Tape::new();
    let v = tape.constant(Tensor::vector(vec![3.0, 5.0]));
    assert_eq!(v.mean_all().unwrap().item(), 4.0);
    let m = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert_eq!(m.sum(&[0]).unwrap().value().data(), &[4.0, 6.0]);
    assert_eq!(m.mean(&[1]).unwrap().value().data(), &[1.5, 3.5]);
    assert!(matches!(m.sum(&[2]), Err(TensorError::InvalidAxis { .. })));
    let empty = tape.constant(Tensor::new(vec![3, 0], vec![]).unwrap());
    assert_eq!(empty.mean(&[1]).unwrap_err(), TensorError::EmptyReduction);
}

#[test]
fn structural_examples() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![3.0]));
    assert_eq!(concat(&[a, b], 0).unwrap().value().data(), &[1.0, 2.0, 3.0]);
    let m = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert_eq!(m.transpose_last2().unwrap().value().data(), &[1.0, 3.0, 2.0, 4.0]);
    let r = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(r.reshape(&[7]), Err(TensorError::ElementCount { .. })));
    assert_eq!(r.reshape(&[3, 2]).unwrap().shape(), vec![3, 2]);
    let c = tape.constant(Tensor::zeros(&[2, 2]));
    let d = tape.constant(Tensor::zeros(&[3, 3]));
    assert!(concat(&[c, d], 0).is_err());
}

#[test]
fn select_stack_slice_expand() {
    let tape = Tape::new();
    let m = tape.constant(Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
    assert_eq!(m.select(1, 2).unwrap().value().data(), &[3.0, 6.0]);
    assert_eq!(m.slice(1, 1, 2).unwrap().value().data(), &[2., 3., 5., 6.]);
    let rows = [m.select(0, 0).unwrap(), m.select(0, 1).unwrap()];
    assert_eq!(stack(&rows, 0).unwrap().value(), m.value());
    let cols: Vec<_> = (0..3).map(|j| m.select(1, j).unwrap()).collect();
    assert_eq!(stack(&cols, 1).unwrap().value(), m.value());
    let e = tape.constant(Tensor::vector(vec![1.0, 2.0])).expand_leading(&[2]);
    assert_eq!(e.value().data(), &[1.0, 2.0, 1.0, 2.0]);
    assert!(m.select(0, 2).is_err());
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let c = tape.constant(Tensor::scalar(3.0));
    let g = tape.backward(c).unwrap();
    assert!(g.is_empty());

    let tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));

    let other = Tape::new();
    let stray = {
        let t = Tape::new();
        t.param(Tensor::scalar(1.0)).id
    };
    assert_eq!(
        other.backward(Var { tape: &other, id: stray }).unwrap_err(),
        TensorError::EmptyGraph
    );
}

#[test]
fn fan_out_accumulates() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let y = x.mul(x).unwrap().add(x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap().item(), 7.0);
}

#[test]
fn composite_matmul_tanh_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = vec![random(&[3, 4], &mut rng), random(&[4, 2], &mut rng), random(&[5, 3], &mut rng)];
    let report = grad_check(
        |_, p| {
            let h = p[2].matmul(p[0])?.tanh();
            h.matmul(p[1])?.tanh().square().sum_all().scale(0.5).mul(h.mean_all()?)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn grad_check_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // quadratic form xᵀAx
    let a = random(&[4, 4], &mut rng);
    let x = random(&[4, 1], &mut rng);
    let r = grad_check(
        |_, p| p[1].transpose_last2()?.matmul(p[0])?.matmul(p[1]).map(|v| v.sum_all()),
        &[a, x],
        1e-5,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-8, "{r:?}");

    // 3-layer tanh MLP
    let ws = vec![
        random(&[6, 3], &mut rng),
        random(&[3, 5], &mut rng),
        random(&[5, 4], &mut rng),
        random(&[4, 2], &mut rng),
    ];
    let r = grad_check(
        |_, p| {
            let h = p[0].matmul(p[1])?.tanh().matmul(p[2])?.tanh().matmul(p[3])?;
            Ok(h.square().sum_all())
        },
        &ws,
        1e-5,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");

    let r = grad_check(|t, _| Ok(t.constant(Tensor::scalar(2.0))), &[Tensor::vector(vec![1.0, 2.0])], 1e-5).unwrap();
    assert_eq!(r.max_rel_error, 0.0);
}

#[test]
fn injected_fault_is_detected() {
    let p = vec![Tensor::vector(vec![0.3, -0.7, 1.1])];
    fn f<'t>(_: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        Ok(p[0].tanh().sum_all())
    }
    let ok = GradCheck::default().run(f, &p).unwrap();
    assert!(ok.max_rel_error < 1e-8);
    let bad = GradCheck {
        inject_fault: true,
        ..Default::default()
    }
    .run(f, &p)
    .unwrap();
    assert!(bad.max_rel_error > 1e-2);
    assert!(bad.worst.is_some());
}

type Loss = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>;

fn per_op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Loss)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |_, p| Ok(p[0].matmul(p[1])?.tanh().sum_all())),
        ("batched_matmul", vec![vec![2, 3, 4], vec![2, 4, 2]], |_, p| {
            Ok(p[0].matmul(p[1])?.square().sum_all())
        }),
        ("add", vec![vec![3], vec![3]], |_, p| Ok(p[0].add(p[1])?.square().sum_all())),
        ("sub", vec![vec![3], vec![1]], |_, p| Ok(p[0].sub(p[1])?.square().sum_all())),
        ("mul", vec![vec![2, 2], vec![2, 2]], |_, p| Ok(p[0].mul(p[1])?.tanh().sum_all())),
        ("scalar_mul", vec![vec![1], vec![4]], |_, p| Ok(p[0].mul(p[1])?.square().sum_all())),
        ("scale", vec![vec![3]], |_, p| Ok(p[0].scale(-2.5).square().sum_all())),
        ("sigmoid", vec![vec![5]], |_, p| Ok(p[0].sigmoid().square().sum_all())),
        ("relu", vec![vec![5]], |_, p| Ok(p[0].scale(3.0).relu().square().sum_all())),
        ("exp", vec![vec![4]], |_, p| Ok(p[0].exp().sum_all())),
        ("softmax", vec![vec![3, 4], vec![3, 4]], |_, p| {
            Ok(p[0].softmax_lastdim()?.mul(p[1])?.sum_all())
        }),
        ("sum_axis", vec![vec![2, 3, 2]], |_, p| Ok(p[0].sum(&[1])?.square().sum_all())),
        ("mean_axes", vec![vec![2, 3, 2]], |_, p| Ok(p[0].mean(&[0, 2])?.square().sum_all())),
        ("concat", vec![vec![2, 2], vec![2, 3]], |_, p| {
            Ok(concat(&[p[0], p[1]], 1)?.tanh().square().sum_all())
        }),
        ("stack", vec![vec![2, 3], vec![2, 3]], |t, p| {
            let w = t.constant(Tensor::new(vec![2, 2, 3], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap());
            Ok(stack(&[p[0], p[1]], 1)?.mul(w)?.sum_all())
        }),
        ("slice_select", vec![vec![3, 4]], |_, p| {
            let a = p[0].slice(1, 1, 2)?.square().sum_all();
            let b = p[0].select(0, 2)?.tanh().sum_all();
            a.mul(b)
        }),
        ("transpose", vec![vec![2, 3], vec![2, 3]], |_, p| {
            Ok(p[0].transpose_last2()?.matmul(p[1])?.square().sum_all())
        }),
        ("reshape_expand", vec![vec![2, 3], vec![3]], |_, p| {
            let e = p[1].expand_leading(&[2]);
            Ok(p[0].reshape(&[3, 2])?.reshape(&[2, 3])?.mul(e)?.tanh().sum_all())
        }),
        ("layer_norm", vec![vec![3, 5], vec![3, 5]], |_, p| {
            Ok(p[0].layer_norm_lastdim(1e-5)?.mul(p[1])?.sum_all())
        }),
        ("causal_softmax", vec![vec![2, 3, 3], vec![2, 3, 3]], |_, p| {
            Ok(p[0].causal_mask()?.softmax_lastdim()?.mul(p[1])?.sum_all())
        }),
    ]
}

#[test]
fn every_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (name, shapes, loss) in per_op_cases() {
        for _ in 0..5 {
            let params: Vec<Tensor> = shapes.iter().map(|s| random(s, &mut rng)).collect();
            let r = grad_check(loss, &params, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{name}: {r:?}");
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&[8, 8], &mut rng);
    let run = || {
        let tape = Tape::new();
        let x = tape.constant(a.clone());
        x.matmul(x).unwrap().tanh().softmax_lastdim().unwrap().value()
    };
    let (r1, r2) = (run(), run());
    assert!(r1.data().iter().zip(r2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn softmax_rows_normalize_and_are_shift_invariant(
        row in proptest::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(row.clone()));
        let y = x.softmax_lastdim().unwrap().value();
        let total: f64 = y.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        let shifted = tape.constant(Tensor::vector(row.iter().map(|v| v + shift).collect()));
        let ys = shifted.softmax_lastdim().unwrap().value();
        prop_assert!(y.max_abs_diff(&ys) < 1e-12);
    }

    #[test]
    fn backward_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random(&[3, 3], &mut rng);
        let grad_of = |ca: f64, cb: f64| {
            let tape = Tape::new();
            let x = tape.param(w.clone());
            let l1 = x.matmul(x).unwrap().tanh().sum_all();
            let l2 = x.square().mean_all().unwrap();
            let l = l1.scale(ca).add(l2.scale(cb)).unwrap();
            tape.backward(l).unwrap().wrt(x).unwrap().clone()
        };
        let combined = grad_of(a, b);
        let g1 = grad_of(1.0, 0.0);
        let g2 = grad_of(0.0, 1.0);
        for i in 0..9 {
            let expect = a * g1.data()[i] + b * g2.data()[i];
            prop_assert!((combined.data()[i] - expect).abs() < 1e-12);
        }
    }
}
