use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn p() -> OracleParams {
    OracleParams::default()
}

#[test]
fn still_water_gives_zero_wrench() {
    let c = TowingCondition::shared(1.0, -0.5, [0.0; 3]);
    assert_eq!(steady_wrench(&c, &p()), [0.0; 6]);
}

#[test]
fn straight_tow_hand_values() {
    let w = steady_wrench(&TowingCondition::shared(0.0, 0.0, [0.5, 0.0, 0.0]), &p());
    let leg: f64 = -0.5 * 1000.0 * 1.1 * 0.01 * 0.5 * 0.5;
    let body: f64 = -0.5 * 1000.0 * 1.1 * 0.10 * 0.25;
    assert!((leg + 1.375).abs() < 1e-12 && (body + 13.75).abs() < 1e-12);
    assert!((w[0] + 19.25).abs() < 1e-10);
    assert!(w[1..].iter().all(|v| v.abs() < 1e-10), "{w:?}");
}

#[test]
fn drag_is_quadratic_in_speed() {
    let c = TowingCondition::shared(0.7, -1.9, [0.21, -0.13, 0.05]);
    let c2 = TowingCondition { v: c.v.map(|v| 2.0 * v), ..c };
    let (w, w2) = (steady_wrench(&c, &p()), steady_wrench(&c2, &p()));
    for a in 0..6 {
        assert!((w2[a] - 4.0 * w[a]).abs() < 1e-10 * (1.0 + w2[a].abs()));
    }
}

proptest! {
    #[test]
    fn drag_opposes_velocity(q2 in -2.6f64..2.6, q3 in -2.6f64..2.6, vx in -0.6f64..0.6, vy in -0.6f64..0.6, vz in -0.2f64..0.2) {
        let v = [vx, vy, vz];
        let w = steady_wrench(&TowingCondition::shared(q2, q3, v), &p());
        prop_assert!(w[0] * vx + w[1] * vy + w[2] * vz <= 0.0);
        // symmetric arms and shared angles: no net torque
        prop_assert!(w[3..].iter().all(|t| t.abs() < 1e-12));
    }
}

#[test]
fn steady_wrench_is_continuous_on_the_grid_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    for _ in 0..100 {
        let (q2, q3) = (rng.random_range(-2.6..2.6), rng.random_range(-2.6..2.6));
        let v = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0];
        let base = steady_wrench(&TowingCondition::shared(q2, q3, v), &p());
        for shift in [[h, 0.0, 0.0, 0.0], [0.0, h, 0.0, 0.0], [0.0, 0.0, h, 0.0], [0.0, 0.0, 0.0, h]] {
            let moved = steady_wrench(
                &TowingCondition::shared(q2 + shift[0], q3 + shift[1], [v[0] + shift[2], v[1] + shift[3], 0.0]),
                &p(),
            );
            let slope = (0..6).map(|a| (moved[a] - base[a]).abs() / h).fold(0.0, f64::max);
            assert!(slope < 500.0, "slope {slope}");
        }
    }
}

#[test]
fn relaxation_fixed_point_and_step_response() {
    let c = TowingCondition::shared(0.3, 0.4, [0.4, 0.1, 0.0]);
    let ss = steady_wrench(&c, &p());
    for w in simulate_measured_wrench(&[c; 30], 0.02, &p(), None) {
        for a in 0..6 {
            assert!((w[a] - ss[a]).abs() <= 1e-12 * ss[a].abs().max(1.0));
        }
    }
    // τ = 0.2 s = 10 samples at dt = 0.02
    let ws = simulate_measured_wrench(&[c; 10], 0.02, &p(), Some([0.0; 6]));
    let expect = 1.0 - (-1.0f64).exp();
    assert!((expect - 0.6321).abs() < 1e-4);
    for a in 0..6 {
        assert!((ws[9][a] - expect * ss[a]).abs() < 1e-4 * ss[a].abs().max(1e-12) + 1e-12);
    }
}

#[test]
fn relaxation_stays_in_the_convex_hull() {
    let grid = condition_grid(&p());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let conds: Vec<_> = (0..60).map(|i| grid[(i / 6 * 37 + rng.random_range(0..3)) % grid.len()]).collect();
    let init = [3.0, -2.0, 0.5, 0.0, 0.0, 0.1];
    let ws = simulate_measured_wrench(&conds, 0.02, &p(), Some(init));
    for a in 0..6 {
        let vals = conds.iter().map(|c| steady_wrench(c, &p())[a]).chain([init[a]]);
        let (lo, hi) = vals.fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v), h.max(v)));
        for w in &ws {
            assert!(w[a] >= lo - 1e-12 && w[a] <= hi + 1e-12);
        }
    }
}

#[test]
fn grid_has_192_conditions_in_documented_order() {
    let g = condition_grid(&p());
    assert_eq!(g.len(), 192);
    assert_eq!(g[0].q2[0], -2.6);
    assert!((g[15].q3[0] - 2.6).abs() < 1e-15);
    assert_eq!(direction_of(16), 1);
    assert_eq!(g[16].v, [0.0, 0.2, 0.0]);
    assert!((g[191].v[0] - 0.5 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert_eq!(direction_of(191), 2);
}

fn task1(variant: Task1Variant, seed: u64) -> Dataset {
    let len = if variant == Task1Variant::Static { 100 } else { 50 };
    gen_task1(variant, 192, len, 0.02, seed, &p(), 0.1).unwrap()
}

#[test]
fn static_task_shapes_and_start_from_rest() {
    let d = task1(Task1Variant::Static, 1);
    assert_eq!(d.trajectories.len(), 192);
    let mut seen: Vec<usize> = d.trajectories.iter().map(|t| t.condition_ids[0]).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..192).collect::<Vec<_>>());
    for t in &d.trajectories {
        assert_eq!(t.conditions.shape(), &[100, 4]);
        assert_eq!(t.forces.shape(), &[100, 2]);
        assert_eq!(t.initial.data(), &[0.0, 0.0]);
        assert!((t.times[99] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn switching_has_five_contiguous_segments() {
    let d = task1(Task1Variant::Switching, 2);
    for t in &d.trajectories {
        let ids = &t.condition_ids;
        let mut distinct: Vec<usize> = ids.chunks(10).map(|c| c[0]).collect();
        for c in ids.chunks(10) {
            assert!(c.iter().all(|v| *v == c[0]));
        }
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 5);
        // starts at the steady wrench of the first condition
        let w0 = steady_wrench(&condition_grid(&p())[ids[0]], &p());
        assert_eq!(t.initial.data(), &[w0[0], w0[1]]);
    }
}

#[test]
fn noisy_variant_adds_scaled_gaussian_noise() {
    let clean = task1(Task1Variant::Switching, 3);
    let noisy = task1(Task1Variant::Noisy, 3);
    for a in 0..2 {
        let all: Vec<f64> = clean.trajectories.iter().flat_map(|t| t.forces.data().iter().skip(a).step_by(2).copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let sigma = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        let resid: Vec<f64> = noisy
            .trajectories
            .iter()
            .zip(&clean.trajectories)
            .flat_map(|(n, c)| {
                n.forces.data().iter().zip(c.forces.data()).skip(a).step_by(2).map(|(x, y)| x - y).collect::<Vec<_>>()
            })
            .collect();
        assert!(resid.len() >= 1000);
        let rm = resid.iter().sum::<f64>() / resid.len() as f64;
        let rs = (resid.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((rs / (0.1 * sigma) - 1.0).abs() < 0.1, "axis {a}: {rs} vs {}", 0.1 * sigma);
        assert!((noisy.manifest.noise_std[a] - 0.1 * sigma).abs() < 1e-9 * sigma);
    }
    for (n, c) in noisy.trajectories.iter().zip(&clean.trajectories) {
        assert_eq!(n.conditions, c.conditions);
        assert_eq!(n.initial, c.initial);
    }
}

#[test]
fn task1_rejects_bad_lengths() {
    assert!(gen_task1(Task1Variant::Switching, 4, 52, 0.02, 0, &p(), 0.1).is_err());
    assert!(gen_task1(Task1Variant::Static, 4, 0, 0.02, 0, &p(), 0.1).is_err());
    assert!(gen_task1(Task1Variant::Static, 0, 10, 0.02, 0, &p(), 0.1).is_err());
}

#[test]
fn task2_shapes_and_construction_invariants() {
    let d = gen_task2(3, 400, 0.02, 9, &p(), 0.1).unwrap();
    for t in &d.trajectories {
        assert_eq!(t.conditions.shape(), &[400, 35]);
        assert_eq!(t.forces.shape(), &[400, 6]);
        assert_eq!(t.initial.shape(), &[6]);
        for row in t.conditions.data().chunks(35) {
            let qn: f64 = row[24..28].iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((qn - 1.0).abs() < 1e-9);
            assert!((950.0..1050.0).contains(&row[34]));
        }
        let ids = &t.condition_ids;
        for (s, chunk) in ids.chunks(10).enumerate() {
            assert!(chunk.iter().all(|&v| v == s));
            let v0 = &t.conditions.data()[s * 10 * 35 + 31..s * 10 * 35 + 34];
            for i in 1..10 {
                assert_eq!(&t.conditions.data()[(s * 10 + i) * 35 + 31..(s * 10 + i) * 35 + 34], v0);
            }
        }
        assert_eq!(*ids.last().unwrap(), 39);
    }
    assert!(gen_task2(1, 39, 0.02, 0, &p(), 0.1).is_err());
}

#[test]
fn task2_joint_rates_are_derivatives_of_angles() {
    let d = gen_task2(1, 400, 0.001, 4, &p(), 0.0).unwrap();
    let x = d.trajectories[0].conditions.data();
    for i in 1..399 {
        for j in 0..12 {
            let fd = (x[(i + 1) * 35 + j] - x[(i - 1) * 35 + j]) / 0.002;
            assert!((fd - x[i * 35 + 12 + j]).abs() < 1e-3, "row {i} joint {j}");
        }
    }
}

#[test]
fn split_sizes_disjointness_and_stratification() {
    let d = task1(Task1Variant::Static, 1);
    let s = split_dataset(&d, [0.8, 0.1, 0.1], 4).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (154, 19, 19));
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..192).collect::<Vec<_>>());
    for part in [&s.train, &s.val, &s.test] {
        let mut dirs: Vec<usize> = part.iter().map(|&i| direction_of(d.trajectories[i].condition_ids[0])).collect();
        dirs.sort_unstable();
        dirs.dedup();
        assert_eq!(dirs, vec![0, 1, 2]);
    }
    assert_eq!(s, split_dataset(&d, [0.8, 0.1, 0.1], 4).unwrap());
    assert_ne!(s, split_dataset(&d, [0.8, 0.1, 0.1], 5).unwrap());
    let small = gen_task1(Task1Variant::Static, 2, 10, 0.02, 0, &p(), 0.1).unwrap();
    assert!(split_dataset(&small, [0.8, 0.1, 0.1], 0).is_err());
    assert!(split_dataset(&d, [0.8, 0.3, 0.1], 0).is_err());
}

#[test]
fn generation_is_reproducible_from_the_manifest() {
    let a = task1(Task1Variant::Noisy, 11);
    let m = &a.manifest;
    let b = gen_task1(Task1Variant::Noisy, m.num_trajectories, m.length, m.dt, m.seed, &m.oracle, 0.1).unwrap();
    assert_eq!(a, b);
    let bits = |d: &Dataset| -> Vec<u64> { d.trajectories.iter().flat_map(|t| t.forces.data().iter().map(|v| v.to_bits())).collect() };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut d = gen_task2(4, 40, 0.02, 2, &p(), 0.1).unwrap();
    d.manifest.split = Some(split_dataset(&d, [0.5, 0.25, 0.25], 1).unwrap());
    write_dataset(dir.path(), &d).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, d);
    let [train, val, test] = back.splits().unwrap();
    assert_eq!((train.len(), val.len(), test.len()), (2, 1, 1));
    let header = std::fs::read_to_string(dir.path().join("traj_0000.csv")).unwrap();
    let first = header.lines().next().unwrap();
    assert!(first.starts_with("t,x_0,") && first.ends_with("F_5,cond_id"));

    std::fs::remove_file(dir.path().join("traj_0003.csv")).unwrap();
    assert!(read_dataset(dir.path()).is_err());
}
