use hydroode_demo::{drag_sweep, relaxation_trace, solver_comparison};

#[test]
fn sweep_is_quadratic_in_speed() {
    let r = drag_sweep(0.0, 0.0, 0.0, 0.5, 6).unwrap();
    assert_eq!(r.len(), 18);
    assert_eq!(r[0..3], [0.0, 0.0, 0.0]);
    let rec = |i: usize| &r[3 * i..3 * i + 3];
    assert!((rec(3)[0] - 0.3).abs() < 1e-15);
    assert!((rec(3)[1] / rec(5)[1] - 0.36).abs() < 1e-12);
    assert!((rec(5)[1] + 19.25).abs() < 1e-10);
    assert!(rec(5)[2].abs() < 1e-12);
    assert!(drag_sweep(9.0, 0.0, 0.0, 0.5, 6).is_err());
    assert!(drag_sweep(0.0, 0.0, 0.0, 0.5, 1).is_err());
}

#[test]
fn relaxation_settles_to_the_new_steady_force() {
    let r = relaxation_trace(0.2, 0.5, 0.0, 0.0, 0.0, 0.2, 1.0, 4.0, 0.02).unwrap();
    assert_eq!(r.len(), 5 * 201);
    let rec = |i: usize| &r[5 * i..5 * i + 5];
    // settled before the switch
    assert!((rec(40)[1] - rec(40)[2]).abs() < 1e-12);
    // one time constant after the switch the gap has shrunk by 1/e
    let target = rec(200)[1];
    let gap0 = target - rec(50)[2];
    let gap1 = target - rec(60)[2];
    assert!((gap1 / gap0 - (-1.0f64).exp()).abs() < 1e-6, "{}", gap1 / gap0);
    assert!((rec(200)[2] + 19.25).abs() < 1e-3);
    assert!(relaxation_trace(0.2, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 4.0, 0.02).is_err());
}

#[test]
fn solver_errors_match_closed_forms() {
    let r = solver_comparison(0.01, 1.0).unwrap();
    let last = &r[r.len() - 4..];
    assert!((last[0] - 1.0).abs() < 1e-12);
    assert!((last[2] - 0.99f64.powi(100)).abs() < 1e-12);
    assert!((last[3] - (-1.0f64).exp()).abs() < 1e-9);
    assert!(solver_comparison(0.0, 1.0).is_err());
}
