mod common;

use common::{random_problem, rel_inf, rng};
use liquidation::dual::{eval_j, eval_j1, eval_j2, grad_j, grad_j1, system_residual, KroneckerHeatOperator};
use liquidation::hamiltonian::cap_threshold;
use liquidation::oracles::{dense_second_difference, dense_sigma_inverse, finite_difference_grad, kronecker};
use liquidation::solver::recover_trajectory;
use liquidation::{DualPath, LiquidationProblem};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random dual path whose entries stay at least `margin` away from every kink
/// of `H'` (the dead-zone edge and the cap threshold).
fn non_kink_point(problem: &LiquidationProblem, rng: &mut ChaCha8Rng, margin: f64) -> DualPath {
    DualPath::from_fn(problem.steps(), problem.dim(), |_, i| {
        let c = &problem.assets[i].cost;
        let kinks = [c.psi, cap_threshold(c)];
        loop {
            let x: f64 = rng.random_range(-2.0..2.0) * cap_threshold(c);
            if kinks.iter().all(|k| (x.abs() - k).abs() > margin) && x.abs() > margin {
                return x;
            }
        }
    })
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(7);
    for case in 0..5 {
        let d = 1 + case % 3;
        let steps = r.random_range(2..=50);
        let problem = random_problem(d, steps, &mut r);
        for _ in 0..20 {
            let p = non_kink_point(&problem, &mut r, 1e-4);
            let analytic = grad_j(&p, &problem);
            let fd = finite_difference_grad(|x| eval_j(x, &problem), &p, 1e-7);
            let err = rel_inf(fd.as_slice(), analytic.as_slice());
            assert!(err <= 1e-6, "case {case} (d={d}, N={steps}): relative error {err:e}");
        }
    }
}

#[test]
fn heat_gradient_is_kronecker_product() {
    let mut r = rng(11);
    for d in 1..=3 {
        for steps in [1, 2, 5, 9] {
            let problem = random_problem(d, steps, &mut r);
            let p = DualPath::from_fn(steps, d, |_, _| r.random_range(-0.1..0.1));
            let dense = kronecker(&dense_second_difference(steps), &dense_sigma_inverse(&problem))
                / (problem.gamma * problem.dt());
            let expected = dense * DVector::from_column_slice(p.as_slice());
            let got = grad_j1(&p, &problem);
            assert!(rel_inf(got.as_slice(), expected.as_slice()) <= 1e-12 || expected.amax() == 0.0);
            let op = KroneckerHeatOperator::new(&problem);
            assert_eq!(op.apply(&p).as_slice(), got.as_slice());
        }
    }
}

#[test]
fn second_difference_matrix_shape() {
    let m = dense_second_difference(1);
    assert_eq!(m[(0, 0)], 0.0);
    let m = dense_second_difference(4);
    let expected = [
        [1.0, -1.0, 0.0, 0.0],
        [-1.0, 2.0, -1.0, 0.0],
        [0.0, -1.0, 2.0, -1.0],
        [0.0, 0.0, -1.0, 1.0],
    ];
    for (i, row) in expected.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(m[(i, j)], *v);
        }
    }
}

#[test]
fn gradient_row_is_trading_defect() {
    // With q read back from p, ∇J̃ row n equals q_{n+1} − q_n − ΔtVH'(p_n)
    // up to sign, and the costate equation holds identically.
    let mut r = rng(13);
    for d in 1..=3 {
        let problem = random_problem(d, 12, &mut r);
        let p = non_kink_point(&problem, &mut r, 1e-6);
        let q = recover_trajectory(&p, &problem);
        let g = grad_j(&p, &problem);
        let res = system_residual(&q, &p, &problem);
        let scale = problem.max_abs_q0().max(g.max_abs());
        assert!((res - g.max_abs()).abs() <= 1e-9 * scale, "d={d}: {res} vs {}", g.max_abs());
    }
}

#[test]
fn objective_parts_add_up() {
    let mut r = rng(17);
    let problem = random_problem(2, 20, &mut r);
    let p = non_kink_point(&problem, &mut r, 1e-6);
    let total = eval_j(&p, &problem);
    let parts = eval_j1(&p, &problem) + eval_j2(&p, &problem);
    assert!((total - parts).abs() <= 1e-12 * total.abs().max(1.0));
    assert_eq!(eval_j(&DualPath::for_problem(&problem), &problem), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_part_nonnegative(seed in 0u64..10_000, scale in 1e-6f64..1.0) {
        let mut r = rng(seed);
        let d = 1 + (seed % 3) as usize;
        let problem = random_problem(d, 8, &mut r);
        let p = DualPath::from_fn(8, d, |_, _| scale * r.random_range(-1.0..1.0));
        prop_assert!(eval_j1(&p, &problem) >= 0.0);
        // Constant paths carry no heat energy.
        let c = DualPath::from_fn(8, d, |_, i| p[(0, i)]);
        prop_assert!(eval_j1(&c, &problem) <= 1e-20);
    }

    #[test]
    fn gradient_is_odd_without_boundary(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let mut problem = random_problem(2, 6, &mut r);
        problem.q0 = vec![0.0; 2];
        let p = DualPath::from_fn(6, 2, |_, _| r.random_range(-0.05..0.05));
        let minus = DualPath(p.scaled(-1.0));
        let a = grad_j(&p, &problem);
        let b = grad_j(&minus, &problem);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x + y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
