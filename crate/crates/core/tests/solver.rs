use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use qpgnn::generator::{gen_milcqp_with, stream_rng};
use qpgnn::harness::small_milcqp_config;
use qpgnn::instance::{LcqpInstance, MilcqpInstance, Sense};
use qpgnn::solver::{brute_force_milcqp, solve_lcqp, solve_milcqp, Status, TargetLabels};

fn diag(q: &[f64]) -> Vec<Vec<f64>> {
    (0..q.len())
        .map(|i| (0..q.len()).map(|j| if i == j { q[i] } else { 0.0 }).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Separable problem: each coordinate is the clipped unconstrained minimizer.
    #[test]
    fn separable_box_qp_matches_clipping(
        entries in prop::collection::vec((0.1f64..5.0, -5.0f64..5.0, -2.0f64..0.0, 0.0f64..2.0), 1..8)
    ) {
        let q: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let c: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let lo: Vec<f64> = entries.iter().map(|e| e.2).collect();
        let hi: Vec<f64> = entries.iter().map(|e| e.3).collect();
        let inst = LcqpInstance::from_dense(&diag(&q), &c, &[], &[], &[], &lo, &hi).unwrap();
        let r = solve_lcqp(&inst).unwrap();
        prop_assert_eq!(r.status, Status::Optimal);
        let x = r.x_star.unwrap();
        for j in 0..q.len() {
            let expect = (-c[j] / q[j]).clamp(lo[j], hi[j]);
            prop_assert!((x[j] - expect).abs() <= 1e-7, "x[{}] = {} vs {}", j, x[j], expect);
        }
    }

    // Projection of a point onto the simplex {x >= 0, sum x = 1}.
    #[test]
    fn simplex_projection(p in prop::collection::vec(-2.0f64..2.0, 2..7)) {
        let n = p.len();
        let c: Vec<f64> = p.iter().map(|v| -v).collect();
        let inst = LcqpInstance::from_dense(
            &diag(&vec![1.0; n]), &c, &[vec![1.0; n]], &[1.0], &[Sense::Eq],
            &vec![0.0; n], &vec![f64::INFINITY; n],
        ).unwrap();
        let r = solve_lcqp(&inst).unwrap();
        prop_assert_eq!(r.status, Status::Optimal);
        let x = r.x_star.unwrap();
        // Oracle: sort-based threshold.
        let mut s = p.clone();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut tau = 0.0;
        let mut acc = 0.0;
        for (k, v) in s.iter().enumerate() {
            acc += v;
            let t = (acc - 1.0) / (k + 1) as f64;
            if v - t > 0.0 {
                tau = t;
            }
        }
        for j in 0..n {
            prop_assert!((x[j] - (p[j] - tau).max(0.0)).abs() <= 1e-7);
        }
    }
}

#[test]
fn rank_deficient_objective_returns_min_norm_point() {
    // (x1 + x2 - 1)^2 / 2 up to a constant: every point on x1 + x2 = 1 is optimal.
    let inst = LcqpInstance::from_dense(
        &[vec![1.0, 1.0], vec![1.0, 1.0]],
        &[-1.0, -1.0],
        &[],
        &[],
        &[],
        &[-5.0, -5.0],
        &[5.0, 5.0],
    )
    .unwrap();
    let r = solve_lcqp(&inst).unwrap();
    let x = r.x_star.unwrap();
    assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-7);
    assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-7);
    assert_abs_diff_eq!(r.value.unwrap(), -0.5, epsilon = 1e-9);
}

#[test]
fn min_norm_point_respects_bounds() {
    // Optimal set is the segment x1 + x2 = 1 with x1 >= 0.8.
    let inst = LcqpInstance::from_dense(
        &[vec![1.0, 1.0], vec![1.0, 1.0]],
        &[-1.0, -1.0],
        &[],
        &[],
        &[],
        &[0.8, -5.0],
        &[5.0, 5.0],
    )
    .unwrap();
    let x = solve_lcqp(&inst).unwrap().x_star.unwrap();
    assert_abs_diff_eq!(x[0], 0.8, epsilon = 1e-7);
    assert_abs_diff_eq!(x[1], 0.2, epsilon = 1e-7);
}

#[test]
fn unbounded_linear_direction_is_certified() {
    let inst = LcqpInstance::from_dense(
        &[vec![1.0, 0.0], vec![0.0, 0.0]],
        &[0.0, -1.0],
        &[vec![1.0, -1.0]],
        &[0.0],
        &[Sense::Le],
        &[-1.0, 0.0],
        &[1.0, f64::INFINITY],
    )
    .unwrap();
    let r = solve_lcqp(&inst).unwrap();
    assert_eq!(r.status, Status::Unbounded);
    let d = r.certificate.clone().expect("direction");
    assert!(d[1] > 0.0 && d[0].abs() < 1e-9);
    let labels = TargetLabels::from_result(&r);
    assert_eq!(labels.feas, 1);
    assert_eq!(labels.obj, f64::NEG_INFINITY);
}

#[test]
fn contradictory_rows_are_infeasible() {
    let inst = LcqpInstance::from_dense(
        &diag(&[1.0, 1.0]),
        &[0.0, 0.0],
        &[vec![1.0, 1.0], vec![1.0, 1.0]],
        &[3.0, 1.0],
        &[Sense::Ge, Sense::Le],
        &[f64::NEG_INFINITY; 2],
        &[f64::INFINITY; 2],
    )
    .unwrap();
    let r = solve_lcqp(&inst).unwrap();
    assert_eq!(r.status, Status::Infeasible);
    assert_eq!(TargetLabels::from_result(&r).obj, f64::INFINITY);
}

#[test]
fn integer_variable_rounds_to_best_neighbor() {
    // x^2 - 1.2 x over integers in [0, 3]: f(0) = 0, f(1) = -0.2.
    let base = LcqpInstance::from_dense(&[vec![2.0]], &[-1.2], &[], &[], &[], &[0.0], &[3.0]).unwrap();
    let inst = MilcqpInstance::new(base, [0].into_iter().collect()).unwrap();
    let r = solve_milcqp(&inst, 1000).unwrap();
    assert_eq!(r.x_star.unwrap(), vec![1.0]);
    assert_abs_diff_eq!(r.value.unwrap(), -0.2, epsilon = 1e-12);
}

#[test]
fn branch_and_bound_agrees_with_enumeration() {
    let cfg = small_milcqp_config(17);
    let mut optimal = 0;
    for k in 0..40u64 {
        let inst = gen_milcqp_with(&cfg, &mut stream_rng(17, k)).unwrap();
        let a = solve_milcqp(&inst, 100_000).unwrap();
        let b = brute_force_milcqp(&inst).unwrap();
        assert_eq!(a.status, b.status, "instance {k}");
        if let (Some(x), Some(y)) = (a.value, b.value) {
            assert!((x - y).abs() <= 1e-6, "instance {k}: {x} vs {y}");
            optimal += 1;
        }
    }
    assert!(optimal >= 5, "only {optimal} optimal instances exercised");
}
