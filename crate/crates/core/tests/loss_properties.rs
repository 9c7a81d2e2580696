mod common;

use std::sync::OnceLock;

use common::{bar_problem, small_training, BarProblem};
use ifenn::fem::CollocationSet;
use ifenn::ifenn::{ModelKind, TrainingObjective};
use ifenn::loss::{Ansatz, Reduction};
use ifenn::network::{init_params, Lift};
use proptest::prelude::*;

fn problem() -> &'static BarProblem {
    static P: OnceLock<BarProblem> = OnceLock::new();
    P.get_or_init(|| bar_problem(16, 1.0, 1e4, 10))
}

fn objective(set: &CollocationSet) -> TrainingObjective {
    let p = problem();
    TrainingObjective::new(set, &p.material, &small_training(0), ModelKind::PiTcn).unwrap()
}

fn permuted(set: &CollocationSet, order: &[usize]) -> CollocationSet {
    CollocationSet {
        points: order.iter().map(|&i| set.points[i]).collect(),
        tr_strain_rate: order.iter().map(|&i| set.tr_strain_rate[i].clone()).collect(),
        t_fe: order.iter().map(|&i| set.t_fe[i].clone()).collect(),
        ..set.clone()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn gradient_matches_central_differences() {
    let obj = objective(&problem().set);
    assert!(obj.network.n_params() <= 200, "{} parameters", obj.network.n_params());
    let prob = obj.problem().unwrap();
    for seed in [0, 1, 2] {
        let x = init_params(&obj.network, seed).values;
        let (_, g) = prob.evaluate(&x, true).unwrap();
        let g = g.unwrap();
        let scale = common::max_abs(&g);
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (prob.evaluate(&xp, false).unwrap().0.total - prob.evaluate(&xm, false).unwrap().0.total) / (2.0 * h);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3 * scale);
            assert!(err < 1e-5, "seed {seed} param {i}: autodiff {} fd {fd} rel {err:e}", g[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_ignores_point_order(order in Just((0..problem().set.n_points()).collect::<Vec<_>>()).prop_shuffle(), seed in 0u64..100) {
        let base = objective(&problem().set);
        let shuffled = objective(&permuted(&problem().set, &order));
        let x = init_params(&base.network, seed).values;
        let a = base.loss(&x).unwrap();
        let b = shuffled.loss(&x).unwrap();
        prop_assert!(close(a.l2_e, b.l2_e, 1e-12) && close(a.l2_t, b.l2_t, 1e-12) && close(a.l2_q, b.l2_q, 1e-12));
    }

    #[test]
    fn total_grows_with_the_data_weight(lo in 0.0..10.0f64, extra in 0.0..10.0f64, seed in 0u64..100) {
        let mut obj = objective(&problem().set);
        let x = init_params(&obj.network, seed).values;
        obj.loss.lambda_t = lo;
        let a = obj.loss(&x).unwrap();
        obj.loss.lambda_t = lo + extra;
        let b = obj.loss(&x).unwrap();
        prop_assert_eq!((a.l2_e, a.l2_t, a.l2_q), (b.l2_e, b.l2_t, b.l2_q));
        prop_assert!(b.total >= a.total);
        prop_assert!(close(b.total - a.total, extra * a.l2_t, 1e-9) || extra * a.l2_t < 1e-12 * b.total);
    }

    #[test]
    fn dirichlet_values_hold_for_any_raw_output(raw in -1e3..1e3f64, scale in 0.1..1e3f64, x in 0.0..1.0f64) {
        let bar = Ansatz { lift: common::bar_lift(), output_scale: scale };
        prop_assert_eq!(bar.theta(raw, [0.0, x]), 10.0);
        prop_assert_eq!(bar.theta(raw, [1.0, x]), 50.0);
        let plate = Ansatz {
            lift: Lift::Plate { theta_bottom: 10.0, theta_top: 50.0, height: 2.0 },
            output_scale: scale,
        };
        prop_assert_eq!(plate.theta(raw, [x, 0.0]), 10.0);
        prop_assert_eq!(plate.theta(raw, [x, 2.0]), 50.0);
        let hole = Ansatz { lift: Lift::Hole { theta_hole: 50.0, radius: 0.5 }, output_scale: scale };
        prop_assert_eq!(hole.theta(raw, [0.5, 0.0]), 50.0);
        prop_assert_eq!(hole.theta(raw, [0.0, 0.5]), 50.0);
    }
}

#[test]
fn sum_reduction_scales_the_mean() {
    let mut obj = objective(&problem().set);
    let x = init_params(&obj.network, 3).values;
    obj.loss.lambda_q = 0.0;
    let mean = obj.loss(&x).unwrap();
    obj.loss.reduction = Reduction::Sum;
    let sum = obj.loss(&x).unwrap();
    let count = (problem().set.n_points() * problem().set.n_steps()) as f64;
    assert!(close(sum.l2_e, mean.l2_e * count, 1e-12));
    assert!(close(sum.l2_t, mean.l2_t * count, 1e-12));
}

#[test]
fn data_driven_objective_has_no_physics() {
    let p = problem();
    let obj = TrainingObjective::new(&p.set, &p.material, &small_training(0), ModelKind::DataDrivenTcn).unwrap();
    let b = obj.loss(&init_params(&obj.network, 0).values).unwrap();
    assert_eq!((b.l2_e, b.l2_q), (0.0, 0.0));
    assert!(b.l2_t > 0.0 && b.total == b.l2_t);
}
