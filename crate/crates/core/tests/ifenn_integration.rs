mod common;

use common::{bar_problem, small_training};
use ifenn::fem::{
    error_metrics, solve_coupled, BoundaryConditionSet, MaterialProperties, MechanicalSolver, TagConditions, TimeGrid,
};
use ifenn::ifenn::{
    model_landscape, run_ifenn, train_pinn_sequence, train_pitcn, ModelKind, RateReplay, StrainRateSource,
    ThetaProvider, TrainedModel, TrainingObjective,
};
use ifenn::mesh::{build_quarter_hole_mesh, build_rect_mesh, Mesh};
use ifenn::network::{init_params, Architecture, MlpConfig, NetworkConfig};

fn plate_bcs() -> BoundaryConditionSet {
    BoundaryConditionSet::new()
        .with(
            "bottom",
            TagConditions {
                theta: Some(10.0),
                displacement: [None, Some(0.0)],
                ..Default::default()
            },
        )
        .with(
            "top",
            TagConditions {
                theta: Some(50.0),
                ..Default::default()
            },
        )
        .with(
            "left",
            TagConditions {
                displacement: [Some(0.0), None],
                ..Default::default()
            },
        )
}

fn hole_bcs() -> BoundaryConditionSet {
    BoundaryConditionSet::new()
        .with(
            "hole",
            TagConditions {
                theta: Some(50.0),
                ..Default::default()
            },
        )
        .with(
            "left",
            TagConditions {
                displacement: [Some(0.0), None],
                ..Default::default()
            },
        )
        .with(
            "bottom",
            TagConditions {
                displacement: [None, Some(0.0)],
                ..Default::default()
            },
        )
}

fn relative_max_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn cases() -> Vec<(&'static str, Mesh, BoundaryConditionSet)> {
    vec![
        ("bar", ifenn::mesh::build_interval_mesh(40, 1.0).unwrap(), common::bar_bcs()),
        ("plate", build_rect_mesh(8, 8, 1.0, 1.0).unwrap(), plate_bcs()),
        ("hole", build_quarter_hole_mesh(4, 8, 1.0, 0.3).unwrap(), hole_bcs()),
    ]
}

#[test]
fn oracle_temperatures_reproduce_coupled_displacements() {
    let material = MaterialProperties::aluminium();
    let grid = TimeGrid::geometric(1.0, 1e4, 12).unwrap();
    for (name, mesh, bcs) in cases() {
        let coupled = solve_coupled(&mesh, &material, &bcs, &grid).unwrap();
        let run = run_ifenn(&mesh, &material, &bcs, &grid, &ThetaProvider::Oracle(&coupled.theta)).unwrap();
        let d = relative_max_difference(&run.history.displacement, &coupled.displacement);
        assert!(d < 1e-10, "{name}: relative difference {d:e}");
        assert_eq!(run.history.theta, coupled.theta);
    }
}

#[test]
fn displacement_solve_drops_one_unknown_per_node() {
    let material = MaterialProperties::aluminium();
    let grid = TimeGrid::geometric(1.0, 10.0, 2).unwrap();
    for (name, mesh, bcs) in cases() {
        let coupled = solve_coupled(&mesh, &material, &bcs, &grid).unwrap();
        let mech = MechanicalSolver::new(&mesh, &material, &bcs).unwrap();
        assert_eq!(coupled.n_unknowns - mech.n_unknowns(), mesh.n_nodes(), "{name}");
        assert_eq!(mech.n_unknowns(), mesh.dim() * mesh.n_nodes(), "{name}");
    }
}

#[test]
fn loss_and_gradient_do_not_depend_on_thread_count() {
    let p = bar_problem(40, 1.0, 1e4, 8);
    let mut config = small_training(0);
    config.loss.shard_size = 7;
    let obj = TrainingObjective::new(&p.set, &p.material, &config, ModelKind::PiTcn).unwrap();
    let x = init_params(&obj.network, 2).values;
    let eval = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| obj.problem().unwrap().evaluate(&x, true).unwrap())
    };
    let (b1, g1) = eval(1);
    let (b4, g4) = eval(4);
    assert_eq!(b1, b4);
    assert_eq!(g1, g4);
}

#[test]
fn training_is_reproducible_and_models_round_trip() {
    let p = bar_problem(30, 1.0, 1e4, 10);
    let config = small_training(15);
    let (a, report) = train_pitcn(&p.set, &p.material, &config, &p.mesh, None).unwrap();
    let (b, _) = train_pitcn(&p.set, &p.material, &config, &p.mesh, None).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.final_loss, b.final_loss);
    assert!(a.final_loss.total < report.initial_loss.total);
    assert_eq!(report.history.last().unwrap().breakdown, a.final_loss);

    let reloaded = TrainedModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(reloaded, a);
    let replay = RateReplay::new(&p.mesh, &p.history).unwrap();
    let nodes = p.mesh.nodes().to_vec();
    let (rates, outside) = replay.sample(&nodes);
    assert_eq!(outside, 0);
    assert_eq!(a.predict(&nodes, &rates).unwrap(), reloaded.predict(&nodes, &rates).unwrap());
}

#[test]
fn dirichlet_nodes_keep_prescribed_temperatures() {
    let p = bar_problem(30, 1.0, 1e4, 10);
    let (trained, _) = train_pitcn(&p.set, &p.material, &small_training(10), &p.mesh, None).unwrap();
    let mut untrained = trained.clone();
    untrained.params = vec![init_params(&trained.network, 8).values];
    let replay = RateReplay::new(&p.mesh, &p.history).unwrap();
    let ends = [p.mesh.node(0), p.mesh.node(p.mesh.n_nodes() - 1)];
    let (rates, _) = replay.sample(&ends);
    for model in [&trained, &untrained] {
        for row in model.predict(&ends, &rates).unwrap() {
            assert!((row[0] - 10.0).abs() <= 1e-12 && (row[1] - 50.0).abs() <= 1e-12, "{row:?}");
        }
    }
}

#[test]
fn both_strain_rate_sources_run_end_to_end() {
    let p = bar_problem(30, 1.0, 1e4, 10);
    let (model, _) = train_pitcn(&p.set, &p.material, &small_training(10), &p.mesh, None).unwrap();
    let replay = RateReplay::new(&p.mesh, &p.history).unwrap();
    for source in [StrainRateSource::Replay(replay), StrainRateSource::Lagged] {
        let name = source.name();
        let run = run_ifenn(&p.mesh, &p.material, &p.bcs, &p.grid, &ThetaProvider::Network(&model, source)).unwrap();
        assert_eq!(run.strain_rate_source, name);
        assert_eq!(run.history.n_steps(), p.grid.len());
        assert!(run.history.displacement.iter().flatten().all(|v| v.is_finite()));
        let err = error_metrics(&run.history.theta, &p.history.theta).unwrap();
        assert!(err.aggregate.is_finite());
    }
}

#[test]
fn landscape_center_is_the_final_loss() {
    let p = bar_problem(30, 1.0, 1e4, 10);
    let (model, _) = train_pitcn(&p.set, &p.material, &small_training(10), &p.mesh, None).unwrap();
    let (grid, dirs) = model_landscape(&model, &p.set, 5, 4).unwrap();
    assert_eq!(grid.center(), Some(model.final_loss.total));
    assert_eq!(dirs.xi.len(), model.network.n_params());
    assert_eq!(grid.loss.len(), 5);
}

#[test]
fn pinn_sequence_keeps_one_network_per_increment() {
    let p = bar_problem(20, 1.0, 1e4, 4);
    let mut config = small_training(10);
    config.network = NetworkConfig {
        architecture: Architecture::Mlp(MlpConfig { hidden: vec![6, 6] }),
        rff: None,
    };
    config.warm_start_iterations = Some(4);
    let (model, report) = train_pinn_sequence(&p.set, &p.material, &config, &p.mesh).unwrap();
    assert_eq!(model.kind, ModelKind::MlpPinnSequence);
    assert_eq!(model.params.len(), 4);
    assert!(report.failed_steps.is_empty());
    let run = run_ifenn(&p.mesh, &p.material, &p.bcs, &p.grid, &ThetaProvider::Network(&model, StrainRateSource::Lagged))
        .unwrap();
    let last = run.history.theta.last().unwrap();
    assert!((last[0] - 10.0).abs() <= 1e-12 && (last[last.len() - 1] - 50.0).abs() <= 1e-12);
    assert!(model_landscape(&model, &p.set, 3, 0).is_err());
}
