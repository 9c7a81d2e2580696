#![allow(dead_code)]

use ifenn::fem::{
    extract_collocation, solve_coupled, BoundaryConditionSet, CollocationSet, MaterialProperties, SolutionHistory,
    TagConditions, TimeGrid,
};
use ifenn::ifenn::TrainingConfig;
use ifenn::loss::{Ansatz, LossConfig};
use ifenn::mesh::{build_interval_mesh, Mesh};
use ifenn::network::{Architecture, InputSpec, Lift, Network, NetworkConfig, RffConfig, TcnConfig};
use ifenn::optim::LbfgsConfig;

pub fn bar_bcs() -> BoundaryConditionSet {
    BoundaryConditionSet::new()
        .with(
            "left",
            TagConditions {
                theta: Some(10.0),
                displacement: [Some(0.0), None],
                ..Default::default()
            },
        )
        .with(
            "right",
            TagConditions {
                theta: Some(50.0),
                displacement: [Some(0.0), None],
                ..Default::default()
            },
        )
}

pub fn bar_lift() -> Lift {
    Lift::Bar {
        theta_left: 10.0,
        theta_right: 50.0,
        length: 1.0,
    }
}

pub struct BarProblem {
    pub mesh: Mesh,
    pub grid: TimeGrid,
    pub bcs: BoundaryConditionSet,
    pub material: MaterialProperties,
    pub history: SolutionHistory,
    pub set: CollocationSet,
}

pub fn bar_problem(n_elements: usize, t_first: f64, t_final: f64, n_increments: usize) -> BarProblem {
    let mesh = build_interval_mesh(n_elements, 1.0).unwrap();
    let grid = TimeGrid::geometric(t_first, t_final, n_increments).unwrap();
    let bcs = bar_bcs();
    let material = MaterialProperties::aluminium();
    let history = solve_coupled(&mesh, &material, &bcs, &grid).unwrap();
    let set = extract_collocation(&history, &mesh, &grid, &bcs, None).unwrap();
    BarProblem {
        mesh,
        grid,
        bcs,
        material,
        history,
        set,
    }
}

pub fn tcn_config(filters: usize, kernel: usize, dilations: Vec<usize>, rff: usize) -> NetworkConfig {
    NetworkConfig {
        architecture: Architecture::Tcn(TcnConfig {
            n_filters: filters,
            kernel_size: kernel,
            dilations,
            n_stacks: 1,
            dropout: 0.0,
            weight_norm: true,
        }),
        rff: (rff > 0).then_some(RffConfig {
            n_frequencies: rff,
            sigma: 0.5,
            seed: 11,
        }),
    }
}

pub fn tcn(filters: usize, kernel: usize, dilations: Vec<usize>, rff: usize) -> Network {
    Network::new(tcn_config(filters, kernel, dilations, rff), InputSpec { time: true, dim: 1 }).unwrap()
}

/// A PI-TCN small enough for finite-difference checks.
pub fn small_training(iterations: usize) -> TrainingConfig {
    TrainingConfig {
        network: tcn_config(3, 2, vec![1, 2], 2),
        loss: LossConfig::default(),
        optimizer: LbfgsConfig {
            max_iterations: iterations,
            ..Default::default()
        },
        ansatz: Ansatz {
            lift: bar_lift(),
            output_scale: 100.0,
        },
        seed: 5,
        collocation_stride: 1,
        warm_start_iterations: None,
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
