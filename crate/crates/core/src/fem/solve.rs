use std::time::Instant;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

use super::assembly::{assemble_operators, Operators};
use super::linalg::{CholeskyFactor, LuSolver, SparseMatrix};
use super::{BoundaryConditionSet, MaterialProperties, SolutionHistory, TimeGrid};

fn check_rigid_body(mesh: &Mesh, bcs: &BoundaryConditionSet) -> Result<()> {
    let cons = bcs.displacement_constraints(mesh);
    let dim = mesh.dim();
    for comp in 0..dim {
        if !cons.iter().any(|&(_, c, _)| c == comp) {
            return Err(Error::SingularSystem(format!(
                "no displacement constraint on component {comp}: rigid-body translation is free"
            )));
        }
    }
    if dim == 2 {
        let mut nodes: Vec<usize> = cons.iter().map(|&(n, _, _)| n).collect();
        nodes.dedup();
        if nodes.len() < 2 {
            return Err(Error::SingularSystem(
                "displacements constrained at a single node: rigid-body rotation is free".into(),
            ));
        }
    }
    Ok(())
}

fn prepare(
    mesh: &Mesh,
    material: &MaterialProperties,
    bcs: &BoundaryConditionSet,
) -> Result<Operators> {
    material.validate()?;
    bcs.validate(mesh)?;
    check_rigid_body(mesh, bcs)?;
    assemble_operators(mesh, material, bcs)
}

fn strain_rates(prev: &[f64], cur: &[f64], dt: f64) -> Vec<f64> {
    cur.iter().zip(prev).map(|(c, p)| (c - p) / dt).collect()
}

/// Monolithic implicit-Euler solve of the coupled problem from the zero
/// initial state.
pub fn solve_coupled(
    mesh: &Mesh,
    material: &MaterialProperties,
    bcs: &BoundaryConditionSet,
    grid: &TimeGrid,
) -> Result<SolutionHistory> {
    let ops = prepare(mesh, material, bcs)?;
    let dim = mesh.dim();
    let nn = mesh.n_nodes();
    let stride = dim + 1;
    let n = stride * nn;
    let beta = material.thermal_modulus();
    let bt = beta * material.t_ref;

    let mut fixed = vec![None; n];
    for (node, comp, v) in bcs.displacement_constraints(mesh) {
        fixed[node * stride + comp] = Some(v);
    }
    for (node, v) in bcs.theta_constraints(mesh) {
        fixed[node * stride + dim] = Some(v);
    }

    // dt-independent part of the block matrix
    let mu = |i: usize| (i / dim) * stride + i % dim;
    let th = |j: usize| j * stride + dim;
    let mut base = SparseMatrix::new(n);
    for t in &ops.stiffness.entries {
        base.push(mu(t.row), mu(t.col), t.val);
    }
    for t in &ops.coupling {
        base.push(mu(t.row), th(t.col), -beta * t.val);
        base.push(th(t.col), mu(t.row), bt * t.val);
    }
    for t in &ops.capacity.entries {
        base.push(th(t.row), th(t.col), t.val);
    }

    let mut lu = LuSolver::default();
    let mut theta = vec![0.0; nn];
    let mut u = vec![0.0; nn * dim];
    let mut tr_prev = vec![0.0; ops.quad.len()];
    let mut hist = SolutionHistory {
        dim,
        times: grid.times().to_vec(),
        theta: Vec::with_capacity(grid.len()),
        displacement: Vec::with_capacity(grid.len()),
        tr_strain_rate: Vec::with_capacity(grid.len()),
        step_seconds: Vec::with_capacity(grid.len()),
        n_unknowns: n,
    };

    for step in 0..grid.len() {
        let dt = grid.dt(step);
        let clock = Instant::now();
        let mut a = base.clone();
        for t in &ops.conductivity.entries {
            a.push(th(t.row), th(t.col), dt * t.val);
        }
        let m_theta = ops.capacity.matvec(&theta);
        let gt_u = ops.coupling_t_times_u(&u);
        let mut rhs = vec![0.0; n];
        for i in 0..nn * dim {
            rhs[mu(i)] = ops.traction_load[i];
        }
        for j in 0..nn {
            rhs[th(j)] = m_theta[j] + bt * gt_u[j] - dt * ops.flux_load[j];
        }
        let a = a.apply_dirichlet(&mut rhs, &fixed);
        let x = lu.solve(&a, &rhs)?;
        let elapsed = clock.elapsed().as_secs_f64();

        for i in 0..nn * dim {
            u[i] = x[mu(i)];
        }
        for j in 0..nn {
            theta[j] = x[th(j)];
        }
        let tr = ops.tr_strain(mesh, &u);
        hist.tr_strain_rate.push(strain_rates(&tr_prev, &tr, dt));
        tr_prev = tr;
        hist.theta.push(theta.clone());
        hist.displacement.push(u.clone());
        hist.step_seconds.push(elapsed);
    }
    Ok(hist)
}

/// Displacement-only solver with the temperature supplied as data. The
/// stiffness is factorized once; each increment is a right-hand side
/// assembly and two triangular solves.
pub struct MechanicalSolver {
    ops: Operators,
    beta: f64,
    fixed: Vec<Option<f64>>,
    base_rhs: Vec<f64>,
    factor: CholeskyFactor,
    factor_seconds: f64,
}

impl MechanicalSolver {
    pub fn new(mesh: &Mesh, material: &MaterialProperties, bcs: &BoundaryConditionSet) -> Result<Self> {
        let clock = Instant::now();
        let ops = prepare(mesh, material, bcs)?;
        let dim = mesh.dim();
        let mut fixed = vec![None; mesh.n_nodes() * dim];
        for (node, comp, v) in bcs.displacement_constraints(mesh) {
            fixed[node * dim + comp] = Some(v);
        }
        let mut base_rhs = ops.traction_load.clone();
        let k = ops.stiffness.apply_dirichlet(&mut base_rhs, &fixed);
        let factor = CholeskyFactor::new(k)?;
        Ok(MechanicalSolver {
            beta: material.thermal_modulus(),
            ops,
            fixed,
            base_rhs,
            factor,
            factor_seconds: clock.elapsed().as_secs_f64(),
        })
    }

    /// Unknowns in the per-increment system.
    pub fn n_unknowns(&self) -> usize {
        self.ops.n_mech()
    }

    /// Time spent assembling and factorizing the stiffness.
    pub fn setup_seconds(&self) -> f64 {
        self.factor_seconds
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    /// Displacements for one nodal Θ field.
    pub fn solve(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.ops.n_nodes {
            return Err(Error::ShapeMismatch(format!(
                "temperature field has {} entries, mesh has {} nodes",
                theta.len(),
                self.ops.n_nodes
            )));
        }
        let g_theta = self.ops.coupling_times_theta(theta);
        let rhs: Vec<f64> = self
            .base_rhs
            .iter()
            .zip(&g_theta)
            .zip(&self.fixed)
            .map(|((b, g), f)| f.unwrap_or(b + self.beta * g))
            .collect();
        self.factor.solve(&rhs)
    }

    /// Runs every increment and records fields, strain rates and timings.
    /// The one-off factorization time is charged to the first increment.
    pub fn run(&self, mesh: &Mesh, grid: &TimeGrid, thetas: &[Vec<f64>]) -> Result<SolutionHistory> {
        if thetas.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} temperature fields for {} increments",
                thetas.len(),
                grid.len()
            )));
        }
        let dim = self.ops.dim;
        let mut hist = SolutionHistory {
            dim,
            times: grid.times().to_vec(),
            theta: Vec::with_capacity(grid.len()),
            displacement: Vec::with_capacity(grid.len()),
            tr_strain_rate: Vec::with_capacity(grid.len()),
            step_seconds: Vec::with_capacity(grid.len()),
            n_unknowns: self.n_unknowns(),
        };
        let mut tr_prev = vec![0.0; self.ops.quad.len()];
        for (step, theta) in thetas.iter().enumerate() {
            let clock = Instant::now();
            let u = self.solve(theta)?;
            let mut elapsed = clock.elapsed().as_secs_f64();
            if step == 0 {
                elapsed += self.factor_seconds;
            }
            let tr = self.ops.tr_strain(mesh, &u);
            hist.tr_strain_rate.push(strain_rates(&tr_prev, &tr, grid.dt(step)));
            tr_prev = tr;
            hist.theta.push(theta.clone());
            hist.displacement.push(u);
            hist.step_seconds.push(elapsed);
        }
        Ok(hist)
    }
}

/// Displacement-only solve for a prescribed temperature history.
pub fn solve_mechanical(
    mesh: &Mesh,
    material: &MaterialProperties,
    bcs: &BoundaryConditionSet,
    grid: &TimeGrid,
    nodal_theta_per_step: &[Vec<f64>],
) -> Result<SolutionHistory> {
    MechanicalSolver::new(mesh, material, bcs)?.run(mesh, grid, nodal_theta_per_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::TagConditions;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};

    fn bar_bcs() -> BoundaryConditionSet {
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

    #[test]
    fn decoupled_bar_reaches_linear_profile() {
        let m = build_interval_mesh(20, 1.0).unwrap();
        let mut mat = MaterialProperties::aluminium();
        mat.alpha = 1e-30;
        let grid = TimeGrid::geometric(1.0, 1e6, 60).unwrap();
        let h = solve_coupled(&m, &mat, &bar_bcs(), &grid).unwrap();
        let last = h.theta.last().unwrap();
        for (i, p) in m.nodes().iter().enumerate() {
            assert!((last[i] - (10.0 + 40.0 * p[0])).abs() < 1e-6);
        }
        assert!(h.displacement.last().unwrap().iter().all(|v| v.abs() < 1e-25));
    }

    #[test]
    fn dirichlet_values_are_exact() {
        let m = build_interval_mesh(10, 1.0).unwrap();
        let grid = TimeGrid::geometric(1.0, 100.0, 5).unwrap();
        let h = solve_coupled(&m, &MaterialProperties::aluminium(), &bar_bcs(), &grid).unwrap();
        for s in 0..grid.len() {
            assert_eq!(h.theta[s][0], 10.0);
            assert_eq!(h.theta[s][10], 50.0);
            assert_eq!(h.displacement[s][0], 0.0);
            assert_eq!(h.displacement[s][10], 0.0);
        }
        assert_eq!(h.n_unknowns, 22);
    }

    #[test]
    fn mechanical_reproduces_coupled_displacements() {
        let m = build_interval_mesh(16, 1.0).unwrap();
        let mat = MaterialProperties::aluminium();
        let grid = TimeGrid::geometric(1.0, 1e3, 8).unwrap();
        let c = solve_coupled(&m, &mat, &bar_bcs(), &grid).unwrap();
        let r = solve_mechanical(&m, &mat, &bar_bcs(), &grid, &c.theta).unwrap();
        assert_eq!(r.n_unknowns + m.n_nodes(), c.n_unknowns);
        for s in 0..grid.len() {
            let scale = c.displacement[s].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in r.displacement[s].iter().zip(&c.displacement[s]) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn zero_temperature_gives_zero_displacement() {
        let m = build_rect_mesh(3, 3, 1.0, 1.0).unwrap();
        let bcs = BoundaryConditionSet::new().with(
            "left",
            TagConditions {
                displacement: [Some(0.0), Some(0.0)],
                ..Default::default()
            },
        );
        let s = MechanicalSolver::new(&m, &MaterialProperties::aluminium(), &bcs).unwrap();
        assert!(s.solve(&vec![0.0; m.n_nodes()]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unconstrained_mechanics_is_rejected() {
        let m = build_rect_mesh(2, 2, 1.0, 1.0).unwrap();
        let only_x = BoundaryConditionSet::new().with(
            "left",
            TagConditions {
                displacement: [Some(0.0), None],
                ..Default::default()
            },
        );
        let grid = TimeGrid::geometric(1.0, 1.0, 1).unwrap();
        let err = solve_coupled(&m, &MaterialProperties::aluminium(), &only_x, &grid).unwrap_err();
        assert!(matches!(err, Error::SingularSystem(_)));
        let none = BoundaryConditionSet::new();
        assert!(MechanicalSolver::new(&m, &MaterialProperties::aluminium(), &none).is_err());
    }
}
