use crate::error::Result;
use crate::mesh::{quadrature_points, Mesh, Point, QuadPoint, QuadratureRule};

use super::linalg::{SparseMatrix, Triplet};
use super::{BoundaryConditionSet, MaterialProperties};

/// Time-independent global operators of the linear thermoelastic problem.
///
/// Mechanical dofs are numbered `node * dim + component`, thermal dofs by
/// node. With `G[(a,c), j] = ∫ ∂N_a/∂x_c N_j` the discrete equations read
///
/// ```text
/// K u − β G Θ                 = f_t
/// βT_o Gᵀ u + (M + Δt K_T) Θ  = M Θ_n + βT_o Gᵀ u_n − Δt f_q
/// ```
pub struct Operators {
    pub dim: usize,
    pub n_nodes: usize,
    /// Elastic stiffness `∫ ε(w) : C : ε(u)`.
    pub stiffness: SparseMatrix,
    /// Rectangular coupling `G`, rows mechanical dofs, columns nodes.
    pub coupling: Vec<Triplet>,
    /// `∫ ρC_ε N_i N_j`.
    pub capacity: SparseMatrix,
    /// `∫ k ∇N_i · ∇N_j`.
    pub conductivity: SparseMatrix,
    /// `∫ t̄ · w` over traction tags.
    pub traction_load: Vec<f64>,
    /// `∫ q̄ N_i` over flux tags.
    pub flux_load: Vec<f64>,
    pub quad: Vec<QuadPoint>,
    /// Shape-function gradients per element.
    pub grads: Vec<Vec<Point>>,
}

impl Operators {
    pub fn n_mech(&self) -> usize {
        self.dim * self.n_nodes
    }

    /// `G Θ`, length `n_mech`.
    pub fn coupling_times_theta(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_mech()];
        for t in &self.coupling {
            out[t.row] += t.val * theta[t.col];
        }
        out
    }

    /// `Gᵀ u`, length `n_nodes`.
    pub fn coupling_t_times_u(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for t in &self.coupling {
            out[t.col] += t.val * u[t.row];
        }
        out
    }

    /// Volumetric strain `tr ε` at every quadrature point.
    pub fn tr_strain(&self, mesh: &Mesh, u: &[f64]) -> Vec<f64> {
        self.quad
            .iter()
            .map(|q| {
                let g = &self.grads[q.element];
                mesh.element(q.element)
                    .iter()
                    .enumerate()
                    .map(|(a, &n)| (0..self.dim).map(|c| g[a][c] * u[n * self.dim + c]).sum::<f64>())
                    .sum()
            })
            .collect()
    }

    /// Cauchy stress `[σxx, σyy, σxy]` at every quadrature point.
    pub fn stresses(
        &self,
        mesh: &Mesh,
        material: &MaterialProperties,
        u: &[f64],
        theta: &[f64],
    ) -> Vec<[f64; 3]> {
        let beta = material.thermal_modulus();
        let (lam, mu) = (material.lambda, material.mu);
        self.quad
            .iter()
            .map(|q| {
                let g = &self.grads[q.element];
                let conn = mesh.element(q.element);
                let th: f64 = conn.iter().enumerate().map(|(a, &n)| q.shape[a] * theta[n]).sum();
                let mut du = [[0.0; 2]; 2];
                for (a, &n) in conn.iter().enumerate() {
                    for c in 0..self.dim {
                        for d in 0..self.dim {
                            du[c][d] += u[n * self.dim + c] * g[a][d];
                        }
                    }
                }
                if self.dim == 1 {
                    [(lam + 2.0 * mu) * du[0][0] - beta * th, 0.0, 0.0]
                } else {
                    let tr = du[0][0] + du[1][1];
                    [
                        2.0 * mu * du[0][0] + lam * tr - beta * th,
                        2.0 * mu * du[1][1] + lam * tr - beta * th,
                        mu * (du[0][1] + du[1][0]),
                    ]
                }
            })
            .collect()
    }
}

/// Assembles every operator with the default quadrature rule.
pub fn assemble_operators(
    mesh: &Mesh,
    material: &MaterialProperties,
    bcs: &BoundaryConditionSet,
) -> Result<Operators> {
    let dim = mesh.dim();
    let nn = mesh.n_nodes();
    let nen = mesh.nodes_per_element();
    let rule = QuadratureRule::default_for(dim);
    let quad = quadrature_points(mesh, &rule)?;
    let grads = (0..mesh.n_elements())
        .map(|e| mesh.shape_gradients(e))
        .collect::<Result<Vec<_>>>()?;

    let mut stiffness = SparseMatrix::new(nn * dim);
    let mut capacity = SparseMatrix::new(nn);
    let mut conductivity = SparseMatrix::new(nn);
    let mut coupling = Vec::new();

    let (lam, mu) = (material.lambda, material.mu);
    let rho_c = material.heat_capacity();

    for q in &quad {
        let g = &grads[q.element];
        let conn = mesh.element(q.element);
        let w = q.weight;
        for a in 0..nen {
            for b in 0..nen {
                let (na, nb) = (conn[a], conn[b]);
                capacity.push(na, nb, w * rho_c * q.shape[a] * q.shape[b]);
                let gg: f64 = (0..dim).map(|d| g[a][d] * g[b][d]).sum();
                conductivity.push(na, nb, w * material.k * gg);
                // elastic block for node pair (a, b)
                for c in 0..dim {
                    for d in 0..dim {
                        let kab = if dim == 1 {
                            (lam + 2.0 * mu) * g[a][0] * g[b][0]
                        } else {
                            lam * g[a][c] * g[b][d]
                                + mu * g[a][d] * g[b][c]
                                + if c == d { mu * gg } else { 0.0 }
                        };
                        stiffness.push(na * dim + c, nb * dim + d, w * kab);
                    }
                    coupling.push(Triplet {
                        row: na * dim + c,
                        col: nb,
                        val: w * g[a][c] * q.shape[b],
                    });
                }
            }
        }
    }

    let mut traction_load = vec![0.0; nn * dim];
    let mut flux_load = vec![0.0; nn];
    for f in mesh.facets() {
        let Some(c) = bcs.tags.get(&f.tag) else { continue };
        // facet shape-function integrals: a point in 1D, an edge in 2D
        let share = if dim == 1 {
            1.0
        } else {
            let (p, r) = (mesh.node(f.nodes[0]), mesh.node(f.nodes[1]));
            0.5 * ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2)).sqrt()
        };
        for &n in &f.nodes {
            for comp in 0..dim {
                if let Some(t) = c.traction[comp] {
                    traction_load[n * dim + comp] += t * share;
                }
            }
            if let Some(qn) = c.flux {
                flux_load[n] += qn * share;
            }
        }
    }

    Ok(Operators {
        dim,
        n_nodes: nn,
        stiffness,
        coupling,
        capacity,
        conductivity,
        traction_load,
        flux_load,
        quad,
        grads,
    })
}
