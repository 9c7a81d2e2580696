//! Monolithic thermoelastic reference solver, displacement-only solver and
//! error metrics.
//!
//! Temperatures are stored as the variation `Θ = T − T_o`. Time stepping is
//! implicit Euler; the problem is linear so every increment is one sparse
//! factorization and solve.

mod assembly;
mod collocation;
mod export;
mod linalg;
mod metrics;
mod solve;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryKind, BoundaryTag, Mesh};

pub use assembly::{assemble_operators, Operators};
pub use collocation::{extract_collocation, BoundaryPoint, CollocationPoint, CollocationSet};
pub use export::{read_nodal_csv, write_history_csv, write_timing_csv, NodalTable};
pub use linalg::{SparseMatrix, Triplet};
pub use metrics::{error_metrics, ErrorReport, MaxEntry};
pub use solve::{solve_coupled, solve_mechanical, MechanicalSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialProperties {
    /// Lamé λ (Pa).
    pub lambda: f64,
    /// Lamé μ (Pa).
    pub mu: f64,
    /// Density (kg/m³).
    pub rho: f64,
    /// Thermal expansion (1/°C).
    pub alpha: f64,
    /// Specific heat at constant strain (J/(kg·°C)).
    pub c_eps: f64,
    /// Conductivity (W/(m·°C)).
    pub k: f64,
    /// Reference temperature (K).
    pub t_ref: f64,
}

impl MaterialProperties {
    /// Aluminium-like properties used throughout the examples.
    pub fn aluminium() -> Self {
        MaterialProperties {
            lambda: 40e9,
            mu: 27e9,
            rho: 2700.0,
            alpha: 2.31e-5,
            c_eps: 910.0,
            k: 237.0,
            t_ref: 293.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("c_eps", self.c_eps),
            ("k", self.k),
            ("t_ref", self.t_ref),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "material property `{name}` must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Stress-temperature modulus `α(3λ+2μ)`.
    pub fn thermal_modulus(&self) -> f64 {
        self.alpha * (3.0 * self.lambda + 2.0 * self.mu)
    }

    /// Volumetric heat capacity `ρ C_ε`.
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.c_eps
    }

    /// P-wave modulus `λ + 2μ`.
    pub fn p_modulus(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }
}

/// Geometric sequence of increment end times; the state at `t = 0` is the
/// implicit initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn geometric(t_first: f64, t_final: f64, n_increments: usize) -> Result<Self> {
        if n_increments == 0 {
            return Err(Error::InvalidArgument("n_increments must be positive".into()));
        }
        if !(t_first > 0.0 && t_final >= t_first && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < t_first <= t_final, got {t_first}, {t_final}"
            )));
        }
        if n_increments == 1 {
            if t_first != t_final {
                return Err(Error::InvalidArgument(
                    "a single increment requires t_first == t_final".into(),
                ));
            }
            return Ok(TimeGrid { times: vec![t_first] });
        }
        if t_first == t_final {
            return Err(Error::InvalidArgument(
                "times must be strictly increasing".into(),
            ));
        }
        let n = n_increments - 1;
        let log_ratio = (t_final / t_first).ln() / n as f64;
        let mut times: Vec<f64> = (0..=n)
            .map(|i| t_first * (log_ratio * i as f64).exp())
            .collect();
        times[0] = t_first;
        times[n] = t_final;
        Ok(TimeGrid { times })
    }

    /// Builds a grid from explicit times (must be positive and increasing).
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || !(times[0] > 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "times must be positive and strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    /// Length of increment `i` (the first increment starts at `t = 0`).
    pub fn dt(&self, i: usize) -> f64 {
        if i == 0 {
            self.times[0]
        } else {
            self.times[i] - self.times[i - 1]
        }
    }
}

/// Boundary data attached to one mesh tag. Temperatures are variations Θ̄.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagConditions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Prescribed displacement per component (`[ux, uy]`).
    #[serde(default, skip_serializing_if = "is_none_pair")]
    pub displacement: [Option<f64>; 2],
    /// Outward normal heat flux `q·n` (W/m²).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
    /// Traction per component (Pa).
    #[serde(default, skip_serializing_if = "is_none_pair")]
    pub traction: [Option<f64>; 2],
}

fn is_none_pair(p: &[Option<f64>; 2]) -> bool {
    p[0].is_none() && p[1].is_none()
}

/// Boundary conditions keyed by mesh tag name. Tags absent from the set are
/// traction-free and insulated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryConditionSet {
    pub tags: std::collections::BTreeMap<String, TagConditions>,
}

impl BoundaryConditionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: &str, cond: TagConditions) -> Self {
        self.tags.insert(tag.to_string(), cond);
        self
    }

    /// Declared (tag, kind) pairs.
    pub fn boundary_tags(&self) -> Vec<BoundaryTag> {
        let mut out = Vec::new();
        for (name, c) in &self.tags {
            let mut push = |kind| {
                out.push(BoundaryTag {
                    name: name.clone(),
                    kind,
                })
            };
            if c.theta.is_some() {
                push(BoundaryKind::DirichletT);
            }
            if c.displacement.iter().any(Option::is_some) {
                push(BoundaryKind::DirichletU);
            }
            if c.flux.is_some() {
                push(BoundaryKind::NeumannQ);
            }
            if c.traction.iter().any(Option::is_some) {
                push(BoundaryKind::Traction);
            }
        }
        out
    }

    pub fn tags_of_kind(&self, kind: BoundaryKind) -> Vec<&str> {
        self.tags
            .iter()
            .filter(|(_, c)| match kind {
                BoundaryKind::DirichletT => c.theta.is_some(),
                BoundaryKind::DirichletU => c.displacement.iter().any(Option::is_some),
                BoundaryKind::NeumannQ => c.flux.is_some(),
                BoundaryKind::Traction => c.traction.iter().any(Option::is_some),
            })
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for (name, c) in &self.tags {
            if !mesh.has_tag(name) {
                return Err(Error::Config(format!(
                    "boundary condition on tag `{name}` which the mesh does not define"
                )));
            }
            if c.theta.is_some() && c.flux.is_some() {
                return Err(Error::Config(format!(
                    "tag `{name}` carries both a prescribed temperature and a heat flux"
                )));
            }
            for comp in 0..2 {
                if c.displacement[comp].is_some() && c.traction[comp].is_some() {
                    return Err(Error::Config(format!(
                        "tag `{name}` prescribes displacement and traction on component {comp}"
                    )));
                }
                if comp >= mesh.dim()
                    && (c.displacement[comp].is_some() || c.traction[comp].is_some())
                {
                    return Err(Error::Config(format!(
                        "tag `{name}` sets component {comp} on a {}D mesh",
                        mesh.dim()
                    )));
                }
            }
            let finite = [c.theta, c.flux, c.displacement[0], c.displacement[1], c.traction[0], c.traction[1]]
                .iter()
                .flatten()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config(format!("tag `{name}` has a non-finite value")));
            }
        }
        Ok(())
    }

    /// Prescribed nodal Θ as `(node, value)`, first tag (alphabetical) wins
    /// on shared corner nodes.
    pub fn theta_constraints(&self, mesh: &Mesh) -> Vec<(usize, f64)> {
        let mut seen = std::collections::BTreeMap::new();
        for (name, c) in &self.tags {
            if let Some(v) = c.theta {
                for n in mesh.tag_nodes(name) {
                    seen.entry(n).or_insert(v);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Prescribed displacement components as `(node, component, value)`.
    pub fn displacement_constraints(&self, mesh: &Mesh) -> Vec<(usize, usize, f64)> {
        let mut seen = std::collections::BTreeMap::new();
        for (name, c) in &self.tags {
            for comp in 0..mesh.dim() {
                if let Some(v) = c.displacement[comp] {
                    for n in mesh.tag_nodes(name) {
                        seen.entry((n, comp)).or_insert(v);
                    }
                }
            }
        }
        seen.into_iter().map(|((n, c), v)| (n, c, v)).collect()
    }
}

/// Fields at every increment of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionHistory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// `theta[step][node]` (°C variation).
    pub theta: Vec<Vec<f64>>,
    /// `displacement[step][node * dim + component]` (m).
    pub displacement: Vec<Vec<f64>>,
    /// `tr_strain_rate[step][quadrature point]` (1/s), backward difference.
    pub tr_strain_rate: Vec<Vec<f64>>,
    /// Wall-clock assembly + solve time per increment (s).
    pub step_seconds: Vec<f64>,
    /// Unknowns in the per-increment linear system.
    pub n_unknowns: usize,
}

impl SolutionHistory {
    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    /// Displacement component `comp` of every node at `step`.
    pub fn displacement_component(&self, step: usize, comp: usize) -> Vec<f64> {
        self.displacement[step]
            .iter()
            .skip(comp)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// All steps of one displacement component, `[step][node]`.
    pub fn displacement_field(&self, comp: usize) -> Vec<Vec<f64>> {
        (0..self.n_steps())
            .map(|s| self.displacement_component(s, comp))
            .collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.step_seconds.iter().sum()
    }
}
