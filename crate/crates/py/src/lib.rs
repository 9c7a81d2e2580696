//! Python bindings: meshes, the coupled solver, surrogate training and the
//! network-driven displacement solve.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ifenn::fem::{
    error_metrics as metrics, extract_collocation, solve_coupled, write_history_csv, BoundaryConditionSet,
    MaterialProperties, SolutionHistory, TimeGrid,
};
use ifenn::ifenn::{
    model_landscape, run_ifenn, train_data_driven, train_pinn_sequence, train_pitcn, ModelKind, RateReplay,
    StrainRateSource, ThetaProvider, TrainedModel, TrainingConfig,
};
use ifenn::mesh::{build_interval_mesh, build_quarter_hole_mesh, build_rect_mesh, load_mesh};
use ifenn::network::TcnConfig;
use ifenn::optim::{minimize as lbfgs, LbfgsConfig};
use ifenn::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen)]
#[derive(Clone)]
struct Mesh {
    inner: ifenn::mesh::Mesh,
}

#[pymethods]
impl Mesh {
    #[staticmethod]
    #[pyo3(signature = (n_elements, length = 1.0))]
    fn bar(n_elements: usize, length: f64) -> PyResult<Self> {
        Ok(Mesh {
            inner: build_interval_mesh(n_elements, length).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (nx, ny, width = 1.0, height = 1.0))]
    fn plate(nx: usize, ny: usize, width: f64, height: f64) -> PyResult<Self> {
        Ok(Mesh {
            inner: build_rect_mesh(nx, ny, width, height).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n_radial, n_arc, side = 1.0, radius = 0.1))]
    fn plate_hole(n_radial: usize, n_arc: usize, side: f64, radius: f64) -> PyResult<Self> {
        Ok(Mesh {
            inner: build_quarter_hole_mesh(n_radial, n_arc, side, radius).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Mesh {
            inner: load_mesh(path).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    fn nodes(&self) -> Vec<[f64; 2]> {
        self.inner.nodes().to_vec()
    }

    fn tags(&self) -> Vec<String> {
        self.inner.tag_names().into_iter().map(String::from).collect()
    }
}

/// Field history of a coupled or displacement-only run.
#[pyclass(frozen)]
#[derive(Clone)]
struct Solution {
    inner: SolutionHistory,
}

#[pymethods]
impl Solution {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// `theta[step][node]`.
    #[getter]
    fn theta(&self) -> Vec<Vec<f64>> {
        self.inner.theta.clone()
    }

    /// `u[step][node]` for one component.
    fn displacement(&self, component: usize) -> PyResult<Vec<Vec<f64>>> {
        if component >= self.inner.dim {
            return Err(PyValueError::new_err(format!("component {component} out of range")));
        }
        Ok(self.inner.displacement_field(component))
    }

    #[getter]
    fn tr_strain_rate(&self) -> Vec<Vec<f64>> {
        self.inner.tr_strain_rate.clone()
    }

    #[getter]
    fn n_unknowns(&self) -> usize {
        self.inner.n_unknowns
    }

    #[getter]
    fn step_seconds(&self) -> Vec<f64> {
        self.inner.step_seconds.clone()
    }

    fn write_csv(&self, mesh: &Mesh, dir: PathBuf) -> PyResult<()> {
        write_history_csv(&self.inner, &mesh.inner, &dir).map_err(err)
    }
}

#[pyclass(frozen)]
struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: TrainedModel::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> String {
        serde_json::to_value(self.inner.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.network.n_params()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    fn final_loss<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let l = self.inner.final_loss;
        let d = PyDict::new(py);
        d.set_item("L2_E", l.l2_e)?;
        d.set_item("L2_T", l.l2_t)?;
        d.set_item("L2_q", l.l2_q)?;
        d.set_item("total", l.total)?;
        Ok(d)
    }

    /// `Θ[step][point]` from coordinates and per-point `tr ε̇` sequences.
    fn predict(&self, points: Vec<[f64; 2]>, rates: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.predict(&points, &rates).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

/// Mesh, material, boundary conditions and time grid of one experiment.
#[pyclass(frozen)]
struct Problem {
    mesh: ifenn::mesh::Mesh,
    material: MaterialProperties,
    bcs: BoundaryConditionSet,
    grid: TimeGrid,
}

impl Problem {
    fn reference<'a>(&self, solution: &'a Solution) -> PyResult<&'a SolutionHistory> {
        if solution.inner.times != self.grid.times() || solution.inner.theta[0].len() != self.mesh.n_nodes() {
            return Err(PyValueError::new_err("solution does not belong to this problem"));
        }
        Ok(&solution.inner)
    }
}

#[pymethods]
impl Problem {
    /// `bcs` and `material` are JSON objects in the config-file format;
    /// the material defaults to aluminium.
    #[new]
    #[pyo3(signature = (mesh, bcs, t_first, t_final, n_increments, material = None))]
    fn new(
        mesh: &Mesh,
        bcs: &str,
        t_first: f64,
        t_final: f64,
        n_increments: usize,
        material: Option<&str>,
    ) -> PyResult<Self> {
        let bcs: BoundaryConditionSet = serde_json::from_str(bcs).map_err(json_err)?;
        bcs.validate(&mesh.inner).map_err(err)?;
        let material = match material {
            Some(m) => serde_json::from_str(m).map_err(json_err)?,
            None => MaterialProperties::aluminium(),
        };
        material.validate().map_err(err)?;
        Ok(Problem {
            mesh: mesh.inner.clone(),
            material,
            bcs,
            grid: TimeGrid::geometric(t_first, t_final, n_increments).map_err(err)?,
        })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.grid.times().to_vec()
    }

    fn solve_coupled(&self, py: Python<'_>) -> PyResult<Solution> {
        let h = py
            .allow_threads(|| solve_coupled(&self.mesh, &self.material, &self.bcs, &self.grid))
            .map_err(err)?;
        Ok(Solution { inner: h })
    }

    /// Trains a surrogate on `solution`; `training` is the JSON training block.
    #[pyo3(signature = (solution, training, kind = "pi_tcn"))]
    fn train(&self, py: Python<'_>, solution: &Solution, training: &str, kind: &str) -> PyResult<Model> {
        let config: TrainingConfig = serde_json::from_str(training).map_err(json_err)?;
        let kind: ModelKind = serde_json::from_value(serde_json::Value::String(kind.into())).map_err(json_err)?;
        let history = self.reference(solution)?;
        let (model, _) = py
            .allow_threads(|| {
                let set = extract_collocation(history, &self.mesh, &self.grid, &self.bcs, None)?;
                match kind {
                    ModelKind::PiTcn => train_pitcn(&set, &self.material, &config, &self.mesh, None),
                    ModelKind::DataDrivenTcn => train_data_driven(&set, &self.material, &config, &self.mesh, None),
                    ModelKind::MlpPinnSequence => train_pinn_sequence(&set, &self.material, &config, &self.mesh),
                }
            })
            .map_err(err)?;
        Ok(Model { inner: model })
    }

    /// Displacement-only solve on `mesh` (default: the problem mesh) with
    /// temperatures from `model`, or from `oracle_theta` when given.
    /// `training` is the coupled solution the model was trained on, used to
    /// replay strain rates.
    #[pyo3(signature = (model = None, training = None, mesh = None, source = "replay", oracle_theta = None))]
    fn run_ifenn(
        &self,
        py: Python<'_>,
        model: Option<&Model>,
        training: Option<&Solution>,
        mesh: Option<&Mesh>,
        source: &str,
        oracle_theta: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Solution> {
        let target = mesh.map_or(&self.mesh, |m| &m.inner);
        let provider = match (model, &oracle_theta) {
            (_, Some(t)) => ThetaProvider::Oracle(t),
            (Some(m), None) => {
                let s = match source {
                    "replay" => {
                        let t = training
                            .ok_or_else(|| PyValueError::new_err("replay needs the training solution"))?;
                        StrainRateSource::Replay(RateReplay::new(&self.mesh, self.reference(t)?).map_err(err)?)
                    }
                    "lagged" => StrainRateSource::Lagged,
                    other => return Err(PyValueError::new_err(format!("unknown strain-rate source `{other}`"))),
                };
                ThetaProvider::Network(&m.inner, s)
            }
            (None, None) => return Err(PyValueError::new_err("give a model or oracle temperatures")),
        };
        let run = py
            .allow_threads(|| run_ifenn(target, &self.material, &self.bcs, &self.grid, &provider))
            .map_err(err)?;
        Ok(Solution { inner: run.history })
    }

    /// Loss surface around a TCN model: `(eps, loss[i][j])`, with `None`
    /// for non-finite samples.
    #[pyo3(signature = (model, solution, n_per_axis = 51, seed = 0))]
    fn landscape(
        &self,
        py: Python<'_>,
        model: &Model,
        solution: &Solution,
        n_per_axis: usize,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<Option<f64>>>)> {
        let history = self.reference(solution)?;
        let grid = py
            .allow_threads(|| {
                let set = extract_collocation(history, &self.mesh, &self.grid, &self.bcs, None)?;
                model_landscape(&model.inner, &set, n_per_axis, seed)
            })
            .map_err(err)?;
        Ok((grid.0.eps, grid.0.loss))
    }
}

/// Pointwise and aggregated errors of `a` against the reference `b`.
#[pyfunction]
fn error_metrics<'py>(py: Python<'py>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics(&a, &b).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("max_abs", r.max_abs().map(|m| (m.value, m.step, m.node)))?;
    d.set_item("max_rel_percent", r.max_rel().map(|m| (m.value, m.step, m.node)))?;
    d.set_item("per_step", r.per_step.clone())?;
    d.set_item("aggregate", r.aggregate)?;
    d.set_item("abs", r.abs)?;
    d.set_item("rel_percent", r.rel)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (kernel_size, dilations, n_stacks = 1))]
fn receptive_field(kernel_size: usize, dilations: Vec<usize>, n_stacks: usize) -> usize {
    ifenn::network::receptive_field(&TcnConfig {
        n_filters: 1,
        kernel_size,
        dilations,
        n_stacks,
        dropout: 0.0,
        weight_norm: true,
    })
}

/// L-BFGS with a strong-Wolfe line search on a Python objective returning
/// `(f, grad)`. Returns `(x, f, iterations)`.
#[pyfunction]
#[pyo3(signature = (fun, x0, max_iterations = 1000, tolerance = 1e-8))]
fn minimize(fun: PyObject, x0: Vec<f64>, max_iterations: usize, tolerance: f64) -> PyResult<(Vec<f64>, f64, usize)> {
    let config = LbfgsConfig {
        max_iterations,
        tolerance,
        ..Default::default()
    };
    let mut py_error = None;
    let result = Python::with_gil(|py| {
        let fg = |x: &[f64]| -> ifenn::Result<(f64, Vec<f64>)> {
            let out = fun
                .call1(py, (x.to_vec(),))
                .and_then(|v| v.extract::<(f64, Vec<f64>)>(py));
            out.map_err(|e| {
                let msg = e.to_string();
                py_error = Some(e);
                Error::InvalidArgument(msg)
            })
        };
        lbfgs(fg, x0, &config, |_, _| Ok(()))
    });
    match (result, py_error) {
        (Ok(m), _) => Ok((m.x, m.f, m.trace.len().saturating_sub(1))),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(err(e)),
    }
}

#[pymodule]
fn ifenn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mesh>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Model>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(error_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(receptive_field, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    Ok(())
}
