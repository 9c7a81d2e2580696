//! Training the temperature surrogates and running the displacement-only
//! solve with the network supplying temperatures.

use std::cell::Cell;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{JetLayout, Tape};
use crate::error::{Error, Result};
use crate::fem::{
    BoundaryConditionSet, CollocationSet, MaterialProperties, MechanicalSolver, SolutionHistory, TimeGrid,
};
use crate::landscape::{filter_normalized_directions, sample_landscape, Directions, LandscapeGrid};
use crate::loss::{Ansatz, LossBreakdown, LossConfig, LossProblem, LossRecord, TimeDerivative, TrainingData};
use crate::mesh::{quadrature_points, write_mesh_string, Mesh, QuadratureRule};
use crate::network::{init_params, InputSpec, Network, NetworkConfig, Normalization, ParamVector, SequenceBatch};
use crate::optim::{minimize, write_atomic, LbfgsConfig, Termination, TraceEntry};

pub const MODEL_VERSION: u32 = 1;

/// Dropout masks are drawn from `seed + DROPOUT_SEED_OFFSET`.
pub const DROPOUT_SEED_OFFSET: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PiTcn,
    MlpPinnSequence,
    DataDrivenTcn,
}

/// Hash and size of the mesh a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshId {
    pub n_nodes: usize,
    pub n_elements: usize,
    pub sha256: String,
}

impl MeshId {
    pub fn of(mesh: &Mesh) -> Self {
        MeshId {
            n_nodes: mesh.n_nodes(),
            n_elements: mesh.n_elements(),
            sha256: sha256_hex(write_mesh_string(mesh).as_bytes()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: LbfgsConfig,
    pub ansatz: Ansatz,
    #[serde(default)]
    pub seed: u64,
    /// Keep every n-th interior collocation point.
    #[serde(default = "one")]
    pub collocation_stride: usize,
    /// Iteration cap for every increment after the first in the per-step
    /// PINN sequence; defaults to the optimizer's cap.
    #[serde(default)]
    pub warm_start_iterations: Option<usize>,
}

fn one() -> usize {
    1
}

/// A trained temperature surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: ModelKind,
    pub network: Network,
    /// One vector for the TCN models, one per increment for the PINN sequence.
    pub params: Vec<Vec<f64>>,
    pub ansatz: Ansatz,
    pub normalization: Normalization,
    pub times: Vec<f64>,
    pub material: MaterialProperties,
    pub training: TrainingConfig,
    pub training_mesh: MeshId,
    pub final_loss: LossBreakdown,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "model file version {} is not supported (expected {MODEL_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Raw network outputs `T̃[step][point]`.
    pub fn raw_outputs(&self, points: &[[f64; 2]], rates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n_steps = self.times.len();
        let mut out = vec![vec![0.0; points.len()]; n_steps];
        match self.kind {
            ModelKind::PiTcn | ModelKind::DataDrivenTcn => {
                let batch = SequenceBatch::new(self.network.inputs, self.normalization, &self.times, points, rates)?;
                forward_values(&self.network, &self.params[0], &batch, |s, p, v| out[s][p] = v)?;
            }
            ModelKind::MlpPinnSequence => {
                if self.params.len() != n_steps {
                    return Err(Error::ShapeMismatch(format!(
                        "{} parameter vectors for {n_steps} increments",
                        self.params.len()
                    )));
                }
                for (s, params) in self.params.iter().enumerate() {
                    let r: Vec<Vec<f64>> = rates.iter().map(|r| vec![r[s]]).collect();
                    let batch =
                        SequenceBatch::new(self.network.inputs, self.normalization, &self.times[s..=s], points, &r)?;
                    forward_values(&self.network, params, &batch, |_, p, v| out[s][p] = v)?;
                }
            }
        }
        Ok(out)
    }

    /// Temperatures `Θ[step][point]` for raw `tr ε̇` sequences `rates[point][step]`.
    pub fn predict(&self, points: &[[f64; 2]], rates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut out = self.raw_outputs(points, rates)?;
        for row in &mut out {
            for (v, x) in row.iter_mut().zip(points) {
                *v = self.ansatz.theta(*v, *x);
            }
        }
        Ok(out)
    }
}

const PREDICT_CHUNK: usize = 256;

fn forward_values(
    network: &Network,
    params: &[f64],
    batch: &SequenceBatch,
    mut put: impl FnMut(usize, usize, f64),
) -> Result<()> {
    for lo in (0..batch.n_points).step_by(PREDICT_CHUNK) {
        let hi = (lo + PREDICT_CHUNK).min(batch.n_points);
        let mut tape = Tape::new(params);
        let (shape, data) = batch.jet(JetLayout::VALUE, lo, hi);
        let x = tape.constant(shape, data)?;
        let y = network.forward(&mut tape, x, None)?;
        let v = tape.value(y);
        let n = hi - lo;
        for s in 0..batch.n_steps {
            for p in 0..n {
                put(s, lo + p, v[s * n + p]);
            }
        }
    }
    Ok(())
}

/// Outcome of a training run besides the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub initial_loss: LossBreakdown,
    pub history: Vec<LossRecord>,
    pub termination: Vec<Termination>,
    pub evaluations: usize,
    pub seconds: f64,
    /// Increments whose optimization failed in the PINN sequence.
    pub failed_steps: Vec<usize>,
}

fn training_inputs(set: &CollocationSet, time: bool) -> (InputSpec, Normalization) {
    let spec = InputSpec { time, dim: set.dim };
    let norm = Normalization::fit(&set.times, set.tr_strain_rate.iter().flatten());
    (spec, norm)
}

struct Fit {
    params: Vec<f64>,
    initial: LossBreakdown,
    last: LossBreakdown,
    history: Vec<LossRecord>,
    termination: Termination,
    evaluations: usize,
}

fn fit(problem: &LossProblem, x0: Vec<f64>, optimizer: &LbfgsConfig, checkpoint: Option<&Path>) -> Result<Fit> {
    let last = Cell::new(LossBreakdown::default());
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let fg = |x: &[f64]| {
        let (b, g) = problem.evaluate(x, true)?;
        last.set(b);
        Ok((b.total, g.unwrap_or_default()))
    };
    let on_iter = |t: &TraceEntry, x: &[f64]| {
        history.push(LossRecord {
            iter: t.iter,
            breakdown: last.get(),
            grad_norm: t.grad_norm,
        });
        if best.as_ref().is_none_or(|(f, _)| t.f < *f) {
            best = Some((t.f, x.to_vec()));
            if let Some(path) = checkpoint {
                write_atomic(path, serde_json::to_string(x)?.as_bytes())?;
            }
        }
        Ok(())
    };
    let result = minimize(fg, x0, optimizer, on_iter);
    let m = match result {
        Ok(m) => m,
        Err(e) => {
            if let Some((f, _)) = &best {
                log::error!("optimization aborted, best objective so far {f:e}");
            }
            return Err(e);
        }
    };
    let initial = history.first().map(|r| r.breakdown).unwrap_or_default();
    let last_b = history.last().map(|r| r.breakdown).unwrap_or_default();
    Ok(Fit {
        params: m.x,
        initial,
        last: last_b,
        history,
        termination: m.termination,
        evaluations: m.evaluations,
    })
}

/// The objective a sequence model is trained on, owning its data.
pub struct TrainingObjective {
    pub network: Network,
    pub data: TrainingData,
    pub normalization: Normalization,
    pub times: Vec<f64>,
    pub loss: LossConfig,
    pub material: MaterialProperties,
    pub ansatz: Ansatz,
    pub dropout_seed: u64,
}

impl TrainingObjective {
    pub fn new(
        set: &CollocationSet,
        material: &MaterialProperties,
        config: &TrainingConfig,
        kind: ModelKind,
    ) -> Result<Self> {
        let set = set.subsample(config.collocation_stride);
        let (spec, norm) = training_inputs(&set, true);
        Self::build(&set, spec, norm, material, config, kind)
    }

    /// Rebuilds the objective a TCN model was trained on from the same
    /// collocation data.
    pub fn for_model(model: &TrainedModel, set: &CollocationSet) -> Result<Self> {
        let sub = set.subsample(model.training.collocation_stride);
        if sub.times != model.times {
            return Err(Error::ShapeMismatch("collocation times differ from the model's".into()));
        }
        Self::build(
            &sub,
            model.network.inputs,
            model.normalization,
            &model.material,
            &model.training,
            model.kind,
        )
    }

    fn build(
        set: &CollocationSet,
        spec: InputSpec,
        norm: Normalization,
        material: &MaterialProperties,
        config: &TrainingConfig,
        kind: ModelKind,
    ) -> Result<Self> {
        let network = Network::new(config.network.clone(), spec)?;
        if !network.is_tcn() {
            return Err(Error::Config("sequence training needs a TCN architecture".into()));
        }
        let data = TrainingData::from_collocation(set, spec, norm, 0..set.n_steps())?;
        let loss = match kind {
            ModelKind::DataDrivenTcn => config.loss.data_driven(),
            _ => config.loss.clone(),
        };
        Ok(TrainingObjective {
            network,
            data,
            normalization: norm,
            times: set.times.clone(),
            loss,
            material: *material,
            ansatz: config.ansatz.clone(),
            dropout_seed: config.seed.wrapping_add(DROPOUT_SEED_OFFSET),
        })
    }

    pub fn problem(&self) -> Result<LossProblem<'_>> {
        let mut p = LossProblem::new(
            &self.network,
            &self.data,
            &self.loss,
            self.material,
            &self.ansatz,
            TimeDerivative::Autodiff,
        )?;
        p.dropout_seed = Some(self.dropout_seed);
        Ok(p)
    }

    pub fn loss(&self, params: &[f64]) -> Result<LossBreakdown> {
        Ok(self.problem()?.evaluate(params, false)?.0)
    }
}

fn train_tcn(
    set: &CollocationSet,
    material: &MaterialProperties,
    config: &TrainingConfig,
    mesh: &Mesh,
    kind: ModelKind,
    checkpoint: Option<&Path>,
) -> Result<(TrainedModel, TrainingReport)> {
    let clock = Instant::now();
    let objective = TrainingObjective::new(set, material, config, kind)?;
    let problem = objective.problem()?;
    let x0 = init_params(&objective.network, config.seed).values;
    let f = fit(&problem, x0, &config.optimizer, checkpoint)?;
    let mut training = config.clone();
    training.loss = objective.loss.clone();
    let model = TrainedModel {
        version: MODEL_VERSION,
        kind,
        network: objective.network.clone(),
        params: vec![f.params],
        ansatz: config.ansatz.clone(),
        normalization: objective.normalization,
        times: objective.times.clone(),
        material: *material,
        training,
        training_mesh: MeshId::of(mesh),
        final_loss: f.last,
    };
    Ok((
        model,
        TrainingReport {
            initial_loss: f.initial,
            history: f.history,
            termination: vec![f.termination],
            evaluations: f.evaluations,
            seconds: clock.elapsed().as_secs_f64(),
            failed_steps: Vec::new(),
        },
    ))
}

/// Loss surface of a TCN model around its trained parameters.
pub fn model_landscape(
    model: &TrainedModel,
    set: &CollocationSet,
    n_per_axis: usize,
    seed: u64,
) -> Result<(LandscapeGrid, Directions)> {
    if model.kind == ModelKind::MlpPinnSequence {
        return Err(Error::Config("landscapes are defined for single-network models".into()));
    }
    let objective = TrainingObjective::for_model(model, set)?;
    let phi = ParamVector::unflatten(&model.network.layout, model.params[0].clone())?;
    let dirs = filter_normalized_directions(&phi, seed);
    let problem = objective.problem()?;
    let grid = sample_landscape(
        |p| Ok(problem.evaluate(p, false)?.0.total),
        &phi.values,
        &dirs,
        n_per_axis,
    )?;
    Ok((grid, dirs))
}

/// Trains one physics-informed TCN over all increments.
pub fn train_pitcn(
    set: &CollocationSet,
    material: &MaterialProperties,
    config: &TrainingConfig,
    mesh: &Mesh,
    checkpoint: Option<&Path>,
) -> Result<(TrainedModel, TrainingReport)> {
    train_tcn(set, material, config, mesh, ModelKind::PiTcn, checkpoint)
}

/// Trains a TCN on the temperature mismatch only.
pub fn train_data_driven(
    set: &CollocationSet,
    material: &MaterialProperties,
    config: &TrainingConfig,
    mesh: &Mesh,
    checkpoint: Option<&Path>,
) -> Result<(TrainedModel, TrainingReport)> {
    train_tcn(set, material, config, mesh, ModelKind::DataDrivenTcn, checkpoint)
}

/// Trains one MLP per increment, each started from the previous optimum.
pub fn train_pinn_sequence(
    set: &CollocationSet,
    material: &MaterialProperties,
    config: &TrainingConfig,
    mesh: &Mesh,
) -> Result<(TrainedModel, TrainingReport)> {
    let clock = Instant::now();
    let set = set.subsample(config.collocation_stride);
    let (spec, norm) = training_inputs(&set, false);
    let network = Network::new(config.network.clone(), spec)?;
    if network.is_tcn() {
        return Err(Error::Config("the per-increment PINN needs an MLP architecture".into()));
    }
    let mut params = init_params(&network, config.seed).values;
    let mut previous = vec![0.0; set.n_points()];
    let coords: Vec<[f64; 2]> = set.points.iter().map(|p| p.x).collect();
    let mut all = Vec::with_capacity(set.n_steps());
    let mut history = Vec::new();
    let mut termination = Vec::new();
    let mut failed = Vec::new();
    let mut evaluations = 0;
    let mut initial = None;
    let mut last = LossBreakdown::default();
    let mut optimizer = config.optimizer;
    for s in 0..set.n_steps() {
        let dt = if s == 0 { set.times[0] } else { set.times[s] - set.times[s - 1] };
        let data = TrainingData::from_collocation(&set, spec, norm, s..s + 1)?;
        let problem = LossProblem::new(
            &network,
            &data,
            &config.loss,
            *material,
            &config.ansatz,
            TimeDerivative::Backward {
                dt,
                previous: previous.clone(),
            },
        )?;
        match fit(&problem, params.clone(), &optimizer, None) {
            Ok(f) => {
                initial.get_or_insert(f.initial);
                last = f.last;
                evaluations += f.evaluations;
                history.extend(f.history.into_iter().map(|mut r| {
                    r.iter += s * (config.optimizer.max_iterations + 1);
                    r
                }));
                termination.push(f.termination);
                params = f.params;
            }
            Err(e) => {
                log::warn!("increment {s}: {e}; continuing from the last successful parameters");
                failed.push(s);
                termination.push(Termination::LineSearchFailed);
            }
        }
        let single = TrainedModel {
            version: MODEL_VERSION,
            kind: ModelKind::MlpPinnSequence,
            network: network.clone(),
            params: vec![params.clone()],
            ansatz: config.ansatz.clone(),
            normalization: norm,
            times: vec![set.times[s]],
            material: *material,
            training: config.clone(),
            training_mesh: MeshId::of(mesh),
            final_loss: last,
        };
        let rates: Vec<Vec<f64>> = set.tr_strain_rate.iter().map(|r| vec![r[s]]).collect();
        previous = single.predict(&coords, &rates)?.swap_remove(0);
        all.push(params.clone());
        if let Some(n) = config.warm_start_iterations {
            optimizer.max_iterations = n;
        }
    }
    let model = TrainedModel {
        version: MODEL_VERSION,
        kind: ModelKind::MlpPinnSequence,
        network,
        params: all,
        ansatz: config.ansatz.clone(),
        normalization: norm,
        times: set.times.clone(),
        material: *material,
        training: config.clone(),
        training_mesh: MeshId::of(mesh),
        final_loss: last,
    };
    Ok((
        model,
        TrainingReport {
            initial_loss: initial.unwrap_or_default(),
            history,
            termination,
            evaluations,
            seconds: clock.elapsed().as_secs_f64(),
            failed_steps: failed,
        },
    ))
}

/// Element-wise `tr ε̇` of a stored run, looked up at arbitrary points.
#[derive(Debug, Clone)]
pub struct RateReplay {
    mesh: Mesh,
    /// `rates[step][element]`.
    rates: Vec<Vec<f64>>,
}

impl RateReplay {
    /// Strains of linear elements are constant, so the first quadrature
    /// point of each element carries the element value.
    pub fn new(mesh: &Mesh, history: &SolutionHistory) -> Result<Self> {
        let quad = quadrature_points(mesh, &QuadratureRule::default_for(mesh.dim()))?;
        let mut first = vec![usize::MAX; mesh.n_elements()];
        for (i, q) in quad.iter().enumerate().rev() {
            first[q.element] = i;
        }
        let rates = history
            .tr_strain_rate
            .iter()
            .map(|r| {
                if r.len() != quad.len() {
                    return Err(Error::ShapeMismatch("strain-rate history does not match the mesh".into()));
                }
                Ok(first.iter().map(|&i| r[i]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(RateReplay {
            mesh: mesh.clone(),
            rates,
        })
    }

    /// `rates[point][step]` and the number of points outside the stored mesh.
    pub fn sample(&self, points: &[[f64; 2]]) -> (Vec<Vec<f64>>, usize) {
        let mut outside = 0;
        let rows = points
            .iter()
            .map(|&x| {
                let (e, inside) = self.mesh.locate(x);
                outside += !inside as usize;
                self.rates.iter().map(|r| r[e]).collect()
            })
            .collect();
        (rows, outside)
    }
}

/// Where the network's `tr ε̇` inputs come from at deployment.
#[derive(Debug, Clone)]
pub enum StrainRateSource {
    /// Interpolated from the training history.
    Replay(RateReplay),
    /// From the displacement solve itself, one increment behind.
    Lagged,
}

impl StrainRateSource {
    pub fn name(&self) -> &'static str {
        match self {
            StrainRateSource::Replay(_) => "replay",
            StrainRateSource::Lagged => "lagged",
        }
    }
}

/// Supplies nodal temperatures to the displacement solve.
#[derive(Debug, Clone)]
pub enum ThetaProvider<'a> {
    Network(&'a TrainedModel, StrainRateSource),
    /// Fixed nodal fields, e.g. from a coupled solve.
    Oracle(&'a [Vec<f64>]),
}

/// Result of a displacement-only run.
#[derive(Debug, Clone)]
pub struct IfennRun {
    pub history: SolutionHistory,
    /// Time spent evaluating the network.
    pub predict_seconds: f64,
    /// Nodes outside the training mesh.
    pub extrapolated_nodes: usize,
    pub strain_rate_source: &'static str,
}

fn check_grid(model: &TrainedModel, grid: &TimeGrid) -> Result<()> {
    if model.times.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "model covers {} increments, time grid has {}",
            model.times.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Nodal Θ of `mesh` for every increment with replayed strain rates.
pub fn predict_nodal_theta(
    model: &TrainedModel,
    mesh: &Mesh,
    grid: &TimeGrid,
    replay: &RateReplay,
) -> Result<(Vec<Vec<f64>>, usize)> {
    check_grid(model, grid)?;
    let nodes = mesh.nodes().to_vec();
    let (rates, outside) = replay.sample(&nodes);
    if outside > 0 {
        log::warn!("{outside} query nodes lie outside the training mesh; their inputs are extrapolated");
    }
    Ok((model.predict(&nodes, &rates)?, outside))
}

/// Displacement-only time stepping with temperatures from `provider`.
pub fn run_ifenn(
    mesh: &Mesh,
    material: &MaterialProperties,
    bcs: &BoundaryConditionSet,
    grid: &TimeGrid,
    provider: &ThetaProvider,
) -> Result<IfennRun> {
    let solver = MechanicalSolver::new(mesh, material, bcs)?;
    match provider {
        ThetaProvider::Oracle(thetas) => Ok(IfennRun {
            history: solver.run(mesh, grid, thetas)?,
            predict_seconds: 0.0,
            extrapolated_nodes: 0,
            strain_rate_source: "oracle",
        }),
        ThetaProvider::Network(model, StrainRateSource::Replay(replay)) => {
            let clock = Instant::now();
            let (thetas, outside) = predict_nodal_theta(model, mesh, grid, replay)?;
            let predict_seconds = clock.elapsed().as_secs_f64();
            Ok(IfennRun {
                history: solver.run(mesh, grid, &thetas)?,
                predict_seconds,
                extrapolated_nodes: outside,
                strain_rate_source: "replay",
            })
        }
        ThetaProvider::Network(model, StrainRateSource::Lagged) => run_lagged(mesh, grid, model, &solver),
    }
}

/// At increment `n` the network sees the strain rates of increments
/// `0..n` and the rate of `n − 1` repeated for `n` (zero at the start).
/// The network is causal, so later entries of the sequence do not matter.
fn run_lagged(mesh: &Mesh, grid: &TimeGrid, model: &TrainedModel, solver: &MechanicalSolver) -> Result<IfennRun> {
    check_grid(model, grid)?;
    let ops = solver.operators();
    let mut first = vec![usize::MAX; mesh.n_elements()];
    for (i, q) in ops.quad.iter().enumerate().rev() {
        first[q.element] = i;
    }
    let nodes = mesh.nodes().to_vec();
    let node_elem: Vec<usize> = nodes.iter().map(|&x| mesh.locate(x).0).collect();
    let n = grid.len();
    let mut node_rates = vec![vec![0.0; n]; nodes.len()];
    let mut hist = SolutionHistory {
        dim: mesh.dim(),
        times: grid.times().to_vec(),
        theta: Vec::with_capacity(n),
        displacement: Vec::with_capacity(n),
        tr_strain_rate: Vec::with_capacity(n),
        step_seconds: Vec::with_capacity(n),
        n_unknowns: solver.n_unknowns(),
    };
    let mut predict_seconds = 0.0;
    let mut tr_prev = vec![0.0; ops.quad.len()];
    for step in 0..n {
        let clock = Instant::now();
        let theta: Vec<f64> = match model.kind {
            ModelKind::MlpPinnSequence => {
                let mut single = model.clone();
                single.params = vec![model.params[step].clone()];
                single.times = vec![model.times[step]];
                let r: Vec<Vec<f64>> = node_rates.iter().map(|r| vec![r[step]]).collect();
                single.predict(&nodes, &r)?.swap_remove(0)
            }
            _ => model.predict(&nodes, &node_rates)?.swap_remove(step),
        };
        predict_seconds += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let u = solver.solve(&theta)?;
        let mut elapsed = clock.elapsed().as_secs_f64();
        if step == 0 {
            elapsed += solver.setup_seconds();
        }
        let tr = ops.tr_strain(mesh, &u);
        let dt = grid.dt(step);
        let rate: Vec<f64> = tr.iter().zip(&tr_prev).map(|(a, b)| (a - b) / dt).collect();
        if step + 1 < n {
            for (p, &e) in node_elem.iter().enumerate() {
                for r in &mut node_rates[p][step + 1..] {
                    *r = rate[first[e]];
                }
            }
        }
        tr_prev = tr;
        hist.theta.push(theta);
        hist.displacement.push(u);
        hist.tr_strain_rate.push(rate);
        hist.step_seconds.push(elapsed);
    }
    Ok(IfennRun {
        history: hist,
        predict_seconds,
        extrapolated_nodes: 0,
        strain_rate_source: "lagged",
    })
}

/// JSON summary written next to every deployment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seeds: Vec<(String, u64)>,
    pub strain_rate_source: Option<String>,
    pub timing: Vec<(String, f64)>,
    pub errors: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(mode: &str, config: serde_json::Value) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            mode: mode.into(),
            config,
            config_sha256,
            seeds: Vec::new(),
            strain_rate_source: None,
            timing: Vec::new(),
            errors: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}
