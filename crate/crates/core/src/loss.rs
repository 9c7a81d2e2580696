//! Physics-informed training objective: energy residual, temperature data
//! mismatch and Neumann flux penalty.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{JetLayout, Tape};
use crate::error::{Error, Result};
use crate::fem::{BoundaryPoint, CollocationSet, MaterialProperties};
use crate::network::{InputSpec, Lift, Network, Normalization, SequenceBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "unit")]
    pub lambda_t: f64,
    #[serde(default)]
    pub lambda_q: f64,
    #[serde(default = "yes")]
    pub physics: bool,
    #[serde(default = "yes")]
    pub data: bool,
    #[serde(default = "yes")]
    pub flux: bool,
    /// Point counts for the three terms; `None` uses every available point.
    #[serde(default)]
    pub n_e: Option<usize>,
    #[serde(default)]
    pub n_t: Option<usize>,
    #[serde(default)]
    pub n_q: Option<usize>,
    #[serde(default = "mean")]
    pub reduction: Reduction,
    /// Multiplies the energy residual; defaults to `1/(ρC_ε)`.
    #[serde(default)]
    pub residual_scale: Option<f64>,
    #[serde(default = "shard")]
    pub shard_size: usize,
}

fn unit() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn mean() -> Reduction {
    Reduction::Mean
}

fn shard() -> usize {
    64
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_t: 1.0,
            lambda_q: 0.0,
            physics: true,
            data: true,
            flux: true,
            n_e: None,
            n_t: None,
            n_q: None,
            reduction: Reduction::Mean,
            residual_scale: None,
            shard_size: 64,
        }
    }
}

impl LossConfig {
    /// Only the temperature mismatch term.
    pub fn data_driven(&self) -> Self {
        LossConfig {
            physics: false,
            flux: false,
            data: true,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physics || self.data || self.flux) {
            return Err(Error::Config("at least one loss term must be enabled".into()));
        }
        for (name, v) in [("lambda_t", self.lambda_t), ("lambda_q", self.lambda_q)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if let Some(s) = self.residual_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("residual_scale must be positive, got {s}")));
            }
        }
        if self.shard_size == 0 {
            return Err(Error::Config("shard_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2_e: f64,
    pub l2_t: f64,
    pub l2_q: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add(&mut self, o: &LossBreakdown) {
        self.l2_e += o.l2_e;
        self.l2_t += o.l2_t;
        self.l2_q += o.l2_q;
        self.total += o.total;
    }
}

/// `ρC_ε·Ṫ + α(3λ+2μ)T_o·tr ε̇ + ∇·q`.
pub fn energy_residual(dt_dt: f64, flux_divergence: f64, tr_eps_dot: f64, material: &MaterialProperties) -> f64 {
    material.heat_capacity() * dt_dt + material.thermal_modulus() * material.t_ref * tr_eps_dot + flux_divergence
}

/// Maps the raw network output to temperature: `Θ = A + s·B·T̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ansatz {
    pub lift: Lift,
    #[serde(default = "unit")]
    pub output_scale: f64,
}

impl Ansatz {
    pub fn identity() -> Self {
        Ansatz {
            lift: Lift::Identity,
            output_scale: 1.0,
        }
    }

    pub fn theta(&self, raw: f64, x: [f64; 2]) -> f64 {
        self.lift.a(x)[0] + self.output_scale * self.lift.b(x)[0] * raw
    }

    fn ab(&self, x: [f64; 2]) -> ([f64; 5], [f64; 5]) {
        let mut b = self.lift.b(x);
        b.iter_mut().for_each(|v| *v *= self.output_scale);
        (self.lift.a(x), b)
    }
}

/// How `Ṫ` enters the energy residual.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeDerivative {
    /// Differentiate the network in its time input.
    Autodiff,
    /// `(Θ − Θ_prev)/Δt` with the previous increment's values per point.
    Backward { dt: f64, previous: Vec<f64> },
}

/// Network inputs and targets for training.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub interior: SequenceBatch,
    pub coords: Vec<[f64; 2]>,
    /// `t_fe[point][step]`.
    pub t_fe: Vec<Vec<f64>>,
    pub boundary: Vec<BoundaryPoint>,
    pub boundary_batch: Option<SequenceBatch>,
}

impl TrainingData {
    /// Builds inputs for the increments in `steps`. Boundary samples take
    /// `tr ε̇` from a collocation point of their element (strains are
    /// element-constant for linear elements), falling back to the nearest
    /// point.
    pub fn from_collocation(
        set: &CollocationSet,
        spec: InputSpec,
        norm: Normalization,
        steps: std::ops::Range<usize>,
    ) -> Result<Self> {
        if steps.is_empty() || steps.end > set.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "step range {steps:?} outside {} increments",
                set.n_steps()
            )));
        }
        if spec.dim != set.dim {
            return Err(Error::ShapeMismatch(format!(
                "network is {}D, collocation set {}D",
                spec.dim, set.dim
            )));
        }
        let times = &set.times[steps.clone()];
        let coords: Vec<[f64; 2]> = set.points.iter().map(|p| p.x).collect();
        let rates: Vec<Vec<f64>> = set.tr_strain_rate.iter().map(|r| r[steps.clone()].to_vec()).collect();
        let interior = SequenceBatch::new(spec, norm, times, &coords, &rates)?;
        let t_fe = set.t_fe.iter().map(|r| r[steps.clone()].to_vec()).collect();
        let boundary_batch = if set.boundary.is_empty() {
            None
        } else {
            let pts: Vec<[f64; 2]> = set.boundary.iter().map(|b| b.x).collect();
            let brates: Vec<Vec<f64>> = set
                .boundary
                .iter()
                .map(|b| {
                    let i = set.points.iter().position(|p| p.element == b.element).unwrap_or_else(|| {
                        nearest(&coords, b.x)
                    });
                    rates[i].clone()
                })
                .collect();
            Some(SequenceBatch::new(spec, norm, times, &pts, &brates)?)
        };
        Ok(TrainingData {
            interior,
            coords,
            t_fe,
            boundary: set.boundary.clone(),
            boundary_batch,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.interior.n_steps
    }
}

fn nearest(points: &[[f64; 2]], x: [f64; 2]) -> usize {
    let d = |p: &[f64; 2]| (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
    (0..points.len())
        .min_by(|&a, &b| d(&points[a]).total_cmp(&d(&points[b])))
        .unwrap_or(0)
}

/// `count` indices spread evenly over `0..n`.
fn spread(n: usize, count: Option<usize>) -> Vec<bool> {
    let mut mask = vec![false; n];
    match count {
        Some(c) if c < n => {
            for i in 0..c {
                mask[i * n / c] = true;
            }
        }
        _ => mask.iter_mut().for_each(|m| *m = true),
    }
    mask
}

/// Everything needed to evaluate the objective for one parameter vector.
pub struct LossProblem<'a> {
    pub network: &'a Network,
    pub data: &'a TrainingData,
    pub config: &'a LossConfig,
    pub material: MaterialProperties,
    pub ansatz: &'a Ansatz,
    pub time: TimeDerivative,
    pub dropout_seed: Option<u64>,
    e_mask: Vec<bool>,
    t_mask: Vec<bool>,
    q_mask: Vec<bool>,
}

struct Weights {
    e: f64,
    t: f64,
    q: f64,
}

impl<'a> LossProblem<'a> {
    pub fn new(
        network: &'a Network,
        data: &'a TrainingData,
        config: &'a LossConfig,
        material: MaterialProperties,
        ansatz: &'a Ansatz,
        time: TimeDerivative,
    ) -> Result<Self> {
        config.validate()?;
        material.validate()?;
        if network.inputs != data.interior.spec {
            return Err(Error::ShapeMismatch("network input spec differs from training data".into()));
        }
        if let TimeDerivative::Backward { previous, dt } = &time {
            if previous.len() != data.interior.n_points || !(*dt > 0.0) {
                return Err(Error::ShapeMismatch("backward-difference state does not match the data".into()));
            }
            if data.n_steps() != 1 {
                return Err(Error::InvalidArgument("backward differences need single-increment data".into()));
            }
        } else if config.physics && !network.inputs.time {
            return Err(Error::Config("autodiff time derivative needs a time input".into()));
        }
        let np = data.interior.n_points;
        let e_mask = spread(np, config.n_e);
        let t_mask = spread(np, config.n_t);
        let q_mask = spread(data.boundary.len(), config.n_q);
        if config.physics && np == 0 {
            return Err(Error::InvalidArgument("energy term enabled without collocation points".into()));
        }
        if config.data && np == 0 {
            return Err(Error::InvalidArgument("data term enabled without collocation points".into()));
        }
        if config.flux && config.lambda_q > 0.0 && data.boundary.is_empty() {
            return Err(Error::InvalidArgument("flux term enabled without boundary points".into()));
        }
        Ok(LossProblem {
            network,
            data,
            config,
            material,
            ansatz,
            time,
            dropout_seed: None,
            e_mask,
            t_mask,
            q_mask,
        })
    }

    fn flux_active(&self) -> bool {
        self.config.flux && !self.data.boundary.is_empty()
    }

    fn weights(&self) -> Weights {
        let s = self.data.n_steps() as f64;
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count().max(1) as f64;
        match self.config.reduction {
            Reduction::Mean => Weights {
                e: 1.0 / (count(&self.e_mask) * s),
                t: 1.0 / (count(&self.t_mask) * s),
                q: 1.0 / (count(&self.q_mask) * s),
            },
            Reduction::Sum => Weights { e: 1.0, t: 1.0, q: 1.0 },
        }
    }

    /// Loss terms and, when requested, the gradient of the total.
    pub fn evaluate(&self, params: &[f64], with_grad: bool) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        if params.len() != self.network.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a network of {}",
                params.len(),
                self.network.n_params()
            )));
        }
        let w = self.weights();
        let shard = self.config.shard_size;
        let np = self.data.interior.n_points;
        let mut jobs: Vec<(bool, usize, usize)> = (0..np).step_by(shard).map(|lo| (false, lo, (lo + shard).min(np))).collect();
        if self.flux_active() {
            let nb = self.data.boundary.len();
            jobs.extend((0..nb).step_by(shard).map(|lo| (true, lo, (lo + shard).min(nb))));
        }
        let parts: Vec<(LossBreakdown, Option<Vec<f64>>)> = jobs
            .par_iter()
            .map(|&(bnd, lo, hi)| {
                if bnd {
                    self.boundary_shard(params, lo, hi, &w, with_grad)
                } else {
                    self.interior_shard(params, lo, hi, &w, with_grad)
                }
            })
            .collect::<Result<_>>()?;
        let mut total = LossBreakdown::default();
        let mut grad = with_grad.then(|| vec![0.0; params.len()]);
        for (b, g) in &parts {
            total.add(b);
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
        }
        total.total = total.l2_e + self.config.lambda_t * total.l2_t + self.config.lambda_q * total.l2_q;
        Ok((total, grad))
    }

    fn interior_shard(
        &self,
        params: &[f64],
        lo: usize,
        hi: usize,
        w: &Weights,
        with_grad: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let dim = self.network.inputs.dim;
        let physics = self.config.physics && self.e_mask[lo..hi].iter().any(|&b| b);
        let data = self.config.data && self.t_mask[lo..hi].iter().any(|&b| b);
        if !physics && !data {
            return Ok((LossBreakdown::default(), with_grad.then(|| vec![0.0; params.len()])));
        }
        let autodiff_t = matches!(self.time, TimeDerivative::Autodiff);
        let layout = if physics {
            JetLayout::new(autodiff_t, dim)
        } else {
            JetLayout::VALUE
        };
        let mut tape = Tape::new(params);
        let (shape, input) = self.data.interior.jet(layout, lo, hi);
        let x = tape.constant(shape, input)?;
        let y = self.network.forward(&mut tape, x, self.dropout_seed)?;
        let n = hi - lo;
        let steps = self.data.n_steps();
        let l = layout.len();
        let mut terms = Vec::new();
        let mut vars = [None, None];

        if physics {
            let m = &self.material;
            let sc = self.config.residual_scale.unwrap_or(1.0 / m.heat_capacity());
            let coupling = m.thermal_modulus() * m.t_ref;
            let mut coeffs = vec![0.0; l * n];
            let mut offset = vec![0.0; steps * n];
            for p in 0..n {
                let gp = lo + p;
                if !self.e_mask[gp] {
                    continue;
                }
                let (a, b) = self.ansatz.ab(self.data.coords[gp]);
                let (lap_a, lap_b) = (a[2] + a[4], b[2] + b[4]);
                let mut cv = -m.k * lap_b;
                let mut base = -m.k * lap_a;
                match &self.time {
                    TimeDerivative::Autodiff => coeffs[layout.t().unwrap_or(0) * n + p] = m.heat_capacity() * b[0] * sc,
                    TimeDerivative::Backward { dt, previous } => {
                        cv += m.heat_capacity() * b[0] / dt;
                        base += m.heat_capacity() * (a[0] - previous[gp]) / dt;
                    }
                }
                coeffs[p] = cv * sc;
                for axis in 0..dim {
                    coeffs[layout.d(axis) * n + p] = -2.0 * m.k * b[1 + 2 * axis] * sc;
                    coeffs[layout.dd(axis) * n + p] = -m.k * b[0] * sc;
                }
                for s in 0..steps {
                    let rate = self.data.interior.normalization.rate_scale
                        * self.data.interior.feature(gp, s, self.network.inputs.n_features() - 1);
                    offset[s * n + p] = sc * (base + coupling * rate);
                }
            }
            let r = tape.contract(y, coeffs, &offset)?;
            let e = tape.sum_squares(r, w.e);
            terms.push((e, 1.0));
            vars[0] = Some(e);
        }
        if data {
            let mut coeffs = vec![0.0; l * n];
            let mut offset = vec![0.0; steps * n];
            for p in 0..n {
                let gp = lo + p;
                if !self.t_mask[gp] {
                    continue;
                }
                let (a, b) = self.ansatz.ab(self.data.coords[gp]);
                coeffs[p] = b[0];
                for s in 0..steps {
                    offset[s * n + p] = a[0] - self.data.t_fe[gp][s];
                }
            }
            let r = tape.contract(y, coeffs, &offset)?;
            let t = tape.sum_squares(r, w.t);
            terms.push((t, self.config.lambda_t));
            vars[1] = Some(t);
        }
        let loss = tape.weighted_sum(terms)?;
        let b = LossBreakdown {
            l2_e: vars[0].map_or(Ok(0.0), |v| tape.scalar(v))?,
            l2_t: vars[1].map_or(Ok(0.0), |v| tape.scalar(v))?,
            l2_q: 0.0,
            total: 0.0,
        };
        let g = if with_grad { Some(tape.backward(loss)?) } else { None };
        Ok((b, g))
    }

    fn boundary_shard(
        &self,
        params: &[f64],
        lo: usize,
        hi: usize,
        w: &Weights,
        with_grad: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let Some(batch) = &self.data.boundary_batch else {
            return Ok((LossBreakdown::default(), with_grad.then(|| vec![0.0; params.len()])));
        };
        if !self.q_mask[lo..hi].iter().any(|&b| b) {
            return Ok((LossBreakdown::default(), with_grad.then(|| vec![0.0; params.len()])));
        }
        let dim = self.network.inputs.dim;
        let layout = JetLayout::new(false, dim);
        let mut tape = Tape::new(params);
        let (shape, input) = batch.jet(layout, lo, hi);
        let x = tape.constant(shape, input)?;
        let y = self.network.forward(&mut tape, x, self.dropout_seed)?;
        let n = hi - lo;
        let steps = batch.n_steps;
        let k = self.material.k;
        let mut coeffs = vec![0.0; layout.len() * n];
        let mut offset = vec![0.0; steps * n];
        for p in 0..n {
            let bp = &self.data.boundary[lo + p];
            if !self.q_mask[lo + p] {
                continue;
            }
            let (a, b) = self.ansatz.ab(bp.x);
            let mut cv = 0.0;
            let mut base = -bp.flux;
            for axis in 0..dim {
                let nd = bp.normal[axis];
                cv -= k * nd * b[1 + 2 * axis];
                base -= k * nd * a[1 + 2 * axis];
                coeffs[layout.d(axis) * n + p] = -k * nd * b[0];
            }
            coeffs[p] = cv;
            for s in 0..steps {
                offset[s * n + p] = base;
            }
        }
        let r = tape.contract(y, coeffs, &offset)?;
        let q = tape.sum_squares(r, w.q);
        let loss = tape.weighted_sum(vec![(q, self.config.lambda_q)])?;
        let b = LossBreakdown {
            l2_q: tape.scalar(q)?,
            ..Default::default()
        };
        let g = if with_grad { Some(tape.backward(loss)?) } else { None };
        Ok((b, g))
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub breakdown: LossBreakdown,
    pub grad_norm: f64,
}

pub fn write_loss_history(records: &[LossRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut out = String::from("iter,L2_E,L2_T,L2_q,total,grad_norm\n");
    for r in records {
        let b = &r.breakdown;
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e}\n",
            r.iter, b.l2_e, b.l2_t, b.l2_q, b.total, r.grad_norm
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_examples() {
        let m = MaterialProperties::aluminium();
        assert_eq!(energy_residual(0.0, 0.0, 0.0, &m), 0.0);
        assert_eq!(energy_residual(1.0, 0.0, 0.0, &m), m.heat_capacity());
        let (x, t) = (0.3, 0.7);
        let pi = std::f64::consts::PI;
        let temp_dot = -(pi * x).sin() * (-t as f64).exp();
        let lap = -pi * pi * (pi * x).sin() * (-t as f64).exp();
        let r = energy_residual(temp_dot, -m.k * lap, 0.0, &m);
        let want = (-m.heat_capacity() + m.k * pi * pi) * (pi * x).sin() * (-t as f64).exp();
        assert!((r - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn spread_masks() {
        assert_eq!(spread(4, None), vec![true; 4]);
        assert_eq!(spread(4, Some(9)), vec![true; 4]);
        assert_eq!(spread(6, Some(3)), vec![true, false, true, false, true, false]);
    }

    #[test]
    fn config_validation() {
        let mut c = LossConfig {
            physics: false,
            data: false,
            flux: false,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.data = true;
        assert!(c.validate().is_ok());
        c.lambda_q = -1.0;
        assert!(c.validate().is_err());
        let d = LossConfig::default().data_driven();
        assert!(d.data && !d.physics && !d.flux);
    }

    #[test]
    fn ansatz_scales_raw_output() {
        let a = Ansatz {
            lift: Lift::Bar {
                theta_left: 10.0,
                theta_right: 50.0,
                length: 1.0,
            },
            output_scale: 4.0,
        };
        assert_eq!(a.theta(7.0, [0.5, 0.0]), 30.0 + 7.0);
    }
}
