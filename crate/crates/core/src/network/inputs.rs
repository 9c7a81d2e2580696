use serde::{Deserialize, Serialize};

use crate::autodiff::{JetLayout, Shape};
use crate::error::{Error, Result};
use crate::mesh::Point;

/// Input scaling: `τ = (log₁₀t − lo)/(hi − lo)`, coordinates raw,
/// `r̂ = tr ε̇ / rate_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub log_t_min: f64,
    pub log_t_max: f64,
    pub rate_scale: f64,
}

impl Normalization {
    pub fn fit<'a>(times: &[f64], rates: impl IntoIterator<Item = &'a f64>) -> Self {
        let logs = times.iter().map(|t| t.log10());
        let lo = logs.clone().fold(f64::INFINITY, f64::min);
        let hi = logs.fold(f64::NEG_INFINITY, f64::max);
        let m = rates.into_iter().fold(0.0f64, |a, r| a.max(r.abs()));
        Normalization {
            log_t_min: lo,
            log_t_max: hi,
            rate_scale: if m > 0.0 { m } else { 1.0 },
        }
    }

    fn span(&self) -> f64 {
        self.log_t_max - self.log_t_min
    }

    pub fn tau(&self, t: f64) -> f64 {
        if self.span() > 0.0 {
            (t.log10() - self.log_t_min) / self.span()
        } else {
            0.0
        }
    }

    pub fn dtau_dt(&self, t: f64) -> f64 {
        if self.span() > 0.0 {
            1.0 / (t * std::f64::consts::LN_10 * self.span())
        } else {
            0.0
        }
    }

    pub fn rate(&self, r: f64) -> f64 {
        r / self.rate_scale
    }
}

/// Which features a network consumes, in the order `(t, x, [y], tr ε̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub time: bool,
    pub dim: usize,
}

impl InputSpec {
    pub fn n_features(&self) -> usize {
        self.time as usize + self.dim + 1
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.time {
            v.push("t");
        }
        v.push("x");
        if self.dim == 2 {
            v.push("y");
        }
        v.push("tr_eps_dot");
        v
    }
}

/// Normalized network inputs for a set of points over a set of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub spec: InputSpec,
    pub n_points: usize,
    pub n_steps: usize,
    /// Physical times of the steps.
    pub times: Vec<f64>,
    /// `features[(p * n_steps + s) * n_features + f]`.
    pub features: Vec<f64>,
    pub normalization: Normalization,
}

impl SequenceBatch {
    /// `rates[p][s]` are raw `tr ε̇` values.
    pub fn new(
        spec: InputSpec,
        norm: Normalization,
        times: &[f64],
        points: &[Point],
        rates: &[Vec<f64>],
    ) -> Result<Self> {
        if rates.len() != points.len() || rates.iter().any(|r| r.len() != times.len()) {
            return Err(Error::ShapeMismatch(format!(
                "rates for {} points × {} steps expected",
                points.len(),
                times.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let nf = spec.n_features();
        let mut features = Vec::with_capacity(points.len() * times.len() * nf);
        for (x, r) in points.iter().zip(rates) {
            for (s, &t) in times.iter().enumerate() {
                if spec.time {
                    features.push(norm.tau(t));
                }
                features.extend_from_slice(&x[..spec.dim]);
                features.push(norm.rate(r[s]));
            }
        }
        Ok(SequenceBatch {
            spec,
            n_points: points.len(),
            n_steps: times.len(),
            times: times.to_vec(),
            features,
            normalization: norm,
        })
    }

    pub fn feature(&self, p: usize, s: usize, f: usize) -> f64 {
        self.features[(p * self.n_steps + s) * self.spec.n_features() + f]
    }

    /// Points `lo..hi` as a jet tensor. The time channel is seeded with
    /// `dτ/dt` at every step, so `∂/∂t` of an output is its response to a
    /// uniform shift of physical time; coordinates are seeded with 1.
    pub fn jet(&self, layout: JetLayout, lo: usize, hi: usize) -> (Shape, Vec<f64>) {
        let np = hi - lo;
        let nf = self.spec.n_features();
        let shape = Shape::new(nf, self.n_steps, layout, np);
        let mut data = vec![0.0; shape.len()];
        for p in 0..np {
            for s in 0..self.n_steps {
                for f in 0..nf {
                    data[shape.index(f, s, 0, p)] = self.feature(lo + p, s, f);
                }
                let mut f = 0;
                if self.spec.time {
                    if let Some(k) = layout.t() {
                        data[shape.index(0, s, k, p)] = self.normalization.dtau_dt(self.times[s]);
                    }
                    f = 1;
                }
                for axis in 0..self.spec.dim.min(layout.space) {
                    data[shape.index(f + axis, s, layout.d(axis), p)] = 1.0;
                }
            }
        }
        (shape, data)
    }

    /// Sequence of point `p` as `[step][feature]`.
    pub fn sequence(&self, p: usize) -> Vec<Vec<f64>> {
        let nf = self.spec.n_features();
        (0..self.n_steps)
            .map(|s| (0..nf).map(|f| self.feature(p, s, f)).collect())
            .collect()
    }
}
