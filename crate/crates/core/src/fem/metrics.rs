use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise and aggregated errors of a field `a` against a reference `b`,
/// both indexed `[step][node]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `|a − b|`.
    pub abs: Vec<Vec<f64>>,
    /// `|a − b| / |b| · 100`, `None` where `b = 0`.
    pub rel: Vec<Vec<Option<f64>>>,
    /// `(step, node)` pairs excluded from the relative error.
    pub excluded: Vec<(usize, usize)>,
    /// Per-step `(1/N_nodes) ‖a − b‖²`.
    pub per_step: Vec<f64>,
    /// `(1/N_inc) Σ_i per_step[i]²`.
    pub aggregate: f64,
}

/// Location and value of a maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEntry {
    pub value: f64,
    pub step: usize,
    pub node: usize,
}

fn max_of<'a>(rows: impl Iterator<Item = (usize, &'a [Option<f64>])>) -> Option<MaxEntry> {
    let mut best: Option<MaxEntry> = None;
    for (step, row) in rows {
        for (node, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if best.map_or(true, |b| v > b.value) {
                    best = Some(MaxEntry { value: v, step, node });
                }
            }
        }
    }
    best
}

impl ErrorReport {
    pub fn max_abs(&self) -> Option<MaxEntry> {
        let rows: Vec<Vec<Option<f64>>> = self
            .abs
            .iter()
            .map(|r| r.iter().map(|v| Some(*v)).collect())
            .collect();
        max_of(rows.iter().enumerate().map(|(s, r)| (s, r.as_slice())))
    }

    pub fn max_rel(&self) -> Option<MaxEntry> {
        max_of(self.rel.iter().enumerate().map(|(s, r)| (s, r.as_slice())))
    }

    pub fn max_abs_at(&self, step: usize) -> f64 {
        self.abs[step].iter().copied().fold(0.0, f64::max)
    }

    pub fn max_rel_at(&self, step: usize) -> f64 {
        self.rel[step].iter().flatten().copied().fold(0.0, f64::max)
    }
}

pub fn error_metrics(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<ErrorReport> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ShapeMismatch(
            "fields compared for error must have identical shapes".into(),
        ));
    }
    if a.is_empty() {
        return Err(Error::ShapeMismatch("no increments to compare".into()));
    }
    let mut abs = Vec::with_capacity(a.len());
    let mut rel = Vec::with_capacity(a.len());
    let mut excluded = Vec::new();
    let mut per_step = Vec::with_capacity(a.len());
    for (s, (ra, rb)) in a.iter().zip(b).enumerate() {
        let d: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).collect();
        let r = d
            .iter()
            .zip(rb)
            .enumerate()
            .map(|(n, (d, y))| {
                if *y == 0.0 {
                    excluded.push((s, n));
                    None
                } else {
                    Some(d / y.abs() * 100.0)
                }
            })
            .collect();
        let n = d.len().max(1) as f64;
        per_step.push(d.iter().map(|v| v * v).sum::<f64>() / n);
        abs.push(d);
        rel.push(r);
    }
    let aggregate = per_step.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
    Ok(ErrorReport {
        abs,
        rel,
        excluded,
        per_step,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_fields_have_zero_error() {
        let f = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let r = error_metrics(&f, &f).unwrap();
        assert_eq!(r.aggregate, 0.0);
        assert!(r.abs.iter().flatten().all(|v| *v == 0.0));
        assert!(r.rel.iter().flatten().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn forced_arithmetic() {
        let r = error_metrics(&[vec![1.1]], &[vec![1.0]]).unwrap();
        assert!((r.abs[0][0] - 0.1).abs() < 1e-15);
        assert!((r.rel[0][0].unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_excluded() {
        let r = error_metrics(&[vec![0.5, 2.0]], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(r.rel[0][0], None);
        assert_eq!(r.excluded, vec![(0, 0)]);
        assert_eq!(r.max_rel().unwrap().node, 1);
    }

    #[test]
    fn aggregate_matches_definition() {
        let a = vec![vec![1.0, 1.0], vec![0.0, 2.0]];
        let b = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let r = error_metrics(&a, &b).unwrap();
        assert_eq!(r.per_step, vec![1.0, 2.0]);
        assert!((r.aggregate - 2.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(error_metrics(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
    }
}
