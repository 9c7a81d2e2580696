//! Two-dimensional loss surfaces around a trained parameter vector along
//! filter-normalized random directions.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ParamVector;

/// Two random directions, each rescaled filter by filter to the norms of
/// the trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Filters whose trained norm is zero; their direction slices are zero.
    pub zero_filters: Vec<usize>,
    pub seed: u64,
}

pub fn filter_normalized_directions(params: &ParamVector, seed: u64) -> Directions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.len();
    let mut draw = || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut xi = draw();
    let mut psi = draw();
    let mut zero_filters = Vec::new();
    for (i, span) in params.layout.filters().into_iter().enumerate() {
        let target = norm(params.slice(span));
        if target == 0.0 {
            zero_filters.push(i);
        }
        for d in [&mut xi, &mut psi] {
            let s = &mut d[span.range()];
            let raw = norm(s);
            let k = if target == 0.0 || raw == 0.0 { 0.0 } else { target / raw };
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
    Directions {
        xi,
        psi,
        zero_filters,
        seed,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `loss[i][j] = L(φ* + eps[i]·ξ + eps[j]·ψ)`; non-finite values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub eps: Vec<f64>,
    pub loss: Vec<Vec<Option<f64>>>,
    pub seed: u64,
}

impl LandscapeGrid {
    pub fn center(&self) -> Option<f64> {
        let c = self.eps.len() / 2;
        self.loss[c][c]
    }

    /// Rank of the center among the finite samples (0 = lowest).
    pub fn center_rank(&self) -> Option<usize> {
        let c = self.center()?;
        Some(self.loss.iter().flatten().flatten().filter(|&&v| v < c).count())
    }

    /// `eps1,eps2,loss` with raw values; missing entries are left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("eps1,eps2,loss\n");
        for (i, row) in self.loss.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(v) => out.push_str(&format!("{},{},{:e}\n", self.eps[i], self.eps[j], v)),
                    None => out.push_str(&format!("{},{},\n", self.eps[i], self.eps[j])),
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Evenly spaced samples of `[−1, 1]` with an exact zero in the middle.
pub fn axis(n: usize) -> Result<Vec<f64>> {
    if n % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples per axis; an odd count is needed to hit the center"
        )));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let c = ((n - 1) / 2) as f64;
    Ok((0..n).map(|i| (i as f64 - c) / c).collect())
}

pub fn sample_landscape<F>(loss: F, phi_star: &[f64], dirs: &Directions, n_per_axis: usize) -> Result<LandscapeGrid>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if dirs.xi.len() != phi_star.len() || dirs.psi.len() != phi_star.len() {
        return Err(Error::ShapeMismatch("direction length differs from the parameter vector".into()));
    }
    let eps = axis(n_per_axis)?;
    let cells: Vec<(usize, usize)> = (0..n_per_axis)
        .flat_map(|i| (0..n_per_axis).map(move |j| (i, j)))
        .collect();
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (eps[i], eps[j]);
            let p: Vec<f64> = if a == 0.0 && b == 0.0 {
                phi_star.to_vec()
            } else {
                phi_star
                    .iter()
                    .zip(&dirs.xi)
                    .zip(&dirs.psi)
                    .map(|((p, x), y)| p + a * x + b * y)
                    .collect()
            };
            match loss(&p) {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) | Err(Error::NonFinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let loss = values.chunks(n_per_axis).map(|r| r.to_vec()).collect();
    Ok(LandscapeGrid {
        eps,
        loss,
        seed: dirs.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ParamLayout;

    fn layout() -> ParamLayout {
        let mut l = ParamLayout::default();
        l.push("a".into(), 2, 3, 2, 1, true, true).unwrap();
        l.push("b".into(), 3, 1, 1, 1, false, true).unwrap();
        l
    }

    #[test]
    fn slices_match_filter_norms() {
        let l = layout();
        let vals: Vec<f64> = (0..l.len).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = ParamVector::unflatten(&l, vals).unwrap();
        let d = filter_normalized_directions(&p, 9);
        for span in l.filters() {
            let want = norm(p.slice(span));
            assert!((norm(&d.xi[span.range()]) - want).abs() < 1e-12);
            assert!((norm(&d.psi[span.range()]) - want).abs() < 1e-12);
        }
        assert!(d.zero_filters.is_empty());
        assert_eq!(d, filter_normalized_directions(&p, 9));
        assert_ne!(d.xi, filter_normalized_directions(&p, 10).xi);
    }

    #[test]
    fn zero_parameters_give_zero_directions() {
        let p = ParamVector::zeros(layout());
        let d = filter_normalized_directions(&p, 1);
        assert!(d.xi.iter().chain(&d.psi).all(|&v| v == 0.0));
        assert_eq!(d.zero_filters.len(), layout().filters().len());
    }

    #[test]
    fn axis_is_symmetric_with_exact_center() {
        let a = axis(51).unwrap();
        assert_eq!(a[0], -1.0);
        assert_eq!(a[50], 1.0);
        assert_eq!(a[25], 0.0);
        assert!(axis(50).is_err());
    }

    #[test]
    fn quadratic_landscape() {
        let star = vec![0.3, -1.2, 2.0];
        let dirs = Directions {
            xi: vec![1.0, 0.0, 0.5],
            psi: vec![0.0, 2.0, 0.0],
            zero_filters: vec![],
            seed: 0,
        };
        let s2 = star.clone();
        let f = move |p: &[f64]| Ok(p.iter().zip(&s2).map(|(a, b)| (a - b).powi(2)).sum());
        let g = sample_landscape(f, &star, &dirs, 11).unwrap();
        assert_eq!(g.center(), Some(0.0));
        assert_eq!(g.center_rank(), Some(0));
        for (i, &a) in g.eps.iter().enumerate() {
            for (j, &b) in g.eps.iter().enumerate() {
                let want = 1.25 * a * a + 4.0 * b * b;
                assert!((g.loss[i][j].unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nan_entries_are_missing() {
        let dirs = Directions {
            xi: vec![1.0],
            psi: vec![1.0],
            zero_filters: vec![],
            seed: 0,
        };
        let f = |p: &[f64]| Ok(if p[0] > 0.5 { f64::NAN } else { p[0] * p[0] });
        let g = sample_landscape(f, &[0.0], &dirs, 5).unwrap();
        assert_eq!(g.loss[4][4], None);
        assert_eq!(g.center(), Some(0.0));
    }
}
