use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{quadrature_points, Mesh, Point, QuadratureRule};

use super::{BoundaryConditionSet, SolutionHistory, TimeGrid};

/// A spatial collocation point (an FE quadrature point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollocationPoint {
    pub element: usize,
    pub qp: usize,
    pub x: Point,
}

/// A sample on a prescribed-flux boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub tag: String,
    pub x: Point,
    pub normal: Point,
    pub element: usize,
    /// Prescribed outward flux `q̄`.
    pub flux: f64,
    /// Arclength along the tag, measured from the start of its facet chain.
    pub arclength: f64,
}

/// Training data: per-point time sequences of `tr ε̇` and interpolated `T_FE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub dim: usize,
    pub times: Vec<f64>,
    pub points: Vec<CollocationPoint>,
    /// `tr_strain_rate[point][step]`.
    pub tr_strain_rate: Vec<Vec<f64>>,
    /// `t_fe[point][step]`.
    pub t_fe: Vec<Vec<f64>>,
    pub boundary: Vec<BoundaryPoint>,
}

impl CollocationSet {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    /// Keeps every `stride`-th interior point (boundary samples are kept).
    pub fn subsample(&self, stride: usize) -> CollocationSet {
        let stride = stride.max(1);
        let keep: Vec<usize> = (0..self.n_points()).step_by(stride).collect();
        CollocationSet {
            dim: self.dim,
            times: self.times.clone(),
            points: keep.iter().map(|&i| self.points[i]).collect(),
            tr_strain_rate: keep.iter().map(|&i| self.tr_strain_rate[i].clone()).collect(),
            t_fe: keep.iter().map(|&i| self.t_fe[i].clone()).collect(),
            boundary: self.boundary.clone(),
        }
    }
}

/// Builds training records at the default quadrature points of `mesh`, plus
/// `boundary_points_per_tag` equispaced samples on each prescribed-flux tag
/// (default: two per facet).
pub fn extract_collocation(
    history: &SolutionHistory,
    mesh: &Mesh,
    grid: &TimeGrid,
    bcs: &BoundaryConditionSet,
    boundary_points_per_tag: Option<usize>,
) -> Result<CollocationSet> {
    let quad = quadrature_points(mesh, &QuadratureRule::default_for(mesh.dim()))?;
    if history.n_steps() != grid.len() || history.times != grid.times() {
        return Err(Error::ShapeMismatch(format!(
            "history has {} increments, time grid {}",
            history.n_steps(),
            grid.len()
        )));
    }
    for s in 0..history.n_steps() {
        if history.theta[s].len() != mesh.n_nodes() || history.tr_strain_rate[s].len() != quad.len() {
            return Err(Error::ShapeMismatch(format!(
                "increment {s}: history fields do not match the mesh"
            )));
        }
    }

    let points: Vec<CollocationPoint> = quad
        .iter()
        .map(|q| CollocationPoint {
            element: q.element,
            qp: q.local,
            x: q.x,
        })
        .collect();
    let tr_strain_rate = (0..quad.len())
        .map(|i| history.tr_strain_rate.iter().map(|r| r[i]).collect())
        .collect();
    let t_fe = quad
        .iter()
        .map(|q| {
            let conn = mesh.element(q.element);
            history
                .theta
                .iter()
                .map(|th| conn.iter().zip(&q.shape).map(|(&n, w)| w * th[n]).sum())
                .collect()
        })
        .collect();

    let mut boundary = Vec::new();
    for (tag, cond) in &bcs.tags {
        if let Some(flux) = cond.flux {
            boundary.extend(sample_tag(mesh, tag, flux, boundary_points_per_tag)?);
        }
    }

    Ok(CollocationSet {
        dim: mesh.dim(),
        times: grid.times().to_vec(),
        points,
        tr_strain_rate,
        t_fe,
        boundary,
    })
}

/// Orders the facets of `tag` into chains and returns them as facet ids with
/// a flag for traversal direction.
fn facet_chain(mesh: &Mesh, tag: &str) -> Vec<(usize, bool)> {
    let ids: Vec<usize> = (0..mesh.facets().len())
        .filter(|&i| mesh.facets()[i].tag == tag)
        .collect();
    let mut used = vec![false; ids.len()];
    let mut chain = Vec::with_capacity(ids.len());
    let degree = |n: usize| {
        ids.iter()
            .filter(|&&i| mesh.facets()[i].nodes.contains(&n))
            .count()
    };
    loop {
        // prefer a chain end so open paths are walked once, end to end
        let open = (0..ids.len()).find(|&j| {
            !used[j] && mesh.facets()[ids[j]].nodes.iter().any(|&n| degree(n) == 1)
        });
        let Some(start) = open.or_else(|| (0..ids.len()).find(|&j| !used[j])) else {
            break;
        };
        let f = &mesh.facets()[ids[start]].nodes;
        let forward = degree(f[0]) == 1 || degree(f[1]) != 1;
        used[start] = true;
        chain.push((ids[start], forward));
        let mut tip = if forward { f[1] } else { f[0] };
        while let Some(j) = (0..ids.len()).find(|&j| !used[j] && mesh.facets()[ids[j]].nodes.contains(&tip)) {
            let g = &mesh.facets()[ids[j]].nodes;
            let fwd = g[0] == tip;
            used[j] = true;
            chain.push((ids[j], fwd));
            tip = if fwd { g[1] } else { g[0] };
        }
    }
    chain
}

fn sample_tag(mesh: &Mesh, tag: &str, flux: f64, count: Option<usize>) -> Result<Vec<BoundaryPoint>> {
    let facet_ids: Vec<usize> = (0..mesh.facets().len())
        .filter(|&i| mesh.facets()[i].tag == tag)
        .collect();
    let point = |i: usize, x: Point, s: f64| -> Result<BoundaryPoint> {
        let element = mesh
            .facet_element(i)
            .ok_or_else(|| Error::InvalidMesh(format!("facet {i} has no element")))?;
        Ok(BoundaryPoint {
            tag: tag.to_string(),
            x,
            normal: mesh.facet_normal(i),
            element,
            flux,
            arclength: s,
        })
    };
    if mesh.dim() == 1 {
        return facet_ids
            .iter()
            .map(|&i| point(i, mesh.node(mesh.facets()[i].nodes[0]), 0.0))
            .collect();
    }

    let chain = facet_chain(mesh, tag);
    let ends: Vec<(Point, Point, f64)> = chain
        .iter()
        .map(|&(i, fwd)| {
            let n = &mesh.facets()[i].nodes;
            let (a, b) = if fwd { (n[0], n[1]) } else { (n[1], n[0]) };
            let (p, q) = (mesh.node(a), mesh.node(b));
            (p, q, ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt())
        })
        .collect();
    let total: f64 = ends.iter().map(|e| e.2).sum();
    let n = count.unwrap_or(2 * chain.len());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let mut start = 0.0;
    for i in 0..n {
        let s = (i as f64 + 0.5) * total / n as f64;
        while k + 1 < ends.len() && s > start + ends[k].2 {
            start += ends[k].2;
            k += 1;
        }
        let (p, q, len) = ends[k];
        let t = ((s - start) / len).clamp(0.0, 1.0);
        let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
        out.push(point(chain[k].0, x, s)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{solve_coupled, MaterialProperties, TagConditions};
    use crate::mesh::{build_interval_mesh, build_rect_mesh};

    #[test]
    fn linear_theta_is_reproduced_at_quadrature_points() {
        let m = build_rect_mesh(3, 2, 1.0, 1.0).unwrap();
        let theta: Vec<f64> = m.nodes().iter().map(|p| 2.0 + 3.0 * p[0] - p[1]).collect();
        let nq = m.n_elements() * 3;
        let hist = SolutionHistory {
            dim: 2,
            times: vec![1.0],
            theta: vec![theta],
            displacement: vec![vec![0.0; 2 * m.n_nodes()]],
            tr_strain_rate: vec![vec![0.0; nq]],
            step_seconds: vec![0.0],
            n_unknowns: 0,
        };
        let grid = TimeGrid::from_times(vec![1.0]).unwrap();
        let c = extract_collocation(&hist, &m, &grid, &BoundaryConditionSet::new(), None).unwrap();
        for (p, t) in c.points.iter().zip(&c.t_fe) {
            assert!((t[0] - (2.0 + 3.0 * p.x[0] - p.x[1])).abs() < 1e-13);
        }
        assert!(c.tr_strain_rate.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn boundary_samples_are_equispaced() {
        let m = build_rect_mesh(4, 4, 1.0, 1.0).unwrap();
        let hist = SolutionHistory {
            dim: 2,
            times: vec![1.0],
            theta: vec![vec![0.0; m.n_nodes()]],
            displacement: vec![vec![0.0; 2 * m.n_nodes()]],
            tr_strain_rate: vec![vec![0.0; m.n_elements() * 3]],
            step_seconds: vec![0.0],
            n_unknowns: 0,
        };
        let grid = TimeGrid::from_times(vec![1.0]).unwrap();
        let bcs = BoundaryConditionSet::new().with(
            "right",
            TagConditions {
                flux: Some(0.0),
                ..Default::default()
            },
        );
        let c = extract_collocation(&hist, &m, &grid, &bcs, Some(7)).unwrap();
        assert_eq!(c.boundary.len(), 7);
        let mut ys: Vec<f64> = c.boundary.iter().map(|b| b.x[1]).collect();
        ys.sort_by(f64::total_cmp);
        for w in ys.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 7.0).abs() < 1e-12);
        }
        for b in &c.boundary {
            assert!((b.x[0] - 1.0).abs() < 1e-15);
            assert_eq!(b.normal, [1.0, 0.0]);
        }
    }

    #[test]
    fn strain_rate_sequences_follow_history() {
        let m = build_interval_mesh(8, 1.0).unwrap();
        let bcs = BoundaryConditionSet::new()
            .with("left", TagConditions { theta: Some(10.0), displacement: [Some(0.0), None], ..Default::default() })
            .with("right", TagConditions { theta: Some(50.0), displacement: [Some(0.0), None], ..Default::default() });
        let grid = TimeGrid::geometric(1.0, 100.0, 4).unwrap();
        let h = solve_coupled(&m, &MaterialProperties::aluminium(), &bcs, &grid).unwrap();
        let c = extract_collocation(&h, &m, &grid, &bcs, None).unwrap();
        assert_eq!(c.n_points(), 16);
        assert_eq!(c.n_steps(), 4);
        assert!(c.boundary.is_empty());
        for (i, seq) in c.tr_strain_rate.iter().enumerate() {
            for s in 0..4 {
                assert_eq!(seq[s], h.tr_strain_rate[s][i]);
            }
        }
    }
}
