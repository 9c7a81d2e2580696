//! Linear simplicial meshes (2-node segments, 3-node triangles), quadrature,
//! boundary tagging and a plain-text mesh format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial point; 1D meshes keep `y = 0`.
pub type Point = [f64; 2];

/// Which boundary condition a tag carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    DirichletT,
    DirichletU,
    NeumannQ,
    Traction,
}

impl BoundaryKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dirichlet_T" | "dirichlet_t" => Some(Self::DirichletT),
            "dirichlet_u" => Some(Self::DirichletU),
            "neumann_q" => Some(Self::NeumannQ),
            "traction" => Some(Self::Traction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTag {
    pub name: String,
    pub kind: BoundaryKind,
}

/// A boundary facet: one node in 1D, a two-node edge in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: Vec<usize>,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    /// Flat connectivity, `dim + 1` nodes per element.
    connectivity: Vec<usize>,
    facets: Vec<Facet>,
}

impl Mesh {
    /// Builds and validates a mesh. Triangles given clockwise are reoriented.
    pub fn new(
        dim: usize,
        nodes: Vec<Point>,
        elements: Vec<Vec<usize>>,
        facets: Vec<Facet>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension must be 1 or 2, got {dim}")));
        }
        let nen = dim + 1;
        let mut connectivity = Vec::with_capacity(elements.len() * nen);
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != nen {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has {} nodes, expected {nen}",
                    conn.len()
                )));
            }
            for &n in conn {
                if n >= nodes.len() {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} references node {n} of {}",
                        nodes.len()
                    )));
                }
            }
            connectivity.extend_from_slice(conn);
        }
        let mut mesh = Mesh {
            dim,
            nodes,
            connectivity,
            facets,
        };
        for e in 0..mesh.n_elements() {
            let m = mesh.signed_measure(e);
            if m.abs() <= f64::EPSILON * mesh.length_scale().powi(dim as i32) {
                return Err(Error::DegenerateElement { element: e, det: m });
            }
            if m < 0.0 {
                let base = e * nen;
                mesh.connectivity.swap(base + nen - 2, base + nen - 1);
            }
        }
        mesh.validate_facets()?;
        Ok(mesh)
    }

    fn validate_facets(&self) -> Result<()> {
        for (i, f) in self.facets.iter().enumerate() {
            if f.nodes.len() != self.dim {
                return Err(Error::InvalidMesh(format!(
                    "facet {i} ({}) has {} nodes, expected {}",
                    f.tag,
                    f.nodes.len(),
                    self.dim
                )));
            }
            if let Some(&n) = f.nodes.iter().find(|&&n| n >= self.n_nodes()) {
                return Err(Error::InvalidMesh(format!(
                    "facet {i} ({}) references node {n} of {}",
                    f.tag,
                    self.n_nodes()
                )));
            }
            if self.facet_element(i).is_none() {
                return Err(Error::InvalidMesh(format!(
                    "facet {i} ({}) is not a face of any element",
                    f.tag
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.connectivity.len() / (self.dim + 1)
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let nen = self.dim + 1;
        &self.connectivity[e * nen..(e + 1) * nen]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Distinct tag names in order of first appearance.
    pub fn tag_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for f in &self.facets {
            if !names.contains(&f.tag.as_str()) {
                names.push(&f.tag);
            }
        }
        names
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.facets.iter().any(|f| f.tag == tag)
    }

    /// Sorted, deduplicated nodes on facets carrying `tag`.
    pub fn tag_nodes(&self, tag: &str) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .facets
            .iter()
            .filter(|f| f.tag == tag)
            .flat_map(|f| f.nodes.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Lowest-id element having every node of facet `i`.
    pub fn facet_element(&self, i: usize) -> Option<usize> {
        let f = &self.facets[i];
        (0..self.n_elements()).find(|&e| {
            let conn = self.element(e);
            f.nodes.iter().all(|n| conn.contains(n))
        })
    }

    /// Outward unit normal of facet `i`.
    pub fn facet_normal(&self, i: usize) -> Point {
        let f = &self.facets[i];
        let e = self.facet_element(i).expect("validated facet");
        let c = self.centroid(e);
        if self.dim == 1 {
            let x = self.nodes[f.nodes[0]][0];
            return if x >= c[0] { [1.0, 0.0] } else { [-1.0, 0.0] };
        }
        let a = self.nodes[f.nodes[0]];
        let b = self.nodes[f.nodes[1]];
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        let len = (tx * tx + ty * ty).sqrt();
        let mut n = [ty / len, -tx / len];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    pub fn centroid(&self, e: usize) -> Point {
        let conn = self.element(e);
        let k = conn.len() as f64;
        let mut c = [0.0; 2];
        for &n in conn {
            c[0] += self.nodes[n][0] / k;
            c[1] += self.nodes[n][1] / k;
        }
        c
    }

    fn signed_measure(&self, e: usize) -> f64 {
        let conn = self.element(e);
        let p = |i: usize| self.nodes[conn[i]];
        match self.dim {
            1 => p(1)[0] - p(0)[0],
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    /// Length (1D) or area (2D) of element `e`.
    pub fn measure(&self, e: usize) -> f64 {
        self.signed_measure(e).abs()
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.measure(e)).sum()
    }

    fn length_scale(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Shape-function gradients (global coordinates) for element `e`,
    /// `grads[a] = [dN_a/dx, dN_a/dy]`, constant over a linear element.
    pub fn shape_gradients(&self, e: usize) -> Result<Vec<Point>> {
        let conn = self.element(e);
        let p = |i: usize| self.nodes[conn[i]];
        match self.dim {
            1 => {
                let h = p(1)[0] - p(0)[0];
                if h.abs() < f64::MIN_POSITIVE {
                    return Err(Error::DegenerateElement { element: e, det: h });
                }
                Ok(vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]])
            }
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                if det.abs() < f64::MIN_POSITIVE {
                    return Err(Error::DegenerateElement { element: e, det });
                }
                Ok(vec![
                    [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                    [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                    [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
                ])
            }
        }
    }

    /// Barycentric coordinates of `x` with respect to element `e`.
    pub fn barycentric(&self, e: usize, x: Point) -> [f64; 3] {
        let conn = self.element(e);
        let p = |i: usize| self.nodes[conn[i]];
        match self.dim {
            1 => {
                let t = (x[0] - p(0)[0]) / (p(1)[0] - p(0)[0]);
                [1.0 - t, t, 0.0]
            }
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
                let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
                [1.0 - l1 - l2, l1, l2]
            }
        }
    }

    /// Element containing `x` (lowest id on shared edges/nodes). Falls back
    /// to the element whose barycentric coordinates are least negative, with
    /// the second return value `false` marking the point as outside.
    pub fn locate(&self, x: Point) -> (usize, bool) {
        const TOL: f64 = 1e-10;
        let nen = self.nodes_per_element();
        let mut best = (0usize, f64::NEG_INFINITY);
        for e in 0..self.n_elements() {
            let l = self.barycentric(e, x);
            let min = l[..nen].iter().copied().fold(f64::INFINITY, f64::min);
            if min >= -TOL {
                return (e, true);
            }
            if min > best.1 {
                best = (e, min);
            }
        }
        (best.0, false)
    }

    /// Interpolates a nodal field at `x` with the linear shape functions.
    pub fn interpolate(&self, nodal: &[f64], x: Point) -> (f64, bool) {
        let (e, inside) = self.locate(x);
        let l = self.barycentric(e, x);
        let v = self
            .element(e)
            .iter()
            .zip(l.iter())
            .map(|(&n, &w)| w * nodal[n])
            .sum();
        (v, inside)
    }
}

/// Uniform mesh of `[0, length]` with tags `left` and `right`.
pub fn build_interval_mesh(n_elem: usize, length: f64) -> Result<Mesh> {
    if n_elem == 0 {
        return Err(Error::InvalidArgument("n_elem must be at least 1".into()));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidArgument(format!("length must be positive, got {length}")));
    }
    let h = length / n_elem as f64;
    let nodes = (0..=n_elem).map(|i| [i as f64 * h, 0.0]).collect();
    let elements = (0..n_elem).map(|e| vec![e, e + 1]).collect();
    let facets = vec![
        Facet {
            nodes: vec![0],
            tag: "left".into(),
        },
        Facet {
            nodes: vec![n_elem],
            tag: "right".into(),
        },
    ];
    Mesh::new(1, nodes, elements, facets)
}

/// Structured `nx × ny` grid on `[0,lx]×[0,ly]`, every cell split along the
/// same (lower-left to upper-right) diagonal.
pub fn build_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("nx and ny must be at least 1".into()));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidArgument("side lengths must be positive".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            elements.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut facets = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        facets.push(Facet {
            nodes: vec![id(i, 0), id(i + 1, 0)],
            tag: "bottom".into(),
        });
    }
    for j in 0..ny {
        facets.push(Facet {
            nodes: vec![id(nx, j), id(nx, j + 1)],
            tag: "right".into(),
        });
    }
    for i in 0..nx {
        facets.push(Facet {
            nodes: vec![id(i + 1, ny), id(i, ny)],
            tag: "top".into(),
        });
    }
    for j in 0..ny {
        facets.push(Facet {
            nodes: vec![id(0, j + 1), id(0, j)],
            tag: "left".into(),
        });
    }
    Mesh::new(2, nodes, elements, facets)
}

/// Quarter of a square plate `[0,side]²` with a circular hole of `radius`
/// at the origin. Rays run from the hole to points spaced evenly along the
/// outer edges (`n_arc` segments in total, even); `n_radial` layers are
/// graded towards the hole. Tags: `hole`, `bottom` (y = 0), `right`, `top`,
/// `left` (x = 0).
pub fn build_quarter_hole_mesh(n_radial: usize, n_arc: usize, side: f64, radius: f64) -> Result<Mesh> {
    if n_radial == 0 || n_arc < 2 || n_arc % 2 != 0 {
        return Err(Error::InvalidArgument(
            "need at least one radial layer and an even, positive number of arc segments".into(),
        ));
    }
    if !(radius > 0.0 && radius < side) {
        return Err(Error::InvalidArgument(format!(
            "hole radius {radius} must lie in (0, {side})"
        )));
    }
    let half = n_arc / 2;
    let outer = |j: usize| -> Point {
        if j <= half {
            [side, side * j as f64 / half as f64]
        } else {
            [side * (n_arc - j) as f64 / half as f64, side]
        }
    };
    let id = |i: usize, j: usize| i * (n_arc + 1) + j;
    let mut nodes = Vec::with_capacity((n_radial + 1) * (n_arc + 1));
    for i in 0..=n_radial {
        let s = (i as f64 / n_radial as f64).powf(1.5);
        for j in 0..=n_arc {
            let o = outer(j);
            let th = o[1].atan2(o[0]);
            let inner = [radius * th.cos(), radius * th.sin()];
            let mut p = [inner[0] + s * (o[0] - inner[0]), inner[1] + s * (o[1] - inner[1])];
            // keep the symmetry planes exact
            if j == 0 {
                p[1] = 0.0;
            }
            if j == n_arc {
                p[0] = 0.0;
            }
            nodes.push(p);
        }
    }
    let mut elements = Vec::with_capacity(2 * n_radial * n_arc);
    for i in 0..n_radial {
        for j in 0..n_arc {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if j < half {
                elements.push(vec![a, b, c]);
                elements.push(vec![a, c, d]);
            } else {
                elements.push(vec![a, b, d]);
                elements.push(vec![b, c, d]);
            }
        }
    }
    let mut facets = Vec::new();
    let mut edge = |a: usize, b: usize, tag: &str| {
        facets.push(Facet {
            nodes: vec![a, b],
            tag: tag.into(),
        })
    };
    for j in 0..n_arc {
        edge(id(0, j + 1), id(0, j), "hole");
        let tag = if j < half { "right" } else { "top" };
        edge(id(n_radial, j), id(n_radial, j + 1), tag);
    }
    for i in 0..n_radial {
        edge(id(i, 0), id(i + 1, 0), "bottom");
        edge(id(i + 1, n_arc), id(i, n_arc), "left");
    }
    Mesh::new(2, nodes, elements, facets)
}

/// Reference quadrature rule. Points live on the unit segment `[0,1]` or the
/// unit triangle `{ξ,η ≥ 0, ξ+η ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub order: usize,
}

impl QuadratureRule {
    /// `n`-point Gauss–Legendre on `[0,1]`, `n ∈ {1,2,3}`.
    pub fn gauss_segment(n: usize) -> Result<Self> {
        let (pts, wts): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = 1.0 / 3f64.sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = (3.0f64 / 5.0).sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "segment rule with {n} points not available"
                )))
            }
        };
        Ok(QuadratureRule {
            dim: 1,
            points: pts.iter().map(|&p| [(1.0 + p) / 2.0, 0.0]).collect(),
            weights: wts.iter().map(|w| w / 2.0).collect(),
            order: 2 * n - 1,
        })
    }

    /// Triangle rules: `order` 1 (centroid) or 2 (three interior points).
    pub fn triangle(order: usize) -> Result<Self> {
        match order {
            1 => Ok(QuadratureRule {
                dim: 2,
                points: vec![[1.0 / 3.0, 1.0 / 3.0]],
                weights: vec![0.5],
                order: 1,
            }),
            2 => Ok(QuadratureRule {
                dim: 2,
                points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
                weights: vec![1.0 / 6.0; 3],
                order: 2,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "triangle rule of order {order} not available"
            ))),
        }
    }

    /// Default rule: 2-point Gauss in 1D, 3-point in 2D.
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => Self::gauss_segment(2).expect("2-point rule"),
            _ => Self::triangle(2).expect("3-point rule"),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Linear shape functions at reference point `i`.
    pub fn shape_values(&self, i: usize) -> [f64; 3] {
        let [xi, eta] = self.points[i];
        match self.dim {
            1 => [1.0 - xi, xi, 0.0],
            _ => [1.0 - xi - eta, xi, eta],
        }
    }
}

/// Quadrature point in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub element: usize,
    pub local: usize,
    pub x: Point,
    /// Reference weight × |Jacobian|.
    pub weight: f64,
    pub shape: [f64; 3],
}

/// All quadrature points of `mesh`, element by element.
pub fn quadrature_points(mesh: &Mesh, rule: &QuadratureRule) -> Result<Vec<QuadPoint>> {
    if rule.order < 1 || rule.is_empty() {
        return Err(Error::InvalidArgument("quadrature rule order must be >= 1".into()));
    }
    if rule.dim != mesh.dim() {
        return Err(Error::InvalidArgument(format!(
            "{}D rule on a {}D mesh",
            rule.dim,
            mesh.dim()
        )));
    }
    // reference measure: 1 for the unit segment, 1/2 for the unit triangle
    let ref_measure = if mesh.dim() == 1 { 1.0 } else { 0.5 };
    let mut out = Vec::with_capacity(mesh.n_elements() * rule.len());
    for e in 0..mesh.n_elements() {
        let det = mesh.signed_measure(e) / ref_measure;
        if det.abs() < f64::MIN_POSITIVE {
            return Err(Error::DegenerateElement { element: e, det });
        }
        let conn = mesh.element(e);
        for i in 0..rule.len() {
            let shape = rule.shape_values(i);
            let mut x = [0.0; 2];
            for (a, &n) in conn.iter().enumerate() {
                x[0] += shape[a] * mesh.nodes[n][0];
                x[1] += shape[a] * mesh.nodes[n][1];
            }
            out.push(QuadPoint {
                element: e,
                local: i,
                x,
                weight: rule.weights[i] * det.abs(),
                shape,
            });
        }
    }
    Ok(out)
}

/// Reads the text mesh format:
///
/// ```text
/// dim 2
/// node 0 0.0 0.0
/// elem 0 0 1 2
/// facet left 3 0
/// ```
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, path)
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::MeshParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut dim: Option<usize> = None;
    let mut nodes: Vec<Point> = Vec::new();
    let mut elements: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut facets: Vec<(usize, Facet)> = Vec::new();

    let parse_usize = |tok: &str, line: usize| {
        tok.parse::<usize>()
            .map_err(|_| err(line, format!("expected non-negative integer, got `{tok}`")))
    };
    let parse_f64 = |tok: &str, line: usize| {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(line, format!("expected finite number, got `{tok}`")))
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&kw, rest)) = toks.split_first() else {
            continue;
        };
        if kw != "dim" && dim.is_none() {
            return Err(err(line, "`dim` header must come first".into()));
        }
        let d = dim.unwrap_or(0);
        match kw {
            "dim" => {
                if dim.is_some() {
                    return Err(err(line, "duplicate `dim` header".into()));
                }
                match rest {
                    [v] if *v == "1" || *v == "2" => dim = Some(parse_usize(v, line)?),
                    _ => return Err(err(line, "expected `dim 1` or `dim 2`".into())),
                }
            }
            "node" => {
                if rest.len() != 1 + d {
                    return Err(err(line, format!("node line needs id and {d} coordinate(s)")));
                }
                let id = parse_usize(rest[0], line)?;
                if id != nodes.len() {
                    return Err(err(line, format!("node id {id} out of sequence, expected {}", nodes.len())));
                }
                let x = parse_f64(rest[1], line)?;
                let y = if d == 2 { parse_f64(rest[2], line)? } else { 0.0 };
                nodes.push([x, y]);
            }
            "elem" => {
                if rest.len() != 2 + d {
                    return Err(err(line, format!("elem line needs id and {} node indices", d + 1)));
                }
                let id = parse_usize(rest[0], line)?;
                if id != elements.len() {
                    return Err(err(line, format!("elem id {id} out of sequence, expected {}", elements.len())));
                }
                let conn = rest[1..]
                    .iter()
                    .map(|t| parse_usize(t, line))
                    .collect::<Result<Vec<_>>>()?;
                elements.push((line, conn));
            }
            "facet" => {
                if rest.len() != 1 + d {
                    return Err(err(line, format!("facet line needs tag and {d} node index(es)")));
                }
                let tag = rest[0].to_string();
                let conn = rest[1..]
                    .iter()
                    .map(|t| parse_usize(t, line))
                    .collect::<Result<Vec<_>>>()?;
                facets.push((line, Facet { nodes: conn, tag }));
            }
            other => return Err(err(line, format!("unknown record kind `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| err(1, "missing `dim` header".into()))?;
    for (line, conn) in &elements {
        if let Some(&n) = conn.iter().find(|&&n| n >= nodes.len()) {
            return Err(err(*line, format!("dangling node index {n} (mesh has {} nodes)", nodes.len())));
        }
    }
    for (line, f) in &facets {
        if let Some(&n) = f.nodes.iter().find(|&&n| n >= nodes.len()) {
            return Err(err(*line, format!("dangling node index {n} (mesh has {} nodes)", nodes.len())));
        }
    }
    let elem_lines: Vec<usize> = elements.iter().map(|(l, _)| *l).collect();
    let facet_lines: Vec<usize> = facets.iter().map(|(l, _)| *l).collect();
    Mesh::new(
        dim,
        nodes,
        elements.into_iter().map(|(_, c)| c).collect(),
        facets.into_iter().map(|(_, f)| f).collect(),
    )
    .map_err(|e| match e {
        Error::DegenerateElement { element, det } => err(
            elem_lines[element],
            format!("element {element} has zero measure ({det:e})"),
        ),
        Error::InvalidMesh(msg) if msg.starts_with("facet ") => {
            let idx: usize = msg[6..]
                .split_whitespace()
                .next()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            err(facet_lines.get(idx).copied().unwrap_or(0), msg)
        }
        other => other,
    })
}

/// Serializes a mesh in the text format read by [`load_mesh`].
pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim {}", mesh.dim());
    for (i, p) in mesh.nodes().iter().enumerate() {
        if mesh.dim() == 1 {
            let _ = writeln!(s, "node {i} {:?}", p[0]);
        } else {
            let _ = writeln!(s, "node {i} {:?} {:?}", p[0], p[1]);
        }
    }
    for e in 0..mesh.n_elements() {
        let conn: Vec<String> = mesh.element(e).iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "elem {e} {}", conn.join(" "));
    }
    for f in mesh.facets() {
        let conn: Vec<String> = f.nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "facet {} {}", f.tag, conn.join(" "));
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mesh_string(mesh)).map_err(|e| Error::io(path, e))
}
