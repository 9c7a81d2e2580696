//! Reverse-mode tape over jet tensors.
//!
//! A jet tensor holds, for every channel, sequence step and collocation
//! point, the value of a quantity and its truncated Taylor coefficients in
//! the seeded input directions: `∂/∂t` (first order) and `∂/∂x`, `∂²/∂x²`
//! (and `∂/∂y`, `∂²/∂y²` in 2D). Forward evaluation propagates the
//! coefficients; the reverse sweep differentiates the whole forward-Taylor
//! computation with respect to the parameters, so losses containing input
//! derivatives get exact parameter gradients.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Which Taylor components a jet tensor carries, in the order
/// `[value, (t), (x, xx), (y, yy)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JetLayout {
    pub time: bool,
    pub space: usize,
}

impl JetLayout {
    pub const VALUE: JetLayout = JetLayout { time: false, space: 0 };

    pub fn new(time: bool, space: usize) -> Self {
        JetLayout { time, space }
    }

    pub fn len(self) -> usize {
        1 + self.time as usize + 2 * self.space
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn t(self) -> Option<usize> {
        self.time.then_some(1)
    }

    /// Index of `∂/∂x_axis`.
    pub fn d(self, axis: usize) -> usize {
        debug_assert!(axis < self.space);
        1 + self.time as usize + 2 * axis
    }

    /// Index of `∂²/∂x_axis²`.
    pub fn dd(self, axis: usize) -> usize {
        self.d(axis) + 1
    }
}

/// `channels × steps × components × points`, points innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub steps: usize,
    pub layout: JetLayout,
    pub points: usize,
}

impl Shape {
    pub fn new(channels: usize, steps: usize, layout: JetLayout, points: usize) -> Self {
        Shape {
            channels,
            steps,
            layout,
            points,
        }
    }

    pub fn scalar() -> Self {
        Shape::new(1, 1, JetLayout::VALUE, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.steps * self.layout.len() * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: usize, s: usize, k: usize, p: usize) -> usize {
        ((c * self.steps + s) * self.layout.len() + k) * self.points + p
    }

    /// Stride of one `(channel, step)` block.
    fn block(&self) -> usize {
        self.layout.len() * self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Causal dilated convolution over steps, parameters read from the flat
/// parameter vector at the given offsets. Weights are `[cout][cin][kernel]`;
/// with `gain` set they are the direction `v` of `w = g·v/(‖v‖+ε)`, one
/// norm per output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub weight: usize,
    pub gain: Option<usize>,
    pub bias: Option<usize>,
}

impl ConvSpec {
    pub fn n_weights(&self) -> usize {
        self.cout * self.cin * self.kernel
    }
}

pub const WEIGHT_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sin,
    Cos,
}

impl Unary {
    /// `f, f', f'', f'''`.
    fn derivs(self, v: f64) -> [f64; 4] {
        match self {
            Unary::Tanh => {
                let t = v.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Unary::Sin => {
                let (s, c) = v.sin_cos();
                [s, c, -s, -c]
            }
            Unary::Cos => {
                let (s, c) = v.sin_cos();
                [c, -s, -c, s]
            }
        }
    }
}

enum Op {
    Constant,
    Param { offset: usize },
    Conv { x: Var, spec: ConvSpec, w: Vec<f64>, vnorm: Vec<f64> },
    FixedLinear { x: Var, matrix: Arc<Vec<f64>> },
    Unary { x: Var, f: Unary },
    Fourier { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, a: f64 },
    ChannelScale { x: Var, scales: Arc<Vec<f64>> },
    Contract { x: Var, coeffs: Vec<f64> },
    SumSquares { x: Var, weight: f64 },
    WeightedSum { terms: Vec<(Var, f64)> },
}

struct Node {
    op: Op,
    shape: Shape,
    value: Vec<f64>,
    needs_grad: bool,
}

/// Single-use record of one forward evaluation.
pub struct Tape<'a> {
    params: &'a [f64],
    nodes: Vec<Node>,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass of an elementwise function on one `(channel, step)` block.
fn unary_block(layout: JetLayout, n: usize, x: &[f64], y: &mut [f64], d: impl Fn(f64) -> [f64; 4]) {
    for p in 0..n {
        let [f, f1, f2, _] = d(x[p]);
        y[p] = f;
        if let Some(t) = layout.t() {
            y[t * n + p] = f1 * x[t * n + p];
        }
        for a in 0..layout.space {
            let (i, j) = (layout.d(a) * n + p, layout.dd(a) * n + p);
            y[i] = f1 * x[i];
            y[j] = f2 * x[i] * x[i] + f1 * x[j];
        }
    }
}

fn unary_block_back(
    layout: JetLayout,
    n: usize,
    x: &[f64],
    gy: &[f64],
    gx: &mut [f64],
    d: impl Fn(f64) -> [f64; 4],
) {
    for p in 0..n {
        let [_, f1, f2, f3] = d(x[p]);
        let mut gv = gy[p] * f1;
        if let Some(t) = layout.t() {
            let i = t * n + p;
            gv += gy[i] * f2 * x[i];
            gx[i] += gy[i] * f1;
        }
        for a in 0..layout.space {
            let (i, j) = (layout.d(a) * n + p, layout.dd(a) * n + p);
            gv += gy[i] * f2 * x[i] + gy[j] * (f3 * x[i] * x[i] + f2 * x[j]);
            gx[i] += gy[i] * f1 + 2.0 * gy[j] * f2 * x[i];
            gx[j] += gy[j] * f1;
        }
        gx[p] += gv;
    }
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [f64]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &[f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Shape, value: Vec<f64>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(Error::NonScalarLoss(n.value.len()));
        }
        Ok(n.value[0])
    }

    /// Data that carries no parameter dependence.
    pub fn constant(&mut self, shape: Shape, data: Vec<f64>) -> Result<Var> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "constant of {} entries for shape {shape:?}",
                data.len()
            )));
        }
        Ok(self.push(Op::Constant, shape, data, false))
    }

    /// The parameters `offset..offset+shape.len()` as a tensor.
    pub fn param(&mut self, offset: usize, shape: Shape) -> Result<Var> {
        let end = offset + shape.len();
        if end > self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameter slice {offset}..{end} exceeds {} parameters",
                self.params.len()
            )));
        }
        let data = self.params[offset..end].to_vec();
        Ok(self.push(Op::Param { offset }, shape, data, true))
    }

    pub fn conv(&mut self, x: Var, spec: ConvSpec) -> Result<Var> {
        let xs = self.shape(x);
        if xs.channels != spec.cin {
            return Err(Error::ShapeMismatch(format!(
                "convolution expects {} input channels, got {}",
                spec.cin, xs.channels
            )));
        }
        if spec.kernel == 0 || spec.dilation == 0 || xs.steps == 0 {
            return Err(Error::InvalidArgument(
                "convolution needs kernel, dilation and sequence length >= 1".into(),
            ));
        }
        let nw = spec.n_weights();
        let per_out = spec.cin * spec.kernel;
        let v = &self.params[spec.weight..spec.weight + nw];
        let mut w = v.to_vec();
        let mut vnorm = Vec::new();
        if let Some(g) = spec.gain {
            for co in 0..spec.cout {
                let row = &v[co * per_out..(co + 1) * per_out];
                let nrm = dot(row, row).sqrt();
                let scale = self.params[g + co] / (nrm + WEIGHT_NORM_EPS);
                for (wi, vi) in w[co * per_out..(co + 1) * per_out].iter_mut().zip(row) {
                    *wi = scale * vi;
                }
                vnorm.push(nrm);
            }
        }
        let ys = Shape { channels: spec.cout, ..xs };
        let blk = xs.block();
        let steps = xs.steps;
        let mut y = vec![0.0; ys.len()];
        let xv = &self.node(x).value;
        for co in 0..spec.cout {
            for s in 0..steps {
                let out = &mut y[(co * steps + s) * blk..(co * steps + s + 1) * blk];
                for ci in 0..spec.cin {
                    for i in 0..spec.kernel {
                        let lag = i * spec.dilation;
                        if lag > s {
                            break;
                        }
                        let wi = w[(co * spec.cin + ci) * spec.kernel + i];
                        let src = (ci * steps + s - lag) * blk;
                        axpy(out, wi, &xv[src..src + blk]);
                    }
                }
                if let Some(b) = spec.bias {
                    let bv = self.params[b + co];
                    for o in &mut out[..xs.points] {
                        *o += bv;
                    }
                }
            }
        }
        Ok(self.push(Op::Conv { x, spec, w, vnorm }, ys, y, true))
    }

    /// Frozen linear map over channels, `matrix` is `[cout][cin]`.
    pub fn fixed_linear(&mut self, x: Var, matrix: Arc<Vec<f64>>, cout: usize) -> Result<Var> {
        let xs = self.shape(x);
        if matrix.len() != cout * xs.channels {
            return Err(Error::ShapeMismatch(format!(
                "fixed matrix of {} entries for {}→{cout} channels",
                matrix.len(),
                xs.channels
            )));
        }
        let ys = Shape { channels: cout, ..xs };
        let cb = xs.steps * xs.block();
        let mut y = vec![0.0; ys.len()];
        let xv = &self.node(x).value;
        for co in 0..cout {
            for ci in 0..xs.channels {
                let m = matrix[co * xs.channels + ci];
                if m != 0.0 {
                    axpy(&mut y[co * cb..(co + 1) * cb], m, &xv[ci * cb..(ci + 1) * cb]);
                }
            }
        }
        let ng = self.node(x).needs_grad;
        Ok(self.push(Op::FixedLinear { x, matrix }, ys, y, ng))
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        let xs = self.shape(x);
        let blk = xs.block();
        let mut y = vec![0.0; xs.len()];
        let xv = &self.node(x).value;
        for (yb, xb) in y.chunks_mut(blk).zip(xv.chunks(blk)) {
            unary_block(xs.layout, xs.points, xb, yb, |v| f.derivs(v));
        }
        let ng = self.node(x).needs_grad;
        self.push(Op::Unary { x, f }, xs, y, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    /// Primitive looked up by name.
    pub fn apply(&mut self, name: &str, x: Var) -> Result<Var> {
        let f = match name {
            "tanh" => Unary::Tanh,
            "sin" => Unary::Sin,
            "cos" => Unary::Cos,
            other => return Err(Error::UnsupportedPrimitive(other.to_string())),
        };
        Ok(self.unary(x, f))
    }

    /// Channel `j` becomes channels `2j, 2j+1` = `cos 2πz_j, sin 2πz_j`.
    pub fn fourier(&mut self, x: Var) -> Var {
        let xs = self.shape(x);
        let ys = Shape { channels: 2 * xs.channels, ..xs };
        let blk = xs.block();
        let mut y = vec![0.0; ys.len()];
        let xv = &self.node(x).value;
        let w = std::f64::consts::TAU;
        for c in 0..xs.channels {
            for s in 0..xs.steps {
                let xb = &xv[(c * xs.steps + s) * blk..][..blk];
                let yc = (2 * c * xs.steps + s) * blk;
                let ysn = ((2 * c + 1) * xs.steps + s) * blk;
                unary_block(xs.layout, xs.points, xb, &mut y[yc..yc + blk], |v| fourier_cos(w, v));
                unary_block(xs.layout, xs.points, xb, &mut y[ysn..ysn + blk], |v| fourier_sin(w, v));
            }
        }
        let ng = self.node(x).needs_grad;
        self.push(Op::Fourier { x }, ys, y, ng)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape(a, b)?;
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(p, q)| p + q)
            .collect();
        let ng = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::Add { a, b }, s, y, ng))
    }

    /// Jet product (Leibniz rule per component).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sh = self.same_shape(a, b)?;
        let (l, n, blk) = (sh.layout, sh.points, sh.block());
        let (av, bv) = (self.value(a), self.value(b));
        let mut y = vec![0.0; sh.len()];
        for ((yb, ab), bb) in y.chunks_mut(blk).zip(av.chunks(blk)).zip(bv.chunks(blk)) {
            for p in 0..n {
                let (a0, b0) = (ab[p], bb[p]);
                yb[p] = a0 * b0;
                if let Some(t) = l.t() {
                    let i = t * n + p;
                    yb[i] = ab[i] * b0 + a0 * bb[i];
                }
                for ax in 0..l.space {
                    let (i, j) = (l.d(ax) * n + p, l.dd(ax) * n + p);
                    yb[i] = ab[i] * b0 + a0 * bb[i];
                    yb[j] = ab[j] * b0 + 2.0 * ab[i] * bb[i] + a0 * bb[j];
                }
            }
        }
        let ng = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::Mul { a, b }, sh, y, ng))
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        let s = self.shape(x);
        let y = self.value(x).iter().map(|v| a * v).collect();
        let ng = self.node(x).needs_grad;
        self.push(Op::Scale { x, a }, s, y, ng)
    }

    /// Multiplies every entry of channel `c` by `scales[c]`.
    pub fn channel_scale(&mut self, x: Var, scales: Arc<Vec<f64>>) -> Result<Var> {
        let s = self.shape(x);
        if scales.len() != s.channels {
            return Err(Error::ShapeMismatch(format!(
                "{} channel scales for {} channels",
                scales.len(),
                s.channels
            )));
        }
        let cb = s.steps * s.block();
        let y = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| scales[i / cb] * v)
            .collect();
        let ng = self.node(x).needs_grad;
        Ok(self.push(Op::ChannelScale { x, scales }, s, y, ng))
    }

    /// Collapses the components of a single-channel jet into a value-only
    /// tensor: `y[s][p] = Σ_k coeffs[k][p] · x[s][k][p] + offset[s][p]`.
    pub fn contract(&mut self, x: Var, coeffs: Vec<f64>, offset: &[f64]) -> Result<Var> {
        let xs = self.shape(x);
        let (l, n) = (xs.layout.len(), xs.points);
        if xs.channels != 1 || coeffs.len() != l * n || offset.len() != xs.steps * n {
            return Err(Error::ShapeMismatch(format!(
                "contract of {xs:?} with {} coefficients and {} offsets",
                coeffs.len(),
                offset.len()
            )));
        }
        let xv = self.value(x);
        let mut y = offset.to_vec();
        for s in 0..xs.steps {
            for k in 0..l {
                let c = &coeffs[k * n..(k + 1) * n];
                let xb = &xv[(s * l + k) * n..(s * l + k + 1) * n];
                for ((yp, cp), xp) in y[s * n..(s + 1) * n].iter_mut().zip(c).zip(xb) {
                    *yp += cp * xp;
                }
            }
        }
        let ys = Shape::new(1, xs.steps, JetLayout::VALUE, n);
        let ng = self.node(x).needs_grad;
        Ok(self.push(Op::Contract { x, coeffs }, ys, y, ng))
    }

    /// `weight · Σ x²` over all entries.
    pub fn sum_squares(&mut self, x: Var, weight: f64) -> Var {
        let v = weight * dot(self.value(x), self.value(x));
        let ng = self.node(x).needs_grad;
        self.push(Op::SumSquares { x, weight }, Shape::scalar(), vec![v], ng)
    }

    /// `Σ w_i · s_i` of scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>) -> Result<Var> {
        let mut v = 0.0;
        let mut ng = false;
        for &(t, w) in &terms {
            v += w * self.scalar(t)?;
            ng |= self.node(t).needs_grad;
        }
        Ok(self.push(Op::WeightedSum { terms }, Shape::scalar(), vec![v], ng))
    }

    /// Reverse sweep from a scalar node; returns `∂loss/∂params`.
    pub fn backward(&self, loss: Var) -> Result<Vec<f64>> {
        self.scalar(loss)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];
        for id in (0..=loss.0).rev() {
            let gy = std::mem::take(&mut adj[id]);
            let node = &self.nodes[id];
            if gy.is_empty() || !node.needs_grad {
                continue;
            }
            self.back_node(node, &gy, &mut adj, &mut grad);
        }
        Ok(grad)
    }

    fn back_node(&self, node: &Node, gy: &[f64], adj: &mut [Vec<f64>], grad: &mut [f64]) {
        let sh = node.shape;
        let nodes = &self.nodes;
        let acc = |adj: &mut [Vec<f64>], v: Var| {
            if adj[v.0].is_empty() {
                adj[v.0] = vec![0.0; nodes[v.0].shape.len()];
            }
        };
        match &node.op {
            Op::Constant => {}
            Op::Param { offset } => axpy(&mut grad[*offset..*offset + gy.len()], 1.0, gy),
            Op::Conv { x, spec, w, vnorm } => {
                let xn = &self.nodes[x.0];
                let xs = xn.shape;
                let (blk, steps, np) = (xs.block(), xs.steps, xs.points);
                let mut gw = vec![0.0; w.len()];
                let mut gx = if xn.needs_grad {
                    acc(adj, *x);
                    Some(&mut adj[x.0])
                } else {
                    None
                };
                for co in 0..spec.cout {
                    for s in 0..steps {
                        let go = &gy[(co * steps + s) * blk..(co * steps + s + 1) * blk];
                        if let Some(b) = spec.bias {
                            grad[b + co] += go[..np].iter().sum::<f64>();
                        }
                        for ci in 0..spec.cin {
                            for i in 0..spec.kernel {
                                let lag = i * spec.dilation;
                                if lag > s {
                                    break;
                                }
                                let wi = (co * spec.cin + ci) * spec.kernel + i;
                                let src = (ci * steps + s - lag) * blk;
                                gw[wi] += dot(go, &xn.value[src..src + blk]);
                                if let Some(gx) = gx.as_deref_mut() {
                                    axpy(&mut gx[src..src + blk], w[wi], go);
                                }
                            }
                        }
                    }
                }
                let per_out = spec.cin * spec.kernel;
                match spec.gain {
                    None => axpy(&mut grad[spec.weight..spec.weight + gw.len()], 1.0, &gw),
                    Some(g) => {
                        for co in 0..spec.cout {
                            let v = &self.params[spec.weight + co * per_out..][..per_out];
                            let gwr = &gw[co * per_out..(co + 1) * per_out];
                            let nrm = vnorm[co];
                            let den = nrm + WEIGHT_NORM_EPS;
                            let gain = self.params[g + co];
                            let gv_dot = dot(gwr, v);
                            grad[g + co] += gv_dot / den;
                            let radial = if nrm > 0.0 { gain * gv_dot / (den * den * nrm) } else { 0.0 };
                            let out = &mut grad[spec.weight + co * per_out..][..per_out];
                            for ((o, gwi), vi) in out.iter_mut().zip(gwr).zip(v) {
                                *o += gain / den * gwi - radial * vi;
                            }
                        }
                    }
                }
            }
            Op::FixedLinear { x, matrix } => {
                let xs = self.nodes[x.0].shape;
                let cb = xs.steps * xs.block();
                acc(adj, *x);
                let gx = &mut adj[x.0];
                for co in 0..sh.channels {
                    for ci in 0..xs.channels {
                        let m = matrix[co * xs.channels + ci];
                        if m != 0.0 {
                            axpy(&mut gx[ci * cb..(ci + 1) * cb], m, &gy[co * cb..(co + 1) * cb]);
                        }
                    }
                }
            }
            Op::Unary { x, f } => {
                let xn = &self.nodes[x.0];
                let blk = sh.block();
                acc(adj, *x);
let gx = &mut adj[x.0];
                for ((gxb, xb), gyb) in gx.chunks_mut(blk).zip(xn.value.chunks(blk)).zip(gy.chunks(blk)) {
                    unary_block_back(sh.layout, sh.points, xb, gyb, gxb, |v| f.derivs(v));
                }
            }
            Op::Fourier { x } => {
                let xn = &self.nodes[x.0];
                let xs = xn.shape;
                let blk = xs.block();
                acc(adj, *x);
let gx = &mut adj[x.0];
                let w = std::f64::consts::TAU;
                for c in 0..xs.channels {
                    for s in 0..xs.steps {
                        let off = (c * xs.steps + s) * blk;
                        let xb = &xn.value[off..off + blk];
                        let gxb = &mut gx[off..off + blk];
                        let yc = (2 * c * xs.steps + s) * blk;
                        let ysn = ((2 * c + 1) * xs.steps + s) * blk;
                        unary_block_back(xs.layout, xs.points, xb, &gy[yc..yc + blk], gxb, |v| fourier_cos(w, v));
                        unary_block_back(xs.layout, xs.points, xb, &gy[ysn..ysn + blk], gxb, |v| fourier_sin(w, v));
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if self.nodes[v.0].needs_grad {
                        acc(adj, *v);
let g = &mut adj[v.0];
                        axpy(g, 1.0, gy);
                    }
                }
            }
            Op::Mul { a, b } => {
                let (l, n, blk) = (sh.layout, sh.points, sh.block());
                for (this, other) in [(a, b), (b, a)] {
                    if !self.nodes[this.0].needs_grad {
                        continue;
                    }
                    let ov = &self.nodes[other.0].value;
                    acc(adj, *this);
let g = &mut adj[this.0];
                    for ((gb, ob), gyb) in g.chunks_mut(blk).zip(ov.chunks(blk)).zip(gy.chunks(blk)) {
                        for p in 0..n {
                            let o0 = ob[p];
                            let mut g0 = gyb[p] * o0;
                            if let Some(t) = l.t() {
                                let i = t * n + p;
                                g0 += gyb[i] * ob[i];
                                gb[i] += gyb[i] * o0;
                            }
                            for ax in 0..l.space {
                                let (i, j) = (l.d(ax) * n + p, l.dd(ax) * n + p);
                                g0 += gyb[i] * ob[i] + gyb[j] * ob[j];
                                gb[i] += gyb[i] * o0 + 2.0 * gyb[j] * ob[i];
                                gb[j] += gyb[j] * o0;
                            }
                            gb[p] += g0;
                        }
                    }
                }
            }
            Op::Scale { x, a } => {
                acc(adj, *x);
let g = &mut adj[x.0];
                axpy(g, *a, gy);
            }
            Op::ChannelScale { x, scales } => {
                let cb = sh.steps * sh.block();
                acc(adj, *x);
let g = &mut adj[x.0];
                for (i, (gi, gyi)) in g.iter_mut().zip(gy).enumerate() {
                    *gi += scales[i / cb] * gyi;
                }
            }
            Op::Contract { x, coeffs } => {
                let xs = self.nodes[x.0].shape;
                let (l, n) = (xs.layout.len(), xs.points);
                acc(adj, *x);
let g = &mut adj[x.0];
                for s in 0..xs.steps {
                    let gys = &gy[s * n..(s + 1) * n];
                    for k in 0..l {
                        let c = &coeffs[k * n..(k + 1) * n];
                        let gb = &mut g[(s * l + k) * n..(s * l + k + 1) * n];
                        for ((gp, cp), yp) in gb.iter_mut().zip(c).zip(gys) {
                            *gp += cp * yp;
                        }
                    }
                }
            }
            Op::SumSquares { x, weight } => {
                let xv = &self.nodes[x.0].value;
                acc(adj, *x);
let g = &mut adj[x.0];
                axpy(g, 2.0 * weight * gy[0], xv);
            }
            Op::WeightedSum { terms } => {
                for &(t, w) in terms {
                    if self.nodes[t.0].needs_grad {
                        acc(adj, t);
let g = &mut adj[t.0];
                        g[0] += w * gy[0];
                    }
                }
            }
        }
    }
}

fn fourier_cos(w: f64, v: f64) -> [f64; 4] {
    let (s, c) = (w * v).sin_cos();
    [c, -w * s, -w * w * c, w * w * w * s]
}

fn fourier_sin(w: f64, v: f64) -> [f64; 4] {
    let (s, c) = (w * v).sin_cos();
    [s, w * c, -w * w * s, -w * w * w * c]
}
