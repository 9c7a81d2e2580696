//! Temporal convolutional network, MLP, random Fourier features, Dirichlet
//! lifting and parameter handling.

mod inputs;
mod lift;
mod params;

use std::ops::{Add, Mul};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvSpec, Tape, TaylorValue, Var};
use crate::error::{Error, Result};

pub use inputs::{InputSpec, Normalization, SequenceBatch};
pub use lift::{dirichlet_lift, Lift, SpaceJet};
pub use params::{LayerSlice, ParamLayout, ParamVector, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub n_filters: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    #[serde(default = "one")]
    pub n_stacks: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "yes")]
    pub weight_norm: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl TcnConfig {
    /// 16 filters, kernel 11, dilations 1, 2, 4, 8, one stack.
    pub fn reference() -> Self {
        TcnConfig {
            n_filters: 16,
            kernel_size: 11,
            dilations: vec![1, 2, 4, 8],
            n_stacks: 1,
            dropout: 0.0,
            weight_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_filters == 0 || self.kernel_size == 0 || self.n_stacks == 0 || self.dilations.is_empty() {
            return Err(Error::Config(
                "TCN needs positive filters, kernel size, stacks and at least one dilation".into(),
            ));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("TCN dilations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Steps of history seen by one output: `1 + 2(k−1)·N_stack·Σd`.
pub fn receptive_field(config: &TcnConfig) -> usize {
    1 + 2 * (config.kernel_size - 1) * config.n_stacks * config.dilations.iter().sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden tanh layer widths.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffConfig {
    pub n_frequencies: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Tcn(TcnConfig),
    Mlp(MlpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub rff: Option<RffConfig>,
}

/// Frozen random Fourier feature map; `h` is `[m][n_in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rff {
    pub n_in: usize,
    pub m: usize,
    pub h: Vec<f64>,
}

impl Rff {
    /// Draws `h ~ N(0, σ²)` once from the configured seed.
    pub fn sample(config: &RffConfig, n_in: usize) -> Result<Self> {
        if config.n_frequencies == 0 || !(config.sigma >= 0.0) {
            return Err(Error::Config("RFF needs m ≥ 1 and σ ≥ 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dist = Normal::new(0.0, config.sigma).map_err(|e| Error::Config(e.to_string()))?;
        let h = (0..config.n_frequencies * n_in).map(|_| dist.sample(&mut rng)).collect();
        Ok(Rff {
            n_in,
            m: config.n_frequencies,
            h,
        })
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        rff_map(x, &self.h, &vec![1.0; self.m])
    }
}

/// `[a_i cos(2π h_iᵀx), a_i sin(2π h_iᵀx)]` for every frequency `i`.
pub fn rff_map(x: &[f64], h: &[f64], amplitudes: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(2 * amplitudes.len());
    for (i, a) in amplitudes.iter().enumerate() {
        let z: f64 = h[i * n..(i + 1) * n].iter().zip(x).map(|(h, x)| h * x).sum();
        let (s, c) = (std::f64::consts::TAU * z).sin_cos();
        out.push(a * c);
        out.push(a * s);
    }
    out
}

/// `C_d(s) = Σ_i F(i)·S_{s−d·i}` with zero padding before the sequence start.
pub fn dilated_causal_conv(seq: &[f64], filter: &[f64], dilation: usize) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if filter.is_empty() || dilation == 0 {
        return Err(Error::InvalidArgument("kernel length and dilation must be ≥ 1".into()));
    }
    Ok((0..seq.len())
        .map(|s| {
            filter
                .iter()
                .enumerate()
                .take_while(|(i, _)| i * dilation <= s)
                .map(|(i, f)| f * seq[s - i * dilation])
                .sum()
        })
        .collect())
}

/// Parameters of one residual block.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub adapter: Option<ConvSpec>,
    /// Per-channel dropout scales after each activation.
    pub dropout: Option<[Arc<Vec<f64>>; 2]>,
}

/// `[conv → tanh → dropout] × 2` plus the input, passed through a 1×1
/// adapter when channel counts differ.
pub fn tcn_residual_block(tape: &mut Tape, x: Var, block: &BlockParams) -> Result<Var> {
    let cin = tape.shape(x).channels;
    let mut h = tape.conv(x, block.conv1)?;
    h = tape.tanh(h);
    if let Some(d) = &block.dropout {
        h = tape.channel_scale(h, d[0].clone())?;
    }
    h = tape.conv(h, block.conv2)?;
    h = tape.tanh(h);
    if let Some(d) = &block.dropout {
        h = tape.channel_scale(h, d[1].clone())?;
    }
    let skip = match block.adapter {
        Some(a) => tape.conv(x, a)?,
        None if cin == block.conv2.cout => x,
        None => {
            return Err(Error::ShapeMismatch(format!(
                "residual block maps {cin} to {} channels without a 1×1 adapter",
                block.conv2.cout
            )))
        }
    };
    tape.add(h, skip)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockLayers {
    conv1: usize,
    conv2: usize,
    adapter: Option<usize>,
}

/// A network together with its parameter layout and frozen features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    pub inputs: InputSpec,
    pub layout: ParamLayout,
    pub rff: Option<Rff>,
    blocks: Vec<BlockLayers>,
    dense: Vec<usize>,
}

fn spec_of(l: &LayerSlice) -> ConvSpec {
    ConvSpec {
        cin: l.cin,
        cout: l.cout,
        kernel: l.kernel,
        dilation: l.dilation,
        weight: l.weight.start,
        gain: l.gain.map(|g| g.start),
        bias: l.bias.map(|b| b.start),
    }
}

/// Scalar arithmetic shared by `f64` and [`TaylorValue`] for the reference
/// forward pass.
pub trait Scalar: Copy + Add<Output = Self> + Mul<Output = Self> {
    fn cst(v: f64) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

impl Scalar for TaylorValue {
    fn cst(v: f64) -> Self {
        TaylorValue::constant(v)
    }
    fn tanh(self) -> Self {
        TaylorValue::tanh(self)
    }
    fn sin(self) -> Self {
        TaylorValue::sin(self)
    }
    fn cos(self) -> Self {
        TaylorValue::cos(self)
    }
}

/// `x[channel][step]` through one convolution layer.
fn conv_scalar<S: Scalar>(params: &[f64], l: &LayerSlice, x: &[Vec<S>]) -> Vec<Vec<S>> {
    let steps = x[0].len();
    let per = l.cin * l.kernel;
    (0..l.cout)
        .map(|co| {
            let v = &params[l.weight.start + co * per..][..per];
            let scale = match l.gain {
                Some(g) => {
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    params[g.start + co] / (n + crate::autodiff::WEIGHT_NORM_EPS)
                }
                None => 1.0,
            };
            let b = l.bias.map_or(0.0, |b| params[b.start + co]);
            (0..steps)
                .map(|s| {
                    let mut acc = S::cst(b);
                    for ci in 0..l.cin {
                        for i in 0..l.kernel {
                            let lag = i * l.dilation;
                            if lag > s {
                                break;
                            }
                            acc = acc + x[ci][s - lag] * S::cst(scale * v[ci * l.kernel + i]);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn tanh_all<S: Scalar>(x: Vec<Vec<S>>) -> Vec<Vec<S>> {
    x.into_iter().map(|c| c.into_iter().map(S::tanh).collect()).collect()
}

impl Network {
    pub fn new(config: NetworkConfig, inputs: InputSpec) -> Result<Self> {
        let mut layout = ParamLayout::default();
        let mut blocks = Vec::new();
        let mut dense = Vec::new();
        let n_in = inputs.n_features();
        let mut rff = None;
        match &config.architecture {
            Architecture::Tcn(t) => {
                t.validate()?;
                let mut c = n_in;
                let mut b = 0;
                for _ in 0..t.n_stacks {
                    for &d in &t.dilations {
                        let conv1 = layout.push(format!("block{b}.conv1"), c, t.n_filters, t.kernel_size, d, t.weight_norm, true)?;
                        let conv2 = layout.push(format!("block{b}.conv2"), t.n_filters, t.n_filters, t.kernel_size, d, t.weight_norm, true)?;
                        let adapter = if c != t.n_filters {
                            Some(layout.push(format!("block{b}.adapter"), c, t.n_filters, 1, 1, false, true)?)
                        } else {
                            None
                        };
                        blocks.push(BlockLayers { conv1, conv2, adapter });
                        c = t.n_filters;
                        b += 1;
                    }
                }
                let head_in = match &config.rff {
                    Some(r) => {
                        let f = Rff::sample(r, c)?;
                        let w = 2 * f.m;
                        rff = Some(f);
                        w
                    }
                    None => c,
                };
                dense.push(layout.push("head".into(), head_in, 1, 1, 1, false, true)?);
            }
            Architecture::Mlp(m) => {
                if m.hidden.is_empty() {
                    return Err(Error::Config("MLP needs at least one hidden layer".into()));
                }
                let mut c = match &config.rff {
                    Some(r) => {
                        let f = Rff::sample(r, n_in)?;
                        let w = 2 * f.m;
                        rff = Some(f);
                        w
                    }
                    None => n_in,
                };
                for (i, &w) in m.hidden.iter().enumerate() {
                    dense.push(layout.push(format!("layer{i}"), c, w, 1, 1, false, true)?);
                    c = w;
                }
                dense.push(layout.push("output".into(), c, 1, 1, 1, false, true)?);
            }
        }
        Ok(Network {
            config,
            inputs,
            layout,
            rff,
            blocks,
            dense,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }

    pub fn is_tcn(&self) -> bool {
        matches!(self.config.architecture, Architecture::Tcn(_))
    }

    fn dropout_rate(&self) -> f64 {
        match &self.config.architecture {
            Architecture::Tcn(t) => t.dropout,
            Architecture::Mlp(_) => 0.0,
        }
    }

    /// Residual block parameters; dropout masks (inverted scaling, one
    /// Bernoulli draw per channel) are included when `dropout_seed` is set
    /// and the rate is positive.
    pub fn block_params(&self, dropout_seed: Option<u64>) -> Vec<BlockParams> {
        let rate = self.dropout_rate();
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        self.blocks
            .iter()
            .map(|b| {
                let l1 = &self.layout.layers[b.conv1];
                let dropout = match rng.as_mut() {
                    Some(r) if rate > 0.0 => {
                        let mut mask = || {
                            Arc::new(
                                (0..l1.cout)
                                    .map(|_| if r.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
                                    .collect(),
                            )
                        };
                        Some([mask(), mask()])
                    }
                    _ => None,
                };
                BlockParams {
                    conv1: spec_of(l1),
                    conv2: spec_of(&self.layout.layers[b.conv2]),
                    adapter: b.adapter.map(|a| spec_of(&self.layout.layers[a])),
                    dropout,
                }
            })
            .collect()
    }

    fn fourier_features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &self.rff {
            Some(f) => {
                let z = tape.fixed_linear(x, Arc::new(f.h.clone()), f.m)?;
                Ok(tape.fourier(z))
            }
            None => Ok(x),
        }
    }

    /// Raw output `T̃` (one channel) for an input jet tensor.
    pub fn forward(&self, tape: &mut Tape, x: Var, dropout_seed: Option<u64>) -> Result<Var> {
        if tape.shape(x).channels != self.inputs.n_features() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} input features, got {}",
                self.inputs.n_features(),
                tape.shape(x).channels
            )));
        }
        if tape.params().len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "tape holds {} parameters, network has {}",
                tape.params().len(),
                self.n_params()
            )));
        }
        match &self.config.architecture {
            Architecture::Tcn(_) => {
                let mut h = x;
                for b in self.block_params(dropout_seed) {
                    h = tcn_residual_block(tape, h, &b)?;
                }
                let h = self.fourier_features(tape, h)?;
                tape.conv(h, spec_of(&self.layout.layers[self.dense[0]]))
            }
            Architecture::Mlp(_) => {
                let mut h = self.fourier_features(tape, x)?;
                let last = self.dense.len() - 1;
                for (i, &l) in self.dense.iter().enumerate() {
                    h = tape.conv(h, spec_of(&self.layout.layers[l]))?;
                    if i < last {
                        h = tape.tanh(h);
                    }
                }
                Ok(h)
            }
        }
    }

    fn rff_scalar<S: Scalar>(&self, x: Vec<Vec<S>>) -> Vec<Vec<S>> {
        let Some(f) = &self.rff else { return x };
        let steps = x[0].len();
        let mut out = Vec::with_capacity(2 * f.m);
        for i in 0..f.m {
            let z: Vec<S> = (0..steps)
                .map(|s| {
                    (0..f.n_in).fold(S::cst(0.0), |acc, c| acc + x[c][s] * S::cst(std::f64::consts::TAU * f.h[i * f.n_in + c]))
                })
                .collect();
            out.push(z.iter().map(|v| v.cos()).collect());
            out.push(z.iter().map(|v| v.sin()).collect());
        }
        out
    }

    /// Straightforward per-point evaluation used as an independent check of
    /// the tape. `seq[step][feature]`; returns `T̃` per step. Dropout is off.
    pub fn forward_scalar<S: Scalar>(&self, params: &[f64], seq: &[Vec<S>]) -> Result<Vec<S>> {
        if seq.is_empty() || seq.iter().any(|r| r.len() != self.inputs.n_features()) {
            return Err(Error::ShapeMismatch("sequence shape does not match network inputs".into()));
        }
        let layers = &self.layout.layers;
        let mut h: Vec<Vec<S>> = (0..self.inputs.n_features())
            .map(|f| seq.iter().map(|r| r[f]).collect())
            .collect();
        match &self.config.architecture {
            Architecture::Tcn(_) => {
                for b in &self.blocks {
                    let m = tanh_all(conv_scalar(params, &layers[b.conv1], &h));
                    let m = tanh_all(conv_scalar(params, &layers[b.conv2], &m));
                    let skip = match b.adapter {
                        Some(a) => conv_scalar(params, &layers[a], &h),
                        None => h,
                    };
                    h = m
                        .into_iter()
                        .zip(skip)
                        .map(|(a, b)| a.into_iter().zip(b).map(|(p, q)| p + q).collect())
                        .collect();
                }
                h = self.rff_scalar(h);
                h = conv_scalar(params, &layers[self.dense[0]], &h);
            }
            Architecture::Mlp(_) => {
                h = self.rff_scalar(h);
                let last = self.dense.len() - 1;
                for (i, &l) in self.dense.iter().enumerate() {
                    h = conv_scalar(params, &layers[l], &h);
                    if i < last {
                        h = tanh_all(h);
                    }
                }
            }
        }
        Ok(h.swap_remove(0))
    }
}

/// Glorot-scaled initialization. Weight-normalized directions are unit
/// vectors and the gains carry the Glorot norm; biases start at zero.
pub fn init_params(network: &Network, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamVector::zeros(network.layout.clone());
    for l in &network.layout.layers {
        let fan_in = (l.cin * l.kernel) as f64;
        let fan_out = (l.cout * l.kernel) as f64;
        let var = 2.0 / (fan_in + fan_out);
        let per = l.cin * l.kernel;
        for co in 0..l.cout {
            let row = &mut p.values[l.weight.start + co * per..][..per];
            for w in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z;
            }
            match l.gain {
                Some(g) => {
                    let n = row.iter().map(|a| a * a).sum::<f64>().sqrt();
                    row.iter_mut().for_each(|w| *w /= n);
                    p.values[g.start + co] = (fan_in * var).sqrt();
                }
                None => row.iter_mut().for_each(|w| *w *= var.sqrt()),
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{JetLayout, Shape};

    fn tcn(filters: usize, k: usize, d: Vec<usize>) -> Network {
        let cfg = NetworkConfig {
            architecture: Architecture::Tcn(TcnConfig {
                n_filters: filters,
                kernel_size: k,
                dilations: d,
                n_stacks: 1,
                dropout: 0.0,
                weight_norm: true,
            }),
            rff: Some(RffConfig { n_frequencies: 3, sigma: 0.5, seed: 1 }),
        };
        Network::new(cfg, InputSpec { time: true, dim: 1 }).unwrap()
    }

    #[test]
    fn receptive_fields() {
        let mut c = TcnConfig::reference();
        assert_eq!(receptive_field(&c), 301);
        c.kernel_size = 1;
        assert_eq!(receptive_field(&c), 1);
        c.kernel_size = 3;
        c.dilations = vec![1, 2, 4];
        assert_eq!(receptive_field(&c), 29);
    }

    #[test]
    fn conv_oracles() {
        assert_eq!(dilated_causal_conv(&[1., 2., 3., 4., 5.], &[1., 1.], 2).unwrap(), vec![1., 2., 4., 6., 8.]);
        assert_eq!(dilated_causal_conv(&[1., 0., 0., 0.], &[1., 1., 1.], 1).unwrap(), vec![1., 1., 1., 0.]);
        assert_eq!(dilated_causal_conv(&[2., -3.], &[1.], 7).unwrap(), vec![2., -3.]);
        assert!(dilated_causal_conv(&[], &[1.], 1).is_err());
    }

    #[test]
    fn rff_examples() {
        let f = rff_map(&[0.3], &[0.0], &[1.0]);
        assert_eq!(f, vec![1.0, 0.0]);
        let f = rff_map(&[0.5], &[1.0], &[1.0]);
        assert!((f[0] + 1.0).abs() < 1e-15 && f[1].abs() < 1e-15);
        let f = rff_map(&[0.2, -1.3], &[0.4, 1.1, -0.7, 2.0], &[1.0, 1.0]);
        assert!((f[0] * f[0] + f[1] * f[1] - 1.0).abs() < 1e-15);
        assert!((f[2] * f[2] + f[3] * f[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_main_path_is_pure_skip() {
        let params = vec![0.0; 2 * 4 + 2 * 2 + 2];
        let conv = |w| ConvSpec { cin: 1, cout: 1, kernel: 2, dilation: 1, weight: w, gain: None, bias: None };
        let mut t = Tape::new(&params);
        let x = t.constant(Shape::new(1, 3, JetLayout::VALUE, 1), vec![0.5, -1.0, 2.0]).unwrap();
        let b = BlockParams { conv1: conv(0), conv2: conv(2), adapter: None, dropout: None };
        let y = tcn_residual_block(&mut t, x, &b).unwrap();
        assert_eq!(t.value(y), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn adapter_scales_input() {
        let params = vec![0.0, 0.0, 0.0, 0.0, 3.0];
        let conv = |w, k| ConvSpec { cin: 1, cout: 1, kernel: k, dilation: 1, weight: w, gain: None, bias: None };
        let mut t = Tape::new(&params);
        let x = t.constant(Shape::new(1, 2, JetLayout::VALUE, 1), vec![1.0, -2.0]).unwrap();
        let b = BlockParams { conv1: conv(0, 2), conv2: conv(2, 2), adapter: Some(conv(4, 1)), dropout: None };
        let y = tcn_residual_block(&mut t, x, &b).unwrap();
        assert_eq!(t.value(y), &[3.0, -6.0]);
    }

    #[test]
    fn missing_adapter_rejected() {
        let params = vec![0.0; 16];
        let mut t = Tape::new(&params);
        let x = t.constant(Shape::new(1, 2, JetLayout::VALUE, 1), vec![1.0, 1.0]).unwrap();
        let c1 = ConvSpec { cin: 1, cout: 2, kernel: 1, dilation: 1, weight: 0, gain: None, bias: None };
        let c2 = ConvSpec { cin: 2, cout: 2, kernel: 1, dilation: 1, weight: 2, gain: None, bias: None };
        let b = BlockParams { conv1: c1, conv2: c2, adapter: None, dropout: None };
        assert!(matches!(tcn_residual_block(&mut t, x, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn tape_and_scalar_forward_agree() {
        let net = tcn(3, 3, vec![1, 2]);
        let p = init_params(&net, 7);
        let times: Vec<f64> = (1..=6).map(|i| i as f64).collect();
        let norm = Normalization::fit(&times, &[1.0]);
        let pts = [[0.3, 0.0], [0.8, 0.0]];
        let rates = vec![vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.0], vec![0.5; 6]];
        let batch = SequenceBatch::new(net.inputs, norm, &times, &pts, &rates).unwrap();
        let mut t = Tape::new(&p.values);
        let (sh, d) = batch.jet(JetLayout::VALUE, 0, 2);
        let x = t.constant(sh, d).unwrap();
        let y = net.forward(&mut t, x, None).unwrap();
        for pi in 0..2 {
            let r = net.forward_scalar(&p.values, &batch.sequence(pi)).unwrap();
            for s in 0..6 {
                assert!((t.value(y)[s * 2 + pi] - r[s]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_unit_directions() {
        let net = tcn(4, 3, vec![1, 2]);
        let a = init_params(&net, 3);
        assert_eq!(a, init_params(&net, 3));
        assert_ne!(a, init_params(&net, 4));
        let l = net.layout.layer("block0.conv1").unwrap();
        let per = l.cin * l.kernel;
        for co in 0..l.cout {
            let row = &a.values[l.weight.start + co * per..][..per];
            assert!((row.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_width_layer_rejected() {
        let cfg = NetworkConfig {
            architecture: Architecture::Mlp(MlpConfig { hidden: vec![4, 0] }),
            rff: None,
        };
        assert!(Network::new(cfg, InputSpec { time: false, dim: 1 }).is_err());
    }
}
