use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous run of parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// Parameters of one convolution or dense layer. Weights are stored
/// `[cout][cin][kernel]`; with weight normalization `weight` holds the
/// directions and `gain` the per-filter magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub weight: Span,
    pub gain: Option<Span>,
    pub bias: Option<Span>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub layers: Vec<LayerSlice>,
    pub len: usize,
}

impl ParamLayout {
    /// Appends a layer and returns its index.
    pub fn push(
        &mut self,
        name: String,
        cin: usize,
        cout: usize,
        kernel: usize,
        dilation: usize,
        weight_norm: bool,
        bias: bool,
    ) -> Result<usize> {
        if cin == 0 || cout == 0 || kernel == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer `{name}` has a zero dimension ({cin}→{cout}, kernel {kernel})"
            )));
        }
        let mut take = |n: usize| {
            let s = Span { start: self.len, len: n };
            self.len += n;
            s
        };
        let weight = take(cout * cin * kernel);
        let gain = weight_norm.then(|| take(cout));
        let bias = bias.then(|| take(cout));
        self.layers.push(LayerSlice {
            name,
            cin,
            cout,
            kernel,
            dilation,
            weight,
            gain,
            bias,
        });
        Ok(self.layers.len() - 1)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSlice> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Filter slices for direction normalization: each output channel's
    /// weight block is one filter; every gain or bias vector is one filter.
    pub fn filters(&self) -> Vec<Span> {
        let mut out = Vec::new();
        for l in &self.layers {
            let per = l.cin * l.kernel;
            for co in 0..l.cout {
                out.push(Span {
                    start: l.weight.start + co * per,
                    len: per,
                });
            }
            out.extend(l.gain);
            out.extend(l.bias);
        }
        out
    }
}

/// Flat trainable parameters with their layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        ParamVector {
            values: vec![0.0; layout.len],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn unflatten(layout: &ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a layout of {} parameters",
                values.len(),
                layout.len
            )));
        }
        Ok(ParamVector {
            values,
            layout: layout.clone(),
        })
    }

    pub fn slice(&self, s: Span) -> &[f64] {
        &self.values[s.range()]
    }

    pub fn slice_mut(&mut self, s: Span) -> &mut [f64] {
        &mut self.values[s.range()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut l = ParamLayout::default();
        l.push("a".into(), 2, 3, 4, 1, true, true).unwrap();
        l.push("b".into(), 3, 1, 1, 1, false, true).unwrap();
        assert_eq!(l.len, 24 + 3 + 3 + 3 + 1);
        assert_eq!(l.layers[1].weight.start, 30);
        let f = l.filters();
        assert_eq!(f.len(), 3 + 2 + 1 + 1);
        assert_eq!(f.iter().map(|s| s.len).sum::<usize>(), l.len);
    }

    #[test]
    fn zero_width_rejected() {
        let mut l = ParamLayout::default();
        assert!(l.push("z".into(), 2, 0, 3, 1, false, false).is_err());
    }

    #[test]
    fn unflatten_round_trip() {
        let mut l = ParamLayout::default();
        l.push("a".into(), 1, 2, 1, 1, false, true).unwrap();
        let p = ParamVector::unflatten(&l, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(ParamVector::unflatten(&l, p.flatten()).unwrap(), p);
        assert!(ParamVector::unflatten(&l, vec![1.0]).is_err());
    }
}
