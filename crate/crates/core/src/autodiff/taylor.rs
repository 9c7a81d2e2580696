//! Scalar truncated-Taylor arithmetic in up to three seeded directions.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub const MAX_DIRECTIONS: usize = 3;

/// Value with its gradient and Hessian in `n ≤ 3` seeded directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorValue {
    pub value: f64,
    pub grad: [f64; MAX_DIRECTIONS],
    pub hess: [[f64; MAX_DIRECTIONS]; MAX_DIRECTIONS],
}

impl TaylorValue {
    pub fn constant(value: f64) -> Self {
        TaylorValue {
            value,
            grad: [0.0; MAX_DIRECTIONS],
            hess: [[0.0; MAX_DIRECTIONS]; MAX_DIRECTIONS],
        }
    }

    /// Independent variable seeded in direction `dir`.
    pub fn variable(value: f64, dir: usize) -> Self {
        let mut v = Self::constant(value);
        v.grad[dir] = 1.0;
        v
    }

    /// Applies a scalar function given `f, f', f''` at `self.value`.
    pub fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..MAX_DIRECTIONS {
            out.grad[i] = f1 * self.grad[i];
            for j in 0..MAX_DIRECTIONS {
                out.hess[i][j] = f2 * self.grad[i] * self.grad[j] + f1 * self.hess[i][j];
            }
        }
        out
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let d1 = 1.0 - t * t;
        self.chain(t, d1, -2.0 * t * d1)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.value))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(self, a: f64) -> Self {
        self.chain(a * self.value, a, 0.0)
    }

    /// Euclidean norm of a vector of values.
    pub fn norm(xs: &[TaylorValue]) -> Self {
        xs.iter()
            .fold(Self::constant(0.0), |acc, &x| acc + x * x)
            .sqrt()
    }

    /// `Σ w_i x_i + b`.
    pub fn affine(xs: &[TaylorValue], w: &[f64], b: f64) -> Self {
        xs.iter()
            .zip(w)
            .fold(Self::constant(b), |acc, (&x, &wi)| acc + x.scale(wi))
    }

    /// Causal dilated convolution `y_s = Σ_i f_i x_{s−d·i}`.
    pub fn conv1d(xs: &[TaylorValue], filter: &[f64], dilation: usize) -> Vec<Self> {
        (0..xs.len())
            .map(|s| {
                filter
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i * dilation <= s)
                    .fold(Self::constant(0.0), |acc, (i, &f)| acc + xs[s - i * dilation].scale(f))
            })
            .collect()
    }

    /// Unary primitive looked up by name.
    pub fn apply(self, name: &str) -> Result<Self> {
        Ok(match name {
            "tanh" => self.tanh(),
            "sin" => self.sin(),
            "cos" => self.cos(),
            "exp" => self.exp(),
            "sqrt" => self.sqrt(),
            "recip" => self.recip(),
            "neg" => -self,
            other => return Err(Error::UnsupportedPrimitive(other.to_string())),
        })
    }
}

impl Add for TaylorValue {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        out.value += o.value;
        for i in 0..MAX_DIRECTIONS {
            out.grad[i] += o.grad[i];
            for j in 0..MAX_DIRECTIONS {
                out.hess[i][j] += o.hess[i][j];
            }
        }
        out
    }
}

impl Neg for TaylorValue {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Sub for TaylorValue {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for TaylorValue {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.value * o.value);
        for i in 0..MAX_DIRECTIONS {
            out.grad[i] = self.grad[i] * o.value + self.value * o.grad[i];
            for j in 0..MAX_DIRECTIONS {
                out.hess[i][j] = self.hess[i][j] * o.value
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i]
                    + self.value * o.hess[i][j];
            }
        }
        out
    }
}

impl Div for TaylorValue {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

/// Value, first derivatives and Hessian of a function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDerivatives {
    pub value: f64,
    /// `first[i]` is the derivative along `seeded[i]`.
    pub first: Vec<f64>,
    /// Pure second derivatives along each seeded direction.
    pub second: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

/// Evaluates `f` at `inputs` with the inputs listed in `seeded` carried as
/// independent Taylor variables; all other inputs are constants.
pub fn eval_with_input_derivs<F>(f: F, inputs: &[f64], seeded: &[usize]) -> Result<InputDerivatives>
where
    F: Fn(&[TaylorValue]) -> Result<TaylorValue>,
{
    if seeded.len() > MAX_DIRECTIONS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_DIRECTIONS} seeded directions, got {}",
            seeded.len()
        )));
    }
    if let Some(&bad) = seeded.iter().find(|&&i| i >= inputs.len()) {
        return Err(Error::InvalidArgument(format!(
            "seeded input {bad} out of range for {} inputs",
            inputs.len()
        )));
    }
    let xs: Vec<TaylorValue> = inputs
        .iter()
        .enumerate()
        .map(|(i, &v)| match seeded.iter().position(|&s| s == i) {
            Some(dir) => TaylorValue::variable(v, dir),
            None => TaylorValue::constant(v),
        })
        .collect();
    let y = f(&xs)?;
    let n = seeded.len();
    Ok(InputDerivatives {
        value: y.value,
        first: y.grad[..n].to_vec(),
        second: (0..n).map(|i| y.hess[i][i]).collect(),
        hessian: (0..n).map(|i| y.hess[i][..n].to_vec()).collect(),
    })
}
