//! Input derivatives by truncated Taylor propagation, parameter gradients by
//! a reverse sweep over the recorded forward computation.

mod tape;
mod taylor;

pub use tape::{ConvSpec, JetLayout, Shape, Tape, Unary, Var, WEIGHT_NORM_EPS};
pub use taylor::{eval_with_input_derivs, InputDerivatives, TaylorValue, MAX_DIRECTIONS};

use crate::error::Result;

/// Value and parameter gradient of a scalar loss recorded by `loss_fn`.
pub fn grad<F>(loss_fn: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let loss = loss_fn(&mut tape)?;
    let value = tape.scalar(loss)?;
    Ok((value, tape.backward(loss)?))
}
