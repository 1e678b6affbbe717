//! Differentiation engine.
//!
//! Input derivatives (up to second order in at most three coordinates) are
//! carried forward as [`ScalarJet2`] values; parameter gradients are
//! accumulated in reverse through the jet-valued network (see
//! [`crate::network::batch`]). [`loss_gradient`] is the checked entry point
//! optimizers use.

mod dual;
mod jet;

pub use dual::{vec, Dual, Real};
pub use jet::{hess_pair_index, hess_pairs, jet_components, tanh, ScalarJet2};

use crate::error::{Error, Result};

/// Gradient of a scalar loss with respect to every network parameter, in
/// the order of [`crate::network::ParameterVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradient {
    pub values: Vec<f64>,
}

impl ParameterGradient {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|g| !g.is_finite())
    }
}

/// A deterministic scalar function of a flat parameter vector that can
/// report its gradient.
pub trait Objective {
    /// Writes the gradient into `grad` (same length as `params`) and returns
    /// the loss.
    fn value_and_gradient(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    fn value_and_gradient(&mut self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        self(params, grad)
    }
}

/// Evaluates `objective` at `params`, rejecting non-finite results.
pub fn loss_gradient<O: Objective + ?Sized>(
    params: &[f64],
    objective: &mut O,
) -> Result<(f64, ParameterGradient)> {
    let mut grad = ParameterGradient::zeros(params.len());
    let loss = objective.value_and_gradient(params, &mut grad.values)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            what: "loss",
            index: 0,
        });
    }
    if let Some(index) = grad.first_non_finite() {
        return Err(Error::Divergence {
            what: "gradient entry",
            index,
        });
    }
    Ok((loss, grad))
}
