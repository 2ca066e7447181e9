//! Unconstraining bijections `ξ = f(θ)` with log-determinants of `f⁻¹`.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bijector {
    /// Real-valued parameters.
    Identity,
    /// Positive parameters: `ξ = ln θ`, `θ = exp ξ`.
    LogExp,
}

impl Bijector {
    /// Constrained to unconstrained.
    pub fn forward<S: Scalar>(self, theta: S) -> Result<S> {
        match self {
            Bijector::Identity => Ok(theta),
            Bijector::LogExp if theta > S::zero() => Ok(theta.ln()),
            Bijector::LogExp => Err(Error::Domain(format!(
                "log transform needs a positive value, got {theta}"
            ))),
        }
    }

    /// Unconstrained to constrained.
    pub fn inverse<S: Scalar>(self, xi: S) -> S {
        match self {
            Bijector::Identity => xi,
            Bijector::LogExp => xi.exp(),
        }
    }

    /// `ln |d f⁻¹ / dξ|` at `xi`.
    pub fn log_det_inverse<S: Scalar>(self, xi: S) -> S {
        match self {
            Bijector::Identity => S::zero(),
            Bijector::LogExp => xi,
        }
    }

    pub fn inverse_var<'g, S: Scalar>(self, xi: Var<'g, S>) -> Var<'g, S> {
        match self {
            Bijector::Identity => xi,
            Bijector::LogExp => xi.exp(),
        }
    }

    /// Row-wise sum of the elementwise log-determinants, `[rows, 1]`;
    /// `None` for the identity.
    pub fn log_det_inverse_var<'g, S: Scalar>(self, xi: Var<'g, S>) -> Option<Var<'g, S>> {
        match self {
            Bijector::Identity => None,
            Bijector::LogExp => Some(xi.sum_cols()),
        }
    }
}
