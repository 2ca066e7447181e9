//! Mean-field Gaussian guide.

use crate::autodiff::{Graph, Var};
use crate::distributions::normal_log_density;
use crate::error::Result;
use crate::guide::{check_draws, check_width, EvidenceKind, Guide, Method};
use crate::params::{BoundParams, ParamStore};
use crate::random::{standard_normal_tensor, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) const LOC: &str = "advi.loc";
pub(crate) const LOG_SCALE: &str = "advi.log_scale";

/// `q(ξ) = N(m, diag exp(2s))`, initialized at `m = 0`, `s = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdviGuide<S> {
    dim: usize,
    params: ParamStore<S>,
}

impl<S: Scalar> AdviGuide<S> {
    pub fn new(dim: usize) -> Self {
        Self::with_values(vec![S::zero(); dim], vec![S::zero(); dim])
    }

    /// Guide with the given location and log standard deviation.
    pub fn with_values(loc: Vec<S>, log_scale: Vec<S>) -> Self {
        assert_eq!(loc.len(), log_scale.len(), "location and log-scale lengths differ");
        let dim = loc.len();
        let mut params = ParamStore::new();
        params.insert(LOC, Tensor::row(loc));
        params.insert(LOG_SCALE, Tensor::row(log_scale));
        Self { dim, params }
    }

    pub(crate) fn from_store(dim: usize, params: ParamStore<S>) -> Self {
        Self { dim, params }
    }

    pub fn loc(&self) -> &[S] {
        self.params.get(LOC).expect("advi location").data()
    }

    pub fn log_scale(&self) -> &[S] {
        self.params.get(LOG_SCALE).expect("advi log-scale").data()
    }
}

impl<S: Scalar> Guide<S> for AdviGuide<S> {
    fn method(&self) -> Method {
        Method::Advi
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    fn evidence_kind(&self) -> EvidenceKind {
        EvidenceKind::LogDensity
    }

    fn sample<'g>(&self, p: &BoundParams<'g, S>, g: &'g Graph<S>, rng: &mut RngStream, n: usize) -> Result<Var<'g, S>> {
        check_draws(n)?;
        let eps = g.constant(standard_normal_tensor(rng, n, self.dim));
        Ok(p.get(LOC) + p.get(LOG_SCALE).exp() * eps)
    }

    fn evidence<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>, _rng: &mut RngStream) -> Result<Var<'g, S>> {
        check_width(xi, self.dim)?;
        Ok(normal_log_density(xi, p.get(LOC), p.get(LOG_SCALE).exp()).sum_cols())
    }
}
