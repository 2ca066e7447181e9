//! Inverse autoregressive flow guide: `IAF -> reverse -> IAF` over a
//! standard normal base.
//!
//! The second layer works in reversed coordinates and its output is mapped
//! back, so the zero-initialized flow is exactly the identity.

use crate::autodiff::{Graph, Var};
use crate::distributions::standard_normal_log_density;
use crate::error::{Error, Result};
use crate::guide::{check_draws, check_width, EvidenceKind, Guide, Method};
use crate::params::{BoundParams, ParamStore};
use crate::random::{standard_normal_tensor, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MADE_HIDDEN: usize = 256;
pub const IAF_LAYERS: usize = 2;
const LOG_SCALE_BOUND: f64 = 7.0;

/// Connectivity masks of a one-hidden-layer MADE with `dim` inputs.
///
/// Input `j` has degree `j + 1`, hidden unit `k` degree
/// `k mod max(1, dim - 1) + 1`. Output `i` sees only inputs `< i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MadeMasks<S> {
    /// `[dim, hidden]`
    pub input: Tensor<S>,
    /// `[hidden, 2 dim]`, shift columns then log-scale columns.
    pub output: Tensor<S>,
}

impl<S: Scalar> MadeMasks<S> {
    pub fn new(dim: usize, hidden: usize) -> Self {
        let hidden_degree = |k: usize| k % dim.saturating_sub(1).max(1) + 1;
        let bit = |b: bool| if b { S::one() } else { S::zero() };
        let input = Tensor::from_fn(dim, hidden, |j, k| bit(hidden_degree(k) > j));
        let output = Tensor::from_fn(hidden, 2 * dim, |k, c| bit(c % dim + 1 > hidden_degree(k)));
        Self { input, output }
    }
}

fn param(layer: usize, part: &str) -> String {
    format!("iaf{layer}.{part}")
}

/// Flow guide with zero-initialized MADE weights (the identity map).
#[derive(Debug, Clone, PartialEq)]
pub struct IafGuide<S> {
    dim: usize,
    hidden: usize,
    masks: MadeMasks<S>,
    params: ParamStore<S>,
}

impl<S: Scalar> IafGuide<S> {
    pub fn new(dim: usize) -> Self {
        Self::with_hidden(dim, MADE_HIDDEN)
    }

    pub fn with_hidden(dim: usize, hidden: usize) -> Self {
        let mut params = ParamStore::new();
        for l in 0..IAF_LAYERS {
            params.insert(param(l, "w1"), Tensor::zeros(dim, hidden));
            params.insert(param(l, "b1"), Tensor::zeros(1, hidden));
            params.insert(param(l, "w2"), Tensor::zeros(hidden, 2 * dim));
            params.insert(param(l, "b2"), Tensor::zeros(1, 2 * dim));
        }
        Self::from_store(dim, hidden, params)
    }

    pub(crate) fn from_store(dim: usize, hidden: usize, params: ParamStore<S>) -> Self {
        Self {
            dim,
            hidden,
            masks: MadeMasks::new(dim, hidden),
            params,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn masks(&self) -> &MadeMasks<S> {
        &self.masks
    }

    /// Shift and clamped log-scale of one MADE, each `[rows, dim]`.
    pub fn made<'g>(&self, p: &BoundParams<'g, S>, layer: usize, z: Var<'g, S>) -> (Var<'g, S>, Var<'g, S>) {
        let g = z.graph();
        let w1 = p.get(&param(layer, "w1")) * g.constant(self.masks.input.clone());
        let w2 = p.get(&param(layer, "w2")) * g.constant(self.masks.output.clone());
        let h = (z.matmul(w1) + p.get(&param(layer, "b1"))).gelu();
        let out = h.matmul(w2) + p.get(&param(layer, "b2"));
        let bound = S::lit(LOG_SCALE_BOUND);
        (
            out.slice_cols(0, self.dim),
            out.slice_cols(self.dim, self.dim).clamp(-bound, bound),
        )
    }

    /// `x = z · exp(log_scale) + shift` and its log-determinant `[rows, 1]`.
    pub fn layer_forward<'g>(&self, p: &BoundParams<'g, S>, layer: usize, z: Var<'g, S>) -> (Var<'g, S>, Var<'g, S>) {
        let (shift, log_scale) = self.made(p, layer, z);
        (z * log_scale.exp() + shift, log_scale.sum_cols())
    }

    /// Inverts one layer by `dim` fixed-point sweeps; returns `z` and the
    /// forward log-determinant at `z`.
    pub fn layer_inverse<'g>(&self, p: &BoundParams<'g, S>, layer: usize, x: Var<'g, S>) -> (Var<'g, S>, Var<'g, S>) {
        let mut z = x;
        for _ in 0..self.dim {
            let (shift, log_scale) = self.made(p, layer, z);
            z = (x - shift) * (-log_scale).exp();
        }
        let (_, log_scale) = self.made(p, layer, z);
        (z, log_scale.sum_cols())
    }

    fn reverse<'g>(&self, x: Var<'g, S>) -> Var<'g, S> {
        let d = self.dim;
        let perm = Tensor::from_fn(d, d, |i, j| if i + j == d - 1 { S::one() } else { S::zero() });
        x.matmul(x.graph().constant(perm))
    }

    /// Pushes base draws through the flow: `(ξ, log|det J|)`.
    pub fn forward<'g>(&self, p: &BoundParams<'g, S>, eps: Var<'g, S>) -> Result<(Var<'g, S>, Var<'g, S>)> {
        check_width(eps, self.dim)?;
        let (x, ld0) = self.layer_forward(p, 0, eps);
        let (x, ld1) = self.layer_forward(p, 1, self.reverse(x));
        Ok((self.reverse(x), ld0 + ld1))
    }

    /// Inverse image of `xi` under the flow and the forward log-determinant.
    pub fn inverse<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>) -> Result<(Var<'g, S>, Var<'g, S>)> {
        check_width(xi, self.dim)?;
        let (z, ld1) = self.layer_inverse(p, 1, self.reverse(xi));
        let (z, ld0) = self.layer_inverse(p, 0, self.reverse(z));
        Ok((z, ld0 + ld1))
    }

    fn log_density<'g>(&self, z: Var<'g, S>, log_det: Var<'g, S>) -> Result<Var<'g, S>> {
        let out = standard_normal_log_density(z).sum_cols() - log_det;
        if !out.with_value(Tensor::is_finite) {
            return Err(Error::numeric("flow evidence", "non-finite log-density"));
        }
        Ok(out)
    }
}

impl<S: Scalar> Guide<S> for IafGuide<S> {
    fn method(&self) -> Method {
        Method::Nfvi
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
        Ok(self.forward(p, eps)?.0)
    }

    fn evidence<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>, _rng: &mut RngStream) -> Result<Var<'g, S>> {
        let (z, log_det) = self.inverse(p, xi)?;
        self.log_density(z, log_det)
    }

    fn sample_and_evidence<'g>(
        &self,
        p: &BoundParams<'g, S>,
        g: &'g Graph<S>,
        rng: &mut RngStream,
        n: usize,
    ) -> Result<(Var<'g, S>, Var<'g, S>)> {
        check_draws(n)?;
        let eps = g.constant(standard_normal_tensor(rng, n, self.dim));
        let (xi, log_det) = self.forward(p, eps)?;
        Ok((xi, self.log_density(eps, log_det)?))
    }
}
