//! The contract shared by every variational guide.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::random::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Rows drawn per graph by [`Guide::sample_values`].
pub const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Advi,
    Dmvi,
    Nfvi,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Advi, Method::Dmvi, Method::Nfvi];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Advi => "ADVI",
            Method::Dmvi => "DMVI",
            Method::Nfvi => "NFVI",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "advi" => Ok(Method::Advi),
            "dmvi" => Ok(Method::Dmvi),
            "nfvi" | "iaf" => Ok(Method::Nfvi),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

/// How [`Guide::evidence`] enters the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    /// Exact `ln q(ξ)`; the objective subtracts it (the usual ELBO).
    LogDensity,
    /// Negative denoising loss; the objective adds it.
    NegativeLoss,
}

/// A variational approximation over the unconstrained parameters `ξ`.
pub trait Guide<S: Scalar>: Send + Sync {
    fn method(&self) -> Method;

    /// Dimension of `ξ`.
    fn dim(&self) -> usize;

    fn params(&self) -> &ParamStore<S>;

    fn params_mut(&mut self) -> &mut ParamStore<S>;

    fn evidence_kind(&self) -> EvidenceKind;

    /// `n` reparameterized draws, `[n, dim]`. Differentiable in whatever
    /// `p` binds as leaves.
    fn sample<'g>(&self, p: &BoundParams<'g, S>, g: &'g Graph<S>, rng: &mut RngStream, n: usize) -> Result<Var<'g, S>>;

    /// Per-row evidence of `xi`, `[rows, 1]`.
    fn evidence<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>, rng: &mut RngStream) -> Result<Var<'g, S>>;

    /// Draws together with their evidence. Guides with a cheaper joint
    /// path override this.
    fn sample_and_evidence<'g>(
        &self,
        p: &BoundParams<'g, S>,
        g: &'g Graph<S>,
        rng: &mut RngStream,
        n: usize,
    ) -> Result<(Var<'g, S>, Var<'g, S>)> {
        let xi = self.sample(p, g, rng, n)?;
        let ev = self.evidence(p, xi, rng)?;
        Ok((xi, ev))
    }

    /// Plain draws without gradient tracking, built in bounded chunks.
    fn sample_values(&self, rng: &mut RngStream, n: usize) -> Result<Tensor<S>> {
        let mut out = Tensor::zeros(0, 0);
        let mut left = n;
        while left > 0 {
            let k = left.min(SAMPLE_CHUNK);
            let g = Graph::new();
            let p = self.params().bind_frozen(&g);
            out.vstack(&self.sample(&p, &g, rng, k)?.value())?;
            left -= k;
        }
        Ok(out)
    }
}

pub(crate) fn check_draws(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("number of draws must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn check_width<S: Scalar>(xi: Var<'_, S>, dim: usize) -> Result<()> {
    if xi.cols() != dim {
        return Err(Error::Shape(format!("guide has dimension {dim}, got {} columns", xi.cols())));
    }
    Ok(())
}
