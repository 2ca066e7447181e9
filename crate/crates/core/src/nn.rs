//! Score-network building blocks: dense layers, dropout, and the
//! time-conditioned MLP that predicts diffusion noise.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::random::truncated_normal_tensor;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Width of the sinusoidal time embedding appended to the network input.
pub const TIME_EMBEDDING_DIM: usize = 16;

const LAYER_NORM_EPS: f64 = 1e-12;
const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    /// Dimension of the denoised variable (excluding the time embedding).
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub layer_norm: bool,
}

impl MlpConfig {
    /// One 256-unit hidden layer, dropout 0.1, layer norm on.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            input_dim: dim,
            hidden_dim: 256,
            output_dim: dim,
            dropout_rate: 0.1,
            layer_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("all MLP widths must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Sinusoidal features of the normalized times `t / n_steps`, one row per entry.
pub fn time_embedding<S: Scalar>(t: &[usize], n_steps: usize) -> Tensor<S> {
    let half = TIME_EMBEDDING_DIM / 2;
    Tensor::from_fn(t.len(), TIME_EMBEDDING_DIM, |r, c| {
        let tau = 1000.0 * t[r] as f64 / n_steps as f64;
        let k = c % half;
        let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let arg = tau * freq;
        S::lit(if c < half { arg.sin() } else { arg.cos() })
    })
}

/// Inverted dropout: kept units are rescaled by `1 / (1 - rate)`.
pub fn dropout<'g, S: Scalar, R: Rng + ?Sized>(x: Var<'g, S>, rate: f64, train_mode: bool, rng: &mut R) -> Var<'g, S> {
    if !train_mode || rate == 0.0 {
        return x;
    }
    let [r, c] = x.shape();
    let keep = S::lit(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(r, c, |_, _| {
        if rng.random::<f64>() < rate {
            S::zero()
        } else {
            keep
        }
    });
    x * x.graph().constant(mask)
}

/// `x W + b` with parameters `{prefix}.weight` and `{prefix}.bias`.
pub fn dense<'g, S: Scalar>(p: &BoundParams<'g, S>, prefix: &str, x: Var<'g, S>) -> Var<'g, S> {
    x.matmul(p.get(&format!("{prefix}.weight"))) + p.get(&format!("{prefix}.bias"))
}

/// MLP noise predictor `eps(x, t)`.
///
/// Layout: `[x, embed(t / T)] -> dense(hidden) -> gelu -> layer norm ->
/// dropout -> dense(output)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    config: MlpConfig,
    prefix: String,
}

impl ScoreNet {
    pub fn new(config: MlpConfig, prefix: impl Into<String>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            prefix: prefix.into(),
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    /// Adds freshly initialized parameters to `store`. The hidden layer is
    /// truncated-normal(0.01); the output layer is zero, so the initial
    /// network predicts zero noise everywhere.
    pub fn init_params<S: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<S>, rng: &mut R) {
        let c = &self.config;
        let fan_in = c.input_dim + TIME_EMBEDDING_DIM;
        store.insert(
            self.name("hidden.weight"),
            truncated_normal_tensor(rng, fan_in, c.hidden_dim, INIT_STD),
        );
        store.insert(self.name("hidden.bias"), Tensor::zeros(1, c.hidden_dim));
        if c.layer_norm {
            store.insert(self.name("norm.gain"), Tensor::filled(1, c.hidden_dim, S::one()));
            store.insert(self.name("norm.offset"), Tensor::zeros(1, c.hidden_dim));
        }
        store.insert(self.name("out.weight"), Tensor::zeros(c.hidden_dim, c.output_dim));
        store.insert(self.name("out.bias"), Tensor::zeros(1, c.output_dim));
    }

    /// Predicted noise for each row of `x` at the matching entry of `t`.
    pub fn forward<'g, S: Scalar, R: Rng + ?Sized>(
        &self,
        p: &BoundParams<'g, S>,
        x: Var<'g, S>,
        t: &[usize],
        n_steps: usize,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<Var<'g, S>> {
        let [rows, cols] = x.shape();
        if cols != self.config.input_dim {
            return Err(Error::Config(format!(
                "score network expects {} input columns, got {cols}",
                self.config.input_dim
            )));
        }
        if t.len() != rows {
            return Err(Error::Config(format!("{} time indices for {rows} rows", t.len())));
        }
        if let Some(&bad) = t.iter().find(|&&s| s == 0 || s > n_steps) {
            return Err(Error::Config(format!("time index {bad} outside 1..={n_steps}")));
        }
        let g: &'g Graph<S> = x.graph();
        let emb = g.constant(time_embedding(t, n_steps));
        let input = g.concat_cols(&[x, emb]);
        let mut h = dense(p, &self.name("hidden"), input).gelu();
        if self.config.layer_norm {
            h = h.layer_norm(S::lit(LAYER_NORM_EPS)) * p.get(&self.name("norm.gain"))
                + p.get(&self.name("norm.offset"));
        }
        let h = dropout(h, self.config.dropout_rate, train_mode, rng);
        Ok(dense(p, &self.name("out"), h))
    }
}
