//! The benchmark generative models.
//!
//! Each model exposes a fixed parameter [`Layout`], a simulator for
//! `(θ_true, y)` and the joint log-density in unconstrained space,
//! `ln p(y, f⁻¹(ξ)) + ln |det J_{f⁻¹}(ξ)|`.
//!
//! | name      | blocks (in order)                                   | d  |
//! |-----------|-----------------------------------------------------|----|
//! | `mean`    | mu\[10\]                                            | 10 |
//! | `mixture` | mu\[3×2\], sigma\[3×2\]                             | 12 |
//! | `hier1`   | gamma\[2\], beta\[2×5\], sigma                      | 13 |
//! | `hier2`   | mu_gamma, gamma\[2\], beta\[2×5\], sigma            | 14 |
//! | `hier3`   | mu_gamma, sigma_gamma, gamma\[2\], beta\[2×5\], sigma | 15 |
//! | `hier4`   | mu_gamma, sigma_gamma, gamma\[2\], sigma_beta, beta\[2×5\] | 15 |
//! | `hier5`   | mu_gamma, sigma_gamma, gamma\[5\], sigma_beta, beta\[5×2\] | 18 |
//!
//! Matrix-shaped blocks are flattened row-major (`beta[i * per_group + j]`,
//! `mu[k * 2 + i]`). Scale parameters carry a log/exp bijector, everything
//! else the identity. Hierarchical observations are stored as `N` rows of
//! `groups × per_group` values, so a mini-batch subsamples whole rows.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::autodiff::{Graph, Var};
use crate::bijector::Bijector;
use crate::distributions::{
    half_normal_log_density, log_sum_exp, normal_log_density, standard_normal_log_density, Distribution,
};
use crate::error::{Error, Result};
use crate::random::stream;
use crate::scalar::{half_ln_two_pi, Scalar};
use crate::tensor::Tensor;

/// Default observation dimension of the mean model.
pub const MEAN_MODEL_DIM: usize = 10;
pub const MIXTURE_COMPONENTS: usize = 3;
pub const MIXTURE_DIM: usize = 2;

/// One named, contiguous slice of the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub size: usize,
    pub bijector: Bijector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Flattened dimension.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    /// Start offset of every block.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.size;
                Some(o)
            })
            .collect()
    }

    pub fn block(&self, name: &str) -> Option<(usize, &Block)> {
        let offsets = self.offsets();
        self.blocks
            .iter()
            .zip(offsets)
            .find(|(b, _)| b.name == name)
            .map(|(b, o)| (o, b))
    }

    fn bijector_at(&self) -> impl Iterator<Item = Bijector> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.bijector, b.size))
    }

    pub fn constrain<S: Scalar>(&self, xi: &[S]) -> Vec<S> {
        xi.iter().zip(self.bijector_at()).map(|(&x, b)| b.inverse(x)).collect()
    }

    pub fn unconstrain<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        theta
            .iter()
            .zip(self.bijector_at())
            .map(|(&t, b)| b.forward(t))
            .collect()
    }

    /// Applies [`constrain`](Self::constrain) to every row.
    pub fn constrain_rows<S: Scalar>(&self, xi: &Tensor<S>) -> Tensor<S> {
        let data = xi.iter_rows().flat_map(|r| self.constrain(r)).collect();
        Tensor::new(xi.rows(), xi.cols(), data).expect("same shape")
    }
}

/// Structure of the hierarchical family: which levels are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchySpec {
    pub groups: usize,
    pub per_group: usize,
    /// Learned group-mean location (otherwise 0).
    pub mu_gamma: bool,
    /// Learned group-mean scale (otherwise 1).
    pub sigma_gamma: bool,
    /// Learned within-group scale (otherwise 1).
    pub sigma_beta: bool,
    /// Learned observation noise (otherwise 1).
    pub sigma_obs: bool,
}

impl HierarchySpec {
    /// Variants 1 to 5 of the benchmark family.
    pub fn variant(v: u8) -> Option<Self> {
        let base = Self {
            groups: 2,
            per_group: 5,
            mu_gamma: false,
            sigma_gamma: false,
            sigma_beta: false,
            sigma_obs: true,
        };
        Some(match v {
            1 => base,
            2 => Self { mu_gamma: true, ..base },
            3 => Self {
                mu_gamma: true,
                sigma_gamma: true,
                ..base
            },
            4 => Self {
                mu_gamma: true,
                sigma_gamma: true,
                sigma_beta: true,
                sigma_obs: false,
                ..base
            },
            5 => Self {
                groups: 5,
                per_group: 2,
                mu_gamma: true,
                sigma_gamma: true,
                sigma_beta: true,
                sigma_obs: false,
            },
            _ => return None,
        })
    }

    pub fn n_beta(&self) -> usize {
        self.groups * self.per_group
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `μ ~ N(0, I)`, `y_n ~ N(μ, I)`.
    Mean { dim: usize },
    /// Bivariate three-component Gaussian mixture with equal fixed weights.
    Mixture,
    Hierarchical(HierarchySpec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerativeModel {
    name: String,
    kind: ModelKind,
    layout: Layout,
}

impl fmt::Display for GenerativeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn block(name: &'static str, size: usize, bijector: Bijector) -> Block {
    Block { name, size, bijector }
}

/// Names accepted by [`GenerativeModel::by_name`], in benchmark order.
pub const MODEL_NAMES: [&str; 7] = ["mean", "mixture", "hier1", "hier2", "hier3", "hier4", "hier5"];

impl GenerativeModel {
    pub fn mean(dim: usize) -> Self {
        Self {
            name: if dim == MEAN_MODEL_DIM {
                "mean".to_string()
            } else {
                format!("mean{dim}")
            },
            kind: ModelKind::Mean { dim },
            layout: Layout::new(vec![block("mu", dim, Bijector::Identity)]),
        }
    }

    pub fn mixture() -> Self {
        let n = MIXTURE_COMPONENTS * MIXTURE_DIM;
        Self {
            name: "mixture".into(),
            kind: ModelKind::Mixture,
            layout: Layout::new(vec![block("mu", n, Bijector::Identity), block("sigma", n, Bijector::LogExp)]),
        }
    }

    pub fn hierarchical(variant: u8) -> Result<Self> {
        let spec = HierarchySpec::variant(variant)
            .ok_or_else(|| Error::Config(format!("no hierarchical model variant {variant}")))?;
        let mut blocks = Vec::new();
        if spec.mu_gamma {
            blocks.push(block("mu_gamma", 1, Bijector::Identity));
        }
        if spec.sigma_gamma {
            blocks.push(block("sigma_gamma", 1, Bijector::LogExp));
        }
        blocks.push(block("gamma", spec.groups, Bijector::Identity));
        if spec.sigma_beta {
            blocks.push(block("sigma_beta", 1, Bijector::LogExp));
        }
        blocks.push(block("beta", spec.n_beta(), Bijector::Identity));
        if spec.sigma_obs {
            blocks.push(block("sigma", 1, Bijector::LogExp));
        }
        Ok(Self {
            name: format!("hier{variant}"),
            kind: ModelKind::Hierarchical(spec),
            layout: Layout::new(blocks),
        })
    }

    /// `mean`, `mixture`, `hier1`..`hier5`; `hierarchical` is `hier5`, and
    /// `mean<k>` is the mean model with `k`-dimensional observations.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(Self::mean(MEAN_MODEL_DIM)),
            "mixture" => Ok(Self::mixture()),
            "hierarchical" => Self::hierarchical(5),
            _ => {
                if let Some(v) = name.strip_prefix("hier").and_then(|v| v.parse().ok()) {
                    return Self::hierarchical(v);
                }
                if let Some(d) = name.strip_prefix("mean").and_then(|d| d.parse().ok()) {
                    if d > 0 {
                        return Ok(Self::mean(d));
                    }
                }
                Err(Error::Config(format!("unknown model `{name}`")))
            }
        }
    }

    /// All seven benchmark models.
    pub fn all() -> Vec<Self> {
        MODEL_NAMES
            .iter()
            .map(|n| Self::by_name(n).expect("builtin model"))
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Unconstrained parameter dimension.
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Values per observation row.
    pub fn data_dim(&self) -> usize {
        match self.kind {
            ModelKind::Mean { dim } => dim,
            ModelKind::Mixture => MIXTURE_DIM,
            ModelKind::Hierarchical(h) => h.n_beta(),
        }
    }

    /// Draws `θ_true` from the prior and `n` observations given it.
    pub fn simulate<S: Scalar>(&self, seed: u64, n: usize) -> Result<Dataset<S>> {
        if n == 0 {
            return Err(Error::Config("data set size must be at least 1".into()));
        }
        let mut rng = stream(seed);
        let std_normal = Distribution::normal(S::zero(), S::one())?;
        let half_normal = Distribution::half_normal(S::one())?;
        let draw = |d: &Distribution<S>, rng: &mut crate::random::RngStream, k: usize| -> Result<Vec<S>> {
            Ok(d.sample(rng, k)?.into_data())
        };

        let (theta, observations) = match self.kind {
            ModelKind::Mean { dim } => {
                let mu = draw(&std_normal, &mut rng, dim)?;
                let lik = Distribution::mv_normal_diag(mu.clone(), vec![S::one(); dim])?;
                (mu, lik.sample(&mut rng, n)?)
            }
            ModelKind::Mixture => {
                let k = MIXTURE_COMPONENTS;
                let mu = draw(&std_normal, &mut rng, k * MIXTURE_DIM)?;
                let sigma = draw(&half_normal, &mut rng, k * MIXTURE_DIM)?;
                let lik = Distribution::mixture_diag(
                    mixture_weights(),
                    mu.chunks(MIXTURE_DIM).map(<[S]>::to_vec).collect(),
                    sigma.chunks(MIXTURE_DIM).map(<[S]>::to_vec).collect(),
                )?;
                let obs = lik.sample(&mut rng, n)?;
                ([mu, sigma].concat(), obs)
            }
            ModelKind::Hierarchical(h) => {
                let mu_gamma = if h.mu_gamma { draw(&std_normal, &mut rng, 1)?[0] } else { S::zero() };
                let sigma_gamma = if h.sigma_gamma { draw(&half_normal, &mut rng, 1)?[0] } else { S::one() };
                let gamma = draw(&Distribution::normal(mu_gamma, sigma_gamma)?, &mut rng, h.groups)?;
                let sigma_beta = if h.sigma_beta { draw(&half_normal, &mut rng, 1)?[0] } else { S::one() };
                let mut beta = Vec::with_capacity(h.n_beta());
                for &g in &gamma {
                    beta.extend(draw(&Distribution::normal(g, sigma_beta)?, &mut rng, h.per_group)?);
                }
                let sigma = if h.sigma_obs { draw(&half_normal, &mut rng, 1)?[0] } else { S::one() };
                let lik = Distribution::mv_normal_diag(beta.clone(), vec![sigma; h.n_beta()])?;
                let obs = lik.sample(&mut rng, n)?;
                let mut theta = Vec::with_capacity(self.dim());
                if h.mu_gamma {
                    theta.push(mu_gamma);
                }
                if h.sigma_gamma {
                    theta.push(sigma_gamma);
                }
                theta.extend(&gamma);
                if h.sigma_beta {
                    theta.push(sigma_beta);
                }
                theta.extend(&beta);
                if h.sigma_obs {
                    theta.push(sigma);
                }
                (theta, obs)
            }
        };
        Ok(Dataset {
            model: self.name.clone(),
            seed,
            theta_true: theta,
            observations,
        })
    }

    /// `ln p(y_batch, f⁻¹(ξ)) + ln |det J_{f⁻¹}(ξ)|` for every row of `xi`,
    /// with the likelihood multiplied by `scale` (normally `N / |batch|`).
    ///
    /// Returns `[rows, 1]`.
    pub fn log_joint_unconstrained<'g, S: Scalar>(
        &self,
        xi: Var<'g, S>,
        batch: &Tensor<S>,
        scale: S,
    ) -> Result<Var<'g, S>> {
        if xi.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "{} expects {} unconstrained parameters, got {}",
                self.name,
                self.dim(),
                xi.cols()
            )));
        }
        if batch.cols() != self.data_dim() {
            return Err(Error::Shape(format!(
                "{} observations have {} values, batch has {}",
                self.name,
                self.data_dim(),
                batch.cols()
            )));
        }
        let mut terms: Vec<(String, Var<'g, S>)> = Vec::new();
        let mut theta = Vec::with_capacity(self.layout.blocks.len());
        for (b, off) in self.layout.blocks.iter().zip(self.layout.offsets()) {
            let raw = xi.slice_cols(off, b.size);
            if let Some(ld) = b.bijector.log_det_inverse_var(raw) {
                terms.push((format!("{} (log-det)", b.name), ld));
            }
            theta.push(b.bijector.inverse_var(raw));
        }
        self.constrained_terms(&theta, batch, scale, &mut terms);

        let mut total: Option<Var<'g, S>> = None;
        for (label, v) in &terms {
            if !v.with_value(Tensor::is_finite) {
                return Err(Error::numeric(
                    format!("{} block `{label}`", self.name),
                    "non-finite log-density",
                ));
            }
            total = Some(match total {
                Some(t) => t + *v,
                None => *v,
            });
        }
        Ok(total.expect("every model has a prior term"))
    }

    /// Prior and likelihood terms in constrained space, each `[rows, 1]`.
    fn constrained_terms<'g, S: Scalar>(
        &self,
        theta: &[Var<'g, S>],
        batch: &Tensor<S>,
        scale: S,
        terms: &mut Vec<(String, Var<'g, S>)>,
    ) {
        let g = theta[0].graph();
        let one = g.scalar(S::one());
        match self.kind {
            ModelKind::Mean { .. } => {
                let mu = theta[0];
                terms.push(("mu".into(), standard_normal_log_density(mu).sum_cols()));
                let stats = SufficientStats::of(batch);
                terms.push(("likelihood".into(), stats.normal_log_lik(g, mu, None).scale(scale)));
            }
            ModelKind::Mixture => {
                let (mu, sigma) = (theta[0], theta[1]);
                terms.push(("mu".into(), standard_normal_log_density(mu).sum_cols()));
                terms.push(("sigma".into(), half_normal_log_density(sigma, one).sum_cols()));
                terms.push(("likelihood".into(), mixture_log_lik(mu, sigma, batch).scale(scale)));
            }
            ModelKind::Hierarchical(h) => {
                let mut it = theta.iter().copied();
                let zero = g.scalar(S::zero());
                let mu_gamma = if h.mu_gamma {
                    let v = it.next().expect("mu_gamma");
                    terms.push(("mu_gamma".into(), standard_normal_log_density(v).sum_cols()));
                    v
                } else {
                    zero
                };
                let sigma_gamma = if h.sigma_gamma {
                    let v = it.next().expect("sigma_gamma");
                    terms.push(("sigma_gamma".into(), half_normal_log_density(v, one).sum_cols()));
                    v
                } else {
                    one
                };
                let gamma = it.next().expect("gamma");
                terms.push((
                    "gamma".into(),
                    normal_log_density(gamma, mu_gamma, sigma_gamma).sum_cols(),
                ));
                let sigma_beta = if h.sigma_beta {
                    let v = it.next().expect("sigma_beta");
                    terms.push(("sigma_beta".into(), half_normal_log_density(v, one).sum_cols()));
                    v
                } else {
                    one
                };
                let beta = it.next().expect("beta");
                // repeat each γ_i across its group's β columns
                let expand = Tensor::from_fn(h.groups, h.n_beta(), |i, j| {
                    if j / h.per_group == i {
                        S::one()
                    } else {
                        S::zero()
                    }
                });
                let beta_mean = gamma.matmul(g.constant(expand));
                terms.push(("beta".into(), normal_log_density(beta, beta_mean, sigma_beta).sum_cols()));
                let sigma = if h.sigma_obs {
                    let v = it.next().expect("sigma");
                    terms.push(("sigma".into(), half_normal_log_density(v, one).sum_cols()));
                    Some(v)
                } else {
                    None
                };
                let stats = SufficientStats::of(batch);
                terms.push(("likelihood".into(), stats.normal_log_lik(g, beta, sigma).scale(scale)));
            }
        }
    }

    /// Relabels mixture components of a constrained draw to best match
    /// `truth` (minimum squared error over component means); a no-op for
    /// identifiable models.
    pub fn align_to_truth<S: Scalar>(&self, draw: &mut [S], truth: &[S]) {
        if self.kind != ModelKind::Mixture {
            return;
        }
        let k = MIXTURE_COMPONENTS;
        let d = MIXTURE_DIM;
        let block = k * d;
        let original = draw.to_vec();
        let cost = |perm: &[usize]| -> S {
            let original = &original;
            perm.iter()
                .enumerate()
                .flat_map(move |(target, &src)| {
                    (0..d).map(move |i| {
                        let diff = original[src * d + i] - truth[target * d + i];
                        diff * diff
                    })
                })
                .sum()
        };
        let best = permutations(k)
            .into_iter()
            .min_by(|a, b| cost(a).partial_cmp(&cost(b)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one permutation");
        for (target, &src) in best.iter().enumerate() {
            for i in 0..d {
                draw[target * d + i] = original[src * d + i];
                draw[block + target * d + i] = original[block + src * d + i];
            }
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Equal, fixed mixing weights.
pub fn mixture_weights<S: Scalar>() -> Vec<S> {
    let w = S::one() / S::count(MIXTURE_COMPONENTS);
    vec![w; MIXTURE_COMPONENTS]
}

/// `ln Σ_k π_k N(y; μ_k, diag σ_k²)` for one observation.
pub fn mixture_log_likelihood<S: Scalar>(weights: &[S], means: &[Vec<S>], stds: &[Vec<S>], y: &[S]) -> S {
    let terms: Vec<S> = weights
        .iter()
        .zip(means.iter().zip(stds))
        .map(|(&w, (m, s))| w.ln() + crate::distributions::diag_normal_ln_pdf(y, m, s))
        .collect();
    log_sum_exp(&terms)
}

/// Mixture log-likelihood summed over `batch` rows, for each row of the
/// `[M, K·2]` mean and scale blocks. Returns `[M, 1]`.
fn mixture_log_lik<'g, S: Scalar>(mu: Var<'g, S>, sigma: Var<'g, S>, batch: &Tensor<S>) -> Var<'g, S> {
    let g = mu.graph();
    let n = batch.rows();
    // (y - m)² / s² = y²·(1/s²) + y·(-2m/s²) + 1·(m²/s²), one matmul per component
    let features = Tensor::from_fn(3 * MIXTURE_DIM, n, |r, c| {
        let y = batch.get(c, r / 3);
        match r % 3 {
            0 => y * y,
            1 => y,
            _ => S::one(),
        }
    });
    let features = g.constant(features);
    let log_w = (S::one() / S::count(MIXTURE_COMPONENTS)).ln();
    let norm = S::count(MIXTURE_DIM) * half_ln_two_pi::<S>();
    let comps: Vec<Var<'g, S>> = (0..MIXTURE_COMPONENTS)
        .map(|k| {
            let m = mu.slice_cols(k * MIXTURE_DIM, MIXTURE_DIM);
            let s = sigma.slice_cols(k * MIXTURE_DIM, MIXTURE_DIM);
            let prec = g.scalar(S::one()) / s.square();
            let coef: Vec<Var<'g, S>> = (0..MIXTURE_DIM)
                .flat_map(|i| {
                    let p = prec.slice_cols(i, 1);
                    let mi = m.slice_cols(i, 1);
                    [p, (mi * p).scale(S::lit(-2.0)), mi.square() * p]
                })
                .collect();
            let quad = g.concat_cols(&coef).matmul(features);
            let log_norm = s.ln().sum_cols().add_scalar(norm - log_w);
            quad.scale(S::lit(-0.5)) - log_norm
        })
        .collect();
    g.logsumexp(&comps).sum_cols()
}

/// Column sums and sums of squares of a batch.
#[derive(Debug, Clone)]
struct SufficientStats<S> {
    n: usize,
    sum: Tensor<S>,
    sum_sq: Tensor<S>,
}

impl<S: Scalar> SufficientStats<S> {
    fn of(batch: &Tensor<S>) -> Self {
        let mut sum = vec![S::zero(); batch.cols()];
        let mut sum_sq = vec![S::zero(); batch.cols()];
        for row in batch.iter_rows() {
            for ((s, q), &y) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(row) {
                *s = *s + y;
                *q = *q + y * y;
            }
        }
        Self {
            n: batch.rows(),
            sum: Tensor::row(sum),
            sum_sq: Tensor::row(sum_sq),
        }
    }

    /// `Σ_n Σ_k ln N(y_nk; mean_k, σ²)` for `[M, K]` means and an optional
    /// `[M, 1]` shared scale (unit when absent). Returns `[M, 1]`.
    fn normal_log_lik<'g>(&self, g: &'g Graph<S>, mean: Var<'g, S>, std: Option<Var<'g, S>>) -> Var<'g, S> {
        let n = S::count(self.n);
        let k = S::count(mean.cols());
        let quad = (g.constant(self.sum_sq.clone()) - (mean * g.constant(self.sum.clone())).scale(S::lit(2.0))
            + mean.square().scale(n))
        .sum_cols();
        let constant = -n * k * half_ln_two_pi::<S>();
        match std {
            None => quad.scale(S::lit(-0.5)).add_scalar(constant),
            Some(s) => (quad / s.square()).scale(S::lit(-0.5)) - s.ln().scale(n * k) + constant,
        }
    }
}

/// Simulated observations together with the parameters that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub model: String,
    pub seed: u64,
    /// Constrained-space parameters, in layout order.
    pub theta_true: Vec<S>,
    /// `N` rows of observations.
    pub observations: Tensor<S>,
}

const DATASET_MAGIC: &str = "# dmvi-dataset v1";

impl<S: Scalar> Dataset<S> {
    pub fn len(&self) -> usize {
        self.observations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.rows() == 0
    }

    /// Text export: a `#`-prefixed header (model, seed, N, θ_true), a column
    /// name line, then one whitespace-separated observation per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{DATASET_MAGIC}")?;
        writeln!(w, "# model: {}", self.model)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# n: {}", self.len())?;
        writeln!(w, "# theta_true: {}", join(&self.theta_true))?;
        let names: Vec<String> = (0..self.observations.cols()).map(|i| format!("y{i}")).collect();
        writeln!(w, "{}", names.join(" "))?;
        for row in self.observations.iter_rows() {
            writeln!(w, "{}", join(row))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of data set".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != DATASET_MAGIC {
            return Err(Error::Parse("missing data set header".into()));
        }
        let mut header = |key: &str| -> Result<String> {
            let line = next()?;
            line.strip_prefix(&format!("# {key}:"))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected `{key}` header, got `{line}`")))
        };
        let model = header("model")?;
        let seed = header("seed")?
            .parse()
            .map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let n: usize = header("n")?.parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let theta_true = parse_values(&header("theta_true")?)?;
        let cols = next()?.split_whitespace().count();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let row = parse_values(&next()?)?;
            if row.len() != cols {
                return Err(Error::Parse(format!("observation has {} values, expected {cols}", row.len())));
            }
            rows.push(row);
        }
        let observations = Tensor::from_rows(&rows)?;
        Ok(Self {
            model,
            seed,
            theta_true,
            observations,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn join<S: Scalar>(v: &[S]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_values<S: Scalar>(line: &str) -> Result<Vec<S>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<S>()
                .map_err(|_| Error::Parse(format!("not a number: `{tok}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_have_documented_dimensions() {
        let dims: Vec<usize> = GenerativeModel::all().iter().map(GenerativeModel::dim).collect();
        assert_eq!(dims, vec![10, 12, 13, 14, 15, 15, 18]);
    }

    #[test]
    fn scale_blocks_use_log_transform() {
        for m in GenerativeModel::all() {
            for b in m.layout().blocks() {
                let positive = b.name.starts_with("sigma");
                assert_eq!(b.bijector == Bijector::LogExp, positive, "{} {}", m.name(), b.name);
            }
        }
    }

    #[test]
    fn hier5_layout_order() {
        let m = GenerativeModel::by_name("hierarchical").unwrap();
        let names: Vec<_> = m.layout().blocks().iter().map(|b| (b.name, b.size)).collect();
        assert_eq!(
            names,
            vec![("mu_gamma", 1), ("sigma_gamma", 1), ("gamma", 5), ("sigma_beta", 1), ("beta", 10)]
        );
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(GenerativeModel::by_name("hier6").is_err());
        assert!(GenerativeModel::by_name("mean0").is_err());
        assert!(GenerativeModel::by_name("funnel").is_err());
        assert_eq!(GenerativeModel::by_name("mean2").unwrap().dim(), 2);
    }

    #[test]
    fn simulation_shapes() {
        let d: Dataset<f64> = GenerativeModel::by_name("mean").unwrap().simulate(3, 7).unwrap();
        assert_eq!(d.observations.shape(), [7, 10]);
        let d: Dataset<f64> = GenerativeModel::by_name("hier5").unwrap().simulate(3, 4).unwrap();
        assert_eq!(d.theta_true.len(), 18);
        assert_eq!(d.observations.shape(), [4, 10]);
        let d: Dataset<f64> = GenerativeModel::mixture().simulate(3, 5).unwrap();
        assert_eq!(d.observations.shape(), [5, 2]);
        assert!(d.theta_true[6..].iter().all(|&s| s > 0.0));
    }

    #[test]
    fn simulation_is_seeded() {
        let m = GenerativeModel::by_name("hier3").unwrap();
        let a: Dataset<f64> = m.simulate(99, 50).unwrap();
        let b: Dataset<f64> = m.simulate(99, 50).unwrap();
        let c: Dataset<f64> = m.simulate(100, 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_model_single_observation() {
        let m = GenerativeModel::mean(1);
        let g = Graph::<f64>::new();
        let xi = g.constant(Tensor::scalar(0.0));
        let lj = m.log_joint_unconstrained(xi, &Tensor::scalar(0.0), 1.0).unwrap();
        assert!((lj.item() - -1.837_877_066_409_345_5).abs() < 1e-12);
    }

    #[test]
    fn likelihood_scales_linearly() {
        let m = GenerativeModel::by_name("hier4").unwrap();
        let data: Dataset<f64> = m.simulate(5, 100).unwrap();
        let batch = data.observations.select_rows(&(0..10).collect::<Vec<_>>());
        let g = Graph::new();
        let xi = g.constant(Tensor::row(m.layout().unconstrain(&data.theta_true).unwrap()));
        let prior = m.log_joint_unconstrained(xi, &batch, 0.0).unwrap().item();
        let one = m.log_joint_unconstrained(xi, &batch, 1.0).unwrap().item();
        let ten = m.log_joint_unconstrained(xi, &batch, 10.0).unwrap().item();
        assert!(((ten - prior) - 10.0 * (one - prior)).abs() < 1e-9 * (ten - prior).abs());
    }

    #[test]
    fn wrong_dimension_is_a_shape_error() {
        let m = GenerativeModel::mixture();
        let g = Graph::<f64>::new();
        let xi = g.constant(Tensor::zeros(1, 5));
        assert!(matches!(
            m.log_joint_unconstrained(xi, &Tensor::zeros(1, 2), 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn non_finite_density_names_the_block() {
        let m = GenerativeModel::by_name("hier1").unwrap();
        let g = Graph::<f64>::new();
        let mut xi = vec![0.0; m.dim()];
        *xi.last_mut().unwrap() = 1e6; // exp overflows in the `sigma` block
        let xi = g.constant(Tensor::row(xi));
        let err = m.log_joint_unconstrained(xi, &Tensor::zeros(2, 10), 1.0).unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn alignment_recovers_permuted_components() {
        let m = GenerativeModel::mixture();
        let truth = vec![0.0, 0.0, 1.0, 1.0, -2.0, 3.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut draw = vec![-2.0, 3.0, 0.0, 0.0, 1.0, 1.0, 0.5, 0.6, 0.1, 0.2, 0.3, 0.4];
        m.align_to_truth(&mut draw, &truth);
        assert_eq!(draw, truth);
    }

    #[test]
    fn permutations_enumerated() {
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn mixture_likelihood_properties() {
        let means = vec![vec![0.0f64, 1.0], vec![2.0, -1.0], vec![-1.0, 0.5]];
        let stds = vec![vec![1.0, 0.5], vec![0.3, 2.0], vec![1.5, 1.5]];
        let y = [0.3f64, 0.7];
        let one = mixture_log_likelihood(&[1.0, 0.0, 0.0], &means, &stds, &y);
        let direct = crate::distributions::diag_normal_ln_pdf(&y, &means[0], &stds[0]);
        assert_eq!(one, direct);
        let same_m = vec![means[0].clone(); 3];
        let same_s = vec![stds[0].clone(); 3];
        let a = mixture_log_likelihood(&[0.2, 0.3, 0.5], &same_m, &same_s, &y);
        let b = mixture_log_likelihood(&[1.0 / 3.0; 3], &same_m, &same_s, &y);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn dataset_text_round_trip() {
        let d: Dataset<f64> = GenerativeModel::mixture().simulate(8, 25).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(d, back);
        assert!(Dataset::<f64>::read_from(&b"nonsense"[..]).is_err());
    }
}
