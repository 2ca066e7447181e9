//! The diffusion-model guide: a discrete variance-preserving noise schedule,
//! the simplified denoising loss, and DPM-Solver sampling of the
//! probability-flow ODE.

use rand::Rng;

use crate::autodiff::{sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::guide::{check_draws, check_width, EvidenceKind, Guide, Method};
use crate::nn::{MlpConfig, ScoreNet};
use crate::params::{BoundParams, ParamStore};
use crate::random::{standard_normal_tensor, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;

/// `β_t`, `α_t = sqrt(ᾱ_t)` and `σ_t = sqrt(1 - ᾱ_t)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<S> {
    betas: Vec<S>,
    alphas: Vec<S>,
    sigmas: Vec<S>,
}

impl<S: Scalar> NoiseSchedule<S> {
    /// `β_t` linear from `beta_min` at `t = 1` to `beta_max` at `t = T`.
    pub fn linear(n_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::Config(format!("diffusion needs at least 2 steps, got {n_steps}")));
        }
        if !(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_min < beta_max < 1, got {beta_min} and {beta_max}"
            )));
        }
        let step = (beta_max - beta_min) / (n_steps - 1) as f64;
        Self::from_betas((0..n_steps).map(|i| S::lit(beta_min + step * i as f64)).collect())
    }

    /// The paper's default range.
    pub fn default_linear(n_steps: usize) -> Result<Self> {
        Self::linear(n_steps, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
    }

    pub fn from_betas(betas: Vec<S>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("empty noise schedule".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > S::zero() && b < S::one())) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = S::one();
        let mut alphas = Vec::with_capacity(betas.len());
        let mut sigmas = Vec::with_capacity(betas.len());
        for &b in &betas {
            alpha_bar = alpha_bar * (S::one() - b);
            alphas.push(alpha_bar.sqrt());
            sigmas.push((S::one() - alpha_bar).sqrt());
        }
        Ok(Self { betas, alphas, sigmas })
    }

    /// `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn beta(&self, t: usize) -> S {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> S {
        self.alphas[t - 1]
    }

    pub fn sigma(&self, t: usize) -> S {
        self.sigmas[t - 1]
    }

    /// `ᾱ_t`.
    pub fn alpha_bar(&self, t: usize) -> S {
        let a = self.alpha(t);
        a * a
    }

    /// Half log signal-to-noise ratio `ln(α_t / σ_t)`.
    pub fn lambda(&self, t: usize) -> S {
        (self.alpha(t) / self.sigma(t)).ln()
    }

    /// Discrete step whose `λ` is closest to `lambda`.
    pub fn nearest_step(&self, lambda: S) -> usize {
        (1..=self.len())
            .min_by(|&a, &b| {
                let da = (self.lambda(a) - lambda).abs();
                let db = (self.lambda(b) - lambda).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty schedule")
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::Config(format!("time index {t} outside 1..={}", self.len())));
        }
        Ok(())
    }

    /// `α_t y0 + σ_t eps`.
    pub fn perturb(&self, y0: &[S], t: usize, eps: &[S]) -> Result<Vec<S>> {
        self.check_step(t)?;
        if y0.len() != eps.len() {
            return Err(Error::Shape(format!("signal has {} entries, noise {}", y0.len(), eps.len())));
        }
        let (a, s) = (self.alpha(t), self.sigma(t));
        Ok(y0.iter().zip(eps).map(|(&y, &e)| a * y + s * e).collect())
    }

    /// Row-wise [`perturb`](Self::perturb) with one time index per row.
    pub fn perturb_var<'g>(&self, y0: Var<'g, S>, t: &[usize], eps: Var<'g, S>) -> Result<Var<'g, S>> {
        for &s in t {
            self.check_step(s)?;
        }
        let g = y0.graph();
        let alpha = g.constant(Tensor::column(t.iter().map(|&s| self.alpha(s)).collect()));
        let sigma = g.constant(Tensor::column(t.iter().map(|&s| self.sigma(s)).collect()));
        Ok(y0 * alpha + eps * sigma)
    }
}

/// A point on the solver's continuous time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTime<S> {
    /// Nearest discrete step, used to condition the network.
    pub step: usize,
    pub lambda: S,
    pub alpha: S,
    pub sigma: S,
}

impl<S: Scalar> SolverTime<S> {
    /// Variance-preserving coefficients at an arbitrary `λ`.
    fn at_lambda(schedule: &NoiseSchedule<S>, lambda: S) -> Self {
        let two = S::lit(2.0);
        Self {
            step: schedule.nearest_step(lambda),
            lambda,
            alpha: sigmoid(two * lambda).sqrt(),
            sigma: sigmoid(-two * lambda).sqrt(),
        }
    }

    fn at_step(schedule: &NoiseSchedule<S>, t: usize) -> Self {
        Self {
            step: t,
            lambda: schedule.lambda(t),
            alpha: schedule.alpha(t),
            sigma: schedule.sigma(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Number of `λ` intervals between `t = T` and `t = 1`.
    pub steps: usize,
    /// 1 (DDIM-equivalent) or 3 (single-step, three stages).
    pub order: usize,
}

impl SolverConfig {
    pub fn new(steps: usize, order: usize) -> Result<Self> {
        let c = Self { steps, order };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("solver needs at least one step".into()));
        }
        if self.order != 1 && self.order != 3 {
            return Err(Error::Config(format!("solver order must be 1 or 3, got {}", self.order)));
        }
        Ok(())
    }

    /// Noise-predictor evaluations per solve.
    pub fn evaluations(&self) -> usize {
        self.steps * self.order
    }

    /// Grid uniform in `λ` from `t = T` to `t = 1`; endpoints use the exact
    /// discrete coefficients.
    pub fn time_grid<S: Scalar>(&self, schedule: &NoiseSchedule<S>) -> Vec<SolverTime<S>> {
        let t_max = schedule.len();
        let (lo, hi) = (schedule.lambda(t_max), schedule.lambda(1));
        let n = self.steps;
        (0..=n)
            .map(|i| {
                if i == 0 {
                    SolverTime::at_step(schedule, t_max)
                } else if i == n {
                    SolverTime::at_step(schedule, 1)
                } else {
                    SolverTime::at_lambda(schedule, lo + (hi - lo) * S::count(i) / S::count(n))
                }
            })
            .collect()
    }
}

/// Runs the solver from `x_T` to `t = 1`.
///
/// `predict(x, time)` is the noise predictor; gradients flow through every
/// call.
pub fn solve<'g, S, F>(
    schedule: &NoiseSchedule<S>,
    config: &SolverConfig,
    x_t: Var<'g, S>,
    mut predict: F,
) -> Result<Var<'g, S>>
where
    S: Scalar,
    F: FnMut(Var<'g, S>, &SolverTime<S>) -> Result<Var<'g, S>>,
{
    config.validate()?;
    let grid = config.time_grid(schedule);
    let mut x = x_t;
    for pair in grid.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let h = cur.lambda - prev.lambda;
        let eps0 = predict(x, prev)?;
        x = match config.order {
            1 => x.scale(cur.alpha / prev.alpha) - eps0.scale(cur.sigma * h.exp_m1()),
            _ => third_order_step(schedule, x, eps0, prev, cur, &mut predict)?,
        };
    }
    Ok(x)
}

fn third_order_step<'g, S, F>(
    schedule: &NoiseSchedule<S>,
    x: Var<'g, S>,
    eps0: Var<'g, S>,
    prev: &SolverTime<S>,
    cur: &SolverTime<S>,
    predict: &mut F,
) -> Result<Var<'g, S>>
where
    S: Scalar,
    F: FnMut(Var<'g, S>, &SolverTime<S>) -> Result<Var<'g, S>>,
{
    let r1 = S::lit(1.0 / 3.0);
    let r2 = S::lit(2.0 / 3.0);
    let h = cur.lambda - prev.lambda;
    let s1 = SolverTime::at_lambda(schedule, prev.lambda + r1 * h);
    let s2 = SolverTime::at_lambda(schedule, prev.lambda + r2 * h);
    let phi_1 = |r: S| (r * h).exp_m1();
    let phi_2 = |r: S| (r * h).exp_m1() / (r * h) - S::one();

    let u1 = x.scale(s1.alpha / prev.alpha) - eps0.scale(s1.sigma * phi_1(r1));
    let d1 = predict(u1, &s1)? - eps0;
    let u2 = x.scale(s2.alpha / prev.alpha)
        - eps0.scale(s2.sigma * phi_1(r2))
        - d1.scale(s2.sigma * r2 / r1 * phi_2(r2));
    let d2 = predict(u2, &s2)? - eps0;
    Ok(x.scale(cur.alpha / prev.alpha)
        - eps0.scale(cur.sigma * phi_1(S::one()))
        - d2.scale(cur.sigma / r2 * phi_2(S::one())))
}

/// Negative simplified denoising loss `-‖ε - predict(α_t ξ + σ_t ε, t)‖²`
/// per row, with `t` uniform on `1..=T` and `ε ~ N(0, I)` drawn per row.
pub fn denoising_evidence<'g, S, F>(
    schedule: &NoiseSchedule<S>,
    xi: Var<'g, S>,
    rng: &mut RngStream,
    predict: F,
) -> Result<Var<'g, S>>
where
    S: Scalar,
    F: FnOnce(Var<'g, S>, &[usize], &mut RngStream) -> Result<Var<'g, S>>,
{
    let [n, d] = xi.shape();
    let g = xi.graph();
    let t: Vec<usize> = (0..n).map(|_| rng.random_range(1..=schedule.len())).collect();
    let eps = g.constant(standard_normal_tensor(rng, n, d));
    let noisy = schedule.perturb_var(xi, &t, eps)?;
    let pred = predict(noisy, &t, rng)?;
    let ev = -(eps - pred).square().sum_cols();
    if !ev.with_value(Tensor::is_finite) {
        return Err(Error::numeric("diffusion evidence", "non-finite denoising loss"));
    }
    Ok(ev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionConfig {
    /// `T`.
    pub n_diffusion: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub solver: SolverConfig,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub layer_norm: bool,
}

impl DiffusionConfig {
    pub fn new(n_diffusion: usize, solver_steps: usize, solver_order: usize) -> Result<Self> {
        let c = Self {
            n_diffusion,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
            solver: SolverConfig::new(solver_steps, solver_order)?,
            hidden_dim: 256,
            dropout_rate: 0.1,
            layer_norm: true,
        };
        Ok(c)
    }

    fn mlp(&self, dim: usize) -> MlpConfig {
        MlpConfig {
            hidden_dim: self.hidden_dim,
            dropout_rate: self.dropout_rate,
            layer_norm: self.layer_norm,
            ..MlpConfig::for_dim(dim)
        }
    }
}

/// Diffusion-model guide: `sample` runs the solver from `w_T ~ N(0, I)` with
/// dropout off; `evidence` is the negative denoising loss with dropout on.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionGuide<S> {
    dim: usize,
    config: DiffusionConfig,
    schedule: NoiseSchedule<S>,
    net: ScoreNet,
    params: ParamStore<S>,
}

pub(crate) const SCORE_PREFIX: &str = "score";

impl<S: Scalar> DiffusionGuide<S> {
    pub fn new(dim: usize, config: DiffusionConfig, rng: &mut RngStream) -> Result<Self> {
        let mut guide = Self::uninitialized(dim, config)?;
        guide.net.init_params(&mut guide.params, rng);
        Ok(guide)
    }

    /// Guide with an empty parameter store, for checkpoint loading.
    pub(crate) fn uninitialized(dim: usize, config: DiffusionConfig) -> Result<Self> {
        config.solver.validate()?;
        let schedule = NoiseSchedule::linear(config.n_diffusion, config.beta_min, config.beta_max)?;
        let net = ScoreNet::new(config.mlp(dim), SCORE_PREFIX)?;
        Ok(Self {
            dim,
            config,
            schedule,
            net,
            params: ParamStore::new(),
        })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule<S> {
        &self.schedule
    }

    pub fn network(&self) -> &ScoreNet {
        &self.net
    }

    /// Solver draws starting from the given `w_T`.
    pub fn solve_from<'g>(&self, p: &BoundParams<'g, S>, w_t: Var<'g, S>) -> Result<Var<'g, S>> {
        check_width(w_t, self.dim)?;
        let n_steps = self.schedule.len();
        // dropout is off, the stream is never consumed
        let mut unused = crate::random::stream(0);
        solve(&self.schedule, &self.config.solver, w_t, |x, at| {
            let t = vec![at.step; x.rows()];
            self.net.forward(p, x, &t, n_steps, false, &mut unused)
        })
    }
}

impl<S: Scalar> Guide<S> for DiffusionGuide<S> {
    fn method(&self) -> Method {
        Method::Dmvi
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
        EvidenceKind::NegativeLoss
    }

    fn sample<'g>(&self, p: &BoundParams<'g, S>, g: &'g Graph<S>, rng: &mut RngStream, n: usize) -> Result<Var<'g, S>> {
        check_draws(n)?;
        let w_t = g.constant(standard_normal_tensor(rng, n, self.dim));
        self.solve_from(p, w_t)
    }

    fn evidence<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>, rng: &mut RngStream) -> Result<Var<'g, S>> {
        check_width(xi, self.dim)?;
        let n_steps = self.schedule.len();
        denoising_evidence(&self.schedule, xi, rng, |noisy, t, rng| {
            self.net.forward(p, noisy, t, n_steps, true, rng)
        })
    }
}
