//! Densities and samplers for the benchmark models.
//!
//! [`Distribution`] holds fixed parameters and evaluates plain log-densities.
//! The free functions below are the differentiable counterparts used inside
//! objectives, where parameters are themselves graph nodes.

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::random::standard_normal;
use crate::scalar::{half_ln_two_pi, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution<S> {
    Normal { mean: S, std: S },
    HalfNormal { scale: S },
    MvNormalDiag { mean: Vec<S>, std: Vec<S> },
    MixtureDiag {
        weights: Vec<S>,
        means: Vec<Vec<S>>,
        stds: Vec<Vec<S>>,
    },
}

fn check_positive<S: Scalar>(what: &str, v: S) -> Result<()> {
    if v > S::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} must be positive and finite, got {v}")))
    }
}

impl<S: Scalar> Distribution<S> {
    pub fn normal(mean: S, std: S) -> Result<Self> {
        check_positive("std", std)?;
        Ok(Self::Normal { mean, std })
    }

    pub fn half_normal(scale: S) -> Result<Self> {
        check_positive("scale", scale)?;
        Ok(Self::HalfNormal { scale })
    }

    pub fn mv_normal_diag(mean: Vec<S>, std: Vec<S>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Parameter(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        for &s in &std {
            check_positive("std", s)?;
        }
        Ok(Self::MvNormalDiag { mean, std })
    }

    pub fn mixture_diag(weights: Vec<S>, means: Vec<Vec<S>>, stds: Vec<Vec<S>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || stds.len() != k {
            return Err(Error::Parameter(format!(
                "{k} weights, {} means, {} std vectors",
                means.len(),
                stds.len()
            )));
        }
        if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
            return Err(Error::Parameter("mixture weights must be non-negative".into()));
        }
        let total: S = weights.iter().copied().sum();
        if (total - S::one()).abs() > S::lit(1e-12) {
            return Err(Error::Parameter(format!("mixture weights sum to {total}")));
        }
        let dim = means[0].len();
        for (m, s) in means.iter().zip(&stds) {
            if m.len() != dim || s.len() != dim {
                return Err(Error::Parameter("component dimensions differ".into()));
            }
            for &v in s {
                check_positive("component std", v)?;
            }
        }
        Ok(Self::MixtureDiag { weights, means, stds })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Normal { .. } | Self::HalfNormal { .. } => 1,
            Self::MvNormalDiag { mean, .. } => mean.len(),
            Self::MixtureDiag { means, .. } => means[0].len(),
        }
    }

    /// Log-density at `x`. Points outside the support of a half-normal give
    /// negative infinity.
    pub fn log_prob(&self, x: &[S]) -> Result<S> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{}-dimensional density evaluated at {} values",
                self.dim(),
                x.len()
            )));
        }
        Ok(match self {
            Self::Normal { mean, std } => normal_ln_pdf(x[0], *mean, *std),
            Self::HalfNormal { scale } => half_normal_ln_pdf(x[0], *scale),
            Self::MvNormalDiag { mean, std } => diag_normal_ln_pdf(x, mean, std),
            Self::MixtureDiag { weights, means, stds } => {
                let terms: Vec<S> = weights
                    .iter()
                    .zip(means.iter().zip(stds))
                    .map(|(&w, (m, s))| w.ln() + diag_normal_ln_pdf(x, m, s))
                    .collect();
                log_sum_exp(&terms)
            }
        })
    }

    /// `n` i.i.d. draws as rows of an `[n, dim]` tensor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Tensor<S>> {
        if n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let dim = self.dim();
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            match self {
                Self::Normal { mean, std } => data.push(*mean + *std * standard_normal::<S, _>(rng)),
                Self::HalfNormal { scale } => data.push(*scale * standard_normal::<S, _>(rng).abs()),
                Self::MvNormalDiag { mean, std } => {
                    for (&m, &s) in mean.iter().zip(std) {
                        data.push(m + s * standard_normal::<S, _>(rng));
                    }
                }
                Self::MixtureDiag { weights, means, stds } => {
                    let k = categorical(rng, weights);
                    for (&m, &s) in means[k].iter().zip(&stds[k]) {
                        data.push(m + s * standard_normal::<S, _>(rng));
                    }
                }
            }
        }
        Tensor::new(n, dim, data)
    }
}

/// Index drawn with probability proportional to `weights`.
pub fn categorical<S: Scalar, R: Rng + ?Sized>(rng: &mut R, weights: &[S]) -> usize {
    let u = S::lit(rng.random::<f64>());
    let mut acc = S::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

pub fn normal_ln_pdf<S: Scalar>(x: S, mean: S, std: S) -> S {
    let z = (x - mean) / std;
    -half_ln_two_pi::<S>() - std.ln() - S::lit(0.5) * z * z
}

pub fn half_normal_ln_pdf<S: Scalar>(x: S, scale: S) -> S {
    if x < S::zero() {
        return S::neg_infinity();
    }
    S::lit(std::f64::consts::LN_2) + normal_ln_pdf(x, S::zero(), scale)
}

pub fn diag_normal_ln_pdf<S: Scalar>(x: &[S], mean: &[S], std: &[S]) -> S {
    x.iter()
        .zip(mean.iter().zip(std))
        .map(|(&xi, (&m, &s))| normal_ln_pdf(xi, m, s))
        .sum()
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp<S: Scalar>(v: &[S]) -> S {
    let m = v.iter().copied().fold(S::neg_infinity(), S::max);
    if m == S::neg_infinity() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<S>().ln()
}

/// Elementwise Normal log-density; operands broadcast.
pub fn normal_log_density<'g, S: Scalar>(x: Var<'g, S>, mean: Var<'g, S>, std: Var<'g, S>) -> Var<'g, S> {
    let z = (x - mean) / std;
    -(std.ln() + z.square().scale(S::lit(0.5))).add_scalar(half_ln_two_pi::<S>())
}

/// Elementwise Normal(mean, 1) log-density.
pub fn unit_normal_log_density<'g, S: Scalar>(x: Var<'g, S>, mean: Var<'g, S>) -> Var<'g, S> {
    (x - mean).square().scale(S::lit(-0.5)).add_scalar(-half_ln_two_pi::<S>())
}

/// Elementwise standard-normal log-density.
pub fn standard_normal_log_density<'g, S: Scalar>(x: Var<'g, S>) -> Var<'g, S> {
    x.square().scale(S::lit(-0.5)).add_scalar(-half_ln_two_pi::<S>())
}

/// Elementwise HalfNormal(scale) log-density for `x > 0`.
pub fn half_normal_log_density<'g, S: Scalar>(x: Var<'g, S>, scale: Var<'g, S>) -> Var<'g, S> {
    normal_log_density(x, x.graph().scalar(S::zero()), scale).add_scalar(S::lit(std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::random::stream;
    use crate::testutil::central_difference;

    #[test]
    fn standard_normal_at_zero() {
        let d = Distribution::normal(0.0f64, 1.0).unwrap();
        assert!((d.log_prob(&[0.0]).unwrap() - -0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_mixture_is_its_component() {
        let means = vec![vec![0.5, -1.0], vec![3.0, 3.0], vec![-2.0, 0.0]];
        let stds = vec![vec![0.7, 1.3], vec![1.0, 1.0], vec![2.0, 0.5]];
        let mix = Distribution::mixture_diag(vec![1.0, 0.0, 0.0], means.clone(), stds.clone()).unwrap();
        let comp = Distribution::mv_normal_diag(means[0].clone(), stds[0].clone()).unwrap();
        for x in [[0.0, 0.0], [1.5, -2.0], [-4.0, 7.0]] {
            assert_eq!(mix.log_prob(&x).unwrap(), comp.log_prob(&x).unwrap());
        }
    }

    #[test]
    fn diagonal_normal_factorizes() {
        let mean = vec![0.3, -1.2, 2.0];
        let std = vec![0.5, 1.0, 2.5];
        let d = Distribution::mv_normal_diag(mean.clone(), std.clone()).unwrap();
        let mut rng = stream(3);
        let pts = Distribution::normal(0.0, 3.0).unwrap().sample(&mut rng, 300).unwrap();
        for x in pts.data().chunks(3) {
            let brute: f64 = (0..3)
                .map(|i| Distribution::normal(mean[i], std[i]).unwrap().log_prob(&[x[i]]).unwrap())
                .sum();
            assert!((d.log_prob(x).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn half_normal_outside_support() {
        let d = Distribution::half_normal(1.0).unwrap();
        assert_eq!(d.log_prob(&[-0.1]).unwrap(), f64::NEG_INFINITY);
        assert!(d.log_prob(&[0.1]).unwrap().is_finite());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(Distribution::normal(0.0, 0.0), Err(Error::Parameter(_))));
        assert!(Distribution::half_normal(-1.0).is_err());
        assert!(Distribution::mixture_diag(vec![0.5, 0.6], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
        assert!(Distribution::mv_normal_diag(vec![0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn normal_sample_moments() {
        let x = Distribution::normal(0.0f64, 1.0).unwrap().sample(&mut stream(11), 100_000).unwrap();
        let mean = x.column_means()[0];
        let var = x.column_variances()[0];
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn half_normal_draws_are_non_negative() {
        let x = Distribution::half_normal(1.0).unwrap().sample(&mut stream(12), 10_000).unwrap();
        assert!(x.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mixture_occupancy() {
        let third = 1.0 / 3.0;
        let d = Distribution::mixture_diag(
            vec![third, third, 1.0 - 2.0 * third],
            vec![vec![-100.0, 0.0], vec![0.0, 0.0], vec![100.0, 0.0]],
            vec![vec![1.0, 1.0]; 3],
        )
        .unwrap();
        let x = d.sample(&mut stream(13), 100_000).unwrap();
        let mut counts = [0usize; 3];
        for row in x.iter_rows() {
            counts[if row[0] < -50.0 { 0 } else if row[0] > 50.0 { 2 } else { 1 }] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - third).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn zero_draws_is_an_error() {
        assert!(Distribution::normal(0.0, 1.0).unwrap().sample(&mut stream(0), 0).is_err());
    }

    #[test]
    fn one_dimensional_densities_integrate_to_one() {
        let trapezoid = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * f(lo + i as f64 * h)
                })
                .sum::<f64>()
                * h
        };
        let normal = Distribution::normal(1.5, 0.7).unwrap();
        let z = trapezoid(&|x| normal.log_prob(&[x]).unwrap().exp(), 1.5 - 7.0, 1.5 + 7.0);
        assert!((z - 1.0).abs() < 1e-3, "{z}");
        let half = Distribution::half_normal(2.0).unwrap();
        let z = trapezoid(&|x| half.log_prob(&[x]).unwrap().exp(), 0.0, 20.0);
        assert!((z - 1.0).abs() < 1e-3, "{z}");
    }

    #[test]
    fn half_normal_change_of_variables() {
        // density of ξ = ln θ equals p(exp ξ) · exp ξ
        let g = Graph::<f64>::new();
        for theta in [0.01f64, 0.3, 1.0, 4.2] {
            let xi = g.constant(Tensor::scalar(theta.ln()));
            let scale = g.scalar(1.0);
            let through = half_normal_log_density(xi.exp(), scale) + xi;
            let direct = half_normal_ln_pdf(theta, 1.0) + theta.ln();
            assert!((through.item() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn graph_densities_match_plain_ones_and_finite_differences() {
        let (x0, m0, s0) = (0.4, -0.3, 1.7);
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(x0));
        let m = g.leaf(Tensor::scalar(m0));
        let s = g.leaf(Tensor::scalar(s0));
        let lp = normal_log_density(x, m, s).sum();
        assert!((lp.item() - normal_ln_pdf(x0, m0, s0)).abs() < 1e-14);
        let grads = g.backward(lp);
        let fd = central_difference(|v| normal_ln_pdf(v[0], v[1], v[2]), &[x0, m0, s0], 1e-5);
        for (var, expect) in [x, m, s].into_iter().zip(fd) {
            let got = grads.wrt(var).item();
            assert!(((got - expect) / expect).abs() < 1e-4, "{got} vs {expect}");
        }
    }
}
