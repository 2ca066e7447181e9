//! Random draws used throughout: seeded streams, Gaussian tensors, initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The crate's seedable random stream.
pub type RngStream = ChaCha8Rng;

pub fn stream(seed: u64) -> RngStream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a labelled sub-task of a seeded run.
pub fn substream(seed: u64, label: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

pub fn standard_normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R) -> S {
    let z: f64 = StandardNormal.sample(rng);
    S::lit(z)
}

pub fn standard_normal_tensor<S: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor<S> {
    Tensor::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Normal(0, std) draws rejected outside two standard deviations.
pub fn truncated_normal_tensor<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    std: f64,
) -> Tensor<S> {
    Tensor::from_fn(rows, cols, |_, _| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break S::lit(z * std);
        }
    })
}
