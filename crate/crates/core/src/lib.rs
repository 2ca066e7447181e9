//! Variational inference with diffusion-model guides.
//!
//! The crate provides a small reverse-mode autodiff engine ([`autodiff`]), the
//! score network and optimizer built on it ([`nn`], [`optim`]), densities and
//! unconstraining bijections ([`distributions`], [`bijector`]), the benchmark
//! generative models ([`models`]), three variational guides ([`diffusion`],
//! [`advi`], [`iaf`]) behind one [`Guide`] contract, and the stochastic ELBO
//! training loop ([`engine`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`, which is what the benchmarks use.

pub mod advi;
pub mod autodiff;
pub mod bijector;
pub mod checkpoint;
pub mod diffusion;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod guide;
pub mod iaf;
pub mod models;
pub mod nn;
pub mod optim;
pub mod params;
pub mod random;
pub mod scalar;
pub mod tensor;

pub use advi::AdviGuide;
pub use autodiff::{Gradients, Graph, Var};
pub use checkpoint::AnyGuide;
pub use diffusion::{DiffusionConfig, DiffusionGuide, NoiseSchedule, SolverConfig};
pub use engine::{estimate_objective, evaluate_objective, train, ObjectiveEstimate, TrainConfig, TrainTrace};
pub use error::{Error, Result};
pub use guide::{EvidenceKind, Guide, Method};
pub use iaf::IafGuide;
pub use models::{Dataset, GenerativeModel};
pub use nn::{MlpConfig, ScoreNet};
pub use optim::AdamW;
pub use params::{evaluate_with_gradient, BoundParams, ParamGrads, ParamStore};
pub use random::RngStream;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Graph64 = Graph<f64>;
pub type ParamStore64 = ParamStore<f64>;
pub type Dataset64 = Dataset<f64>;
pub type AnyGuide64 = AnyGuide<f64>;
