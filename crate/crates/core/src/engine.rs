//! Monte Carlo objective and the stochastic-gradient training loop shared by
//! all guides.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::index;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::guide::{EvidenceKind, Guide};
use crate::models::{Dataset, GenerativeModel};
use crate::optim::AdamW;
use crate::params::BoundParams;
use crate::random::{substream, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-draw objective terms `ln p(y, f⁻¹(ξ)) + ln|J| ∓ evidence`, `[m, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn objective_terms<'g, S, G>(
    model: &GenerativeModel,
    guide: &G,
    p: &BoundParams<'g, S>,
    g: &'g Graph<S>,
    batch: &Tensor<S>,
    scale: S,
    rng: &mut RngStream,
    m: usize,
) -> Result<Var<'g, S>>
where
    S: Scalar,
    G: Guide<S> + ?Sized,
{
    if guide.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "guide has dimension {}, model {} needs {}",
            guide.dim(),
            model.name(),
            model.dim()
        )));
    }
    let (xi, evidence) = guide.sample_and_evidence(p, g, rng, m)?;
    let log_joint = model.log_joint_unconstrained(xi, batch, scale)?;
    let terms = match guide.evidence_kind() {
        EvidenceKind::LogDensity => log_joint - evidence,
        EvidenceKind::NegativeLoss => log_joint + evidence,
    };
    if let Some(bad) = terms.with_value(|t| t.data().iter().position(|v| !v.is_finite())) {
        return Err(Error::numeric(format!("objective sample {bad}"), "non-finite estimate"));
    }
    Ok(terms)
}

/// Mean of [`objective_terms`] over `m` draws, as `1 x 1`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_objective<'g, S, G>(
    model: &GenerativeModel,
    guide: &G,
    p: &BoundParams<'g, S>,
    g: &'g Graph<S>,
    batch: &Tensor<S>,
    scale: S,
    rng: &mut RngStream,
    m: usize,
) -> Result<Var<'g, S>>
where
    S: Scalar,
    G: Guide<S> + ?Sized,
{
    if m == 0 {
        return Err(Error::Config("need at least one Monte Carlo sample".into()));
    }
    Ok(objective_terms(model, guide, p, g, batch, scale, rng, m)?.mean())
}

/// A Monte Carlo objective estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Full-data objective with `m` draws, evaluated in chunks without
/// gradient tracking.
pub fn evaluate_objective<S, G>(
    model: &GenerativeModel,
    guide: &G,
    data: &Tensor<S>,
    rng: &mut RngStream,
    m: usize,
) -> Result<ObjectiveEstimate>
where
    S: Scalar,
    G: Guide<S> + ?Sized,
{
    if m < 2 {
        return Err(Error::Config("a standard error needs at least two samples".into()));
    }
    let mut values = Vec::with_capacity(m);
    let mut left = m;
    while left > 0 {
        let k = left.min(crate::guide::SAMPLE_CHUNK);
        let g = Graph::new();
        let p = guide.params().bind_frozen(&g);
        let terms = objective_terms(model, guide, &p, &g, data, S::one(), rng, k)?;
        values.extend(terms.value().data().iter().map(|v| v.as_f64()));
        left -= k;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ObjectiveEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Monte Carlo draws per step.
    pub mc_samples: usize,
    pub max_steps: usize,
    /// Width of the non-overlapping moving-average windows.
    pub window: usize,
    /// Relative improvement between consecutive windows regarded as a stall.
    pub tolerance: f64,
    /// Consecutive stalled windows that end training.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            mc_samples: 5,
            max_steps: 20_000,
            window: 500,
            tolerance: 1e-3,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults with the step budget for a data set of `n` observations.
    pub fn for_data_size(n: usize, seed: u64) -> Self {
        Self {
            max_steps: if n >= 1000 { 50_000 } else { 20_000 },
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_data: usize) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_data {
            return Err(Error::Config(format!(
                "batch size {} must lie in 1..={n_data}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.window == 0 || self.patience == 0 {
            return Err(Error::Config("convergence window and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Objective per optimizer step plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub objectives: Vec<f64>,
    /// Wall-clock time of the optimization loop alone.
    pub duration: Duration,
    pub converged: bool,
}

impl TrainTrace {
    pub fn steps(&self) -> usize {
        self.objectives.len()
    }

    /// One `{"step": i, "objective": v}` record per line, steps from 1.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, v) in self.objectives.iter().enumerate() {
            writeln!(w, "{{\"step\":{},\"objective\":{v}}}", i + 1)?;
        }
        Ok(())
    }
}

/// Stall detector over non-overlapping window means.
#[derive(Debug, Clone)]
struct Convergence {
    window: usize,
    tolerance: f64,
    patience: usize,
    previous: Option<f64>,
    stalled: usize,
}

impl Convergence {
    fn new(c: &TrainConfig) -> Self {
        Self {
            window: c.window,
            tolerance: c.tolerance,
            patience: c.patience,
            previous: None,
            stalled: 0,
        }
    }

    /// True once `patience` consecutive windows improved by less than the
    /// tolerance.
    fn update(&mut self, objectives: &[f64]) -> bool {
        if objectives.is_empty() || !objectives.len().is_multiple_of(self.window) {
            return false;
        }
        let current = objectives[objectives.len() - self.window..].iter().sum::<f64>() / self.window as f64;
        if let Some(prev) = self.previous {
            let rel = (current - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if rel < self.tolerance {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.previous = Some(current);
        self.stalled >= self.patience
    }
}

/// Maximizes the objective over the guide parameters with AdamW on
/// mini-batches drawn without replacement.
pub fn train<S, G>(model: &GenerativeModel, data: &Dataset<S>, guide: &mut G, config: &TrainConfig) -> Result<TrainTrace>
where
    S: Scalar,
    G: Guide<S> + ?Sized,
{
    let n = data.len();
    config.validate(n)?;
    let observations = &data.observations;
    let scale = S::count(n) / S::count(config.batch_size);
    let optimizer = AdamW::with_learning_rate(config.learning_rate);
    let mut rng = substream(config.seed, 1);
    let mut convergence = Convergence::new(config);
    let mut objectives = Vec::with_capacity(config.max_steps.min(100_000));
    let mut converged = false;

    let start = Instant::now();
    for step in 0..config.max_steps {
        let fail = |e: Error, objectives: &[f64]| Error::Training {
            step,
            last_objective: objectives.last().copied(),
            source: Box::new(e),
        };
        let rows = index::sample(&mut rng, n, config.batch_size).into_vec();
        let batch = observations.select_rows(&rows);
        let (value, grads) = {
            let g = Graph::new();
            let p = guide.params().bind(&g);
            let objective = estimate_objective(model, &*guide, &p, &g, &batch, scale, &mut rng, config.mc_samples)
                .map_err(|e| fail(e, &objectives))?;
            let grads = p.gradients(&g.backward(-objective));
            (objective.item(), grads)
        };
        optimizer
            .step(guide.params_mut(), &grads)
            .map_err(|e| fail(e, &objectives))?;
        objectives.push(value.as_f64());
        if convergence.update(&objectives) {
            converged = true;
            break;
        }
    }
    Ok(TrainTrace {
        objectives,
        duration: start.elapsed(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advi::AdviGuide;
    use crate::random::stream;

    #[test]
    fn stall_detection() {
        let config = TrainConfig {
            window: 2,
            patience: 2,
            ..TrainConfig::default()
        };
        let mut c = Convergence::new(&config);
        let mut obj = Vec::new();
        let mut stops = Vec::new();
        for v in [-10.0, -10.0, -5.0, -5.0, -5.0, -5.0, -5.0, -5.0] {
            obj.push(v);
            stops.push(c.update(&obj));
        }
        assert_eq!(stops, vec![false, false, false, false, false, false, false, true]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate(100).is_ok());
        assert!(TrainConfig::default().validate(10).is_err());
        assert!(TrainConfig {
            mc_samples: 0,
            ..TrainConfig::default()
        }
        .validate(100)
        .is_err());
        assert_eq!(TrainConfig::for_data_size(1000, 0).max_steps, 50_000);
    }

    #[test]
    fn jsonl_trace() {
        let trace = TrainTrace {
            objectives: vec![-3.5, -2.0],
            duration: Duration::ZERO,
            converged: false,
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"step\":1,\"objective\":-3.5}\n{\"step\":2,\"objective\":-2}\n"
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = GenerativeModel::mean(3);
        let guide = AdviGuide::<f64>::new(2);
        let g = Graph::new();
        let p = guide.params().bind(&g);
        let r = estimate_objective(&model, &guide, &p, &g, &Tensor::zeros(1, 3), 1.0, &mut stream(0), 2);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn one_step_moves_parameters() {
        let model = GenerativeModel::mean(2);
        let data: Dataset<f64> = model.simulate(1, 40).unwrap();
        let mut guide = AdviGuide::new(2);
        let before = guide.clone();
        let config = TrainConfig {
            max_steps: 1,
            ..TrainConfig::default()
        };
        let trace = train(&model, &data, &mut guide, &config).unwrap();
        assert_eq!(trace.steps(), 1);
        assert_ne!(guide, before);
    }
}
