//! Running one sweep cell.

use std::time::Instant;

use dmvi_core::random::substream;
use dmvi_core::{
    train, AnyGuide, Dataset64, DiffusionConfig, GenerativeModel, Guide, Method, Tensor64, TrainConfig, TrainTrace,
};

use crate::report::BenchmarkRow;
use crate::sweep::{Cell, SolverSettings};
use crate::{BenchError, Result};

/// Posterior draws scored per run.
pub const POSTERIOR_DRAWS: usize = 20_000;

const INIT_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub draws: usize,
    /// Overrides the data-size dependent step budget.
    pub max_steps: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            draws: POSTERIOR_DRAWS,
            max_steps: None,
        }
    }
}

/// Mean over draws and coordinates of the squared deviation from `truth`.
pub fn compute_mse(draws: &Tensor64, truth: &[f64]) -> Result<f64> {
    if draws.cols() != truth.len() {
        return Err(BenchError::Config(format!(
            "draws have {} coordinates, truth has {}",
            draws.cols(),
            truth.len()
        )));
    }
    if draws.rows() == 0 {
        return Err(BenchError::Config("no draws to score".into()));
    }
    let total: f64 = draws
        .iter_rows()
        .flat_map(|row| row.iter().zip(truth).map(|(x, t)| (x - t) * (x - t)))
        .sum();
    Ok(total / draws.len() as f64)
}

/// [`compute_mse`] after per-draw component matching for models that need it.
pub fn model_mse(model: &GenerativeModel, constrained: &Tensor64, truth: &[f64]) -> Result<f64> {
    let mut aligned = constrained.clone();
    let cols = aligned.cols();
    for row in aligned.data_mut().chunks_mut(cols.max(1)) {
        model.align_to_truth(row, truth);
    }
    compute_mse(&aligned, truth)
}

/// A trained guide and everything needed to score it.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: GenerativeModel,
    pub data: Dataset64,
    pub guide: AnyGuide<f64>,
    pub trace: TrainTrace,
}

impl Fit {
    /// Constrained-space posterior draws and the seconds spent drawing them.
    pub fn posterior_draws(&self, seed: u64, n: usize) -> Result<(Tensor64, f64)> {
        let start = Instant::now();
        let xi = self.guide.sample_values(&mut substream(seed, SAMPLE_STREAM), n)?;
        let elapsed = start.elapsed().as_secs_f64();
        Ok((self.model.layout().constrain_rows(&xi), elapsed))
    }
}

fn diffusion_config(solver: Option<SolverSettings>) -> Result<DiffusionConfig> {
    let s = solver.unwrap_or(SolverSettings {
        n_diffusion: 50,
        steps: 10,
        order: 1,
    });
    Ok(DiffusionConfig::new(s.n_diffusion, s.steps, s.order)?)
}

/// Simulates the cell's data set and trains its guide.
pub fn fit(cell: &Cell, options: &RunOptions) -> Result<Fit> {
    if (cell.method == Method::Dmvi) != cell.solver.is_some() {
        return Err(BenchError::Config("solver settings must be given exactly for DMVI".into()));
    }
    let model = GenerativeModel::by_name(&cell.model)?;
    let data: Dataset64 = model.simulate(cell.seed, cell.n_data)?;
    let mut guide = AnyGuide::new(
        cell.method,
        model.dim(),
        &diffusion_config(cell.solver)?,
        &mut substream(cell.seed, INIT_STREAM),
    )?;
    let mut config = TrainConfig::for_data_size(cell.n_data, cell.seed);
    if let Some(m) = options.max_steps {
        config.max_steps = m;
    }
    let trace = train(&model, &data, &mut guide, &config)?;
    Ok(Fit {
        model,
        data,
        guide,
        trace,
    })
}

/// Simulate, train, time the posterior draws and score them.
pub fn run_experiment(cell: &Cell, options: &RunOptions) -> Result<BenchmarkRow> {
    let fit = fit(cell, options)?;
    let (draws, t_sample) = fit.posterior_draws(cell.seed, options.draws)?;
    let mse = model_mse(&fit.model, &draws, &fit.data.theta_true)?;
    Ok(BenchmarkRow {
        model: cell.model.clone(),
        method: cell.method,
        n_data: cell.n_data,
        n_diff: cell.solver.map(|s| s.n_diffusion),
        n_steps: cell.solver.map(|s| s.steps),
        n_order: cell.solver.map(|s| s.order),
        seed: cell.seed,
        t_train_s: fit.trace.duration.as_secs_f64(),
        t_sample_s: t_sample,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmvi_core::random::{standard_normal_tensor, stream};

    #[test]
    fn perfect_recovery_scores_zero() {
        let truth = vec![0.5, -1.0, 2.0];
        let draws = Tensor64::from_rows(&vec![truth.clone(); 10]).unwrap();
        assert_eq!(compute_mse(&draws, &truth).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_scores_one() {
        let truth = vec![0.5, -1.0, 2.0];
        let shifted: Vec<f64> = truth.iter().map(|t| t + 1.0).collect();
        let draws = Tensor64::from_rows(&vec![shifted; 10]).unwrap();
        assert!((compute_mse(&draws, &truth).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_draws_score_their_variance() {
        let v: f64 = 0.3;
        let truth = vec![1.0, -2.0, 0.0, 4.0];
        let z = standard_normal_tensor::<f64, _>(&mut stream(11), 20_000, 4);
        let draws = Tensor64::from_fn(20_000, 4, |r, c| truth[c] + v.sqrt() * z.get(r, c));
        let mse = compute_mse(&draws, &truth).unwrap();
        assert!((mse / v - 1.0).abs() < 0.03, "{mse}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let draws = Tensor64::zeros(3, 2);
        assert!(compute_mse(&draws, &[0.0; 3]).is_err());
    }

    #[test]
    fn mixture_scoring_ignores_labels() {
        let model = GenerativeModel::mixture();
        let truth = vec![0.0, 0.0, 1.0, 1.0, -2.0, 3.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let swapped = vec![1.0, 1.0, -2.0, 3.0, 0.0, 0.0, 0.3, 0.4, 0.5, 0.6, 0.1, 0.2];
        let draws = Tensor64::from_rows(&[swapped]).unwrap();
        assert_eq!(model_mse(&model, &draws, &truth).unwrap(), 0.0);
    }

    #[test]
    fn solver_settings_required_for_dmvi_only() {
        let cell = Cell {
            model: "mean".into(),
            method: Method::Advi,
            n_data: 100,
            solver: Some(SolverSettings {
                n_diffusion: 50,
                steps: 10,
                order: 1,
            }),
            seed: 1,
        };
        assert!(fit(&cell, &RunOptions::default()).is_err());
    }
}
