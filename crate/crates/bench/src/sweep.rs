//! Sweep grids and their expansion into cells.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmvi_core::models::MODEL_NAMES;
use dmvi_core::{GenerativeModel, Method};

use crate::{BenchError, Result};

/// Diffusion and solver settings of a DMVI cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SolverSettings {
    pub n_diffusion: usize,
    pub steps: usize,
    pub order: usize,
}

/// One run of the sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub model: String,
    pub method: Method,
    pub n_data: usize,
    /// Present exactly for DMVI.
    pub solver: Option<SolverSettings>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub models: Vec<String>,
    pub methods: Vec<Method>,
    pub n_data: Vec<usize>,
    pub n_diffusion: Vec<usize>,
    pub solver_steps: Vec<usize>,
    pub solver_order: Vec<usize>,
    pub replicates: usize,
    /// Replicate `r` uses seed `seed + r`.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for SweepConfig {
    /// The full grid over every model.
    fn default() -> Self {
        Self {
            models: MODEL_NAMES.iter().map(|s| s.to_string()).collect(),
            methods: Method::ALL.to_vec(),
            n_data: vec![100, 1000],
            n_diffusion: vec![50, 100],
            solver_steps: vec![10, 20],
            solver_order: vec![1, 3],
            replicates: 5,
            seed: 1,
            out: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("models", self.models.is_empty()),
            ("methods", self.methods.is_empty()),
            ("n-data", self.n_data.is_empty()),
            ("n-diff", self.n_diffusion.is_empty()),
            ("solver-steps", self.solver_steps.is_empty()),
            ("solver-order", self.solver_order.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(BenchError::Config(format!("`{name}` must list at least one value")));
        }
        if self.replicates == 0 {
            return Err(BenchError::Config("replicates must be at least 1".into()));
        }
        for m in &self.models {
            GenerativeModel::by_name(m)?;
        }
        for &o in &self.solver_order {
            if o != 1 && o != 3 {
                return Err(BenchError::Config(format!("solver order {o} is not 1 or 3")));
            }
        }
        if self.solver_steps.contains(&0) || self.n_diffusion.iter().any(|&t| t < 2) || self.n_data.contains(&0) {
            return Err(BenchError::Config("step counts and data sizes must be positive".into()));
        }
        Ok(())
    }

    /// Every cell, ordered by model, data size, method, solver settings and
    /// replicate.
    pub fn expand(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let mut solvers = Vec::new();
        for &n_diffusion in &self.n_diffusion {
            for &steps in &self.solver_steps {
                for &order in &self.solver_order {
                    solvers.push(SolverSettings {
                        n_diffusion,
                        steps,
                        order,
                    });
                }
            }
        }
        let mut cells = Vec::new();
        for model in &self.models {
            for &n_data in &self.n_data {
                for &method in &self.methods {
                    let settings: Vec<Option<SolverSettings>> = match method {
                        Method::Dmvi => solvers.iter().copied().map(Some).collect(),
                        _ => vec![None],
                    };
                    for solver in settings {
                        for r in 0..self.replicates {
                            cells.push(Cell {
                                model: model.clone(),
                                method,
                                n_data,
                                solver,
                                seed: self.seed + r as u64,
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are
    /// skipped. Keys are the long flag names, with `-` or `_`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            match key.as_str() {
                "model" | "models" => self.models = parse_list(value, |s| Ok(s.to_string()))?,
                "method" | "methods" => self.methods = parse_list(value, |s| Ok(s.parse()?))?,
                "n-data" => self.n_data = parse_list(value, parse_num)?,
                "n-diff" => self.n_diffusion = parse_list(value, parse_num)?,
                "solver-steps" => self.solver_steps = parse_list(value, parse_num)?,
                "solver-order" => self.solver_order = parse_list(value, parse_num)?,
                "replicates" => self.replicates = parse_num(value)?,
                "seed" => self.seed = parse_num(value)?,
                "out" => self.out = Some(PathBuf::from(value)),
                _ => return Err(BenchError::Config(format!("line {}: unknown key `{key}`", i + 1))),
            }
            if seen.insert(key.clone(), i).is_some() {
                return Err(BenchError::Config(format!("line {}: `{key}` given twice", i + 1)));
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_overrides(&std::fs::read_to_string(path)?)
    }
}

/// Comma-separated values.
pub fn parse_list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| BenchError::Config(format!("`{s}` is not a valid number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_model_full_grid_has_twenty_runs_per_replicate() {
        let sweep = SweepConfig {
            models: vec!["hier5".into()],
            replicates: 1,
            ..SweepConfig::default()
        };
        let cells = sweep.expand().unwrap();
        assert_eq!(cells.len(), 20);
        let dmvi = cells.iter().filter(|c| c.method == Method::Dmvi).count();
        assert_eq!(dmvi, 16);
        assert!(cells.iter().all(|c| c.solver.is_some() == (c.method == Method::Dmvi)));
    }

    #[test]
    fn replicates_multiply_runs_and_shift_seeds() {
        let sweep = SweepConfig {
            models: vec!["mean".into()],
            seed: 10,
            ..SweepConfig::default()
        };
        let cells = sweep.expand().unwrap();
        assert_eq!(cells.len(), 100);
        let seeds: std::collections::BTreeSet<u64> = cells.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn overrides_from_text() {
        let mut sweep = SweepConfig::default();
        sweep
            .apply_overrides("# quick run\nmodel = mean, mixture\nmethod=advi\nn_data = 100\nreplicates = 2\n")
            .unwrap();
        assert_eq!(sweep.models, vec!["mean", "mixture"]);
        assert_eq!(sweep.methods, vec![Method::Advi]);
        assert_eq!(sweep.n_data, vec![100]);
        assert_eq!(sweep.expand().unwrap().len(), 4);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let mut sweep = SweepConfig::default();
        assert!(sweep.apply_overrides("colour = red").is_err());
        assert!(sweep.apply_overrides("replicates").is_err());
        assert!(sweep.apply_overrides("seed = x").is_err());
        assert!(sweep.apply_overrides("seed = 1\nseed = 2").is_err());
        let mut sweep = SweepConfig::default();
        sweep.apply_overrides("solver-order = 2").unwrap();
        assert!(sweep.expand().is_err());
    }
}
