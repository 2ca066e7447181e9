use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dmvi_bench::sweep::parse_list;
use dmvi_bench::{aggregate, run_experiment, summary_table, write_csv, BenchError, RunOptions, SweepConfig};
use rayon::prelude::*;

/// Sweep DMVI, ADVI and NFVI over the synthetic model zoo.
///
/// List-valued flags take comma-separated values. Values from `--config`
/// override flags.
#[derive(Debug, Parser)]
#[command(name = "dmvi-bench", version)]
struct Args {
    /// Models: mean, mixture, hier1..hier5.
    #[arg(long, default_value = "mean,mixture,hier1,hier2,hier3,hier4,hier5")]
    model: String,
    /// Methods: ADVI, DMVI, NFVI.
    #[arg(long, default_value = "ADVI,DMVI,NFVI")]
    method: String,
    #[arg(long, default_value = "100,1000")]
    n_data: String,
    /// Diffusion steps T (DMVI only).
    #[arg(long, default_value = "50,100")]
    n_diff: String,
    /// Solver steps (DMVI only).
    #[arg(long, default_value = "10,20")]
    solver_steps: String,
    /// Solver order, 1 or 3 (DMVI only).
    #[arg(long, default_value = "1,3")]
    solver_order: String,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    /// Base seed; replicate r uses seed + r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain `key = value` file overriding the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Cap on optimizer steps per run (default depends on data size).
    #[arg(long)]
    max_steps: Option<usize>,
    /// Posterior draws scored per run.
    #[arg(long, default_value_t = dmvi_bench::run::POSTERIOR_DRAWS)]
    draws: usize,
}

fn sweep_from(args: &Args) -> Result<SweepConfig, BenchError> {
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| BenchError::Config(format!("`{s}` is not a count")))
    };
    let mut sweep = SweepConfig {
        models: parse_list(&args.model, |s| Ok(s.to_string()))?,
        methods: parse_list(&args.method, |s| Ok(s.parse()?))?,
        n_data: parse_list(&args.n_data, num)?,
        n_diffusion: parse_list(&args.n_diff, num)?,
        solver_steps: parse_list(&args.solver_steps, num)?,
        solver_order: parse_list(&args.solver_order, num)?,
        replicates: args.replicates,
        seed: args.seed,
        out: args.out.clone(),
    };
    if let Some(path) = &args.config {
        sweep.apply_file(path)?;
    }
    Ok(sweep)
}

fn run(args: Args) -> Result<bool, BenchError> {
    let sweep = sweep_from(&args)?;
    let cells = sweep.expand()?;
    let options = RunOptions {
        draws: args.draws,
        max_steps: args.max_steps,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    eprintln!("running {} cells on {} worker(s)", cells.len(), args.jobs.max(1));
    let results: Vec<_> = pool.install(|| cells.par_iter().map(|c| run_experiment(c, &options)).collect());

    let mut rows = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (cell, result) in cells.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                let solver = cell
                    .solver
                    .map(|s| format!(" N_d={} N_s={} N_o={}", s.n_diffusion, s.steps, s.order))
                    .unwrap_or_default();
                eprintln!(
                    "failed: {} {} N={}{solver} seed={}: {e}",
                    cell.model, cell.method, cell.n_data, cell.seed
                );
            }
        }
    }
    match &sweep.out {
        Some(path) => write_csv(&rows, std::fs::File::create(path)?)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    if !rows.is_empty() {
        let table = summary_table(&aggregate(&rows)?);
        if sweep.out.is_some() {
            print!("{table}");
        } else {
            eprint!("{table}");
        }
    }
    std::io::stdout().flush()?;
    Ok(failed == 0)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
