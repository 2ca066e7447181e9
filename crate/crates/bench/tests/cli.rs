use std::process::Command;

use dmvi_bench::{read_csv, run_experiment, Cell, RunOptions, SolverSettings};
use dmvi_core::Method;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmvi-bench"))
}

const QUICK: [&str; 4] = ["--max-steps", "30", "--draws", "200"];

#[test]
fn csv_goes_to_stdout_without_out() {
    let out = bench()
        .args(["--model", "mean", "--method", "ADVI,NFVI", "--n-data", "100", "--replicates", "2"])
        .args(QUICK)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.n_diff.is_none() && r.mse.is_finite()));
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 1, 2]);
    // the summary goes to stderr so stdout stays parseable
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean  N=100"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.conf");
    let csv = dir.path().join("rows.csv");
    std::fs::write(
        &config,
        format!(
            "# one DMVI cell\nmodel = hier2\nmethod = DMVI\nn_data = 100\nn_diff = 50\nsolver_steps = 10\nsolver_order = 3\nreplicates = 1\nout = {}\n",
            csv.display()
        ),
    )
    .unwrap();
    let out = bench()
        .args(["--model", "mixture", "--config"])
        .arg(&config)
        .args(QUICK)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].model, "hier2");
    assert_eq!((rows[0].n_diff, rows[0].n_steps, rows[0].n_order), (Some(50), Some(10), Some(3)));
    assert!(String::from_utf8_lossy(&out.stdout).contains("hier2  N=100"));
}

#[test]
fn invalid_settings_exit_with_code_two() {
    for args in [
        vec!["--model", "nonsense"],
        vec!["--method", "MCMC"],
        vec!["--solver-order", "2"],
        vec!["--n-data", "ten"],
        vec!["--replicates", "0"],
    ] {
        let out = bench().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}

#[test]
fn repeated_runs_reproduce_the_row() {
    let cell = Cell {
        model: "mixture".into(),
        method: Method::Dmvi,
        n_data: 100,
        solver: Some(SolverSettings {
            n_diffusion: 50,
            steps: 10,
            order: 1,
        }),
        seed: 8,
    };
    let options = RunOptions {
        draws: 300,
        max_steps: Some(20),
    };
    let a = run_experiment(&cell, &options).unwrap();
    let b = run_experiment(&cell, &options).unwrap();
    assert_eq!(a.mse.to_bits(), b.mse.to_bits());
    let other = run_experiment(&Cell { seed: 9, ..cell }, &options).unwrap();
    assert_ne!(a.mse, other.mse);
}
