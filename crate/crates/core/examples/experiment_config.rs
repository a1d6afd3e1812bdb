//! Builds an experiment config in code, runs it the way the `lbsde` binary
//! does and prints the manifest. Outputs go to a temporary directory.

use loggrowth_bsde::cli::{run, CommandKind, ExperimentConfig, GridSpec};

fn main() -> loggrowth_bsde::Result<()> {
    let dir = std::env::temp_dir().join("lbsde-example");
    let mut cfg = ExperimentConfig::new(CommandKind::Control);
    cfg.seed = 7;
    cfg.solver.n_paths = 10_000;
    cfg.solver.n_steps = 20;
    cfg.solver.schedule = vec![8, 16, 32];
    cfg.problem.action_grid = GridSpec::Points(vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    cfg.problem.random_candidates = 2;
    cfg.out = Some(dir.display().to_string());
    println!("{}", serde_json::to_string_pretty(&cfg)?);

    let manifest = run(&cfg)?;
    println!("pass: {}  ({})", manifest.pass, manifest.summary);
    println!("fingerprint {}", manifest.fingerprint);
    for f in &manifest.outputs {
        println!("  {}", dir.join(f).display());
    }
    Ok(())
}
