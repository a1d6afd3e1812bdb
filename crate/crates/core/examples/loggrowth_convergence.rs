//! Solves a BSDE whose driver grows like `|z|√ln|z|` through the
//! mollify/truncate schedule and prints the Cauchy table.

use loggrowth_bsde::driver::DriverSpec;
use loggrowth_bsde::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};
use loggrowth_bsde::solver::{solve_loggrowth, LoggrowthOptions, PicardOptions, RegressionBasis, TerminalCondition};

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 20)?;
    let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0)?, &sample_brownian(&grid, 1, 20_000, 5)?)?;
    let run = solve_loggrowth(
        &DriverSpec::loggrowth(0.5, 1)?,
        &TerminalCondition::x_terminal(3.0),
        &x,
        &RegressionBasis::polynomial(2),
        &[8, 16, 32, 64],
        PicardOptions::default(),
        LoggrowthOptions::default(),
    )?;
    println!("{:>4} {:>5} {:>14} {:>14}", "n", "n'", "E max|dY|^1.5", "E int|dZ|");
    for c in &run.cauchy {
        println!("{:>4} {:>5} {:>14.3e} {:>14.3e}", c.n, c.n_next, c.y_gap.mean, c.z_gap.mean);
    }
    for a in &run.approximations {
        println!("n = {:>3}: width {:.3e}, Lipschitz bound {:.3e}", a.n, a.width, a.lipschitz);
    }
    println!("Y0 = {}  converged: {}", run.solution().y0(), run.converged);
    Ok(())
}
