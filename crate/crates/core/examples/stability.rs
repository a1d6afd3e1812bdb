//! Perturbs a linear driver by `sin(y)/n` and the terminal value by `1/n`,
//! then tracks the driver, terminal and solution gaps as `n` grows.

use loggrowth_bsde::diagnostics::{run_stability_experiment, Perturbation};
use loggrowth_bsde::driver::DriverSpec;
use loggrowth_bsde::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};
use loggrowth_bsde::solver::{PicardOptions, RegressionBasis, TerminalCondition};

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 20)?;
    let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0)?, &sample_brownian(&grid, 1, 10_000, 4)?)?;
    let d = DriverSpec::linear_y(-1.0, 1)?;
    let xi = TerminalCondition::x_terminal(1.0);
    let perts = [2, 4, 8, 16].iter().map(|&n| Perturbation::sin_y(&d, &xi, n)).collect::<Result<Vec<_>, _>>()?;
    let r = run_stability_experiment(&d, &xi, &perts, 1.5, &[10], &x, &RegressionBasis::polynomial(2), PicardOptions::default())?;
    println!("{:>3} {:>12} {:>12} {:>12} {:>12}", "n", "rho_10", "xi gap", "Y gap^q", "Z gap^q");
    for row in &r.rows {
        println!(
            "{:>3} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            row.n,
            row.rho[0].value,
            row.xi_gap.mean,
            row.y_gap.map_or(f64::NAN, |g| g.mean),
            row.z_gap.map_or(f64::NAN, |g| g.mean)
        );
    }
    println!("decreasing: rho {}, xi {}, solution {}", r.rho_decreasing, r.xi_decreasing, r.solution_decreasing);
    Ok(())
}
