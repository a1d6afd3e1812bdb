//! Writes a solution as CSV and as a binary dump, then reads the dump back.

use loggrowth_bsde::driver::DriverSpec;
use loggrowth_bsde::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};
use loggrowth_bsde::solver::{read_solution_binary, solve_lipschitz, write_solution_binary, write_solution_csv, PicardOptions, RegressionBasis, TerminalCondition};

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 5)?;
    let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0)?, &sample_brownian(&grid, 1, 1000, 9)?)?;
    let sol = solve_lipschitz(&DriverSpec::linear_z(0.5, 1)?, &TerminalCondition::x_terminal(1.0), &x, &RegressionBasis::polynomial(2), PicardOptions::default())?;

    write_solution_csv(&sol, std::io::stdout().lock())?;
    let mut bytes = Vec::new();
    write_solution_binary(&sol, &mut bytes)?;
    let back = read_solution_binary(bytes.as_slice())?;
    println!("binary dump: {} bytes, round trip exact: {}", bytes.len(), back == sol);
    Ok(())
}
