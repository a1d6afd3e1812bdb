//! The canonical control problem: minimize `E[X_T]` under `dX = a dt + dW`,
//! `a ∈ [−1, 1]`. The value is `−1` and the feedback control is `a = −1`.

use loggrowth_bsde::control::{random_constant_actions, solve_value_bsde, verify_optimality, ControlProblem, Policy, ValueOptions};
use loggrowth_bsde::paths::make_time_grid;
use loggrowth_bsde::solver::{PicardOptions, RegressionBasis};

fn main() -> loggrowth_bsde::Result<()> {
    let problem = ControlProblem::canonical();
    let grid = make_time_grid(1.0, 20)?;
    let x = problem.simulate(&grid, 20_000, 1)?;
    let value = solve_value_bsde(&problem, &x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), ValueOptions::default())?;
    println!("Y0 = {}  (exact -1), c0 = {:.3}", value.y0(), value.c0);

    let mut candidates = vec![Policy::Constant(-1.0), Policy::Constant(0.0), Policy::Constant(1.0)];
    candidates.extend(random_constant_actions(problem.actions(), 4, 2).into_iter().map(Policy::Constant));
    let report = verify_optimality(&problem, &value, &candidates, 20_000, 3)?;
    println!("{:<12} {:>10} {:>10} {:>10}", "policy", "J drift", "J girsanov", "margin");
    for row in &report.rows {
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4}",
            row.policy, row.drift_sim.j.mean, row.girsanov.j.mean, row.lower_bound_margin
        );
    }
    println!("optimality verified: {}", report.pass);
    Ok(())
}
