//! Evaluates the same policies by simulating the controlled drift and by
//! reweighting driftless paths with the exponential martingale. A strong
//! drift with small noise collapses the effective sample size.

use std::sync::Arc;

use loggrowth_bsde::control::{evaluate_policy, uniform_grid, ControlProblem, Policy, Route};
use loggrowth_bsde::paths::{make_time_grid, ForwardModel};
use loggrowth_bsde::solver::TerminalCondition;

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 20)?;
    for sigma in [1.0, 0.2] {
        let problem = ControlProblem::new(
            "canonical",
            ForwardModel::constant(vec![0.0], sigma)?,
            uniform_grid(-1.5, 1.5, 7),
            Arc::new(|_, a, out| out[0] = a),
            Arc::new(|_, _| 0.0),
            TerminalCondition::x_terminal(1.0),
        )?;
        for a in [0.5, 1.5] {
            let d = evaluate_policy(&problem, &Policy::Constant(a), &grid, 20_000, 4, Route::DriftSim)?;
            let g = evaluate_policy(&problem, &Policy::Constant(a), &grid, 20_000, 4, Route::Girsanov)?;
            println!(
                "sigma {sigma}, a = {a}: drift-sim {}  girsanov {}  E[Lambda] {}  ESS {:.3}{}",
                d.j,
                g.j,
                g.lambda_mean.unwrap(),
                g.ess_fraction.unwrap(),
                g.warning.map(|w| format!("  ({w})")).unwrap_or_default()
            );
        }
    }
    Ok(())
}
