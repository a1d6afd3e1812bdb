//! A zero-sum game with drift `a + b` on two-point action grids: the Isaacs
//! condition holds exactly and unilateral deviations cost 1.

use std::sync::Arc;

use loggrowth_bsde::control::Policy;
use loggrowth_bsde::games::{solve_game_value, verify_saddle, GameOptions, GameProblem};
use loggrowth_bsde::paths::{make_time_grid, ForwardModel};
use loggrowth_bsde::solver::{PicardOptions, RegressionBasis, TerminalCondition};

fn main() -> loggrowth_bsde::Result<()> {
    let game = GameProblem::new(
        "a+b",
        ForwardModel::constant(vec![0.0], 1.0)?,
        vec![-0.5, 0.5],
        vec![-0.5, 0.5],
        Arc::new(|_, a, b, out| out[0] = a + b),
        Arc::new(|_, _, _| 0.0),
        TerminalCondition::x_terminal(1.0),
    )?
    .state_independent();
    let x = game.simulate(&make_time_grid(1.0, 20)?, 20_000, 1)?;
    let value = solve_game_value(&game, &x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), GameOptions::default())?;
    println!("Y0 = {}  Isaacs gap {:e}", value.y0(), value.isaacs.max_gap);

    let u: Vec<Policy<'_>> = game.actions_a().iter().map(|&a| Policy::Constant(a)).collect();
    let v: Vec<Policy<'_>> = game.actions_b().iter().map(|&b| Policy::Constant(b)).collect();
    let report = verify_saddle(&game, &value, &u, &v, 20_000, 2)?;
    println!("J(u*, v*) = {}", report.star.drift_sim.j);
    for row in report.u_rows.iter().chain(&report.v_rows) {
        println!("{:<24} J = {:>8.4}  margin {:>7.4}", row.policy, row.drift_sim.j.mean, row.margin);
    }
    println!("saddle verified: {}", report.pass);
    Ok(())
}
