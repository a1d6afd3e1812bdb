//! Matching pennies has no pure saddle: the lower and upper Hamiltonians
//! differ and the game solver refuses to produce a value.

use std::sync::Arc;

use loggrowth_bsde::games::{check_isaacs, pilot_samples, saddle_strategies, solve_game_value, GameOptions, GameProblem};
use loggrowth_bsde::paths::{make_time_grid, ForwardModel};
use loggrowth_bsde::solver::{PicardOptions, RegressionBasis, TerminalCondition};
use loggrowth_bsde::Error;

fn main() -> loggrowth_bsde::Result<()> {
    let game = GameProblem::new(
        "pennies",
        ForwardModel::constant(vec![0.0], 1.0)?,
        vec![-1.0, 1.0],
        vec![-1.0, 1.0],
        Arc::new(|_, _, _, out| out[0] = 0.0),
        Arc::new(|_, a: f64, b: f64| if a == b { 1.0 } else { -1.0 }),
        TerminalCondition::constant(0.0),
    )?;
    let x = game.simulate(&make_time_grid(1.0, 10)?, 200, 1)?;
    let report = check_isaacs(&game, &x, &pilot_samples(&x, 16, 10.0, 2), 1e-9)?;
    println!("sup lower = {}, inf upper = {}, gap = {}", report.points[0].lower, report.points[0].upper, report.max_gap);

    println!("pure saddle: {:?}", saddle_strategies(&game, &x.view(0, 0), &[1.0], 1e-9).err());

    match solve_game_value(&game, &x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), GameOptions::default()) {
        Err(Error::IsaacsFailure { max_gap, .. }) => println!("solver refused: Isaacs gap {max_gap}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
