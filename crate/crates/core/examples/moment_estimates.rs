//! A-priori moment estimates on a log-growth solution: finite, stable under
//! path doubling, and the driver-integral bound with its margin.

use loggrowth_bsde::diagnostics::{assess_stability, check_lemma41, check_lemma42, check_lemma43};
use loggrowth_bsde::driver::DriverSpec;
use loggrowth_bsde::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};
use loggrowth_bsde::solver::{solve_loggrowth, LoggrowthOptions, PicardOptions, RegressionBasis, TerminalCondition};

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 20)?;
    let doubled = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0)?, &sample_brownian(&grid, 1, 20_000, 11)?)?;
    let base = doubled.truncate(10_000);
    let d = DriverSpec::loggrowth(0.5, 1)?;
    let xi = TerminalCondition::x_terminal(3.0);
    let solve = |x| {
        solve_loggrowth(&d, &xi, x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), LoggrowthOptions::default())
            .map(|r| r.solution().clone())
    };
    let (sb, sd) = (solve(&base)?, solve(&doubled)?);
    let eta = &d.certificate().eta;

    let sup = assess_stability(&check_lemma41(&sb, &base, &xi, eta, 1.0)?, &check_lemma41(&sd, &doubled, &xi, eta, 1.0)?, &[], 0.1, 0.15);
    let energy = assess_stability(&check_lemma42(&sb, &base, &xi, eta, 2.0)?, &check_lemma42(&sd, &doubled, &xi, eta, 2.0)?, &[], 0.1, 0.15);
    let integral = check_lemma43(&sb, &base, &d)?;
    for r in [&sup, &energy, &integral] {
        println!("{:<18} lhs {}  rhs {}  drift {:?}  pass {}", r.check, r.lhs, r.rhs, r.drift, r.pass);
    }
    println!("driver-integral margin: {:.4}", integral.margin);
    Ok(())
}
