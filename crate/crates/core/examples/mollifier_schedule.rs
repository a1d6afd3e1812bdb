//! Builds mollified/truncated approximations of the log-growth driver and
//! tracks the local sup distance `ρ_N(φ_n − φ)` and uniform domination.

use loggrowth_bsde::driver::{check_uniform_domination, estimate_rho_n, mollify_truncate, DriverSpec, Generator, SampleBox};
use loggrowth_bsde::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel, PathView};

fn main() -> loggrowth_bsde::Result<()> {
    let grid = make_time_grid(1.0, 20)?;
    let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0)?, &sample_brownian(&grid, 1, 500, 3)?)?;
    let phi = DriverSpec::loggrowth(0.5, 1)?;
    let view: PathView<'_> = x.view(0, 0);
    for n in [12, 24, 48, 96] {
        let a = mollify_truncate(&phi, n, phi.alpha())?;
        let rho = estimate_rho_n(&a, &phi, 10, &x, 32, 64)?;
        let dom = check_uniform_domination(&a, &SampleBox::standard(), Some(&x));
        println!(
            "n = {n:>2}: rho_10 = {:.4e} ± {:.1e}, domination {}, phi_n(0, 3) = {:.8}, phi(0, 3) = {:.8}",
            rho.value,
            rho.se,
            if dom.pass { "ok" } else { "FAILS" },
            a.eval(&view, 0.0, &[3.0]),
            phi.eval(&view, 0.0, &[3.0]),
        );
    }
    Ok(())
}
