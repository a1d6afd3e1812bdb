use std::sync::Arc;

use super::*;
use crate::driver::GrowthCertificate;
use crate::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};

fn bm(n: usize, steps: usize, seed: u64) -> ForwardPathBatch {
    let g = make_time_grid(1.0, steps).unwrap();
    let b = sample_brownian(&g, 1, n, seed).unwrap();
    simulate_forward(&ForwardModel::constant(vec![0.0], 1.0).unwrap(), &b).unwrap()
}

fn basis() -> RegressionBasis {
    RegressionBasis::polynomial(2)
}

#[test]
fn martingale_representation_of_brownian_endpoint() {
    let x = bm(20_000, 50, 1);
    let sol = solve_lipschitz(
        &DriverSpec::zero(1).unwrap(),
        &TerminalCondition::x_terminal(1.0),
        &x,
        &basis(),
        PicardOptions::default(),
    )
    .unwrap();
    let y0 = sol.y0();
    assert!(y0.mean.abs() <= 3.0 * y0.se, "{y0:?}");
    assert!((sol.z_mean_overall() - 1.0).abs() < 0.03);
    let norms = solution_norms(&sol);
    assert!((norms.z_energy.mean - 1.0).abs() < 0.05, "{norms:?}");
}

#[test]
fn deterministic_linear_bsde_matches_implicit_euler_and_ode() {
    let steps = 1000;
    let x = bm(50, steps, 2);
    let sol = solve_lipschitz(
        &DriverSpec::linear_y(-1.0, 1).unwrap(),
        &TerminalCondition::constant(1.0),
        &x,
        &basis(),
        PicardOptions::default(),
    )
    .unwrap();
    let dt = 1.0 / steps as f64;
    // Y_k = Y_{k+1} / (1 + Δt) exactly for the implicit step.
    let implicit = (1.0 + dt).powi(-(steps as i32));
    assert!((sol.y0().mean - implicit).abs() < 1e-9);
    assert!((sol.y0().mean - (-1f64).exp()).abs() < 1e-3);
    assert!(sol.y0().se < 1e-12);
}

#[test]
fn linear_driver_scales_deterministic_terminal_value() {
    // φ = a·y gives Y_t = ξ e^{a(T−t)}.
    let steps = 400;
    let x = bm(20, steps, 3);
    for a in [-0.7, 0.4] {
        let sol = solve_lipschitz(
            &DriverSpec::linear_y(a, 1).unwrap(),
            &TerminalCondition::constant(2.0),
            &x,
            &basis(),
            PicardOptions::default(),
        )
        .unwrap();
        let dt = 1.0 / steps as f64;
        for k in [0, 100, 399] {
            let exact_scheme = 2.0 * (1.0 - a * dt).powi(-((steps - k) as i32));
            assert!((sol.y(k, 7) - exact_scheme).abs() < 1e-9);
            let ode = 2.0 * (a * (1.0 - sol.grid().t(k))).exp();
            assert!((sol.y(k, 7) - ode).abs() < 5e-3 * ode.abs());
        }
    }
}

#[test]
fn terminal_values_are_exact_and_z_last_is_copied() {
    let x = bm(500, 10, 4);
    let xi = TerminalCondition::x_terminal(3.0);
    let sol = solve_lipschitz(&DriverSpec::linear_y(-1.0, 1).unwrap(), &xi, &x, &basis(), PicardOptions::default())
        .unwrap();
    let xs = xi.evaluate(&x).unwrap();
    assert_eq!(sol.y_node(10), &xs[..]);
    for i in 0..500 {
        assert_eq!(sol.z(10, i), sol.z(9, i));
    }
    assert!(sol.meta().z_last_copied);
}

#[test]
fn shifting_terminal_value_shifts_y() {
    let x = bm(2000, 10, 5);
    let xi = TerminalCondition::new("x^2", Arc::new(|v: &PathView<'_>| v.current()[0].powi(2)));
    let zero = DriverSpec::zero(1).unwrap();
    let a = solve_lipschitz(&zero, &xi, &x, &basis(), PicardOptions::default()).unwrap();
    let b = solve_lipschitz(&zero, &xi.shifted(1.25), &x, &basis(), PicardOptions::default()).unwrap();
    for k in 0..=10 {
        for i in (0..2000).step_by(37) {
            assert!((b.y(k, i) - a.y(k, i) - 1.25).abs() < 1e-10);
            for (u, v) in a.z(k, i).iter().zip(b.z(k, i)) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_driver_y_is_the_regression_estimate() {
    let x = bm(20_000, 5, 6);
    let xi = TerminalCondition::new("x^2", Arc::new(|v: &PathView<'_>| v.current()[0].powi(2)));
    let sol = solve_lipschitz(&DriverSpec::zero(1).unwrap(), &xi, &x, &basis(), PicardOptions::default()).unwrap();
    let mut pred = sol.predictor();
    for k in 0..5 {
        for i in (0..3000).step_by(101) {
            assert!((pred.continuation(k, &x.view(i, k)) - sol.y(k, i)).abs() < 1e-12);
        }
    }
    // E[B_1² | F_t] = B_t² + 1 − t lies in the basis.
    let sq: Vec<f64> = (0..20_000)
        .map(|i| {
            let b = x.state(i, 3)[0];
            (sol.y(3, i) - (b * b + 0.4)).powi(2)
        })
        .collect();
    assert!(stats::mean(&sq).sqrt() < 0.05);
}

#[test]
fn picard_increments_contract_at_rate_l_dt() {
    let x = bm(2000, 20, 7);
    let d = DriverSpec::new(
        "sin",
        1,
        Arc::new(|_, y: f64, z: &[f64]| 3.0 * y.sin() + z[0]),
        GrowthCertificate::new(3.0, 1.0),
    )
    .with_lipschitz(3.0)
    .register()
    .unwrap();
    let sol = solve_lipschitz(&d, &TerminalCondition::x_terminal(1.0), &x, &basis(), PicardOptions::default()).unwrap();
    let rate = 3.0 * 0.05;
    for inc in sol.picard_increments() {
        assert!(inc.len() >= 2);
        for w in inc.windows(2) {
            assert!(w[1] <= rate * w[0] * (1.0 + 1e-9) + 1e-300, "{inc:?}");
        }
    }
}

#[test]
fn picard_divergence_is_reported() {
    let x = bm(100, 4, 8);
    let d = DriverSpec::new("stiff", 1, Arc::new(|_, y: f64, _| 1e3 * y), GrowthCertificate::new(0.0, 0.0))
        .with_lipschitz(1e3);
    let r = solve_lipschitz(
        &d,
        &TerminalCondition::constant(1.0),
        &x,
        &basis(),
        PicardOptions { max_iters: 5, tol: 1e-10 },
    );
    assert!(matches!(r, Err(Error::SolverFailure { node: 3, .. })), "{r:?}");
}

#[test]
fn needs_lipschitz_constant_and_noise() {
    let x = bm(100, 4, 8);
    let lg = DriverSpec::loggrowth(0.5, 1).unwrap();
    let xi = TerminalCondition::constant(1.0);
    assert!(solve_lipschitz(&lg, &xi, &x, &basis(), PicardOptions::default()).is_err());
    let zero = DriverSpec::zero(1).unwrap();
    assert!(solve_lipschitz(&zero, &xi, &x.without_noise(), &basis(), PicardOptions::default()).is_err());
}

#[test]
fn constant_terminal_value_norms() {
    let x = bm(200, 8, 9);
    let sol = solve_lipschitz(
        &DriverSpec::zero(1).unwrap(),
        &TerminalCondition::constant(-3.0),
        &x,
        &basis(),
        PicardOptions::default(),
    )
    .unwrap();
    let n = solution_norms(&sol);
    assert!((n.sup_y2.mean - 9.0).abs() < 1e-12);
    assert!(n.z_energy.mean.abs() < 1e-20);
    assert!((n.pair.mean - 9.0).abs() < 1e-12);
}

#[test]
fn single_step_grid() {
    let x = bm(1000, 1, 10);
    let sol = solve_lipschitz(
        &DriverSpec::linear_y(-0.5, 1).unwrap(),
        &TerminalCondition::constant(1.0),
        &x,
        &basis(),
        PicardOptions::default(),
    )
    .unwrap();
    assert!((sol.y0().mean - 1.0 / 1.5).abs() < 1e-9);
}

#[test]
fn generator_term_oracles() {
    let x = bm(20, 1000, 11);
    let zero = DriverSpec::zero(1).unwrap();
    let sol = solve_lipschitz(&zero, &TerminalCondition::constant(1.0), &x, &basis(), PicardOptions::default()).unwrap();
    assert_eq!(evaluate_generator_term(&sol, &x, &zero, 1.2).unwrap().integrated.mean, 0.0);

    let lin = DriverSpec::linear_y(-1.0, 1).unwrap();
    let sol = solve_lipschitz(&lin, &TerminalCondition::constant(1.0), &x, &basis(), PicardOptions::default()).unwrap();
    let term = evaluate_generator_term(&sol, &x, &lin, 1.2).unwrap();
    let ab = 2.0 / 1.2;
    assert_eq!(term.alpha_bar, ab);
    let exact = (1.0 - (-ab).exp()) / ab;
    assert!((term.integrated.mean - exact).abs() < 1e-3, "{} vs {exact}", term.integrated.mean);
    assert_eq!(alpha_bar(0.5), 2.0);
}

#[test]
fn zero_driver_schedule_has_zero_gaps() {
    let x = bm(2000, 10, 12);
    let run = solve_loggrowth(
        &DriverSpec::zero(1).unwrap(),
        &TerminalCondition::x_terminal(1.0),
        &x,
        &basis(),
        &[4, 8, 16],
        PicardOptions::default(),
        LoggrowthOptions::default(),
    )
    .unwrap();
    for g in &run.cauchy {
        assert_eq!(g.y_gap.mean, 0.0);
        assert_eq!(g.z_gap.mean, 0.0);
    }
    assert!(run.converged);
    assert!(run.failure.is_none());
}

#[test]
fn loggrowth_gaps_decrease() {
    let x = bm(4000, 20, 13);
    let run = solve_loggrowth(
        &DriverSpec::loggrowth(0.5, 1).unwrap(),
        &TerminalCondition::x_terminal(3.0),
        &x,
        &basis(),
        &[8, 16, 32, 64],
        PicardOptions::default(),
        LoggrowthOptions::default(),
    )
    .unwrap();
    let y: Vec<MeanSe> = run.cauchy.iter().map(|c| c.y_gap).collect();
    let z: Vec<MeanSe> = run.cauchy.iter().map(|c| c.z_gap).collect();
    assert!(stats::is_decreasing(&y, 2.0, 0.0), "{y:?}");
    assert!(stats::is_decreasing(&z, 2.0, 0.0), "{z:?}");
    assert_eq!(run.solution().meta().approx_index, Some(64));
}

#[test]
fn linear_z_schedule_approaches_exact_solution() {
    let x = bm(4000, 20, 14);
    let d = DriverSpec::linear_z(1.0, 1).unwrap();
    let xi = TerminalCondition::x_terminal(1.0);
    let exact = solve_lipschitz(&d, &xi, &x, &basis(), PicardOptions::default()).unwrap();
    let run = solve_loggrowth(&d, &xi, &x, &basis(), &[8, 16, 32], PicardOptions::default(), LoggrowthOptions::default())
        .unwrap();
    let last = run.cauchy.last().unwrap();
    let disc = solution_gaps(run.solution(), &exact, 1.5, 1.0).unwrap();
    assert!(last.y_gap.mean <= disc.y.mean + 2.0 * disc.y.se + 1e-12, "{last:?} vs {disc:?}");
    // Exact solution: Y_t = x_t + (T − t), Z ≡ 1.
    assert!((exact.y0().mean - 1.0).abs() < 3.0 * exact.y0().se + 1e-9);
}

#[test]
fn schedule_validation() {
    let x = bm(10, 2, 1);
    let d = DriverSpec::zero(1).unwrap();
    let xi = TerminalCondition::constant(0.0);
    for bad in [&[1, 2][..], &[2, 2, 4][..], &[4, 2, 8][..]] {
        assert!(solve_loggrowth(&d, &xi, &x, &basis(), bad, PicardOptions::default(), LoggrowthOptions::default()).is_err());
    }
}

#[test]
fn reruns_are_bit_identical() {
    let x = bm(3000, 10, 15);
    let d = DriverSpec::loggrowth(0.5, 1).unwrap();
    let xi = TerminalCondition::x_terminal(3.0);
    let run = || {
        solve_loggrowth(&d, &xi, &x, &basis(), &[8, 16, 32], PicardOptions::default(), LoggrowthOptions::default()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn solution_dumps_round_trip() {
    let x = bm(300, 6, 16);
    let sol = solve_lipschitz(
        &DriverSpec::linear_y(-0.5, 1).unwrap(),
        &TerminalCondition::x_terminal(1.0),
        &x,
        &basis(),
        PicardOptions::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_solution_binary(&sol, &mut buf).unwrap();
    assert_eq!(&buf[..9], b"LBSDESOL1");
    let back = read_solution_binary(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(sol, back);

    let mut csv = Vec::new();
    write_solution_csv(&sol, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "node,t,y_mean,y_sd,z1_mean,residual");
    assert_eq!(lines.count(), 7);
}
