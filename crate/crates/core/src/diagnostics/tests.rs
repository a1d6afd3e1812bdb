use super::*;
use crate::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};
use crate::solver::{solve_loggrowth, solve_lipschitz, LoggrowthOptions, PicardOptions, RegressionBasis};

fn bm(n: usize, steps: usize, seed: u64) -> ForwardPathBatch {
    let g = make_time_grid(1.0, steps).unwrap();
    let b = sample_brownian(&g, 1, n, seed).unwrap();
    simulate_forward(&ForwardModel::constant(vec![0.0], 1.0).unwrap(), &b).unwrap()
}

fn solve(d: &DriverSpec, xi: &TerminalCondition, x: &ForwardPathBatch) -> BsdeSolution {
    solve_lipschitz(d, xi, x, &RegressionBasis::polynomial(2), PicardOptions::default()).unwrap()
}

#[test]
fn lemma41_constant_terminal() {
    let x = bm(100, 10, 1);
    let zero = DriverSpec::zero(1).unwrap();
    let xi = TerminalCondition::constant(1.0);
    let sol = solve(&zero, &xi, &x);
    let r = check_lemma41(&sol, &x, &xi, &Eta::Const(0.0), 1.0).unwrap();
    assert_eq!(r.lhs.mean, 1.0);
    assert!(r.rhs.mean >= 1.0);
    assert!(r.ratio() <= 1.0);
    assert!(r.pass);
}

#[test]
fn lemma41_ratio_stable_across_refinement() {
    let zero = DriverSpec::zero(1).unwrap();
    let xi = TerminalCondition::x_terminal(1.0);
    let g = make_time_grid(1.0, 100).unwrap();
    let fine = sample_brownian(&g, 1, 20_000, 2).unwrap();
    let reports: Vec<EstimateReport> = [4, 2, 1]
        .iter()
        .map(|&f| {
            let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0).unwrap(), &fine.coarsen(f).unwrap()).unwrap();
            check_lemma41(&solve(&zero, &xi, &x), &x, &xi, &Eta::Const(0.0), 1.0).unwrap()
        })
        .collect();
    let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0).unwrap(), &fine.truncate(10_000)).unwrap();
    let half = check_lemma41(&solve(&zero, &xi, &x), &x, &xi, &Eta::Const(0.0), 1.0).unwrap();
    let v = assess_stability(&half, &reports[2], &reports, 0.1, 0.15);
    assert!(v.pass, "{v:?}");
    assert_eq!(v.refinement_ratios.len(), 3);
}

#[test]
fn lemma42_oracles() {
    let x = bm(20_000, 50, 3);
    let zero = DriverSpec::zero(1).unwrap();
    let c = TerminalCondition::constant(2.0);
    let r = check_lemma42(&solve(&zero, &c, &x), &x, &c, &Eta::Const(0.0), 2.0).unwrap();
    assert!(r.lhs.mean.abs() < 1e-20);
    let xi = TerminalCondition::x_terminal(1.0);
    let r = check_lemma42(&solve(&zero, &xi, &x), &x, &xi, &Eta::Const(0.0), 2.0).unwrap();
    assert!((r.lhs.mean - 1.0).abs() < 0.05, "{r:?}");
    assert!(r.rhs.mean.is_finite());
}

#[test]
fn lemma43_oracles() {
    let x = bm(20, 1000, 4);
    let zero = DriverSpec::zero(1).unwrap();
    let one = TerminalCondition::constant(1.0);
    let r = check_lemma43(&solve(&zero, &one, &x), &x, &zero).unwrap();
    assert_eq!(r.lhs.mean, 0.0);
    assert!(r.pass);

    let lin = DriverSpec::linear_y(-1.0, 1).unwrap();
    let r = check_lemma43(&solve(&lin, &one, &x), &x, &lin).unwrap();
    let ab: f64 = 2.0 / 1.2;
    assert!((r.lhs.mean - (1.0 - (-ab).exp()) / ab).abs() < 1e-3);
    assert!(r.pass && r.margin > 0.0, "{r:?}");
}

#[test]
fn lemma43_on_loggrowth() {
    let x = bm(3000, 20, 5);
    let d = DriverSpec::loggrowth(0.5, 1).unwrap();
    let xi = TerminalCondition::x_terminal(3.0);
    let run = solve_loggrowth(
        &d,
        &xi,
        &x,
        &RegressionBasis::polynomial(2),
        &[8, 16, 32],
        PicardOptions::default(),
        LoggrowthOptions::default(),
    )
    .unwrap();
    let r = check_lemma43(run.solution(), &x, &d).unwrap();
    assert!(r.pass && r.margin > 0.0, "{r:?}");
}

#[test]
fn polynomial_bound_for_loggrowth() {
    let d = DriverSpec::loggrowth(0.5, 1).unwrap();
    let b = fit_polynomial_bound(&d, None, 10.0, 100.0, 41);
    // sup over r >= 1 of 0.5 √log⁺ r / r^{0.2}: 0.5 r^{-0.2} on [1, e], then a
    // local max 0.5 √2.5 / e^{0.5} at r = e^{2.5}; the global max is at r = 1.
    let interior = 0.5 * 2.5f64.sqrt() / 2.5f64.exp().powf(0.2);
    assert!(interior < 0.5);
    assert_eq!(b.c1, 0.5);
    // On |z| < 1 the excess is 0.5|z|, sampled up to just below 1.
    assert!((b.eta_excess - 0.5).abs() < 1e-8, "{b:?}");
}

#[test]
fn identity_perturbations_have_zero_gaps() {
    let x = bm(1000, 10, 6);
    let d = DriverSpec::linear_y(-1.0, 1).unwrap();
    let xi = TerminalCondition::x_terminal(1.0);
    let perts: Vec<Perturbation> = [2, 4, 8].iter().map(|&n| Perturbation::identity(&d, &xi, n)).collect();
    let r = run_stability_experiment(&d, &xi, &perts, 1.5, &[10], &x, &RegressionBasis::polynomial(2), PicardOptions::default())
        .unwrap();
    for row in &r.rows {
        assert_eq!(row.rho[0].value, 0.0);
        assert_eq!(row.xi_gap.mean, 0.0);
        assert_eq!(row.y_gap.unwrap().mean, 0.0);
        assert_eq!(row.z_gap.unwrap().mean, 0.0);
    }
    assert!(r.pass);
}

#[test]
fn sin_perturbations_decrease() {
    let x = bm(5000, 20, 7);
    let d = DriverSpec::linear_y(-1.0, 1).unwrap();
    let xi = TerminalCondition::x_terminal(1.0);
    let perts: Vec<Perturbation> = [2, 4, 8, 16].iter().map(|&n| Perturbation::sin_y(&d, &xi, n).unwrap()).collect();
    let r = run_stability_experiment(&d, &xi, &perts, 1.5, &[10], &x, &RegressionBasis::polynomial(2), PicardOptions::default())
        .unwrap();
    assert!(r.pass, "{r:#?}");
    // ρ_N(sin(y)/n) = max over the lattice of |sin y| / n.
    let lattice_max = (0..=32)
        .map(|i| (-10.0 + 20.0 * i as f64 / 32.0f64).sin().abs())
        .fold(0.0, f64::max);
    for row in &r.rows {
        assert!((row.rho[0].value - lattice_max / row.n as f64).abs() < 1e-12);
        let p = r.moment_exponent;
        assert!((row.xi_gap.mean - (1.0 / row.n as f64).powf(p)).abs() < 1e-12);
    }
}

#[test]
fn mollified_perturbations_reproduce_cauchy_table() {
    let x = bm(2000, 10, 8);
    let d = DriverSpec::loggrowth(0.5, 1).unwrap();
    let xi = TerminalCondition::x_terminal(3.0);
    let basis = RegressionBasis::polynomial(2);
    let schedule = [8, 16, 32];
    let run = solve_loggrowth(&d, &xi, &x, &basis, &schedule, PicardOptions::default(), LoggrowthOptions::default())
        .unwrap();
    let perts: Vec<Perturbation> = schedule
        .iter()
        .map(|&n| Perturbation::mollified(&d, &xi, n, 1.2).unwrap())
        .collect();
    let r = run_stability_experiment(&d, &xi, &perts, 1.5, &[10], &x, &basis, PicardOptions::default()).unwrap();
    assert_eq!(r.successive, run.cauchy);
    assert!(r.rows[0].y_gap.is_none());
}

#[test]
fn failing_domination_is_rejected() {
    let x = bm(100, 4, 9);
    let d = DriverSpec::linear_y(-1.0, 1).unwrap();
    let xi = TerminalCondition::x_terminal(1.0);
    let bad = DriverSpec::new(
        "quadratic",
        1,
        std::sync::Arc::new(|_, _, z: &[f64]| z[0] * z[0]),
        crate::driver::GrowthCertificate::new(0.0, 1.0),
    );
    let perts = vec![Perturbation {
        n: 1,
        driver: PerturbedDriver::Spec(bad),
        xi: xi.clone(),
    }];
    let r = run_stability_experiment(&d, &xi, &perts, 1.5, &[10], &x, &RegressionBasis::polynomial(2), PicardOptions::default());
    assert!(matches!(r, Err(Error::RejectedInput(_))));
}

#[test]
fn roundoff_lhs_does_not_count_as_drift() {
    let doubled = bm(2000, 20, 10);
    let base = doubled.truncate(1000);
    let lin = DriverSpec::linear_y(-1.0, 1).unwrap();
    let one = TerminalCondition::constant(1.0);
    let eta = Eta::Const(0.0);
    let rb = check_lemma42(&solve(&lin, &one, &base), &base, &one, &eta, 2.0).unwrap();
    let rd = check_lemma42(&solve(&lin, &one, &doubled), &doubled, &one, &eta, 2.0).unwrap();
    assert!(rb.lhs.mean < 1e-12 * rb.rhs.mean, "{rb:?}");
    let v = assess_stability(&rb, &rd, &[], 0.1, 0.15);
    assert!(v.pass && v.drift.unwrap() < 1e-3, "{v:?}");
}
