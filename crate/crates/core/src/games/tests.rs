use super::*;
use crate::control::{
    evaluate_policy, solve_value_bsde, uniform_grid, ControlProblem, PairScalarFn,
};
use crate::paths::make_time_grid;
use proptest::prelude::*;

fn game(a: Vec<f64>, b: Vec<f64>, h: PairScalarFn) -> GameProblem {
    GameProblem::new(
        "test",
        ForwardModel::constant(vec![0.0], 1.0).unwrap(),
        a,
        b,
        Arc::new(|_, a, b, out| out[0] = a + b),
        h,
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap()
    .state_independent()
}

fn pm1() -> Vec<f64> {
    vec![-1.0, 1.0]
}

fn zero_h() -> PairScalarFn {
    Arc::new(|_, _, _| 0.0)
}

fn quad_h() -> PairScalarFn {
    Arc::new(|_, a, b| a * a - b * b)
}

fn with_origin<R>(f: impl FnOnce(&PathView<'_>) -> R) -> R {
    let (x, s) = (vec![0.0], vec![0.0]);
    f(&PathView::new(&x, &s, 1, 0, 0.0))
}

fn batch(g: &GameProblem, n: usize, steps: usize, seed: u64) -> ForwardPathBatch {
    g.simulate(&make_time_grid(1.0, steps).unwrap(), n, seed).unwrap()
}

fn solve(g: &GameProblem, x: &ForwardPathBatch) -> Result<GameValue> {
    solve_game_value(g, x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), GameOptions::default())
}

#[test]
fn hamiltonian_examples() {
    with_origin(|v| {
        let g = game(pm1(), pm1(), zero_h());
        assert_eq!(game_hamiltonian(&g, v, &[1.0], 1.0, -1.0).unwrap(), 0.0);
        let q = game(pm1(), pm1(), quad_h());
        assert_eq!(game_hamiltonian(&q, v, &[0.0], 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(game_hamiltonian(&q, v, &[2.0], -1.0, 1.0).unwrap(), 0.0);
    });
}

#[test]
fn isaacs_on_separable_and_symmetric_games() {
    let g = game(uniform_grid(-1.0, 1.0, 21), uniform_grid(-1.0, 1.0, 21), zero_h());
    let x = batch(&g, 50, 4, 1);
    let s = pilot_samples(&x, 64, 5.0, 2);
    let r = check_isaacs(&g, &x, &s, ISAACS_TOL).unwrap();
    assert!(r.pass);
    assert_eq!(r.max_gap, 0.0);
    for p in &r.points {
        assert_eq!((p.lower, p.upper), (0.0, 0.0));
    }
    let sep = game(uniform_grid(-1.0, 1.0, 21), uniform_grid(-1.0, 1.0, 21), Arc::new(|_, a, b| a.sin() + (2.0 * b).cos()));
    let r = check_isaacs(&sep, &x, &s, ISAACS_TOL).unwrap();
    assert!(r.pass, "{}", r.max_gap);
}

#[test]
fn matching_pennies_gap_is_two() {
    let mp = GameProblem::new(
        "pennies",
        ForwardModel::constant(vec![0.0], 1.0).unwrap(),
        pm1(),
        pm1(),
        Arc::new(|_, _, _, out| out[0] = 0.0),
        Arc::new(|_, a: f64, b: f64| a.signum() * b.signum()),
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap();
    // 2×2 brute force: rows a, columns b.
    let m = [[1.0, -1.0], [-1.0, 1.0]];
    let lower = (0..2).map(|b| (0..2).map(|a| m[a][b]).fold(f64::INFINITY, f64::min)).fold(f64::NEG_INFINITY, f64::max);
    let upper = (0..2).map(|a| (0..2).map(|b| m[a][b]).fold(f64::NEG_INFINITY, f64::max)).fold(f64::INFINITY, f64::min);
    let x = batch(&mp, 10, 2, 3);
    let s = vec![IsaacsSample { node: 0, path: 0, z: vec![0.0] }];
    let r = check_isaacs(&mp, &x, &s, ISAACS_TOL).unwrap();
    assert_eq!((r.points[0].lower, r.points[0].upper), (lower, upper));
    assert_eq!(r.max_gap, 2.0);
    assert!(!r.pass);
    with_origin(|v| assert!(matches!(saddle_strategies(&mp, v, &[0.0], ISAACS_TOL), Err(Error::NoSaddle { .. }))));
    match solve(&mp, &x) {
        Err(Error::IsaacsFailure { max_gap, report, .. }) => {
            assert_eq!(max_gap, 2.0);
            assert!(!report.pass);
        }
        other => panic!("expected an Isaacs failure, got {other:?}"),
    }
}

#[test]
fn saddle_examples() {
    with_origin(|v| {
        let g = game(pm1(), pm1(), zero_h());
        let p = saddle_strategies(&g, v, &[0.5], ISAACS_TOL).unwrap();
        assert_eq!((p.a, p.b, p.value, p.exact), (-1.0, 1.0, 0.0, true));
        let p = saddle_strategies(&g, v, &[0.0], ISAACS_TOL).unwrap();
        assert_eq!((p.a_index, p.b_index, p.value), (0, 0, 0.0));
    });
}

#[test]
fn separable_saddle_matches_brute_force() {
    let grid = uniform_grid(-1.0, 1.0, 21);
    let g = game(grid.clone(), grid.clone(), quad_h());
    with_origin(|v| {
        for z in [-1.64, -0.42, 0.0, 1.0, 1.26] {
            let p = saddle_strategies(&g, v, &[z], ISAACS_TOL).unwrap();
            let first_min = grid.iter().copied().fold((f64::NAN, f64::INFINITY), |best, a| {
                let val = z * a + a * a;
                if val < best.1 { (a, val) } else { best }
            });
            let first_max = grid.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |best, b| {
                let val = z * b - b * b;
                if val > best.1 { (b, val) } else { best }
            });
            assert_eq!((p.a, p.b), (first_min.0, first_max.0), "z={z}");
        }
    });
}

#[test]
fn constant_payoffs() {
    let g = game(pm1(), pm1(), zero_h());
    let grid = make_time_grid(1.0, 20).unwrap();
    for ((a, b), want) in [((-1.0, 1.0), 0.0), ((0.0, 0.0), 0.0), ((1.0, 1.0), 2.0)] {
        for route in [Route::DriftSim, Route::Girsanov] {
            let r = evaluate_payoff(&g, &Policy::Constant(a), &Policy::Constant(b), &grid, 20_000, 4, route).unwrap();
            assert!((r.j.mean - want).abs() <= 3.0 * r.j.se + 1e-12, "{r:?}");
        }
    }
}

#[test]
fn symmetric_game_has_zero_value_and_saddle_margins_one() {
    let g = game(vec![-0.5, 0.5], vec![-0.5, 0.5], zero_h());
    let x = batch(&g, 5000, 20, 5);
    let v = solve(&g, &x).unwrap();
    assert_eq!(v.isaacs.max_gap, 0.0);
    assert!(v.y0().mean.abs() <= 3.0 * v.y0().se, "{:?}", v.y0());
    let r = verify_saddle(&g, &v, &[Policy::Constant(0.5)], &[Policy::Constant(-0.5)], 5000, 6).unwrap();
    assert!(r.pass, "{r:#?}");
    for row in r.u_rows.iter().chain(&r.v_rows) {
        assert!((row.margin - 1.0).abs() <= 3.0 * row.margin_se, "{row:?}");
    }
}

#[test]
fn singleton_b_reduces_to_control_bit_for_bit() {
    let grid = make_time_grid(1.0, 10).unwrap();
    let c = ControlProblem::canonical();
    let g = game(uniform_grid(-1.0, 1.0, 21), vec![0.0], zero_h());
    let xc = c.simulate(&grid, 2000, 7).unwrap();
    let xg = g.simulate(&grid, 2000, 7).unwrap();
    assert_eq!(xc, xg);
    let basis = RegressionBasis::polynomial(2);
    let vc = solve_value_bsde(&c, &xc, &basis, &[8, 16, 32], PicardOptions::default(), ValueOptions::default()).unwrap();
    let vg = solve(&g, &xg).unwrap();
    assert_eq!(vc.y0().mean.to_bits(), vg.y0().mean.to_bits());
    assert_eq!(vc.y0().se.to_bits(), vg.y0().se.to_bits());
    assert_eq!(vc.c0, vg.c0);
    for route in [Route::DriftSim, Route::Girsanov] {
        let jc = evaluate_policy(&c, &vc.feedback(), &grid, 1000, 8, route).unwrap();
        let (u, v) = vg.feedback();
        let jg = evaluate_payoff(&g, &u, &v, &grid, 1000, 8, route).unwrap();
        assert_eq!(jc.j.mean.to_bits(), jg.j.mean.to_bits());
        assert_eq!(jc.j.se.to_bits(), jg.j.se.to_bits());
    }
}

#[test]
fn quadratic_game_value_is_initial_state() {
    let g = GameProblem::new(
        "quad",
        ForwardModel::constant(vec![0.3], 1.0).unwrap(),
        uniform_grid(-1.0, 1.0, 21),
        uniform_grid(-1.0, 1.0, 21),
        Arc::new(|_, a, b, out| out[0] = a + b),
        quad_h(),
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap();
    let x = batch(&g, 5000, 10, 9);
    let v = solve(&g, &x).unwrap();
    assert!((v.y0().mean - 0.3).abs() <= 3.0 * v.y0().se + 1e-3, "{:?}", v.y0());
    let s = solve(&g.swapped().unwrap(), &x).unwrap();
    let se = (v.y0().se.powi(2) + s.y0().se.powi(2)).sqrt();
    assert!((v.y0().mean + s.y0().mean).abs() <= 3.0 * se, "{:?} {:?}", v.y0(), s.y0());
}

#[test]
fn monotonicity_certificate_holds_for_the_game_driver() {
    let g = game(uniform_grid(-1.0, 1.0, 5), uniform_grid(-1.0, 1.0, 5), quad_h());
    let x = batch(&g, 8, 4, 10);
    let v = solve(&g, &batch(&g, 200, 4, 11)).unwrap();
    let r = crate::driver::check_local_monotonicity(&v.driver, &game_monotonicity(&g), 4, 2000, &x, 12).unwrap();
    assert!(r.pass, "{r:?}");
}

proptest! {
    #[test]
    fn isaacs_gap_is_nonnegative_and_saddles_are_exact(z in -4.0f64..4.0, s in 0.1f64..5.0) {
        let g = game(uniform_grid(-1.0, 1.0, 7), uniform_grid(-1.0, 1.0, 5),
            Arc::new(move |_, a: f64, b: f64| (s * a + 3.0 * b).sin() + a * b));
        let (x, sup) = (vec![0.0], vec![0.0]);
        let v = PathView::new(&x, &sup, 1, 0, 0.0);
        let t = g.table(&v).unwrap();
        prop_assert!(t.upper_value(&[z]) >= t.lower_value(&[z]));
        if let Ok(p) = saddle_strategies(&g, &v, &[z], 0.0) {
            for ia in 0..7 {
                prop_assert!(p.value <= t.value(&[z], ia, p.b_index));
            }
            for ib in 0..5 {
                prop_assert!(t.value(&[z], p.a_index, ib) <= p.value);
            }
        }
    }
}
