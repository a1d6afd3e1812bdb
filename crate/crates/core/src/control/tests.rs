use super::*;
use crate::paths::make_time_grid;
use proptest::prelude::*;

fn canonical_with(h: ActionScalarFn, sigma: f64, actions: Vec<f64>) -> ControlProblem {
    ControlProblem::new(
        "test",
        ForwardModel::constant(vec![0.0], sigma).unwrap(),
        actions,
        Arc::new(|_, a, out| out[0] = a),
        h,
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap()
    .state_independent()
}

fn origin() -> (Vec<f64>, Vec<f64>) {
    (vec![0.0], vec![0.0])
}

#[test]
fn hamiltonian_examples() {
    let (x, s) = origin();
    let v = PathView::new(&x, &s, 1, 0, 0.0);
    let p = ControlProblem::canonical();
    assert_eq!(hamiltonian(&p, &v, &[0.5], 1.0).unwrap(), 0.5);
    assert_eq!(hamiltonian(&p, &v, &[0.5], -1.0).unwrap(), -0.5);
    let q = canonical_with(Arc::new(|_, a| a * a), 2.0, vec![0.5]);
    assert_eq!(hamiltonian(&q, &v, &[1.0], 0.5).unwrap(), 0.5);
}

#[test]
fn hamiltonian_min_examples() {
    let (x, s) = origin();
    let v = PathView::new(&x, &s, 1, 0, 0.0);
    let p = canonical_with(Arc::new(|_, _| 0.0), 1.0, vec![-1.0, 1.0]);
    let r = hamiltonian_min(&p, &v, &[0.5]).unwrap();
    assert_eq!((r.action, r.value), (-1.0, -0.5));
    let r = hamiltonian_min(&p, &v, &[0.0]).unwrap();
    assert_eq!((r.index, r.action, r.value), (0, -1.0, 0.0));
    let q = canonical_with(Arc::new(|_, a| a * a), 1.0, uniform_grid(-1.0, 1.0, 21));
    let r = hamiltonian_min(&q, &v, &[1.0]).unwrap();
    assert_eq!((r.action, r.value), (-0.5, -0.25));
}

#[test]
fn singular_sigma_is_rejected() {
    let (x, s) = origin();
    let v = PathView::new(&x, &s, 1, 0, 0.0);
    let p = canonical_with(Arc::new(|_, _| 0.0), 0.0, vec![1.0]);
    assert!(matches!(hamiltonian(&p, &v, &[1.0], 1.0), Err(Error::NumericalFailure { .. })));
    assert!(hamiltonian(&ControlProblem::canonical(), &v, &[1.0, 2.0], 1.0).is_err());
}

#[test]
fn value_driver_registers_and_matches_grid_minimum() {
    let p = ControlProblem::canonical();
    let d = p.core().value_driver(1.0, 1.2).unwrap();
    let (x, s) = origin();
    let v = PathView::new(&x, &s, 1, 0, 0.0);
    for z in [-3.0, -0.2, 0.0, 0.7, 40.0] {
        assert_eq!(d.func()(&v, 0.0, &[z]), -f64::abs(z));
        let mut out = [0.0; 2];
        d.eval_many(&v, &[0.0, 5.0], &[z, -z], &mut out);
        assert_eq!(out, [-f64::abs(z), -f64::abs(z)]);
    }
}

fn canonical_value(h: ActionScalarFn, n_paths: usize, seed: u64) -> (ControlProblem, ValueSolution) {
    let p = canonical_with(h, 1.0, uniform_grid(-1.0, 1.0, 21));
    let grid = make_time_grid(1.0, 20).unwrap();
    let x = p.simulate(&grid, n_paths, seed).unwrap();
    let v = solve_value_bsde(
        &p,
        &x,
        &RegressionBasis::polynomial(2),
        &[8, 16, 32],
        PicardOptions::default(),
        ValueOptions::default(),
    )
    .unwrap();
    (p, v)
}

#[test]
fn canonical_value_is_minus_one() {
    let (_, v) = canonical_value(Arc::new(|_, _| 0.0), 40_000, 1);
    let y0 = v.y0().mean;
    assert!((y0 + 1.0).abs() <= 0.02, "{y0}");
}

#[test]
fn constant_reward_shifts_value() {
    let (_, v) = canonical_value(Arc::new(|_, _| 1.0), 40_000, 2);
    assert!(v.y0().mean.abs() <= 0.02, "{:?}", v.y0());
}

#[test]
fn singleton_zero_drift_is_a_martingale() {
    let p = ControlProblem::new(
        "zero",
        ForwardModel::constant(vec![0.0], 1.0).unwrap(),
        vec![0.0],
        Arc::new(|_, _, out| out[0] = 0.0),
        Arc::new(|_, _| 0.0),
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap();
    let grid = make_time_grid(1.0, 10).unwrap();
    let x = p.simulate(&grid, 4000, 3).unwrap();
    let v = solve_value_bsde(&p, &x, &RegressionBasis::polynomial(2), &[8, 16, 32], PicardOptions::default(), ValueOptions::default())
        .unwrap();
    assert!(v.y0().mean.abs() <= 3.0 * v.y0().se + 1e-12);
    let r = verify_optimality(&p, &v, &[], 2000, 4).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.pass, "{r:#?}");
}

#[test]
fn constant_policies_have_closed_form_values() {
    let p = ControlProblem::canonical();
    let grid = make_time_grid(1.0, 20).unwrap();
    for (a, want) in [(-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)] {
        for route in [Route::DriftSim, Route::Girsanov] {
            let r = evaluate_policy(&p, &Policy::Constant(a), &grid, 20_000, 5, route).unwrap();
            assert!((r.j.mean - want).abs() <= 3.0 * r.j.se + 1e-12, "{r:?}");
            if let Some(l) = r.lambda_mean {
                assert!((l.mean - 1.0).abs() <= 3.0 * l.se, "{l:?}");
                assert!(r.warning.is_none());
            }
        }
    }
}

#[test]
fn zero_drift_routes_coincide_path_by_path() {
    let p = ControlProblem::new(
        "zero",
        ForwardModel::constant(vec![0.5], 1.3).unwrap(),
        vec![-1.0, 1.0],
        Arc::new(|_, _, out| out[0] = 0.0),
        Arc::new(|v, a| a * v.current()[0]),
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap();
    let grid = make_time_grid(1.0, 16).unwrap();
    let a = policy_payoffs(&p, &Policy::Constant(1.0), &grid, 500, 6, Route::DriftSim).unwrap();
    let b = policy_payoffs(&p, &Policy::Constant(1.0), &grid, 500, 6, Route::Girsanov).unwrap();
    assert_eq!(a, b);
    assert!(b.iter().all(|w| w.1 == 1.0));
}

#[test]
fn girsanov_flags_degenerate_weights() {
    let p = ControlProblem::new(
        "steep",
        ForwardModel::constant(vec![0.0], 0.2).unwrap(),
        vec![1.5],
        Arc::new(|_, a, out| out[0] = a),
        Arc::new(|_, _| 0.0),
        TerminalCondition::x_terminal(1.0),
    )
    .unwrap();
    let grid = make_time_grid(1.0, 10).unwrap();
    let r = evaluate_policy(&p, &Policy::Constant(1.5), &grid, 2000, 7, Route::Girsanov).unwrap();
    assert!(r.ess_fraction.unwrap() < ESS_WARNING);
    assert!(r.warning.is_some());
}

#[test]
fn canonical_optimality() {
    let (p, v) = canonical_value(Arc::new(|_, _| 0.0), 5000, 8);
    let mut cands = vec![Policy::Constant(-1.0), Policy::Constant(0.0), Policy::Constant(1.0)];
    cands.extend(random_constant_actions(p.actions(), 10, 9).into_iter().map(Policy::Constant));
    let r = verify_optimality(&p, &v, &cands, 5000, 10).unwrap();
    assert_eq!(r.rows.len(), 14);
    assert!(r.pass, "{r:#?}");
    assert!((r.rows[0].drift_sim.j.mean + 1.0).abs() < 0.05);
}

#[test]
fn quadratic_cost_feedback_beats_all_constants() {
    let (p, v) = canonical_value(Arc::new(|_, a| a * a), 5000, 11);
    // With Z ≈ 1 the minimizer of a + a² is −1/2 and Y₀ = E x_T − 1/4.
    assert!((v.y0().mean + 0.25).abs() < 0.03, "{:?}", v.y0());
    let grid = v.solution().grid().clone();
    let fb = evaluate_policy(&p, &v.feedback(), &grid, 5000, 12, Route::DriftSim).unwrap();
    let best = p
        .actions()
        .iter()
        .map(|&a| evaluate_policy(&p, &Policy::Constant(a), &grid, 5000, 12, Route::DriftSim).unwrap())
        .min_by(|a, b| a.j.mean.total_cmp(&b.j.mean))
        .unwrap();
    assert!(fb.j.mean <= best.j.mean + 3.0 * (fb.j.se.powi(2) + best.j.se.powi(2)).sqrt());
    assert_eq!(best.policy, "const(-0.5)");
}

#[test]
fn validation_reports_growth_ratios() {
    let p = ControlProblem::canonical().with_constants(1.0, 1.0);
    let x = p.simulate(&make_time_grid(1.0, 10).unwrap(), 100, 13).unwrap();
    let r = p.validate(&x);
    assert!(r.pass, "{r:?}");
    assert!(r.f_ratio <= 1.0 && r.h_ratio == 0.0);
    assert!((r.f_modulus - 0.1).abs() < 1e-12);
    assert!(!ControlProblem::canonical().with_constants(0.5, 1.0).validate(&x).pass);
}

#[test]
fn feedback_on_wrong_grid_is_rejected() {
    let (p, v) = canonical_value(Arc::new(|_, _| 0.0), 500, 14);
    let other = make_time_grid(1.0, 7).unwrap();
    assert!(evaluate_policy(&p, &v.feedback(), &other, 10, 1, Route::DriftSim).is_err());
}

#[test]
fn monotonicity_certificate_holds_for_the_hamiltonian() {
    let p = ControlProblem::canonical();
    let d = p.core().value_driver(1.0, 1.2).unwrap();
    let cert = hamiltonian_monotonicity(&p);
    let x = p.simulate(&make_time_grid(1.0, 4).unwrap(), 8, 15).unwrap();
    let r = crate::driver::check_local_monotonicity(&d, &cert, 4, 2000, &x, 16).unwrap();
    assert!(r.pass, "{r:?}");
}

proptest! {
    #[test]
    fn minimizer_dominates_every_action(z in -5.0f64..5.0, x0 in -2.0f64..2.0) {
        let q = canonical_with(Arc::new(|v, a| a * a * (1.0 + v.current()[0].abs())), 1.0, uniform_grid(-1.0, 1.0, 21));
        let (x, s) = (vec![x0], vec![x0.abs()]);
        let v = PathView::new(&x, &s, 1, 0, 0.0);
        let m = hamiltonian_min(&q, &v, &[z]).unwrap();
        for &a in q.actions() {
            prop_assert!(m.value <= hamiltonian(&q, &v, &[z], a).unwrap());
        }
    }

    #[test]
    fn argmin_is_scale_invariant(z in -5.0f64..5.0, e in -3i32..4) {
        let c = 2f64.powi(e);
        let base = canonical_with(Arc::new(|_, a| a * a), 1.0, uniform_grid(-1.0, 1.0, 21));
        let scaled = ControlProblem::new(
            "scaled",
            ForwardModel::constant(vec![0.0], 1.0).unwrap(),
            uniform_grid(-1.0, 1.0, 21),
            Arc::new(move |_, a, out| out[0] = c * a),
            Arc::new(move |_, a| c * a * a),
            TerminalCondition::x_terminal(1.0),
        ).unwrap();
        let (x, s) = origin();
        let v = PathView::new(&x, &s, 1, 0, 0.0);
        prop_assert_eq!(hamiltonian_min(&base, &v, &[z]).unwrap().index, hamiltonian_min(&scaled, &v, &[z]).unwrap().index);
    }
}

#[test]
fn uniform_grid_is_exact_at_decimals() {
    let g = uniform_grid(-1.0, 1.0, 21);
    assert_eq!((g[0], g[10], g[20]), (-1.0, 0.0, 1.0));
    assert_eq!(g[11], 0.1);
    assert!(g.iter().zip(g.iter().rev()).all(|(a, b)| *a == -*b));
    assert_eq!(uniform_grid(2.0, 3.0, 1), vec![2.0]);
}
