//! Two-player zero-sum games on finite action grids: Isaacs check, saddle
//! strategies, value BSDE and saddle-point verification.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    candidate_row, check_feedback_grid, monotonicity_for, pair_hamiltonian, CandidateRow, Chooser, Core, HamiltonianTable,
    PairFn, PairScalarFn, Policy, PolicyValue, ProblemReport, Route, ValueOptions,
};
use crate::driver::{DriverSpec, MonotonicityCertificate};
use crate::error::{Error, Result};
use crate::paths::{sample_brownian, simulate_forward, ForwardModel, ForwardPathBatch, PathView, TimeGrid};
use crate::solver::{BsdeSolution, LoggrowthRun, PicardOptions, RegressionBasis, TerminalCondition};
use crate::stats::{self, MeanSe};

#[cfg(test)]
mod tests;

/// Default absolute tolerance on grid minimax values.
pub const ISAACS_TOL: f64 = 1e-9;

/// Zero-sum game: player A minimizes over `a`, player B maximizes over `b`.
#[derive(Clone)]
pub struct GameProblem {
    core: Arc<Core>,
}

impl std::fmt::Debug for GameProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameProblem")
            .field("name", &self.core.name)
            .field("model", &self.core.model)
            .field("actions_a", &self.core.a)
            .field("actions_b", &self.core.b)
            .field("terminal", &self.core.g1.name())
            .finish()
    }
}

impl GameProblem {
    pub fn new(
        name: impl Into<String>,
        model: ForwardModel,
        actions_a: Vec<f64>,
        actions_b: Vec<f64>,
        f: PairFn,
        h: PairScalarFn,
        g1: TerminalCondition,
    ) -> Result<Self> {
        Ok(Self {
            core: Arc::new(Core::new(name.into(), model, actions_a, actions_b, f, h, g1)?),
        })
    }

    pub fn with_constants(mut self, k: f64, c: f64) -> Self {
        let core = Arc::make_mut(&mut self.core);
        core.k = k;
        core.c = c;
        self
    }

    pub fn state_independent(mut self) -> Self {
        Arc::make_mut(&mut self.core).state_independent = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.core.name
    }

    pub fn model(&self) -> &ForwardModel {
        &self.core.model
    }

    pub fn actions_a(&self) -> &[f64] {
        &self.core.a
    }

    pub fn actions_b(&self) -> &[f64] {
        &self.core.b
    }

    pub fn terminal(&self) -> &TerminalCondition {
        &self.core.g1
    }

    pub fn dim(&self) -> usize {
        self.core.dim()
    }

    pub fn grid_spacing(&self) -> f64 {
        self.core.grid_spacing()
    }

    pub fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<ForwardPathBatch> {
        simulate_forward(&self.core.model, &sample_brownian(grid, self.dim(), n_paths, seed)?)
    }

    pub fn validate(&self, paths: &ForwardPathBatch) -> ProblemReport {
        self.core.validate(paths)
    }

    pub fn table(&self, view: &PathView<'_>) -> Result<HamiltonianTable> {
        self.core.table(view)
    }

    /// The game with roles exchanged: `h → −h`, `g₁ → −g₁`, grids swapped.
    pub fn swapped(&self) -> Result<Self> {
        let c = &self.core;
        let (f, h, g) = (c.f.clone(), c.h.clone(), c.g1.func().clone());
        let g1 = TerminalCondition::new(format!("-{}", c.g1.name()), Arc::new(move |v: &PathView<'_>| -g(v)))
            .with_moment_constant(c.g1.moment_constant());
        let mut out = Self::new(
            format!("swapped({})", c.name),
            c.model.clone(),
            c.b.clone(),
            c.a.clone(),
            Arc::new(move |v, a, b, o| f(v, b, a, o)),
            Arc::new(move |v, a, b| -h(v, b, a)),
            g1,
        )?
        .with_constants(c.k, c.c);
        if c.state_independent {
            out = out.state_independent();
        }
        Ok(out)
    }
}

/// `H = z σ⁻¹ f(a, b) + h(a, b)` at one point.
pub fn game_hamiltonian(problem: &GameProblem, view: &PathView<'_>, z: &[f64], a: f64, b: f64) -> Result<f64> {
    pair_hamiltonian(&problem.core, view, z, a, b)
}

/// A sampled `(t_k, path, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaacsSample {
    pub node: usize,
    pub path: usize,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaacsPoint {
    pub node: usize,
    pub path: usize,
    pub t: f64,
    pub z: Vec<f64>,
    /// `max_b min_a H`
    pub lower: f64,
    /// `min_a max_b H`
    pub upper: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaacsReport {
    pub points: Vec<IsaacsPoint>,
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Uniform `(node, path, z)` draws with `z ∈ [−z_range, z_range]^m`.
pub fn pilot_samples(paths: &ForwardPathBatch, count: usize, z_range: f64, seed: u64) -> Vec<IsaacsSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nn = paths.grid().n_nodes();
    (0..count)
        .map(|_| IsaacsSample {
            node: rng.random_range(0..nn),
            path: rng.random_range(0..paths.n_paths()),
            z: (0..paths.dim()).map(|_| rng.random_range(-z_range..=z_range)).collect(),
        })
        .collect()
}

/// Exact grid minimax both ways at each sample.
pub fn check_isaacs(
    problem: &GameProblem,
    paths: &ForwardPathBatch,
    samples: &[IsaacsSample],
    tolerance: f64,
) -> Result<IsaacsReport> {
    if samples.iter().any(|s| s.z.len() != problem.dim() || s.path >= paths.n_paths() || s.node >= paths.grid().n_nodes()) {
        return Err(Error::invalid("Isaacs sample does not match the problem or path batch"));
    }
    let points = stats::par_map(samples.len(), |i| -> Result<IsaacsPoint> {
        let s = &samples[i];
        let view = paths.view(s.path, s.node);
        let t = problem.table(&view)?;
        let lower = t.lower_value(&s.z);
        let upper = t.upper_value(&s.z);
        Ok(IsaacsPoint {
            node: s.node,
            path: s.path,
            t: view.t(),
            z: s.z.clone(),
            lower,
            upper,
            gap: upper - lower,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_gap = points.iter().map(|p| p.gap).fold(0.0, f64::max);
    Ok(IsaacsReport {
        pass: max_gap <= tolerance,
        points,
        max_gap,
        tolerance,
    })
}

/// Grid pair with `H(a*, b) ≤ H(a*, b*) ≤ H(a, b*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePair {
    pub a_index: usize,
    pub b_index: usize,
    pub a: f64,
    pub b: f64,
    pub value: f64,
    /// The inequalities hold without tolerance.
    pub exact: bool,
}

/// Lexicographically first `(a, b)` index pair satisfying the saddle
/// inequalities exactly, else within `tol`.
pub(crate) fn find_saddle(t: &HamiltonianTable, z: &[f64], tol: f64) -> Option<(usize, usize, f64, bool)> {
    let (n_a, n_b) = t.shape();
    let row_max: Vec<f64> = (0..n_a).map(|ia| t.maximize(z, ia).1).collect();
    let col_min: Vec<f64> = (0..n_b).map(|ib| t.minimize(z, ib).1).collect();
    for exact in [true, false] {
        let slack = if exact { 0.0 } else { tol };
        for ia in 0..n_a {
            for ib in 0..n_b {
                let v = t.value(z, ia, ib);
                if row_max[ia] <= v + slack && v <= col_min[ib] + slack {
                    return Some((ia, ib, v, exact));
                }
            }
        }
    }
    None
}

pub fn saddle_strategies(problem: &GameProblem, view: &PathView<'_>, z: &[f64], tol: f64) -> Result<SaddlePair> {
    if z.len() != problem.dim() {
        return Err(Error::invalid(format!("z has length {}, expected {}", z.len(), problem.dim())));
    }
    let t = problem.table(view)?;
    saddle_from_table(&problem.core, &t, view, z, tol)
}

fn saddle_from_table(core: &Core, t: &HamiltonianTable, view: &PathView<'_>, z: &[f64], tol: f64) -> Result<SaddlePair> {
    match find_saddle(t, z, tol) {
        Some((ia, ib, value, exact)) => Ok(SaddlePair {
            a_index: ia,
            b_index: ib,
            a: core.a[ia],
            b: core.b[ib],
            value,
            exact,
        }),
        None => Err(Error::NoSaddle {
            t: view.t(),
            message: format!(
                "Isaacs gap {:e} at z={z:?}",
                t.upper_value(z) - t.lower_value(z)
            ),
        }),
    }
}

/// Options for [`solve_game_value`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameOptions {
    pub value: ValueOptions,
    pub isaacs_tol: f64,
    pub pilot_samples: usize,
    pub pilot_z_range: f64,
    pub pilot_seed: u64,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            value: ValueOptions::default(),
            isaacs_tol: ISAACS_TOL,
            pilot_samples: 256,
            pilot_z_range: 10.0,
            pilot_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameValue {
    pub run: LoggrowthRun,
    pub driver: DriverSpec,
    pub c0: f64,
    pub isaacs: IsaacsReport,
    pub isaacs_tol: f64,
}

impl GameValue {
    pub fn solution(&self) -> &BsdeSolution {
        self.run.solution()
    }

    pub fn y0(&self) -> MeanSe {
        self.solution().y0()
    }

    /// The feedback pair `(ũ, ṽ)` read off the saddle pair at `Z*`.
    pub fn feedback(&self) -> (Policy<'_>, Policy<'_>) {
        (Policy::Feedback(self.solution()), Policy::Feedback(self.solution()))
    }
}

/// Checks the Isaacs condition on a pilot sample, then solves the BSDE with
/// driver `max_b min_a H` (the saddle value under the condition).
pub fn solve_game_value(
    problem: &GameProblem,
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    schedule: &[usize],
    picard: PicardOptions,
    options: GameOptions,
) -> Result<GameValue> {
    if paths.dim() != problem.dim() {
        return Err(Error::invalid("path dimension does not match the problem"));
    }
    let samples = pilot_samples(paths, options.pilot_samples, options.pilot_z_range, options.pilot_seed);
    let isaacs = check_isaacs(problem, paths, &samples, options.isaacs_tol)?;
    if !isaacs.pass {
        return Err(Error::IsaacsFailure {
            max_gap: isaacs.max_gap,
            tolerance: isaacs.tolerance,
            report: Box::new(isaacs),
        });
    }
    let (run, driver, c0) = problem.core.solve_value(paths, basis, schedule, picard, options.value)?;
    Ok(GameValue {
        run,
        driver,
        c0,
        isaacs,
        isaacs_tol: options.isaacs_tol,
    })
}

/// Local monotonicity of the game driver, as for the control Hamiltonian.
pub fn game_monotonicity(problem: &GameProblem) -> MonotonicityCertificate {
    monotonicity_for(problem.core.clone())
}

/// Evaluates `J(u, v)` on a fresh Brownian batch. Feedback strategies play
/// their component of the saddle pair at the fitted `Z`.
pub fn evaluate_payoff(
    problem: &GameProblem,
    u: &Policy<'_>,
    v: &Policy<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    route: Route,
) -> Result<PolicyValue> {
    let samples = payoff_samples(problem, u, v, grid, n_paths, seed, route, ISAACS_TOL)?;
    Ok(problem
        .core
        .summarize(describe_pair(u, v), route, n_paths, seed, &samples))
}

fn describe_pair(u: &Policy<'_>, v: &Policy<'_>) -> String {
    format!("({}, {})", u.describe(), v.describe())
}

#[allow(clippy::too_many_arguments)]
fn payoff_samples<'s>(
    problem: &GameProblem,
    u: &Policy<'s>,
    v: &Policy<'s>,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    route: Route,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let core = &problem.core;
    for p in [u, v] {
        if let Policy::Feedback(sol) = p {
            check_feedback_grid(sol, grid, core.dim())?;
        }
    }
    fn chooser<'s>(p: &Policy<'s>) -> Option<Chooser<'s>> {
        match *p {
            Policy::Feedback(sol) => Some(Chooser::new(sol)),
            Policy::Constant(_) => None,
        }
    }
    let pick = |view: &PathView<'_>, k: usize, ch: &mut Chooser<'_>| -> Result<SaddlePair> {
        ch.predictor.z(k, view, &mut ch.z);
        ch.table.fill(core, view)?;
        saddle_from_table(core, &ch.table, view, &ch.z, tol)
    };
    core.payoffs(
        grid,
        n_paths,
        seed,
        route,
        || (chooser(u), chooser(v)),
        |view, k, (cu, cv)| {
            let a = match (u, cu) {
                (Policy::Constant(a), _) => *a,
                (_, Some(ch)) => pick(view, k, ch)?.a,
                _ => unreachable!("feedback strategies carry a chooser"),
            };
            let b = match (v, cv) {
                (Policy::Constant(b), _) => *b,
                (_, Some(ch)) => pick(view, k, ch)?.b,
                _ => unreachable!("feedback strategies carry a chooser"),
            };
            Ok((a, b))
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub policy: String,
    pub drift_sim: PolicyValue,
    pub girsanov: PolicyValue,
    /// `J(ũ, ṽ) − J(ũ, v)` for a `v`-deviation, `J(u, ṽ) − J(ũ, ṽ)` for a `u`-deviation.
    pub margin: f64,
    pub margin_se: f64,
    pub route_gap: f64,
    pub route_tolerance: f64,
    pub lambda_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub y0: MeanSe,
    pub slack: f64,
    pub star: CandidateRow,
    /// `|J(ũ, ṽ) − Y₀|`
    pub value_gap: f64,
    pub value_tolerance: f64,
    pub value_pass: bool,
    pub u_rows: Vec<DeviationRow>,
    pub v_rows: Vec<DeviationRow>,
    pub u_pass: bool,
    pub v_pass: bool,
    pub routes_agree: bool,
    pub lambda_ok: bool,
    pub pass: bool,
}

/// Verifies the saddle-point property of the feedback pair against
/// unilateral deviations, along both evaluation routes on shared noise.
pub fn verify_saddle(
    problem: &GameProblem,
    value: &GameValue,
    u_deviations: &[Policy<'_>],
    v_deviations: &[Policy<'_>],
    n_paths: usize,
    seed: u64,
) -> Result<SaddleReport> {
    let grid = value.solution().grid().clone();
    let y0 = value.y0();
    let slack = 3.0 * (grid.max_dt() + problem.grid_spacing());
    let (fu, fv) = value.feedback();
    let both = |u: &Policy<'_>, v: &Policy<'_>| -> Result<(PolicyValue, PolicyValue)> {
        let ds = evaluate_payoff(problem, u, v, &grid, n_paths, seed, Route::DriftSim)?;
        let gs = evaluate_payoff(problem, u, v, &grid, n_paths, seed, Route::Girsanov)?;
        Ok((ds, gs))
    };
    let (sd, sg) = both(&fu, &fv)?;
    let star = candidate_row(describe_pair(&fu, &fv), sd, sg, y0);
    let js = star.drift_sim.j;
    let row = |u: &Policy<'_>, v: &Policy<'_>, sign: f64| -> Result<DeviationRow> {
        let (ds, gs) = both(u, v)?;
        let margin = sign * (ds.j.mean - js.mean);
        let margin_se = (ds.j.se.powi(2) + js.se.powi(2)).sqrt();
        let route_gap = (ds.j.mean - gs.j.mean).abs();
        let route_tolerance = 3.0 * (ds.j.se.powi(2) + gs.j.se.powi(2)).sqrt();
        let lambda_ok = gs.lambda_mean.is_some_and(|l| (l.mean - 1.0).abs() <= 3.0 * l.se);
        Ok(DeviationRow {
            policy: describe_pair(u, v),
            pass: margin + 3.0 * margin_se + slack >= 0.0 && route_gap <= route_tolerance && lambda_ok,
            drift_sim: ds,
            girsanov: gs,
            margin,
            margin_se,
            route_gap,
            route_tolerance,
            lambda_ok,
        })
    };
    let u_rows = u_deviations.iter().map(|u| row(u, &fv, 1.0)).collect::<Result<Vec<_>>>()?;
    let v_rows = v_deviations.iter().map(|v| row(&fu, v, -1.0)).collect::<Result<Vec<_>>>()?;
    let value_gap = (js.mean - y0.mean).abs();
    let value_tolerance = 3.0 * (js.se.powi(2) + y0.se.powi(2)).sqrt() + slack;
    let value_pass = value_gap <= value_tolerance;
    let u_pass = u_rows.iter().all(|r| r.margin + 3.0 * r.margin_se + slack >= 0.0);
    let v_pass = v_rows.iter().all(|r| r.margin + 3.0 * r.margin_se + slack >= 0.0);
    let all = || std::iter::once((star.route_gap, star.route_tolerance, star.lambda_ok))
        .chain(u_rows.iter().chain(&v_rows).map(|r| (r.route_gap, r.route_tolerance, r.lambda_ok)));
    let routes_agree = all().all(|(g, t, _)| g <= t);
    let lambda_ok = all().all(|(_, _, l)| l);
    Ok(SaddleReport {
        y0,
        slack,
        pass: value_pass && u_pass && v_pass && routes_agree && lambda_ok,
        star,
        value_gap,
        value_tolerance,
        value_pass,
        u_rows,
        v_rows,
        u_pass,
        v_pass,
        routes_agree,
        lambda_ok,
    })
}
