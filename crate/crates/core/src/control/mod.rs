//! Stochastic control on a finite action grid: Hamiltonian, value BSDE,
//! feedback policies and their evaluation.

use std::cell::RefCell;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{DriverSpec, Eta, GrowthCertificate, MonotonicityCertificate, PathScalarFn};
use crate::error::{Error, Result};
use crate::linalg;
use crate::paths::{
    check_invertibility, sample_brownian, simulate_forward, ForwardModel, ForwardPathBatch, PathView, TimeGrid,
};
use crate::solver::{
    solve_loggrowth, BsdeSolution, LoggrowthOptions, LoggrowthRun, PicardOptions, RegressionBasis, TerminalCondition,
};
use crate::stats::{self, MeanSe};

#[cfg(test)]
mod tests;

/// σ matrices with a larger 2-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Girsanov runs whose effective sample size falls below this fraction are flagged.
pub const ESS_WARNING: f64 = 0.05;

/// Drift `f(t, ω, a)` written into an `m`-vector.
pub type ActionFn = Arc<dyn Fn(&PathView<'_>, f64, &mut [f64]) + Send + Sync>;
/// Reward `h(t, ω, a)`.
pub type ActionScalarFn = Arc<dyn Fn(&PathView<'_>, f64) -> f64 + Send + Sync>;
/// Drift `f(t, ω, a, b)`.
pub type PairFn = Arc<dyn Fn(&PathView<'_>, f64, f64, &mut [f64]) + Send + Sync>;
/// Reward `h(t, ω, a, b)`.
pub type PairScalarFn = Arc<dyn Fn(&PathView<'_>, f64, f64) -> f64 + Send + Sync>;

/// Shared data of control problems and games. A control problem is a game
/// whose second grid is the single point `0`.
#[derive(Clone)]
pub(crate) struct Core {
    pub model: ForwardModel,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub f: PairFn,
    pub h: PairScalarFn,
    pub g1: TerminalCondition,
    pub k: f64,
    pub c: f64,
    pub state_independent: bool,
    pub name: String,
}

impl Core {
    pub fn new(
        name: String,
        model: ForwardModel,
        a: Vec<f64>,
        b: Vec<f64>,
        f: PairFn,
        h: PairScalarFn,
        g1: TerminalCondition,
    ) -> Result<Self> {
        for (label, grid) in [("action", &a), ("second action", &b)] {
            if grid.is_empty() {
                return Err(Error::invalid(format!("{label} grid is empty")));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{label} grid has non-finite entries")));
            }
        }
        Ok(Self {
            model: model.base(),
            a,
            b,
            f,
            h,
            g1,
            k: 10.0,
            c: 10.0,
            state_independent: false,
            name,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Largest gap between neighbouring grid actions (0 for singletons).
    pub fn grid_spacing(&self) -> f64 {
        let spacing = |g: &[f64]| {
            let mut s = g.to_vec();
            s.sort_by(f64::total_cmp);
            s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
        };
        spacing(&self.a).max(spacing(&self.b))
    }

    /// Sampled growth ratios and moduli between neighbouring actions.
    pub fn validate(&self, paths: &ForwardPathBatch) -> ProblemReport {
        let n = paths.n_paths().min(64);
        let nn = paths.grid().n_nodes();
        let m = self.dim();
        let mut fb = vec![0.0; m];
        let mut fprev = vec![0.0; m];
        let mut r = ProblemReport {
            k: self.k,
            c: self.c,
            ..Default::default()
        };
        for p in 0..n {
            for k in 0..nn {
                let v = paths.view(p, k);
                let w = 1.0 + v.running_sup();
                for &b in &self.b {
                    let mut hprev = f64::NAN;
                    for (i, &a) in self.a.iter().enumerate() {
                        (self.f)(&v, a, b, &mut fb);
                        let h = (self.h)(&v, a, b);
                        r.f_ratio = r.f_ratio.max(linalg::norm(&fb) / w);
                        r.h_ratio = r.h_ratio.max(h.abs() / w);
                        if i > 0 {
                            let df: Vec<f64> = fb.iter().zip(&fprev).map(|(x, y)| x - y).collect();
                            r.f_modulus = r.f_modulus.max(linalg::norm(&df));
                            r.h_modulus = r.h_modulus.max((h - hprev).abs());
                        }
                        fprev.copy_from_slice(&fb);
                        hprev = h;
                    }
                }
            }
            let v = paths.terminal_view(p);
            r.g1_ratio = r.g1_ratio.max(self.g1.eval(&v).abs() / (1.0 + v.running_sup()));
        }
        r.samples = n * nn;
        r.pass = r.f_ratio <= self.k && r.h_ratio <= self.k && r.g1_ratio <= self.c;
        r
    }

    /// `σ⁻¹f` and `h` over the grid at one view.
    pub fn table(&self, view: &PathView<'_>) -> Result<HamiltonianTable> {
        let mut t = HamiltonianTable::default();
        t.fill(self, view)?;
        Ok(t)
    }

    /// Pilot estimate of `sup |σ⁻¹f|` over a stride of paths and all nodes.
    fn pilot_drift_bound(&self, paths: &ForwardPathBatch) -> Result<f64> {
        let stride = (paths.n_paths() / 16).max(1);
        let mut t = HamiltonianTable::default();
        let mut fmax: f64 = 0.0;
        for p in (0..paths.n_paths()).step_by(stride).take(16) {
            for k in 0..paths.grid().n_nodes() {
                t.fill(self, &paths.view(p, k))?;
                fmax = fmax.max(t.drift_bound());
            }
        }
        Ok(fmax)
    }

    /// The registered `H*` driver: `max_b min_a H`, which for a single `b` is
    /// the grid minimum. The growth certificate is
    /// `η = max|h| + F·exp((F/c0)²)·1{F > c0}` with `F = max|σ⁻¹f|`, which
    /// bounds `|z|F` wherever `√log⁺|z| < F/c0`.
    pub fn value_driver(self: &Arc<Self>, c0: f64, alpha: f64) -> Result<DriverSpec> {
        let m = self.dim();
        let core = self.clone();
        let func = Arc::new(move |v: &PathView<'_>, _y: f64, z: &[f64]| {
            TABLE.with(|t| {
                let mut t = t.borrow_mut();
                match t.fill(&core, v) {
                    Ok(()) => t.lower_value(z),
                    Err(_) => f64::NAN,
                }
            })
        });
        let core = self.clone();
        let batch = Arc::new(move |v: &PathView<'_>, ys: &[f64], zs: &[f64], out: &mut [f64]| {
            TABLE.with(|t| {
                let mut t = t.borrow_mut();
                let ok = t.fill(&core, v).is_ok();
                for (j, o) in out.iter_mut().enumerate().take(ys.len()) {
                    *o = if ok { t.lower_value(&zs[j * m..(j + 1) * m]) } else { f64::NAN };
                }
            })
        });
        let core = self.clone();
        let eta: PathScalarFn = Arc::new(move |v: &PathView<'_>| {
            let mut t = HamiltonianTable::default();
            match t.fill(&core, v) {
                Ok(()) => {
                    let f = t.drift_bound();
                    let excess = if f > c0 { f * (f / c0).powi(2).exp() } else { 0.0 };
                    t.reward_bound() + excess
                }
                Err(_) => f64::INFINITY,
            }
        });
        let mut d = DriverSpec::new(
            format!("H*[{}]", self.name),
            m,
            func,
            GrowthCertificate {
                eta: Eta::Process(eta),
                c0,
                alpha_prime: None,
            },
        )
        .with_batch(batch)
        .with_alpha(alpha)
        .y_independent();
        if self.state_independent {
            d = d.path_independent();
        }
        d.register()
    }

    /// Spot-checks σ and solves the value BSDE for the registered `H*`.
    pub fn solve_value(
        self: &Arc<Self>,
        paths: &ForwardPathBatch,
        basis: &RegressionBasis,
        schedule: &[usize],
        picard: PicardOptions,
        options: ValueOptions,
    ) -> Result<(LoggrowthRun, DriverSpec, f64)> {
        if paths.dim() != self.dim() {
            return Err(Error::invalid("path dimension does not match the problem"));
        }
        let inv = check_invertibility(&self.model, paths, 256);
        if !inv.all_invertible || inv.worst_condition > MAX_CONDITION {
            return Err(Error::NumericalFailure {
                path: 0,
                message: format!("σ is near-singular on simulated paths (condition {:e})", inv.worst_condition),
            });
        }
        let c0 = self.pilot_drift_bound(paths)?.max(options.c0_floor);
        let driver = self.value_driver(c0, options.alpha)?;
        let run = solve_loggrowth(
            &driver,
            &self.g1,
            paths,
            basis,
            schedule,
            picard,
            LoggrowthOptions {
                beta: options.beta,
                tol: options.tol,
                alpha: None,
            },
        )?;
        Ok((run, driver, c0))
    }

    /// Monte Carlo value of a pair of action rules on a fresh Brownian batch.
    /// `choose` maps `(view, node, per-path state)` to action values `(a, b)`.
    pub fn payoffs<S, M, C>(
        &self,
        grid: &TimeGrid,
        n_paths: usize,
        seed: u64,
        route: Route,
        make: M,
        choose: C,
    ) -> Result<Vec<(f64, f64)>>
    where
        M: Fn() -> S + Sync,
        C: Fn(&PathView<'_>, usize, &mut S) -> Result<(f64, f64)> + Sync,
    {
        let m = self.dim();
        let noise = sample_brownian(grid, m, n_paths, seed)?;
        let nn = grid.n_nodes();
        let results = stats::par_map(n_paths, |p| -> Result<(f64, f64)> {
            let db = noise.path(p);
            let mut xs = vec![0.0; nn * m];
            let mut sup = vec![0.0; nn];
            let mut sigma = vec![0.0; m * m];
            let mut sinv = vec![0.0; m * m];
            let mut fb = vec![0.0; m];
            let mut theta = vec![0.0; m];
            let mut ch = make();
            xs[..m].copy_from_slice(self.model.x0());
            sup[0] = linalg::norm(self.model.x0());
            let mut running = 0.0;
            let mut log_w = 0.0;
            for k in 0..grid.n_steps() {
                let dt = grid.dt(k);
                let dbk = &db[k * m..(k + 1) * m];
                {
                    let view = PathView::new(&xs, &sup, m, k, grid.t(k));
                    let (a, b) = choose(&view, k, &mut ch)?;
                    self.model.sigma(&view, &mut sigma);
                    (self.f)(&view, a, b, &mut fb);
                    running += (self.h)(&view, a, b) * dt;
                    if route == Route::Girsanov {
                        match linalg::invert(&sigma, m, &mut sinv) {
                            Some(c) if c <= MAX_CONDITION => {}
                            _ => {
                                return Err(Error::NumericalFailure {
                                    path: p,
                                    message: format!("σ is near-singular at node {k}"),
                                })
                            }
                        }
                        linalg::mat_vec(&sinv, &fb, &mut theta);
                        log_w += linalg::dot(&theta, dbk) - 0.5 * linalg::dot(&theta, &theta) * dt;
                    }
                }
                let (head, tail) = xs.split_at_mut((k + 1) * m);
                let cur = &head[k * m..];
                let next = &mut tail[..m];
                for i in 0..m {
                    let mut v = cur[i];
                    if route == Route::DriftSim {
                        v += fb[i] * dt;
                    }
                    for j in 0..m {
                        v += sigma[i * m + j] * dbk[j];
                    }
                    next[i] = v;
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericalFailure {
                        path: p,
                        message: format!("non-finite state at node {}", k + 1),
                    });
                }
                sup[k + 1] = sup[k].max(linalg::norm(next));
            }
            let view = PathView::new(&xs, &sup, m, grid.n_steps(), grid.horizon());
            let payoff = running + self.g1.eval(&view);
            let w = match route {
                Route::DriftSim => 1.0,
                Route::Girsanov => log_w.exp(),
            };
            Ok((w * payoff, w))
        });
        results.into_iter().collect()
    }

    pub fn summarize(
        &self,
        policy: String,
        route: Route,
        n_paths: usize,
        seed: u64,
        samples: &[(f64, f64)],
    ) -> PolicyValue {
        let j: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let (lambda_mean, ess_fraction, warning) = match route {
            Route::DriftSim => (None, None, None),
            Route::Girsanov => {
                let w: Vec<f64> = samples.iter().map(|s| s.1).collect();
                let s1 = stats::pairwise_sum(&w);
                let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
                let s2 = stats::pairwise_sum(&sq);
                // All weights underflowing counts as a fully degenerate sample.
                let ess = if s2 > 0.0 && s2.is_finite() { s1 * s1 / s2 / n_paths as f64 } else { 0.0 };
                let warn = (ess < ESS_WARNING).then(|| {
                    format!("degenerate Girsanov weights: effective sample size {:.2}% of paths", 100.0 * ess)
                });
                (Some(stats::mean_se(&w)), Some(ess), warn)
            }
        };
        PolicyValue {
            policy,
            route,
            j: stats::mean_se(&j),
            n_paths,
            seed,
            lambda_mean,
            ess_fraction,
            warning,
        }
    }
}

thread_local! {
    static TABLE: RefCell<HamiltonianTable> = RefCell::new(HamiltonianTable::default());
}

/// Per-path scratch for feedback rules.
pub(crate) struct Chooser<'a> {
    pub table: HamiltonianTable,
    pub z: Vec<f64>,
    pub predictor: crate::solver::Predictor<'a>,
}

impl<'a> Chooser<'a> {
    pub fn new(sol: &'a BsdeSolution) -> Self {
        Self {
            table: HamiltonianTable::default(),
            z: vec![0.0; sol.z_dim()],
            predictor: sol.predictor(),
        }
    }
}

/// `σ⁻¹f(a, b)` and `h(a, b)` for every grid pair at one `(t_k, path)`.
/// `H(z, a, b) = z·σ⁻¹f + h`.
#[derive(Debug, Clone, Default)]
pub struct HamiltonianTable {
    m: usize,
    n_a: usize,
    n_b: usize,
    sigma: Vec<f64>,
    sigma_inv: Vec<f64>,
    fbuf: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    condition: f64,
}

impl HamiltonianTable {
    pub(crate) fn fill(&mut self, core: &Core, view: &PathView<'_>) -> Result<()> {
        let m = core.dim();
        let (n_a, n_b) = (core.a.len(), core.b.len());
        self.m = m;
        self.n_a = n_a;
        self.n_b = n_b;
        self.sigma.resize(m * m, 0.0);
        self.sigma_inv.resize(m * m, 0.0);
        self.fbuf.resize(m, 0.0);
        self.g.resize(n_a * n_b * m, 0.0);
        self.h.resize(n_a * n_b, 0.0);
        core.model.sigma(view, &mut self.sigma);
        self.condition = match linalg::invert(&self.sigma, m, &mut self.sigma_inv) {
            Some(c) if c <= MAX_CONDITION => c,
            c => {
                return Err(Error::NumericalFailure {
                    path: 0,
                    message: format!(
                        "σ is near-singular at t={} (condition {:e})",
                        view.t(),
                        c.unwrap_or(f64::INFINITY)
                    ),
                })
            }
        };
        for (ia, &a) in core.a.iter().enumerate() {
            for (ib, &b) in core.b.iter().enumerate() {
                let idx = ia * n_b + ib;
                (core.f)(view, a, b, &mut self.fbuf);
                linalg::mat_vec(&self.sigma_inv, &self.fbuf, &mut self.g[idx * m..(idx + 1) * m]);
                self.h[idx] = (core.h)(view, a, b);
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_a, self.n_b)
    }

    /// Condition number of σ at this point.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn value(&self, z: &[f64], ia: usize, ib: usize) -> f64 {
        let idx = ia * self.n_b + ib;
        linalg::dot(z, &self.g[idx * self.m..(idx + 1) * self.m]) + self.h[idx]
    }

    /// Lowest-index minimizer over `a` for fixed `b`.
    pub fn minimize(&self, z: &[f64], ib: usize) -> (usize, f64) {
        let mut best = (0, self.value(z, 0, ib));
        for ia in 1..self.n_a {
            let v = self.value(z, ia, ib);
            if v < best.1 {
                best = (ia, v);
            }
        }
        best
    }

    /// Lowest-index maximizer over `b` for fixed `a`.
    pub fn maximize(&self, z: &[f64], ia: usize) -> (usize, f64) {
        let mut best = (0, self.value(z, ia, 0));
        for ib in 1..self.n_b {
            let v = self.value(z, ia, ib);
            if v > best.1 {
                best = (ib, v);
            }
        }
        best
    }

    /// `max_b min_a H`.
    pub fn lower_value(&self, z: &[f64]) -> f64 {
        let mut best = self.minimize(z, 0).1;
        for ib in 1..self.n_b {
            best = best.max(self.minimize(z, ib).1);
        }
        best
    }

    /// `min_a max_b H`.
    pub fn upper_value(&self, z: &[f64]) -> f64 {
        let mut best = self.maximize(z, 0).1;
        for ia in 1..self.n_a {
            best = best.min(self.maximize(z, ia).1);
        }
        best
    }

    /// `max |σ⁻¹f|` over the grid.
    pub fn drift_bound(&self) -> f64 {
        self.g.chunks_exact(self.m.max(1)).map(linalg::norm).fold(0.0, f64::max)
    }

    /// `max |h|` over the grid.
    pub fn reward_bound(&self) -> f64 {
        self.h.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Sampled growth ratios and action moduli of a problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub k: f64,
    pub c: f64,
    pub samples: usize,
    /// `max |f| / (1 + ‖w‖_t)`
    pub f_ratio: f64,
    pub h_ratio: f64,
    pub g1_ratio: f64,
    /// Largest change of `f` between neighbouring grid actions.
    pub f_modulus: f64,
    pub h_modulus: f64,
    pub pass: bool,
}

/// How `J` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Euler simulation of the controlled state.
    DriftSim,
    /// Driftless paths reweighted by the discrete exponential.
    Girsanov,
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Route::DriftSim => "drift-sim",
            Route::Girsanov => "girsanov",
        })
    }
}

/// A policy: a constant action or the feedback rule of a solved value BSDE.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Constant(f64),
    Feedback(&'a BsdeSolution),
}

impl Policy<'_> {
    pub fn describe(&self) -> String {
        match self {
            Policy::Constant(a) => format!("const({a})"),
            Policy::Feedback(_) => "feedback".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub policy: String,
    pub route: Route,
    pub j: MeanSe,
    pub n_paths: usize,
    pub seed: u64,
    /// Sample mean of the Girsanov weight.
    pub lambda_mean: Option<MeanSe>,
    /// Effective sample size over `n_paths`.
    pub ess_fraction: Option<f64>,
    pub warning: Option<String>,
}

/// Options for the value BSDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueOptions {
    pub alpha: f64,
    pub beta: f64,
    pub tol: f64,
    /// Lower bound on the certificate constant `c0`.
    pub c0_floor: f64,
}

impl Default for ValueOptions {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            beta: 1.5,
            tol: 1e-2,
            c0_floor: 1e-3,
        }
    }
}

/// Control problem with state `dx = σ dB` under the reference measure and
/// controlled drift `f(t, x, a)`, `a` on a finite grid.
#[derive(Clone)]
pub struct ControlProblem {
    core: Arc<Core>,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.core.name)
            .field("model", &self.core.model)
            .field("actions", &self.core.a)
            .field("terminal", &self.core.g1.name())
            .finish()
    }
}

impl ControlProblem {
    pub fn new(
        name: impl Into<String>,
        model: ForwardModel,
        actions: Vec<f64>,
        f: ActionFn,
        h: ActionScalarFn,
        g1: TerminalCondition,
    ) -> Result<Self> {
        let pf: PairFn = Arc::new(move |v, a, _b, out| f(v, a, out));
        let ph: PairScalarFn = Arc::new(move |v, a, _b| h(v, a));
        Ok(Self {
            core: Arc::new(Core::new(name.into(), model, actions, vec![0.0], pf, ph, g1)?),
        })
    }

    /// `m = 1`, `σ ≡ 1`, `x₀ = 0`, 21-point grid on `[−1, 1]`, `f(a) = a`,
    /// `h ≡ 0`, `g₁ = x_T`.
    pub fn canonical() -> Self {
        Self::new(
            "canonical",
            ForwardModel::constant(vec![0.0], 1.0).expect("valid model"),
            uniform_grid(-1.0, 1.0, 21),
            Arc::new(|_, a, out| out[0] = a),
            Arc::new(|_, _| 0.0),
            TerminalCondition::x_terminal(1.0),
        )
        .expect("valid problem")
        .state_independent()
    }

    /// Growth constants `K` (for `f`, `h`) and `C` (for `g₁`).
    pub fn with_constants(mut self, k: f64, c: f64) -> Self {
        let core = Arc::make_mut(&mut self.core);
        core.k = k;
        core.c = c;
        self
    }

    /// Declares σ, f and h free of `(t, ω)`; checks then use a single path.
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

    pub fn actions(&self) -> &[f64] {
        &self.core.a
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

    pub(crate) fn core(&self) -> &Arc<Core> {
        &self.core
    }

    /// Driftless state paths, the reference measure of the value BSDE.
    pub fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<ForwardPathBatch> {
        simulate_forward(&self.core.model, &sample_brownian(grid, self.dim(), n_paths, seed)?)
    }

    pub fn validate(&self, paths: &ForwardPathBatch) -> ProblemReport {
        self.core.validate(paths)
    }

    pub fn table(&self, view: &PathView<'_>) -> Result<HamiltonianTable> {
        self.core.table(view)
    }
}

/// `H = z σ⁻¹ f(a) + h(a)` at one point.
pub fn hamiltonian(problem: &ControlProblem, view: &PathView<'_>, z: &[f64], a: f64) -> Result<f64> {
    pair_hamiltonian(problem.core(), view, z, a, 0.0)
}

pub(crate) fn pair_hamiltonian(core: &Core, view: &PathView<'_>, z: &[f64], a: f64, b: f64) -> Result<f64> {
    let m = core.dim();
    if z.len() != m {
        return Err(Error::invalid(format!("z has length {}, expected {m}", z.len())));
    }
    let mut sigma = vec![0.0; m * m];
    let mut inv = vec![0.0; m * m];
    core.model.sigma(view, &mut sigma);
    match linalg::invert(&sigma, m, &mut inv) {
        Some(c) if c <= MAX_CONDITION => {}
        c => {
            return Err(Error::NumericalFailure {
                path: 0,
                message: format!("σ is near-singular at t={} (condition {:e})", view.t(), c.unwrap_or(f64::INFINITY)),
            })
        }
    }
    let mut fb = vec![0.0; m];
    let mut g = vec![0.0; m];
    (core.f)(view, a, b, &mut fb);
    linalg::mat_vec(&inv, &fb, &mut g);
    Ok(linalg::dot(z, &g) + (core.h)(view, a, b))
}

/// Grid minimizer of the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianMin {
    pub index: usize,
    pub action: f64,
    pub value: f64,
}

/// Exact grid minimum; ties go to the lowest action index.
pub fn hamiltonian_min(problem: &ControlProblem, view: &PathView<'_>, z: &[f64]) -> Result<HamiltonianMin> {
    if z.len() != problem.dim() {
        return Err(Error::invalid(format!("z has length {}, expected {}", z.len(), problem.dim())));
    }
    let t = problem.table(view)?;
    let (index, value) = t.minimize(z, 0);
    Ok(HamiltonianMin {
        index,
        action: problem.actions()[index],
        value,
    })
}

/// Converged value BSDE with its registered driver.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub run: LoggrowthRun,
    pub driver: DriverSpec,
    /// Certificate constant `c0` of the registered `H*`.
    pub c0: f64,
}

impl ValueSolution {
    pub fn solution(&self) -> &BsdeSolution {
        self.run.solution()
    }

    pub fn y0(&self) -> MeanSe {
        self.solution().y0()
    }

    /// The feedback rule `ũ_k = u*(t_k, x, Z_k)`.
    pub fn feedback(&self) -> Policy<'_> {
        Policy::Feedback(self.solution())
    }
}

/// Solves `Y_t = g₁ + ∫ H*(s, x, Z_s) ds − ∫ Z dB` through the
/// mollify/truncate schedule.
pub fn solve_value_bsde(
    problem: &ControlProblem,
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    schedule: &[usize],
    picard: PicardOptions,
    options: ValueOptions,
) -> Result<ValueSolution> {
    let (run, driver, c0) = problem.core().solve_value(paths, basis, schedule, picard, options)?;
    Ok(ValueSolution { run, driver, c0 })
}

/// `(y − y')(H*(z) − H*(z')) ≤ |y − y'| F |z − z'|` with `F = max|σ⁻¹f|`;
/// on `{exp(F²) ≤ N}` this is the local monotonicity bound with `M₂ = 1`,
/// `A_N = N`.
pub fn hamiltonian_monotonicity(problem: &ControlProblem) -> MonotonicityCertificate {
    monotonicity_for(problem.core().clone())
}

pub(crate) fn monotonicity_for(core: Arc<Core>) -> MonotonicityCertificate {
    let localizer: PathScalarFn = Arc::new(move |v: &PathView<'_>| match core.table(v) {
        Ok(t) => t.drift_bound().powi(2).exp(),
        Err(_) => f64::INFINITY,
    });
    MonotonicityCertificate::power(1.0, 1.0).with_localizer(localizer)
}

/// Evaluates `J(u) = E^u[∫h dt + g₁]` on a fresh Brownian batch.
pub fn evaluate_policy(
    problem: &ControlProblem,
    policy: &Policy<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    route: Route,
) -> Result<PolicyValue> {
    let samples = policy_payoffs(problem, policy, grid, n_paths, seed, route)?;
    Ok(problem.core().summarize(policy.describe(), route, n_paths, seed, &samples))
}

/// Per-path `(Λ·payoff, Λ)`; `Λ ≡ 1` on the drift-sim route.
pub fn policy_payoffs(
    problem: &ControlProblem,
    policy: &Policy<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    route: Route,
) -> Result<Vec<(f64, f64)>> {
    let core = problem.core();
    match *policy {
        Policy::Constant(a) => core.payoffs(grid, n_paths, seed, route, || (), |_, _, _| Ok((a, 0.0))),
        Policy::Feedback(sol) => {
            check_feedback_grid(sol, grid, problem.dim())?;
            core.payoffs(grid, n_paths, seed, route, || Chooser::new(sol), |v, k, ch| {
                ch.predictor.z(k, v, &mut ch.z);
                ch.table.fill(core, v)?;
                let (ia, _) = ch.table.minimize(&ch.z, 0);
                Ok((core.a[ia], 0.0))
            })
        }
    }
}

pub(crate) fn check_feedback_grid(sol: &BsdeSolution, grid: &TimeGrid, m: usize) -> Result<()> {
    if sol.grid() != grid {
        return Err(Error::invalid("feedback policy was fitted on a different time grid"));
    }
    if sol.z_dim() != m {
        return Err(Error::invalid("feedback policy has the wrong z dimension"));
    }
    Ok(())
}

/// One candidate of an optimality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub policy: String,
    pub drift_sim: PolicyValue,
    pub girsanov: PolicyValue,
    /// `J + 3·s.e. − Y₀` on the drift-sim route, s.e. combined with `Y₀`'s.
    pub lower_bound_margin: f64,
    pub route_gap: f64,
    pub route_tolerance: f64,
    pub lambda_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub y0: MeanSe,
    pub slack: f64,
    /// `|J(ũ) − Y₀|`
    pub feedback_gap: f64,
    pub feedback_tolerance: f64,
    pub feedback_pass: bool,
    pub rows: Vec<CandidateRow>,
    pub lower_bound_pass: bool,
    pub routes_agree: bool,
    pub lambda_ok: bool,
    pub pass: bool,
}

/// Constant policies drawn uniformly from the action grid.
pub fn random_constant_actions(actions: &[f64], count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| actions[rng.random_range(0..actions.len())]).collect()
}

/// Row for a candidate evaluated along both routes on the same noise.
pub(crate) fn candidate_row(policy: String, drift_sim: PolicyValue, girsanov: PolicyValue, y0: MeanSe) -> CandidateRow {
    let se = (drift_sim.j.se.powi(2) + y0.se.powi(2)).sqrt();
    let lower_bound_margin = drift_sim.j.mean + 3.0 * se - y0.mean;
    let route_gap = (drift_sim.j.mean - girsanov.j.mean).abs();
    let route_tolerance = 3.0 * (drift_sim.j.se.powi(2) + girsanov.j.se.powi(2)).sqrt();
    let lambda_ok = girsanov.lambda_mean.is_some_and(|l| (l.mean - 1.0).abs() <= 3.0 * l.se);
    CandidateRow {
        policy,
        pass: lower_bound_margin >= 0.0 && route_gap <= route_tolerance && lambda_ok,
        drift_sim,
        girsanov,
        lower_bound_margin,
        route_gap,
        route_tolerance,
        lambda_ok,
    }
}

/// Verifies the optimality of the feedback policy against `candidates`
/// (the feedback rule is always evaluated first).
pub fn verify_optimality(
    problem: &ControlProblem,
    value: &ValueSolution,
    candidates: &[Policy<'_>],
    n_paths: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    let grid = value.solution().grid().clone();
    let y0 = value.y0();
    let slack = 3.0 * (grid.max_dt() + problem.grid_spacing());
    let mut policies = vec![value.feedback()];
    policies.extend(candidates.iter().filter(|p| !matches!(p, Policy::Feedback(_))).copied());
    let mut rows = Vec::new();
    for p in &policies {
        let ds = evaluate_policy(problem, p, &grid, n_paths, seed, Route::DriftSim)?;
        let gs = evaluate_policy(problem, p, &grid, n_paths, seed, Route::Girsanov)?;
        rows.push(candidate_row(p.describe(), ds, gs, y0));
    }
    Ok(finish_report(y0, slack, rows))
}

pub(crate) fn finish_report(y0: MeanSe, slack: f64, rows: Vec<CandidateRow>) -> OptimalityReport {
    let fb = &rows[0].drift_sim.j;
    let feedback_gap = (fb.mean - y0.mean).abs();
    let feedback_tolerance = 3.0 * (fb.se.powi(2) + y0.se.powi(2)).sqrt() + slack;
    let feedback_pass = feedback_gap <= feedback_tolerance;
    let lower_bound_pass = rows.iter().all(|r| r.lower_bound_margin >= 0.0);
    let routes_agree = rows.iter().all(|r| r.route_gap <= r.route_tolerance);
    let lambda_ok = rows.iter().all(|r| r.lambda_ok);
    OptimalityReport {
        y0,
        slack,
        feedback_gap,
        feedback_tolerance,
        feedback_pass,
        pass: feedback_pass && lower_bound_pass && routes_agree && lambda_ok,
        rows,
        lower_bound_pass,
        routes_agree,
        lambda_ok,
    }
}

/// `n` equally spaced points on `[lo, hi]` (endpoints exact).
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let i = i as f64;
            (lo * (m - i) + hi * i) / m
        })
        .collect()
}
