//! Backward least-squares Monte Carlo for `Y_t = ξ + ∫_t^T φ(s, Y_s, Z_s) ds − ∫_t^T Z_s dB_s`.
//!
//! At node `k`:
//!
//! * `E_k[Y_{k+1}]` is a regression on the basis at `t_k`;
//! * `Z_k = E_k[(Y_{k+1} − E_k[Y_{k+1}]) ΔB_k] / Δt_k`;
//! * `Y_k = E_k[Y_{k+1}] + φ(t_k, Y_k, Z_k) Δt_k`, solved by Picard iteration.
//!
//! Log-growth drivers go through [`solve_loggrowth`], which solves the
//! mollified/truncated approximations on shared paths and tabulates their
//! Cauchy gaps.

mod io;
mod regression;

pub use io::{read_solution_binary, write_solution_binary, write_solution_csv, SOLUTION_MAGIC};
pub use regression::{NodeFit, RegressionBasis};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{mollify_truncate, DriverSpec, Generator, PathScalarFn, MAX_Z_DIM};
use crate::error::{Error, Result};
use crate::paths::{ForwardPathBatch, PathView, TimeGrid};
use crate::stats::{self, MeanSe, CHUNK};
use regression::{design, FeatureMap, Regression};

/// Terminal condition `ξ(ω)` as a functional of the whole path, with the
/// moment constant `C` used by the terminal-moment check.
#[derive(Clone)]
pub struct TerminalCondition {
    name: String,
    func: PathScalarFn,
    moment_c: f64,
}

impl std::fmt::Debug for TerminalCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TerminalCondition")
            .field("name", &self.name)
            .field("moment_c", &self.moment_c)
            .finish()
    }
}

impl TerminalCondition {
    pub fn new(name: impl Into<String>, func: PathScalarFn) -> Self {
        Self {
            name: name.into(),
            func,
            moment_c: 1.0,
        }
    }

    /// `ξ = scale · x_T^1`.
    pub fn x_terminal(scale: f64) -> Self {
        Self::new(format!("{scale}*x_T"), Arc::new(move |v: &PathView<'_>| scale * v.current()[0]))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), Arc::new(move |_: &PathView<'_>| c))
    }

    pub fn with_moment_constant(mut self, c: f64) -> Self {
        self.moment_c = c;
        self
    }

    /// `ξ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let f = self.func.clone();
        Self {
            name: format!("{}+{c}", self.name),
            func: Arc::new(move |v: &PathView<'_>| f(v) + c),
            moment_c: self.moment_c,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn moment_constant(&self) -> f64 {
        self.moment_c
    }

    pub fn eval(&self, view: &PathView<'_>) -> f64 {
        (self.func)(view)
    }

    pub fn func(&self) -> &PathScalarFn {
        &self.func
    }

    /// `ξ` on every path, or the first path where it is not finite.
    pub fn evaluate(&self, paths: &ForwardPathBatch) -> Result<Vec<f64>> {
        let v: Vec<f64> = stats::par_map(paths.n_paths(), |i| self.eval(&paths.terminal_view(i)));
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure {
                path: i,
                message: format!("terminal condition `{}` is not finite", self.name),
            });
        }
        Ok(v)
    }
}

/// Stopping rule for the per-node fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub scheme: String,
    pub driver: String,
    pub terminal: String,
    pub approx_index: Option<usize>,
    pub basis: String,
    pub n_paths: usize,
    pub seed: Option<u64>,
    pub lipschitz: Option<f64>,
    /// Largest Picard iteration count at each node `0..n_steps`.
    pub picard_iters: Vec<usize>,
    /// `Z` at the last node repeats `Z` at the previous node.
    pub z_last_copied: bool,
}

/// Regressions kept for evaluating feedback on fresh paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFits {
    pub continuation: NodeFit,
    pub z: NodeFit,
}

/// Grid values of `(Y, Z)` on every path.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    grid: TimeGrid,
    n_paths: usize,
    z_dim: usize,
    state_dim: usize,
    basis: RegressionBasis,
    /// `[node][path]`
    y: Vec<f64>,
    /// `[node][path][component]`
    z: Vec<f64>,
    /// Generator value used in the last Picard step, `[node < n_steps][path]`.
    phi: Vec<f64>,
    /// RMS of `Y_{k+1} − E_k[Y_{k+1}]` per node (0 at the last node).
    residuals: Vec<f64>,
    fits: Vec<NodeFits>,
    /// Per node, max over paths of `|ΔY|` at each Picard iteration.
    picard_increments: Vec<Vec<f64>>,
    meta: SolverMeta,
}

impl BsdeSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn basis(&self) -> &RegressionBasis {
        &self.basis
    }

    pub fn meta(&self) -> &SolverMeta {
        &self.meta
    }

    pub fn y(&self, node: usize, path: usize) -> f64 {
        self.y[node * self.n_paths + path]
    }

    /// `Y` at one node for all paths.
    pub fn y_node(&self, node: usize) -> &[f64] {
        &self.y[node * self.n_paths..(node + 1) * self.n_paths]
    }

    pub fn z(&self, node: usize, path: usize) -> &[f64] {
        let base = (node * self.n_paths + path) * self.z_dim;
        &self.z[base..base + self.z_dim]
    }

    pub fn phi(&self, node: usize, path: usize) -> f64 {
        self.phi[node * self.n_paths + path]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn fits(&self) -> &[NodeFits] {
        &self.fits
    }

    pub fn gram_conditions(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.continuation.condition).collect()
    }

    pub fn picard_increments(&self) -> &[Vec<f64>] {
        &self.picard_increments
    }

    /// `Y_0` with the standard error of `ξ + Σ_k φ_k Δt_k`, whose sample mean
    /// it equals because every regression preserves means.
    pub fn y0(&self) -> MeanSe {
        let nn = self.grid.n_steps();
        let g: Vec<f64> = stats::par_map(self.n_paths, |i| {
            let mut s = self.y(nn, i);
            for k in 0..nn {
                s += self.phi(k, i) * self.grid.dt(k);
            }
            s
        });
        MeanSe {
            mean: stats::mean(self.y_node(0)),
            se: stats::mean_se(&g).se,
        }
    }

    /// Mean of `Z` at a node, per component.
    pub fn z_mean(&self, node: usize) -> Vec<f64> {
        (0..self.z_dim)
            .map(|j| {
                let col: Vec<f64> = (0..self.n_paths).map(|i| self.z(node, i)[j]).collect();
                stats::mean(&col)
            })
            .collect()
    }

    /// Mean of `Z` over paths and nodes `0..n_steps`, component 1.
    pub fn z_mean_overall(&self) -> f64 {
        let nn = self.grid.n_steps();
        let per: Vec<f64> = (0..nn).map(|k| self.z_mean(k)[0]).collect();
        stats::mean(&per)
    }

    /// `∫|Z|² ds` per path by the left-point rule.
    pub fn z_energy_per_path(&self) -> Vec<f64> {
        stats::par_map(self.n_paths, |i| {
            (0..self.grid.n_steps())
                .map(|k| self.z(k, i).iter().map(|v| v * v).sum::<f64>() * self.grid.dt(k))
                .sum()
        })
    }

    /// `max_k |Y_k|` per path.
    pub fn sup_abs_y_per_path(&self) -> Vec<f64> {
        stats::par_map(self.n_paths, |i| {
            (0..self.grid.n_nodes()).map(|k| self.y(k, i).abs()).fold(0.0, f64::max)
        })
    }

    /// Evaluator for the stored regressions on other paths.
    pub fn predictor(&self) -> Predictor<'_> {
        let map = FeatureMap::new(&self.basis, self.state_dim);
        let n = map.len();
        Predictor {
            sol: self,
            map,
            raw: vec![0.0; n],
            vars: Vec::new(),
        }
    }
}

/// Applies the per-node fits of a solution to arbitrary path views.
pub struct Predictor<'a> {
    sol: &'a BsdeSolution,
    map: FeatureMap,
    raw: Vec<f64>,
    vars: Vec<f64>,
}

impl Predictor<'_> {
    /// `Z_k` at `view` (node `k` of the view must be `< n_steps`).
    pub fn z(&mut self, node: usize, view: &PathView<'_>, out: &mut [f64]) {
        self.map.eval(view, &mut self.vars, &mut self.raw);
        self.sol.fits[node].z.predict(&self.raw, out);
    }

    /// `E_k[Y_{k+1}]` at `view`.
    pub fn continuation(&mut self, node: usize, view: &PathView<'_>) -> f64 {
        self.map.eval(view, &mut self.vars, &mut self.raw);
        let mut out = [0.0];
        self.sol.fits[node].continuation.predict(&self.raw, &mut out);
        out[0]
    }
}

/// Solves with a globally Lipschitz generator (a registered Lipschitz driver
/// or an [`crate::driver::ApproxDriver`]).
pub fn solve_lipschitz(
    driver: &dyn Generator,
    xi: &TerminalCondition,
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    picard: PicardOptions,
) -> Result<BsdeSolution> {
    match driver.lipschitz() {
        Some(l) if l.is_finite() => {}
        _ => {
            return Err(Error::invalid(format!(
                "driver `{}` has no finite Lipschitz constant; use solve_loggrowth",
                driver.name()
            )))
        }
    }
    solve_backward(driver, xi, paths, basis, picard, None)
}

struct PicardChunk {
    increments: Vec<f64>,
    iters: usize,
    failure: Option<(usize, f64)>,
}

fn solve_backward(
    driver: &dyn Generator,
    xi: &TerminalCondition,
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    picard: PicardOptions,
    approx_index: Option<usize>,
) -> Result<BsdeSolution> {
    basis.validate()?;
    if picard.max_iters == 0 || !(picard.tol > 0.0) {
        return Err(Error::invalid("Picard options need max_iters >= 1 and tol > 0"));
    }
    let noise = paths
        .noise()
        .ok_or_else(|| Error::invalid("path batch carries no Brownian increments"))?;
    let d = driver.z_dim();
    if d != noise.dim() || d > MAX_Z_DIM {
        return Err(Error::invalid(format!(
            "driver z dimension {d} does not match Brownian dimension {}",
            noise.dim()
        )));
    }
    let grid = paths.grid().clone();
    let ns = grid.n_steps();
    let n = paths.n_paths();
    let map = FeatureMap::new(basis, paths.dim());
    let p = map.len();

    let mut y = vec![0.0; (ns + 1) * n];
    let mut z = vec![0.0; (ns + 1) * n * d];
    let mut phi = vec![0.0; ns * n];
    let mut residuals = vec![0.0; ns + 1];
    let mut fits = Vec::with_capacity(ns);
    let mut picard_increments = vec![Vec::new(); ns];
    let mut picard_iters = vec![0; ns];

    y[ns * n..].copy_from_slice(&xi.evaluate(paths)?);

    for k in (0..ns).rev() {
        let dt = grid.dt(k);
        let x = design(&map, paths, k);
        let reg = Regression::new(&x, p, n, basis.ridge, k)?;
        let (y_cur, y_next) = y.split_at_mut((k + 1) * n);
        let y_next = &y_next[..n];
        let y_cur = &mut y_cur[k * n..];

        let fit_c = reg.fit(&x, y_next, 1);
        let cont: Vec<f64> = stats::par_map(n, |i| {
            let mut o = [0.0];
            fit_c.predict_row(&x, p, i, &mut o);
            o[0]
        });
        let sq: Vec<f64> = y_next.iter().zip(&cont).map(|(a, b)| (a - b) * (a - b)).collect();
        residuals[k] = stats::mean(&sq).sqrt();

        let mut targets = vec![0.0; n * d];
        targets.par_chunks_mut(d).enumerate().for_each(|(i, t)| {
            let db = noise.increment(i, k);
            let r = y_next[i] - cont[i];
            for j in 0..d {
                t[j] = r * db[j] / dt;
            }
        });
        let fit_z = reg.fit(&x, &targets, d);
        let z_k = &mut z[k * n * d..(k + 1) * n * d];
        z_k.par_chunks_mut(d).enumerate().for_each(|(i, out)| fit_z.predict_row(&x, p, i, out));
        let z_k = &z[k * n * d..(k + 1) * n * d];

        let phi_k = &mut phi[k * n..(k + 1) * n];
        let chunks: Vec<PicardChunk> = y_cur
            .par_chunks_mut(CHUNK)
            .zip(phi_k.par_chunks_mut(CHUNK))
            .enumerate()
            .map(|(c, (ys, fs))| {
                let mut out = PicardChunk {
                    increments: Vec::new(),
                    iters: 0,
                    failure: None,
                };
                for (j, (yo, fo)) in ys.iter_mut().zip(fs.iter_mut()).enumerate() {
                    let i = c * CHUNK + j;
                    let view = paths.view(i, k);
                    let zi = &z_k[i * d..(i + 1) * d];
                    let e = cont[i];
                    let mut yc = e;
                    let mut converged = false;
                    let mut last = 0.0;
                    for it in 1..=picard.max_iters {
                        let f = driver.eval(&view, yc, zi);
                        let yn = e + f * dt;
                        last = (yn - yc).abs();
                        if out.increments.len() < it {
                            out.increments.push(0.0);
                        }
                        out.increments[it - 1] = out.increments[it - 1].max(last);
                        yc = yn;
                        *fo = f;
                        out.iters = out.iters.max(it);
                        if !driver.y_dependent() || last < picard.tol {
                            converged = true;
                            break;
                        }
                    }
                    if !converged && out.failure.is_none() {
                        out.failure = Some((i, last));
                    }
                    *yo = yc;
                }
                out
            })
            .collect();
        let mut inc: Vec<f64> = Vec::new();
        for ch in &chunks {
            if let Some((_, last)) = ch.failure {
                return Err(Error::SolverFailure { node: k, increment: last });
            }
            if inc.len() < ch.increments.len() {
                inc.resize(ch.increments.len(), 0.0);
            }
            for (a, b) in inc.iter_mut().zip(&ch.increments) {
                *a = a.max(*b);
            }
            picard_iters[k] = picard_iters[k].max(ch.iters);
        }
        picard_increments[k] = inc;
        if let Some(i) = y_cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                path: i,
                message: format!("Y is not finite at node {k}"),
            });
        }
        fits.push(NodeFits {
            continuation: fit_c,
            z: fit_z,
        });
    }
    fits.reverse();
    if ns > 0 {
        let (head, tail) = z.split_at_mut(ns * n * d);
        tail.copy_from_slice(&head[(ns - 1) * n * d..]);
    }

    Ok(BsdeSolution {
        grid,
        n_paths: n,
        z_dim: d,
        state_dim: paths.dim(),
        basis: basis.clone(),
        y,
        z,
        phi,
        residuals,
        fits,
        picard_increments,
        meta: SolverMeta {
            scheme: if approx_index.is_some() {
                "lsmc-picard/mollified".into()
            } else {
                "lsmc-picard".into()
            },
            driver: driver.name().to_string(),
            terminal: xi.name().to_string(),
            approx_index,
            basis: basis.describe(),
            n_paths: n,
            seed: Some(noise.seed()),
            lipschitz: driver.lipschitz(),
            picard_iters,
            z_last_copied: true,
        },
    })
}

/// Options for [`solve_loggrowth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggrowthOptions {
    /// Exponent of the `Y` gap, in `(1, 2)`.
    pub beta: f64,
    /// The run is declared converged when the last `Y` gap is below this.
    pub tol: f64,
    /// Mollifier schedule exponent; the driver's `α` when `None`.
    pub alpha: Option<f64>,
}

impl Default for LoggrowthOptions {
    fn default() -> Self {
        Self {
            beta: 1.5,
            tol: 1e-2,
            alpha: None,
        }
    }
}

/// Gap between two solutions on the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionGap {
    /// `E max_k |Y^a_k − Y^b_k|^{p_y}`
    pub y: MeanSe,
    /// `E Σ_k |Z^a_k − Z^b_k|^{p_z} Δt_k`
    pub z: MeanSe,
}

/// Gap table entry between successive approximation indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyGap {
    pub n: usize,
    pub n_next: usize,
    pub y_gap: MeanSe,
    pub z_gap: MeanSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxInfo {
    pub n: usize,
    pub q: u64,
    pub width: f64,
    pub lipschitz: f64,
}

/// Non-fatal report that the gaps never decreased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFailure {
    pub message: String,
    pub y_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggrowthRun {
    pub schedule: Vec<usize>,
    pub approximations: Vec<ApproxInfo>,
    pub solutions: Vec<BsdeSolution>,
    pub cauchy: Vec<CauchyGap>,
    pub beta: f64,
    pub converged: bool,
    pub failure: Option<ConvergenceFailure>,
}

impl LoggrowthRun {
    /// The solution at the largest index.
    pub fn solution(&self) -> &BsdeSolution {
        self.solutions.last().expect("schedule has at least three entries")
    }
}

/// `E max_k |ΔY_k|^{y_power}` and `E Σ_k |ΔZ_k|^{z_power} Δt_k` (left-point).
pub fn solution_gaps(a: &BsdeSolution, b: &BsdeSolution, y_power: f64, z_power: f64) -> Result<SolutionGap> {
    if a.grid != b.grid || a.n_paths != b.n_paths || a.z_dim != b.z_dim {
        return Err(Error::invalid("solutions live on different grids or path batches"));
    }
    let ns = a.grid.n_steps();
    let ys: Vec<f64> = stats::par_map(a.n_paths, |i| {
        (0..=ns)
            .map(|k| (a.y(k, i) - b.y(k, i)).abs())
            .fold(0.0, f64::max)
            .powf(y_power)
    });
    let zs: Vec<f64> = stats::par_map(a.n_paths, |i| {
        (0..ns)
            .map(|k| {
                let dz: f64 = a.z(k, i).iter().zip(b.z(k, i)).map(|(u, v)| (u - v) * (u - v)).sum();
                dz.sqrt().powf(z_power) * a.grid.dt(k)
            })
            .sum()
    });
    Ok(SolutionGap {
        y: stats::mean_se(&ys),
        z: stats::mean_se(&zs),
    })
}

/// Solves `φ_n` for each `n` of a strictly increasing schedule on shared
/// paths and tabulates successive gaps.
pub fn solve_loggrowth(
    driver: &DriverSpec,
    xi: &TerminalCondition,
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    schedule: &[usize],
    picard: PicardOptions,
    options: LoggrowthOptions,
) -> Result<LoggrowthRun> {
    if schedule.len() < 3 {
        return Err(Error::invalid("approximation schedule needs at least three entries"));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] == 0 {
        return Err(Error::invalid("approximation schedule must be positive and strictly increasing"));
    }
    if !(options.beta > 1.0 && options.beta < 2.0) {
        return Err(Error::invalid(format!("beta must lie in (1, 2), got {}", options.beta)));
    }
    let alpha = options.alpha.unwrap_or(driver.alpha());
    let mut approximations = Vec::new();
    let mut solutions = Vec::new();
    for &n in schedule {
        let approx = mollify_truncate(driver, n, alpha)?;
        approximations.push(ApproxInfo {
            n,
            q: approx.q(),
            width: approx.width(),
            lipschitz: approx.lipschitz().unwrap_or(f64::NAN),
        });
        solutions.push(solve_backward(&approx, xi, paths, basis, picard, Some(n))?);
    }
    let mut cauchy = Vec::new();
    for (i, w) in solutions.windows(2).enumerate() {
        let g = solution_gaps(&w[0], &w[1], options.beta, 1.0)?;
        cauchy.push(CauchyGap {
            n: schedule[i],
            n_next: schedule[i + 1],
            y_gap: g.y,
            z_gap: g.z,
        });
    }
    let y_gaps: Vec<f64> = cauchy.iter().map(|c| c.y_gap.mean).collect();
    let converged = y_gaps.last().is_some_and(|g| *g < options.tol);
    let never_decreasing = y_gaps.windows(2).all(|w| w[1] >= w[0]) && y_gaps.iter().any(|g| *g > 0.0);
    let failure = never_decreasing.then(|| ConvergenceFailure {
        message: format!(
            "Y gaps of `{}` never decreased along schedule {:?}",
            driver.name(),
            schedule
        ),
        y_gaps: y_gaps.clone(),
    });
    Ok(LoggrowthRun {
        schedule: schedule.to_vec(),
        approximations,
        solutions,
        cauchy,
        beta: options.beta,
        converged,
        failure,
    })
}

/// Monte Carlo estimates of the solution-space norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionNorms {
    /// `E max_k |Y_k|²`
    pub sup_y2: MeanSe,
    /// `E ∫|Z|² ds`
    pub z_energy: MeanSe,
    /// `E(max_k |Y_k|² + ∫|Z|² ds)`
    pub pair: MeanSe,
}

pub fn solution_norms(sol: &BsdeSolution) -> SolutionNorms {
    let sup: Vec<f64> = sol.sup_abs_y_per_path().iter().map(|v| v * v).collect();
    let energy = sol.z_energy_per_path();
    let pair: Vec<f64> = sup.iter().zip(&energy).map(|(a, b)| a + b).collect();
    SolutionNorms {
        sup_y2: stats::mean_se(&sup),
        z_energy: stats::mean_se(&energy),
        pair: stats::mean_se(&pair),
    }
}

/// `E|φ(s, Y_s, Z_s)|^ᾱ` per node and integrated over `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerm {
    pub alpha_bar: f64,
    pub per_node: Vec<MeanSe>,
    pub integrated: MeanSe,
}

/// `ᾱ = min(2, 2/α)`.
pub fn alpha_bar(alpha: f64) -> f64 {
    if alpha <= 1.0 {
        2.0
    } else {
        (2.0 / alpha).min(2.0)
    }
}

/// Evaluates `driver` along the solution (left-point rule in time).
pub fn evaluate_generator_term(
    sol: &BsdeSolution,
    paths: &ForwardPathBatch,
    driver: &dyn Generator,
    alpha: f64,
) -> Result<GeneratorTerm> {
    if paths.n_paths() != sol.n_paths || paths.grid() != &sol.grid {
        return Err(Error::invalid("paths do not match the solution"));
    }
    let ab = alpha_bar(alpha);
    let ns = sol.grid.n_steps();
    let values: Vec<Vec<f64>> = stats::par_map(sol.n_paths, |i| {
        (0..ns)
            .map(|k| driver.eval(&paths.view(i, k), sol.y(k, i), sol.z(k, i)).abs().powf(ab))
            .collect()
    });
    let per_node: Vec<MeanSe> = (0..ns)
        .map(|k| {
            let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
            stats::mean_se(&col)
        })
        .collect();
    let integ: Vec<f64> = values
        .iter()
        .map(|v| v.iter().enumerate().map(|(k, x)| x * sol.grid.dt(k)).sum())
        .collect();
    Ok(GeneratorTerm {
        alpha_bar: ab,
        per_node,
        integrated: stats::mean_se(&integ),
    })
}

#[cfg(test)]
mod tests;
