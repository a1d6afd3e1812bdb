//! Brownian noise and forward functional SDE paths.
//!
//! The forward state solves `x_t = x0 + ∫ b(s, x) ds + ∫ σ(s, x) dB_s` with
//! coefficients that may look at the whole past of the path. Everything is
//! stored on a fixed time grid, path-major, so that a path prefix is a
//! contiguous slice.
//!
//! Noise is drawn from counter-based ChaCha substreams keyed by
//! `(seed, path index)`, which makes every batch independent of the order in
//! which paths are generated and of the number of worker threads.

pub(crate) mod io;

pub use io::{read_binary, read_csv, write_binary, write_csv, PATH_MAGIC};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Discretised time axis `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` steps of size `horizon / n_steps`.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        let dt = horizon / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        nodes[n_steps] = horizon;
        Ok(Self { nodes })
    }

    /// Grid from explicit node times.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a time grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::invalid("first grid node must be 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid nodes must be strictly increasing"));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn t(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Step size from node `k` to node `k + 1`.
    pub fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// Largest step size.
    pub fn max_dt(&self) -> f64 {
        (0..self.n_steps()).map(|k| self.dt(k)).fold(0.0, f64::max)
    }
}

/// Free-function form of [`TimeGrid::uniform`].
pub fn make_time_grid(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, n_steps)
}

/// Brownian increments `ΔB_k = B_{t_{k+1}} - B_{t_k}` for a batch of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBatch {
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    seed: u64,
    /// `[path][step][component]`
    increments: Vec<f64>,
}

impl BrownianBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All increments of one path, step-major.
    pub fn path(&self, path: usize) -> &[f64] {
        let len = self.grid.n_steps() * self.dim;
        &self.increments[path * len..(path + 1) * len]
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.grid.n_steps() + step) * self.dim;
        &self.increments[base..base + self.dim]
    }

    /// `B_T` for one path.
    pub fn terminal(&self, path: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for step in self.path(path).chunks_exact(self.dim) {
            for (o, v) in out.iter_mut().zip(step) {
                *o += v;
            }
        }
        out
    }

    /// Sums consecutive groups of `factor` increments: the same Brownian
    /// paths seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.grid.n_steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(Error::invalid(format!("cannot coarsen {n} steps by {factor}")));
        }
        let coarse_nodes: Vec<f64> = self.grid.nodes.iter().step_by(factor).copied().collect();
        let grid = TimeGrid::from_nodes(coarse_nodes)?;
        let m = n / factor;
        let d = self.dim;
        let mut increments = vec![0.0; self.n_paths * m * d];
        increments
            .par_chunks_mut(m * d)
            .enumerate()
            .for_each(|(p, out)| {
                let fine = self.path(p);
                for (j, chunk) in fine.chunks_exact(factor * d).enumerate() {
                    for (i, v) in chunk.iter().enumerate() {
                        out[j * d + i % d] += v;
                    }
                }
            });
        Ok(Self {
            grid,
            dim: d,
            n_paths: self.n_paths,
            seed: self.seed,
            increments,
        })
    }

    /// The first `n` paths of the batch.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.n_paths);
        let len = self.grid.n_steps() * self.dim;
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            n_paths: n,
            seed: self.seed,
            increments: self.increments[..n * len].to_vec(),
        }
    }
}

/// Draws i.i.d. `N(0, Δt_k)` increments. Path `p` uses the ChaCha8 stream
/// `p` under key `seed`.
pub fn sample_brownian(grid: &TimeGrid, dim: usize, n_paths: usize, seed: u64) -> Result<BrownianBatch> {
    if dim == 0 {
        return Err(Error::invalid("Brownian dimension must be at least 1"));
    }
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let n = grid.n_steps();
    let sqrt_dt: Vec<f64> = (0..n).map(|k| grid.dt(k).sqrt()).collect();
    let mut increments = vec![0.0; n_paths * n * dim];
    increments
        .par_chunks_mut(n * dim)
        .enumerate()
        .for_each(|(p, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            for k in 0..n {
                for i in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[k * dim + i] = z * sqrt_dt[k];
                }
            }
        });
    Ok(BrownianBatch {
        grid: grid.clone(),
        dim,
        n_paths,
        seed,
        increments,
    })
}

/// Read-only view of one path up to and including node `node`.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    states: &'a [f64],
    sup: &'a [f64],
    dim: usize,
    node: usize,
    t: f64,
}

impl<'a> PathView<'a> {
    /// `states` holds nodes `0..=node` (`dim` values each); `sup` the running
    /// sup at the same nodes.
    pub fn new(states: &'a [f64], sup: &'a [f64], dim: usize, node: usize, t: f64) -> Self {
        debug_assert!(states.len() >= (node + 1) * dim);
        debug_assert!(sup.len() > node);
        Self {
            states: &states[..(node + 1) * dim],
            sup: &sup[..=node],
            dim,
            node,
            t,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// State at the current node.
    pub fn current(&self) -> &'a [f64] {
        &self.states[self.node * self.dim..(self.node + 1) * self.dim]
    }

    /// State at an earlier node `j <= node`.
    pub fn at(&self, j: usize) -> &'a [f64] {
        assert!(j <= self.node, "path view does not see the future");
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// `‖w‖_t = max_{t_j <= t} |w_{t_j}|`.
    pub fn running_sup(&self) -> f64 {
        self.sup[self.node]
    }
}

/// Coefficient functional `(t, path prefix) -> values`, written into `out`.
pub type PathFn = Arc<dyn Fn(&PathView<'_>, &mut [f64]) + Send + Sync>;

/// Forward functional SDE `dx = b(t, x) dt + σ(t, x) dB` with square σ.
#[derive(Clone)]
pub struct ForwardModel {
    dim: usize,
    x0: Vec<f64>,
    sigma: PathFn,
    drift: Option<PathFn>,
    /// Declared Lipschitz / linear-growth constant of σ.
    pub lipschitz: f64,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("dim", &self.dim)
            .field("x0", &self.x0)
            .field("has_drift", &self.drift.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ForwardModel {
    /// `sigma` writes the row-major `m×m` matrix σ(t, prefix).
    pub fn new(x0: Vec<f64>, sigma: PathFn) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        Ok(Self {
            dim: x0.len(),
            x0,
            sigma,
            drift: None,
            lipschitz: 1.0,
        })
    }

    /// `σ ≡ s·I` in dimension `x0.len()`.
    pub fn constant(x0: Vec<f64>, s: f64) -> Result<Self> {
        let m = x0.len();
        let sigma: PathFn = Arc::new(move |_, out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..m {
                out[i * m + i] = s;
            }
        });
        let mut model = Self::new(x0, sigma)?;
        model.lipschitz = s.abs();
        Ok(model)
    }

    pub fn with_drift(mut self, drift: PathFn) -> Self {
        self.drift = Some(drift);
        self
    }

    /// Same σ and x0 with the drift removed.
    pub fn base(&self) -> Self {
        Self {
            drift: None,
            ..self.clone()
        }
    }

    pub fn with_lipschitz(mut self, c: f64) -> Self {
        self.lipschitz = c;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn sigma(&self, view: &PathView<'_>, out: &mut [f64]) {
        (self.sigma)(view, out)
    }

    pub fn drift(&self) -> Option<&PathFn> {
        self.drift.as_ref()
    }
}

/// Simulated forward paths on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPathBatch {
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    /// `[path][node][component]`
    states: Vec<f64>,
    /// `[path][node]`
    running_sup: Vec<f64>,
    /// Driving increments, kept when the batch was simulated here.
    noise: Option<Arc<BrownianBatch>>,
}

impl ForwardPathBatch {
    pub(crate) fn from_parts(
        grid: TimeGrid,
        dim: usize,
        n_paths: usize,
        states: Vec<f64>,
        running_sup: Vec<f64>,
    ) -> Result<Self> {
        let nn = grid.n_nodes();
        if states.len() != n_paths * nn * dim || running_sup.len() != n_paths * nn {
            return Err(Error::Format("path batch buffer sizes do not match its shape".into()));
        }
        Ok(Self {
            grid,
            dim,
            n_paths,
            states,
            running_sup,
            noise: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Brownian increments that generated the batch, if known.
    pub fn noise(&self) -> Option<&BrownianBatch> {
        self.noise.as_deref()
    }

    /// Attaches driving increments to a batch read from disk.
    pub fn with_noise(mut self, noise: BrownianBatch) -> Result<Self> {
        if noise.n_paths != self.n_paths || noise.dim != self.dim || noise.grid != self.grid {
            return Err(Error::invalid("noise batch does not match the path batch"));
        }
        self.noise = Some(Arc::new(noise));
        Ok(self)
    }

    /// Copy without the attached increments.
    pub fn without_noise(&self) -> Self {
        let mut out = self.clone();
        out.noise = None;
        out
    }

    pub fn x0(&self) -> &[f64] {
        &self.states[..self.dim]
    }

    /// All states of one path, node-major.
    pub fn path_states(&self, path: usize) -> &[f64] {
        let len = self.grid.n_nodes() * self.dim;
        &self.states[path * len..(path + 1) * len]
    }

    pub fn path_sup(&self, path: usize) -> &[f64] {
        let nn = self.grid.n_nodes();
        &self.running_sup[path * nn..(path + 1) * nn]
    }

    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let base = (path * self.grid.n_nodes() + node) * self.dim;
        &self.states[base..base + self.dim]
    }

    pub fn running_sup(&self, path: usize, node: usize) -> f64 {
        self.running_sup[path * self.grid.n_nodes() + node]
    }

    pub fn view(&self, path: usize, node: usize) -> PathView<'_> {
        PathView::new(
            self.path_states(path),
            self.path_sup(path),
            self.dim,
            node,
            self.grid.t(node),
        )
    }

    pub fn terminal_view(&self, path: usize) -> PathView<'_> {
        self.view(path, self.grid.n_steps())
    }

    /// The first `n` paths.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.n_paths);
        let nn = self.grid.n_nodes();
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            n_paths: n,
            states: self.states[..n * nn * self.dim].to_vec(),
            running_sup: self.running_sup[..n * nn].to_vec(),
            noise: self.noise.as_ref().map(|b| Arc::new(b.truncate(n))),
        }
    }
}

/// Euler–Maruyama with left-point coefficients:
/// `x_{k+1} = x_k + b(t_k, prefix) Δt + σ(t_k, prefix) ΔB_k`.
pub fn simulate_forward(model: &ForwardModel, noise: &BrownianBatch) -> Result<ForwardPathBatch> {
    let m = model.dim;
    if noise.dim != m {
        return Err(Error::invalid(format!(
            "state dimension {m} does not match Brownian dimension {}",
            noise.dim
        )));
    }
    let grid = noise.grid.clone();
    let nn = grid.n_nodes();
    let n_paths = noise.n_paths;
    let mut states = vec![0.0; n_paths * nn * m];
    let mut running_sup = vec![0.0; n_paths * nn];

    let failures: Vec<Option<String>> = states
        .par_chunks_mut(nn * m)
        .zip(running_sup.par_chunks_mut(nn))
        .enumerate()
        .map(|(p, (xs, sup))| simulate_one(model, &grid, noise.path(p), xs, sup).err())
        .collect();

    if let Some((path, msg)) = failures
        .into_iter()
        .enumerate()
        .find_map(|(p, e)| e.map(|m| (p, m)))
    {
        return Err(Error::NumericalFailure { path, message: msg });
    }
    let mut batch = ForwardPathBatch::from_parts(grid, m, n_paths, states, running_sup)?;
    batch.noise = Some(Arc::new(noise.clone()));
    Ok(batch)
}

fn simulate_one(
    model: &ForwardModel,
    grid: &TimeGrid,
    dbs: &[f64],
    xs: &mut [f64],
    sup: &mut [f64],
) -> std::result::Result<(), String> {
    let m = model.dim;
    let mut sigma = vec![0.0; m * m];
    let mut drift = vec![0.0; m];
    xs[..m].copy_from_slice(&model.x0);
    sup[0] = linalg::norm(&model.x0);
    for k in 0..grid.n_steps() {
        let dt = grid.dt(k);
        let db = &dbs[k * m..(k + 1) * m];
        {
            let view = PathView::new(xs, sup, m, k, grid.t(k));
            model.sigma(&view, &mut sigma);
            if let Some(b) = &model.drift {
                b(&view, &mut drift);
            }
        }
        let (head, tail) = xs.split_at_mut((k + 1) * m);
        let cur = &head[k * m..];
        let next = &mut tail[..m];
        for i in 0..m {
            let mut v = cur[i];
            if model.drift.is_some() {
                v += drift[i] * dt;
            }
            for j in 0..m {
                v += sigma[i * m + j] * db[j];
            }
            next[i] = v;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite state at node {}", k + 1));
        }
        sup[k + 1] = sup[k].max(linalg::norm(next));
    }
    Ok(())
}

/// Worst conditioning of σ over sampled (path, node) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    pub samples: usize,
    pub worst_condition: f64,
    /// Largest Frobenius norm of σ⁻¹ seen.
    pub worst_inverse_norm: f64,
    pub all_invertible: bool,
}

/// Spot-checks that σ is invertible on simulated states. Sampling is on a
/// deterministic stride over paths and nodes.
pub fn check_invertibility(model: &ForwardModel, paths: &ForwardPathBatch, samples: usize) -> InvertibilityReport {
    let m = model.dim;
    let nn = paths.grid.n_nodes();
    let total = paths.n_paths * nn;
    let samples = samples.clamp(1, total);
    let stride = (total / samples).max(1);
    let mut worst_condition: f64 = 1.0;
    let mut worst_inverse_norm: f64 = 0.0;
    let mut all_invertible = true;
    let mut sigma = vec![0.0; m * m];
    let mut inv = vec![0.0; m * m];
    let mut count = 0;
    for idx in (0..total).step_by(stride).take(samples) {
        let (p, k) = (idx / nn, idx % nn);
        model.sigma(&paths.view(p, k), &mut sigma);
        count += 1;
        match linalg::invert(&sigma, m, &mut inv) {
            Some(c) => {
                worst_condition = worst_condition.max(c);
                worst_inverse_norm = worst_inverse_norm.max(linalg::frobenius(&inv));
            }
            None => {
                all_invertible = false;
                worst_condition = f64::INFINITY;
            }
        }
    }
    InvertibilityReport {
        samples: count,
        worst_condition,
        worst_inverse_norm,
        all_invertible,
    }
}

/// Exponent `ln(Ct + 2) + 2` of the terminal-moment condition.
pub fn moment_exponent(t: f64, c: f64) -> f64 {
    debug_assert!(c >= 0.0);
    (c * t + 2.0).ln() + 2.0
}

/// `|x|^{ln(Ct + 2) + 2}`.
pub fn moment_functional(t: f64, x: f64, c: f64) -> f64 {
    x.abs().powf(moment_exponent(t, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn uniform_grid_nodes() {
        let g = make_time_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_time_grid(2.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, 2.0]);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(matches!(make_time_grid(1.0, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_time_grid(0.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_time_grid(-1.0, 3), Err(Error::InvalidArgument(_))));
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn step_sizes_sum_to_horizon() {
        let g = make_time_grid(3.7, 13).unwrap();
        let s: f64 = (0..g.n_steps()).map(|k| g.dt(k)).sum();
        assert!((s - 3.7).abs() < 1e-12);
    }

    #[test]
    fn brownian_terminal_moments() {
        let g = make_time_grid(1.0, 10).unwrap();
        let b = sample_brownian(&g, 1, 100_000, 11).unwrap();
        let bt: Vec<f64> = (0..b.n_paths()).map(|p| b.terminal(p)[0]).collect();
        let m = stats::mean(&bt);
        assert!(m.abs() < 3.0 / (1e5f64).sqrt(), "mean {m}");
        let var = stats::sample_sd(&bt).powi(2);
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn brownian_is_reproducible() {
        let g = make_time_grid(1.0, 5).unwrap();
        let a = sample_brownian(&g, 2, 100, 3).unwrap();
        let b = sample_brownian(&g, 2, 100, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(&g, 2, 100, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_do_not_depend_on_batch_size() {
        let g = make_time_grid(1.0, 5).unwrap();
        let small = sample_brownian(&g, 1, 10, 9).unwrap();
        let large = sample_brownian(&g, 1, 1000, 9).unwrap();
        assert_eq!(small.path(7), large.path(7));
        assert_eq!(large.truncate(10), small);
    }

    #[test]
    fn brownian_rejects_zero_shapes() {
        let g = make_time_grid(1.0, 5).unwrap();
        assert!(sample_brownian(&g, 0, 10, 1).is_err());
        assert!(sample_brownian(&g, 1, 0, 1).is_err());
    }

    #[test]
    fn coarsening_preserves_terminal_value() {
        let g = make_time_grid(1.0, 8).unwrap();
        let b = sample_brownian(&g, 2, 50, 5).unwrap();
        let c = b.coarsen(4).unwrap();
        assert_eq!(c.grid().nodes(), &[0.0, 0.5, 1.0]);
        for p in 0..50 {
            let (x, y) = (b.terminal(p), c.terminal(p));
            for i in 0..2 {
                assert!((x[i] - y[i]).abs() < 1e-12);
            }
        }
        assert!(b.coarsen(3).is_err());
    }

    #[test]
    fn identity_sigma_reproduces_brownian_motion() {
        let g = make_time_grid(1.0, 20).unwrap();
        let b = sample_brownian(&g, 1, 100_000, 1).unwrap();
        let model = ForwardModel::constant(vec![0.0], 1.0).unwrap();
        let x = simulate_forward(&model, &b).unwrap();
        let xt: Vec<f64> = (0..x.n_paths()).map(|p| x.state(p, 20)[0]).collect();
        let ms = stats::mean_se(&xt);
        assert!(ms.mean.abs() < 3.0 * ms.se);
        let var = stats::sample_sd(&xt).powi(2);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn constant_drift_shifts_mean() {
        let g = make_time_grid(1.0, 20).unwrap();
        let b = sample_brownian(&g, 1, 100_000, 2).unwrap();
        let model = ForwardModel::constant(vec![0.0], 1.0)
            .unwrap()
            .with_drift(Arc::new(|_, out: &mut [f64]| out[0] = -1.0));
        let x = simulate_forward(&model, &b).unwrap();
        let xt: Vec<f64> = (0..x.n_paths()).map(|p| x.state(p, 20)[0]).collect();
        let ms = stats::mean_se(&xt);
        assert!((ms.mean + 1.0).abs() < 3.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn running_sup_is_grid_max() {
        let g = make_time_grid(1.0, 30).unwrap();
        let b = sample_brownian(&g, 2, 200, 8).unwrap();
        let model = ForwardModel::constant(vec![0.3, -0.2], 1.0).unwrap();
        let x = simulate_forward(&model, &b).unwrap();
        for p in 0..200 {
            assert_eq!(x.state(p, 0), &[0.3, -0.2]);
            let mut best: f64 = 0.0;
            for k in 0..=30 {
                best = best.max(linalg::norm(x.state(p, k)));
                assert_eq!(x.running_sup(p, k), best);
            }
        }
    }

    #[test]
    fn overflow_is_reported_with_path_index() {
        let g = make_time_grid(1.0, 10).unwrap();
        let b = sample_brownian(&g, 1, 4, 8).unwrap();
        let sigma: PathFn = Arc::new(|v: &PathView<'_>, out: &mut [f64]| {
            out[0] = if v.current()[0].abs() > 0.0 { 1e308 } else { 1.0 };
        });
        let model = ForwardModel::new(vec![0.0], sigma)
            .unwrap()
            .with_drift(Arc::new(|v: &PathView<'_>, out: &mut [f64]| out[0] = 1e308 * v.current()[0].signum()));
        match simulate_forward(&model, &b) {
            Err(Error::NumericalFailure { path, .. }) => assert_eq!(path, 0),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = make_time_grid(1.0, 3).unwrap();
        let b = sample_brownian(&g, 2, 4, 8).unwrap();
        let model = ForwardModel::constant(vec![0.0], 1.0).unwrap();
        assert!(simulate_forward(&model, &b).is_err());
    }

    #[test]
    fn moment_functional_values() {
        assert_eq!(moment_functional(0.0, 1.0, 3.0), 1.0);
        assert_eq!(moment_functional(0.0, 0.0, 3.0), 0.0);
        // 2^{ln 2 + 2}
        let v = moment_functional(0.0, 2.0, 1.0);
        assert!((v - 6.46723).abs() < 1e-5, "{v}");
        assert!((moment_exponent(1.0, 1.0) - (3f64.ln() + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn invertibility_spot_check() {
        let g = make_time_grid(1.0, 4).unwrap();
        let b = sample_brownian(&g, 1, 10, 8).unwrap();
        let model = ForwardModel::constant(vec![0.0], 2.0).unwrap();
        let x = simulate_forward(&model, &b).unwrap();
        let r = check_invertibility(&model, &x, 20);
        assert!(r.all_invertible);
        assert!((r.worst_inverse_norm - 0.5).abs() < 1e-15);
    }
}
