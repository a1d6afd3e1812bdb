//! Order-stable reductions.
//!
//! Every Monte Carlo average in the crate goes through these helpers so that
//! results only depend on the order of the input slice, never on how rayon
//! scheduled the work that produced it.

use rayon::prelude::*;

/// Fixed chunk length for parallel accumulations. Chunk boundaries never
/// depend on the worker count.
pub const CHUNK: usize = 2048;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// `mean ± se`, four decimals unless a precision is given.
impl std::fmt::Display for MeanSe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(4);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.se)
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return MeanSe { mean: m, se: 0.0 };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    MeanSe {
        mean: m,
        se: (var / n as f64).sqrt(),
    }
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&dev) / (n - 1) as f64).sqrt()
}

/// Parallel map over `0..n` collected in index order.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Relative change between two estimates, 0 when both vanish.
pub fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `true` when each term is at most its predecessor plus `k` standard errors
/// (combined in quadrature) plus an absolute floor.
pub fn is_decreasing(values: &[MeanSe], k: f64, floor: f64) -> bool {
    values.windows(2).all(|w| {
        let slack = k * (w[0].se * w[0].se + w[1].se * w[1].se).sqrt();
        w[1].mean <= w[0].mean + slack + floor
    })
}
