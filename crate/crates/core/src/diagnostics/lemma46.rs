//! Random check of the inequality
//! `A|y||z| − ½|z|² + ((2−β)/2)|y|^{−2}|yz|² ≤ (1/(β−1))A²|y|² − ((β−1)/4)|z|²`
//! for `y ∈ R^r`, `z ∈ R^{r×d}` and `yz = yᵀz ∈ R^d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const REL_SLACK: f64 = 1e-12;
const MIN_ABS_Y: f64 = 1e-6;
const BLOCK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma46Report {
    pub beta: f64,
    pub samples: usize,
    pub range: f64,
    pub seed: u64,
    pub scalar_samples: usize,
    pub matrix_samples: usize,
    pub violations: usize,
    /// Largest `(lhs − rhs) / (|lhs| + |rhs|)` seen.
    pub worst_relative_excess: f64,
    pub pass: bool,
}

/// Both sides of the inequality; `z` is `r × d` row-major with `r = y.len()`.
pub fn lemma46_sides(beta: f64, a: f64, y: &[f64], z: &[f64], d: usize) -> (f64, f64) {
    let ny2 = linalg::dot(y, y);
    let nz2 = linalg::dot(z, z);
    let mut yz2 = 0.0;
    for j in 0..d {
        let c: f64 = y.iter().enumerate().map(|(i, yi)| yi * z[i * d + j]).sum();
        yz2 += c * c;
    }
    let lhs = a * ny2.sqrt() * nz2.sqrt() - 0.5 * nz2 + 0.5 * (2.0 - beta) * yz2 / ny2;
    let rhs = a * a * ny2 / (beta - 1.0) - 0.25 * (beta - 1.0) * nz2;
    (lhs, rhs)
}

/// Draws `samples` triples `(A, y, z)` uniformly in `[−range, range]`
/// (`A > 0`, `|y| ≥ 1e-6`). Half are scalar; the rest use `d = 2` with
/// `r ∈ {1, 3}`. Deterministic in `seed`.
pub fn check_lemma46(beta: f64, samples: usize, range: f64, seed: u64) -> Result<Lemma46Report> {
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(Error::invalid(format!("beta must lie in (1, 2], got {beta}")));
    }
    if !(range > MIN_ABS_Y) {
        return Err(Error::invalid("range must exceed the |y| floor"));
    }
    let blocks = samples.div_ceil(BLOCK);
    let parts: Vec<(usize, usize, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut viol = 0;
            let mut matrix = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut y = [0.0f64; 3];
            let mut z = [0.0f64; 6];
            for i in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                let (r, d) = match i % 4 {
                    0 | 1 => (1, 1),
                    2 => (1, 2),
                    _ => (3, 2),
                };
                if r * d > 1 {
                    matrix += 1;
                }
                let a = loop {
                    let a = rng.random_range(0.0..=range);
                    if a > 0.0 {
                        break a;
                    }
                };
                loop {
                    for v in y[..r].iter_mut() {
                        *v = rng.random_range(-range..=range);
                    }
                    if linalg::norm(&y[..r]) >= MIN_ABS_Y {
                        break;
                    }
                }
                for v in z[..r * d].iter_mut() {
                    *v = rng.random_range(-range..=range);
                }
                let (lhs, rhs) = lemma46_sides(beta, a, &y[..r], &z[..r * d], d);
                let scale = lhs.abs() + rhs.abs();
                let excess = lhs - rhs;
                if excess > REL_SLACK * scale {
                    viol += 1;
                }
                if scale > 0.0 {
                    worst = worst.max(excess / scale);
                }
            }
            (viol, matrix, worst)
        })
        .collect();
    let violations = parts.iter().map(|p| p.0).sum();
    let matrix_samples = parts.iter().map(|p| p.1).sum();
    let worst = parts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(Lemma46Report {
        beta,
        samples,
        range,
        seed,
        scalar_samples: samples - matrix_samples,
        matrix_samples,
        violations,
        worst_relative_excess: worst,
        pass: violations == 0,
    })
}
