//! Mollify-and-truncate approximations `φ_n` of a continuous generator.
//!
//! `φ_n(t, ω, y, z) = ψ_n(y, z) · ∫ φ(t, ω, (y, z) − u) ρ_{1/q(n)}(u) du`
//! with `ρ` the radial bump `exp(−1/(1−|u|²))` on the unit ball of
//! `R^{1+d}`, scaled to width `1/q(n)`, `q(n) = ⌈n + n^α⌉`, and `ψ_n` a C¹
//! radial ramp from 1 on `[0, n]` to 0 on `[n+1, ∞)`.
//!
//! The convolution uses tensor Gauss–Legendre quadrature of order
//! [`MOLLIFIER_ORDER`] per axis over the support, renormalised so the
//! discrete weights sum to one. The nodes are symmetric, so affine
//! generators are reproduced exactly inside the plateau.

use super::{DriverSpec, Generator, MAX_Z_DIM};
use crate::error::{Error, Result};
use crate::linalg;
use crate::paths::PathView;

pub const MOLLIFIER_ORDER: usize = 8;

/// Largest z-marginal kernel evaluated through the batch path (`d ≤ 2`).
const BATCH: usize = 64;

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// `ψ_n(r)`: 1 on `[0, n]`, 0 on `[n+1, ∞)`, `1 − 3s² + 2s³` in between.
pub fn cutoff(r: f64, n: f64) -> f64 {
    if r <= n {
        1.0
    } else if r >= n + 1.0 {
        0.0
    } else {
        let s = r - n;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// Discrete mollifier: quadrature offsets (already scaled by the width) and
/// normalised weights.
#[derive(Debug, Clone)]
struct Kernel {
    /// `[node][axis]` over `(y, z_1..z_d)`.
    full_offsets: Vec<f64>,
    full_weights: Vec<f64>,
    /// `[node][axis]` over `z_1..z_d`, weights summed over the `y` axis.
    z_offsets: Vec<f64>,
    z_weights: Vec<f64>,
}

impl Kernel {
    fn new(z_dim: usize, width: f64) -> Self {
        let dims = 1 + z_dim;
        let total = MOLLIFIER_ORDER.pow(dims as u32);
        let mut full_offsets = Vec::new();
        let mut full_weights = Vec::new();
        let n_z = MOLLIFIER_ORDER.pow(z_dim as u32);
        let mut z_acc = vec![0.0; n_z];
        let mut idx = vec![0usize; dims];
        for flat in 0..total {
            let mut rem = flat;
            for i in (0..dims).rev() {
                idx[i] = rem % MOLLIFIER_ORDER;
                rem /= MOLLIFIER_ORDER;
            }
            let r2: f64 = idx.iter().map(|&i| GL8_NODES[i] * GL8_NODES[i]).sum();
            let w = bump(r2) * idx.iter().map(|&i| GL8_WEIGHTS[i]).product::<f64>();
            if w == 0.0 {
                continue;
            }
            full_offsets.extend(idx.iter().map(|&i| GL8_NODES[i] * width));
            full_weights.push(w);
            // idx[0] is the y axis; the remaining digits index the z node.
            z_acc[flat % n_z] += w;
        }
        let mass: f64 = full_weights.iter().sum();
        for w in &mut full_weights {
            *w /= mass;
        }
        let mut z_offsets = Vec::new();
        let mut z_weights = Vec::new();
        for (flat, w) in z_acc.into_iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut rem = flat;
            let mut digits = vec![0usize; z_dim];
            for i in (0..z_dim).rev() {
                digits[i] = rem % MOLLIFIER_ORDER;
                rem /= MOLLIFIER_ORDER;
            }
            z_offsets.extend(digits.iter().map(|&i| GL8_NODES[i] * width));
            z_weights.push(w / mass);
        }
        Self {
            full_offsets,
            full_weights,
            z_offsets,
            z_weights,
        }
    }
}

/// Bounded, globally Lipschitz approximation `φ_n` of a registered driver.
#[derive(Debug, Clone)]
pub struct ApproxDriver {
    base: DriverSpec,
    name: String,
    n: usize,
    alpha: f64,
    q: u64,
    width: f64,
    kernel: Kernel,
    lipschitz: f64,
}

/// Builds `φ_n` with mollifier width `1/q(n)`, `q(n) = ⌈n + n^α⌉`.
pub fn mollify_truncate(driver: &DriverSpec, n: usize, alpha: f64) -> Result<ApproxDriver> {
    if n == 0 {
        return Err(Error::invalid("approximation index n must be at least 1"));
    }
    if !(0.0..2.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 2), got {alpha}")));
    }
    let nf = n as f64;
    let q = (nf + nf.powf(alpha)).ceil() as u64;
    let width = 1.0 / q as f64;
    let kernel = Kernel::new(driver.z_dim(), width);
    let mut approx = ApproxDriver {
        base: driver.clone(),
        name: format!("{}[n={n}]", driver.name()),
        n,
        alpha,
        q,
        width,
        kernel,
        lipschitz: f64::NAN,
    };
    approx.lipschitz = approx.estimate_lipschitz();
    Ok(approx)
}

impl ApproxDriver {
    pub fn base(&self) -> &DriverSpec {
        &self.base
    }

    pub fn index(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Mollifier width `1/q(n)`.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Mollified value without the cutoff.
    pub fn mollified(&self, path: &PathView<'_>, y: f64, z: &[f64]) -> f64 {
        let d = self.base.z_dim();
        let mut buf = [0.0f64; MAX_Z_DIM];
        let zs = &mut buf[..d];
        let f = self.base.func();
        let mut acc = 0.0;
        if self.base.y_dependent() {
            let k = &self.kernel;
            for (off, w) in k.full_offsets.chunks_exact(d + 1).zip(&k.full_weights) {
                for i in 0..d {
                    zs[i] = z[i] - off[i + 1];
                }
                acc += w * f(path, y - off[0], zs);
            }
        } else {
            let k = &self.kernel;
            let np = k.z_weights.len();
            if np <= BATCH {
                let mut ys = [0.0f64; BATCH];
                let mut zb = [0.0f64; BATCH * 2];
                let mut out = [0.0f64; BATCH];
                for (j, off) in k.z_offsets.chunks_exact(d).enumerate() {
                    ys[j] = y;
                    for i in 0..d {
                        zb[j * d + i] = z[i] - off[i];
                    }
                }
                self.base.eval_many(path, &ys[..np], &zb[..np * d], &mut out[..np]);
                for (w, v) in k.z_weights.iter().zip(&out[..np]) {
                    acc += w * v;
                }
            } else {
                for (off, w) in k.z_offsets.chunks_exact(d).zip(&k.z_weights) {
                    for i in 0..d {
                        zs[i] = z[i] - off[i];
                    }
                    acc += w * f(path, y, zs);
                }
            }
        }
        acc
    }

    /// Empirical Lipschitz constant from finite differences on a lattice of
    /// the truncation ball, frozen zero path at `t = 0`.
    fn estimate_lipschitz(&self) -> f64 {
        let d = self.base.z_dim();
        let dims = d + 1;
        let per_axis = ((4096f64).powf(1.0 / dims as f64).floor() as usize).clamp(3, 41);
        let r = self.n as f64 + 1.0;
        let h = 2.0 * r / (per_axis - 1) as f64;
        let frozen = super::FrozenPath::zero(d);
        let view = frozen.view(0.0);
        let total = per_axis.pow(dims as u32);
        let mut point = vec![0.0; dims];
        let mut best: f64 = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            for p in point.iter_mut() {
                *p = -r + (rem % per_axis) as f64 * h;
                rem /= per_axis;
            }
            let base = self.eval(&view, point[0], &point[1..]);
            for axis in 0..dims {
                if point[axis] + h > r + 1e-12 {
                    continue;
                }
                let mut q = point.clone();
                q[axis] += h;
                let v = self.eval(&view, q[0], &q[1..]);
                best = best.max((v - base).abs() / h);
            }
        }
        best
    }
}

impl Generator for ApproxDriver {
    fn name(&self) -> &str {
        &self.name
    }

    fn z_dim(&self) -> usize {
        self.base.z_dim()
    }

    #[inline]
    fn eval(&self, path: &PathView<'_>, y: f64, z: &[f64]) -> f64 {
        let r = (y * y + linalg::dot(z, z)).sqrt();
        let psi = cutoff(r, self.n as f64);
        if psi == 0.0 {
            return 0.0;
        }
        psi * self.mollified(path, y, z)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn path_dependent(&self) -> bool {
        self.base.path_dependent()
    }

    fn y_dependent(&self) -> bool {
        // The cutoff couples y and z.
        true
    }
}
