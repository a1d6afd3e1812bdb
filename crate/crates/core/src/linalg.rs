//! Small dense helpers for the m×m diffusion matrices.

use nalgebra::DMatrix;

/// Inverts a row-major `m×m` matrix into `out`, returning the 2-norm condition
/// number. `None` when the matrix is singular or non-finite.
pub fn invert(a: &[f64], m: usize, out: &mut [f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), m * m);
    if m == 1 {
        let v = a[0];
        if v == 0.0 || !v.is_finite() {
            return None;
        }
        out[0] = 1.0 / v;
        return Some(1.0);
    }
    let mat = DMatrix::from_row_slice(m, m, a);
    let sv = mat.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !smax.is_finite() || smin <= smax * 1e-14 {
        return None;
    }
    let inv = mat.try_inverse()?;
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = inv[(i, j)];
        }
    }
    Some(smax / smin)
}

/// Frobenius norm.
pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `out = a · v` for row-major `a` (m×m).
pub fn mat_vec(a: &[f64], v: &[f64], out: &mut [f64]) {
    let m = v.len();
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += a[i * m + j] * v[j];
        }
        out[i] = s;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
