//! Least-squares conditional expectations on polynomial features.
//!
//! Features are monomials of total degree `1..=degree` in the current state
//! components and (optionally) the running sup. Columns are standardised
//! before the ridge solve and the intercept is left unpenalised, so fitted
//! values always average to the mean of the target.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{ForwardPathBatch, PathView};
use crate::stats::{self, CHUNK};

/// Polynomial regression basis in `(x, running_sup)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub degree: usize,
    /// Ridge penalty on the standardised Gram matrix.
    pub ridge: f64,
    pub include_sup: bool,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self::polynomial(2)
    }
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            degree,
            ridge: 1e-8,
            include_sup: true,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn without_sup(mut self) -> Self {
        self.include_sup = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::invalid(format!("ridge must be finite and >= 0, got {}", self.ridge)));
        }
        if self.degree > 8 {
            return Err(Error::invalid(format!("basis degree {} is above the supported 8", self.degree)));
        }
        Ok(())
    }

    fn n_vars(&self, dim: usize) -> usize {
        dim + usize::from(self.include_sup)
    }

    /// Exponent vectors of the non-constant monomials, graded order.
    pub(crate) fn exponents(&self, dim: usize) -> Vec<Vec<u8>> {
        let nv = self.n_vars(dim);
        let mut out = Vec::new();
        for deg in 1..=self.degree {
            let mut cur = vec![0u8; nv];
            push_compositions(deg, 0, &mut cur, &mut out);
        }
        out
    }

    /// Number of basis functions including the constant.
    pub fn n_functions(&self, dim: usize) -> usize {
        1 + self.exponents(dim).len()
    }

    pub fn describe(&self) -> String {
        format!(
            "poly(deg={}, vars={}, ridge={:e})",
            self.degree,
            if self.include_sup { "x,sup" } else { "x" },
            self.ridge
        )
    }
}

fn push_compositions(left: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == cur.len() {
        cur[pos] = left as u8;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e as u8;
        push_compositions(left - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Evaluates non-constant features at a path view.
#[derive(Debug, Clone)]
pub(crate) struct FeatureMap {
    exponents: Vec<Vec<u8>>,
    include_sup: bool,
}

impl FeatureMap {
    pub(crate) fn new(basis: &RegressionBasis, dim: usize) -> Self {
        Self {
            exponents: basis.exponents(dim),
            include_sup: basis.include_sup,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.exponents.len()
    }

    pub(crate) fn eval(&self, view: &PathView<'_>, vars: &mut Vec<f64>, out: &mut [f64]) {
        vars.clear();
        vars.extend_from_slice(view.current());
        if self.include_sup {
            vars.push(view.running_sup());
        }
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (x, &p) in vars.iter().zip(e) {
                if p > 0 {
                    v *= x.powi(p as i32);
                }
            }
            *o = v;
        }
    }
}

/// Raw features of every path at one node, row-major `[path][feature]`.
pub(crate) fn design(map: &FeatureMap, paths: &ForwardPathBatch, node: usize) -> Vec<f64> {
    let p = map.len();
    let mut x = vec![0.0; paths.n_paths() * p];
    if p == 0 {
        return x;
    }
    x.par_chunks_mut(CHUNK * p).enumerate().for_each(|(c, rows)| {
        let mut vars = Vec::new();
        for (j, row) in rows.chunks_exact_mut(p).enumerate() {
            map.eval(&paths.view(c * CHUNK + j, node), &mut vars, row);
        }
    });
    x
}

/// A fitted regression at one node for several targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    /// Indices of the features kept after dropping constant columns.
    pub kept: Vec<usize>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    /// `[kept feature][target]`
    pub coef: Vec<f64>,
    /// Condition number of the ridge-regularised standardised Gram matrix.
    pub condition: f64,
}

impl NodeFit {
    pub fn n_targets(&self) -> usize {
        self.target_mean.len()
    }

    /// Predicted targets from raw features.
    pub fn predict(&self, raw: &[f64], out: &mut [f64]) {
        let q = self.n_targets();
        out[..q].copy_from_slice(&self.target_mean);
        for (i, &j) in self.kept.iter().enumerate() {
            let s = (raw[j] - self.feature_mean[i]) / self.feature_scale[i];
            for t in 0..q {
                out[t] += s * self.coef[i * q + t];
            }
        }
    }

    /// Prediction for row `row` of a design matrix with `p` columns.
    pub(crate) fn predict_row(&self, x: &[f64], p: usize, row: usize, out: &mut [f64]) {
        self.predict(&x[row * p..(row + 1) * p], out)
    }
}

/// Pre-standardised design for one node; the Cholesky factor is reused for
/// every right-hand side.
pub(crate) struct Regression {
    p: usize,
    n: usize,
    kept: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    condition: f64,
}

impl Regression {
    pub(crate) fn new(x: &[f64], p: usize, n: usize, ridge: f64, node: usize) -> Result<Self> {
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        let mut col = vec![0.0; n];
        for j in 0..p {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x[i * p + j];
            }
            let m = stats::mean(&col);
            let dev: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
            let sd = (stats::pairwise_sum(&dev) / n as f64).sqrt();
            if !m.is_finite() || !sd.is_finite() {
                return Err(Error::RegressionFailure {
                    node,
                    message: format!("feature {j} is not finite"),
                });
            }
            if sd > 1e-10 * (1.0 + m.abs()) {
                kept.push(j);
                mean.push(m);
                scale.push(sd);
            }
        }
        let r = kept.len();
        if r == 0 {
            return Ok(Self {
                p,
                n,
                kept,
                mean,
                scale,
                chol: None,
                condition: 1.0,
            });
        }
        let partial: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; r * r];
                let mut s = vec![0.0; r];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    for (a, &ja) in kept.iter().enumerate() {
                        s[a] = (x[i * p + ja] - mean[a]) / scale[a];
                    }
                    for a in 0..r {
                        for b in a..r {
                            g[a * r + b] += s[a] * s[b];
                        }
                    }
                }
                g
            })
            .collect();
        let mut g = DMatrix::<f64>::zeros(r, r);
        for part in &partial {
            for a in 0..r {
                for b in a..r {
                    g[(a, b)] += part[a * r + b];
                }
            }
        }
        for a in 0..r {
            for b in a..r {
                let v = g[(a, b)] / n as f64 + if a == b { ridge } else { 0.0 };
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let eig = g.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let condition = hi / lo.max(f64::MIN_POSITIVE);
        let chol = g.cholesky().ok_or_else(|| Error::RegressionFailure {
            node,
            message: format!("Gram matrix is singular beyond ridge {ridge:e}"),
        })?;
        Ok(Self {
            p,
            n,
            kept,
            mean,
            scale,
            chol: Some(chol),
            condition,
        })
    }

    /// Fits targets given row-major `[path][target]`.
    pub(crate) fn fit(&self, x: &[f64], targets: &[f64], q: usize) -> NodeFit {
        let n = self.n;
        let p = self.p;
        let r = self.kept.len();
        let mut target_mean = vec![0.0; q];
        let mut col = vec![0.0; n];
        for t in 0..q {
            for (i, c) in col.iter_mut().enumerate() {
                *c = targets[i * q + t];
            }
            target_mean[t] = stats::mean(&col);
        }
        let mut coef = vec![0.0; r * q];
        if let Some(chol) = &self.chol {
            let partial: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; r * q];
                    let mut s = vec![0.0; r];
                    for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                        for (a, &ja) in self.kept.iter().enumerate() {
                            s[a] = (x[i * p + ja] - self.mean[a]) / self.scale[a];
                        }
                        for t in 0..q {
                            let yt = targets[i * q + t] - target_mean[t];
                            for a in 0..r {
                                acc[a * q + t] += s[a] * yt;
                            }
                        }
                    }
                    acc
                })
                .collect();
            let mut rhs = vec![0.0; r * q];
            for part in &partial {
                for (a, b) in rhs.iter_mut().zip(part) {
                    *a += b;
                }
            }
            for t in 0..q {
                let b = DVector::from_iterator(r, (0..r).map(|a| rhs[a * q + t] / n as f64));
                let beta = chol.solve(&b);
                for a in 0..r {
                    coef[a * q + t] = beta[a];
                }
            }
        }
        NodeFit {
            kept: self.kept.clone(),
            feature_mean: self.mean.clone(),
            feature_scale: self.scale.clone(),
            target_mean,
            coef,
            condition: self.condition,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{make_time_grid, sample_brownian, simulate_forward, ForwardModel};

    #[test]
    fn monomial_counts() {
        // (m + 1 + deg choose deg) - 1 non-constant monomials.
        assert_eq!(RegressionBasis::polynomial(2).n_functions(1), 6);
        assert_eq!(RegressionBasis::polynomial(3).n_functions(1), 10);
        assert_eq!(RegressionBasis::polynomial(2).n_functions(2), 10);
        assert_eq!(RegressionBasis::polynomial(2).without_sup().n_functions(1), 3);
        assert_eq!(RegressionBasis::polynomial(0).n_functions(3), 1);
    }

    #[test]
    fn recovers_a_quadratic_exactly() {
        let g = make_time_grid(1.0, 4).unwrap();
        let b = sample_brownian(&g, 1, 5000, 2).unwrap();
        let x = simulate_forward(&ForwardModel::constant(vec![0.0], 1.0).unwrap(), &b).unwrap();
        let basis = RegressionBasis::polynomial(2).with_ridge(0.0);
        let map = FeatureMap::new(&basis, 1);
        let p = map.len();
        let k = 2;
        let design = design(&map, &x, k);
        let n = x.n_paths();
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let v = x.state(i, k)[0];
                1.0 + 2.0 * v - 0.5 * v * v
            })
            .collect();
        let reg = Regression::new(&design, p, n, 0.0, k).unwrap();
        let fit = reg.fit(&design, &targets, 1);
        let mut out = [0.0];
        for i in (0..n).step_by(97) {
            fit.predict_row(&design, p, i, &mut out);
            assert!((out[0] - targets[i]).abs() < 1e-9, "{} vs {}", out[0], targets[i]);
        }
    }

    #[test]
    fn constant_columns_are_dropped() {
        let n = 10;
        let x: Vec<f64> = (0..n).flat_map(|i| [3.0, i as f64]).collect();
        let reg = Regression::new(&x, 2, n, 1e-8, 0).unwrap();
        assert_eq!(reg.kept, vec![1]);
        let fit = reg.fit(&x, &vec![5.0; n], 1);
        assert_eq!(fit.target_mean, vec![5.0]);
        assert_eq!(fit.coef, vec![0.0]);
    }

    #[test]
    fn fitted_values_preserve_the_mean() {
        let n = 1000;
        let x: Vec<f64> = (0..n).flat_map(|i| [(i as f64).sin(), (i as f64 * 0.37).cos()]).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 113) as f64).collect();
        let reg = Regression::new(&x, 2, n, 1e-8, 0).unwrap();
        let fit = reg.fit(&x, &y, 1);
        let mut fitted = vec![0.0; n];
        for (i, f) in fitted.iter_mut().enumerate() {
            let mut o = [0.0];
            fit.predict_row(&x, 2, i, &mut o);
            *f = o[0];
        }
        assert!((stats::mean(&fitted) - stats::mean(&y)).abs() < 1e-9);
    }

    #[test]
    fn non_finite_features_fail() {
        let x = vec![1.0, f64::NAN, 2.0];
        assert!(matches!(
            Regression::new(&x, 1, 3, 1e-8, 4),
            Err(Error::RegressionFailure { node: 4, .. })
        ));
    }
}
