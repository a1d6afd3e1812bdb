//! Numerical checks of the a priori estimates, the algebraic inequality used
//! in the uniqueness argument, and stability under driver perturbations.
//!
//! Estimates whose constants are not explicit are judged by finiteness and by
//! stability of the estimate under path doubling and grid refinement; the
//! generator-term bound is checked as an absolute inequality.

mod lemma46;
mod stability;

pub use lemma46::{check_lemma46, lemma46_sides, Lemma46Report};
pub use stability::{run_stability_experiment, Perturbation, PerturbedDriver, StabilityReport, StabilityRow};

use serde::{Deserialize, Serialize};

use crate::driver::{DriverSpec, Eta, FrozenPath, Generator, MAX_Z_DIM};
use crate::error::{Error, Result};
use crate::paths::{moment_exponent, ForwardPathBatch, PathView};
use crate::solver::{alpha_bar, evaluate_generator_term, BsdeSolution, TerminalCondition};
use crate::stats::{self, MeanSe};

/// Sizes and seeds identifying a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: Option<u64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub driver: String,
}

impl Fingerprint {
    fn of(sol: &BsdeSolution) -> Self {
        Self {
            seed: sol.meta().seed,
            n_paths: sol.n_paths(),
            n_steps: sol.grid().n_steps(),
            driver: sol.meta().driver.clone(),
        }
    }
}

/// One moment-estimate check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub check: String,
    pub lhs: MeanSe,
    pub rhs: MeanSe,
    /// `rhs − lhs`
    pub margin: f64,
    /// Relative change of the LHS under path doubling, when assessed.
    pub drift: Option<f64>,
    /// LHS/RHS ratios across grid refinements, when assessed.
    pub refinement_ratios: Vec<f64>,
    pub rule: String,
    pub pass: bool,
    pub fingerprint: Fingerprint,
}

impl EstimateReport {
    pub fn ratio(&self) -> f64 {
        if self.rhs.mean == 0.0 {
            if self.lhs.mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs.mean / self.rhs.mean
        }
    }

    fn finite(&self) -> bool {
        self.lhs.mean.is_finite() && self.rhs.mean.is_finite()
    }
}

fn check_inputs(sol: &BsdeSolution, paths: &ForwardPathBatch) -> Result<()> {
    if sol.n_paths() != paths.n_paths() || sol.grid() != paths.grid() {
        return Err(Error::invalid("paths do not match the solution"));
    }
    Ok(())
}

fn xi_values(xi: &TerminalCondition, paths: &ForwardPathBatch) -> Result<Vec<f64>> {
    xi.evaluate(paths)
}

/// `E max_k |Y_k|^{p(T)}` against `E|ξ|^{p(T)} + E ∫ η_s^{p(s)} ds`, where
/// `p(t) = ln(Ct + 2) + 2`. Passes when both sides are finite.
pub fn check_lemma41(
    sol: &BsdeSolution,
    paths: &ForwardPathBatch,
    xi: &TerminalCondition,
    eta: &Eta,
    c: f64,
) -> Result<EstimateReport> {
    check_inputs(sol, paths)?;
    let grid = sol.grid();
    let p = moment_exponent(grid.horizon(), c);
    let lhs: Vec<f64> = sol.sup_abs_y_per_path().iter().map(|v| v.powf(p)).collect();
    let xs = xi_values(xi, paths)?;
    let rhs: Vec<f64> = stats::par_map(sol.n_paths(), |i| {
        let mut s = xs[i].abs().powf(p);
        for k in 0..grid.n_steps() {
            let e = eta.eval(&paths.view(i, k)).abs();
            s += e.powf(moment_exponent(grid.t(k), c)) * grid.dt(k);
        }
        s
    });
    Ok(finish(
        "y-sup-moment",
        stats::mean_se(&lhs),
        stats::mean_se(&rhs),
        "finite; <10% drift under path doubling; LHS/RHS ratio within 15% across refinements",
        sol,
    ))
}

/// `E(∫|Z|²)^{p/2}` against
/// `E[|ξ|^p + max_k |Y_k|^{p(2+ln 2)/2} + (∫η²)^{p/2}]`.
pub fn check_lemma42(
    sol: &BsdeSolution,
    paths: &ForwardPathBatch,
    xi: &TerminalCondition,
    eta: &Eta,
    p: f64,
) -> Result<EstimateReport> {
    check_inputs(sol, paths)?;
    if !(p > 0.0) {
        return Err(Error::invalid("moment exponent p must be positive"));
    }
    let grid = sol.grid();
    let energy = sol.z_energy_per_path();
    let lhs: Vec<f64> = energy.iter().map(|e| e.powf(p / 2.0)).collect();
    let sup = sol.sup_abs_y_per_path();
    let xs = xi_values(xi, paths)?;
    let q = p * (2.0 + std::f64::consts::LN_2) / 2.0;
    let rhs: Vec<f64> = stats::par_map(sol.n_paths(), |i| {
        let mut eta2 = 0.0;
        for k in 0..grid.n_steps() {
            let e = eta.eval(&paths.view(i, k));
            eta2 += e * e * grid.dt(k);
        }
        xs[i].abs().powf(p) + sup[i].powf(q) + eta2.powf(p / 2.0)
    });
    Ok(finish(
        &format!("z-energy(p={p})"),
        stats::mean_se(&lhs),
        stats::mean_se(&rhs),
        "finite; <10% drift under path doubling; LHS/RHS ratio within 15% across refinements",
        sol,
    ))
}

fn finish(check: &str, lhs: MeanSe, rhs: MeanSe, rule: &str, sol: &BsdeSolution) -> EstimateReport {
    let mut r = EstimateReport {
        check: check.into(),
        lhs,
        rhs,
        margin: rhs.mean - lhs.mean,
        drift: None,
        refinement_ratios: Vec::new(),
        rule: rule.into(),
        pass: false,
        fingerprint: Fingerprint::of(sol),
    };
    r.pass = r.finite();
    r
}

/// LHS values below this fraction of the RHS are roundoff and count as zero
/// when measuring drift.
pub const NEGLIGIBLE_LHS: f64 = 1e-12;

/// Combines a run, its path-doubled rerun and optional grid refinements into
/// one verdict: finite, LHS drift below `drift_tol` and refinement ratios
/// within `ratio_tol` of each other (relative to the largest).
pub fn assess_stability(
    base: &EstimateReport,
    doubled: &EstimateReport,
    refinements: &[EstimateReport],
    drift_tol: f64,
    ratio_tol: f64,
) -> EstimateReport {
    let (a, b) = (base.lhs.mean, doubled.lhs.mean);
    let floor = NEGLIGIBLE_LHS * base.rhs.mean.abs().max(doubled.rhs.mean.abs());
    let scale = a.abs().max(b.abs()).max(floor);
    let drift = if scale > 0.0 { (a - b).abs() / scale } else { 0.0 };
    let ratios: Vec<f64> = refinements.iter().map(EstimateReport::ratio).collect();
    let ratio_ok = ratios.len() < 2 || {
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        hi.is_finite() && (hi == 0.0 || (hi - lo) / hi <= ratio_tol)
    };
    let mut out = doubled.clone();
    out.drift = Some(drift);
    out.refinement_ratios = ratios;
    out.pass = base.finite() && doubled.finite() && drift < drift_tol && ratio_ok;
    out
}

/// Constants of the polynomial bound `|φ| ≤ η1 + [|y|^α'] + c1 |z|^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialBound {
    pub alpha: f64,
    pub c1: f64,
    /// Extra constant absorbing the excess on `|z| < 1`.
    pub eta_excess: f64,
}

/// Smallest `c1` (and `η` excess) making the polynomial bound hold on a lattice
/// `|y| ≤ y_max`, `|z| ≤ z_max` at the sampled times/paths.
pub fn fit_polynomial_bound(
    driver: &DriverSpec,
    paths: Option<&ForwardPathBatch>,
    y_max: f64,
    z_max: f64,
    per_axis: usize,
) -> PolynomialBound {
    let d = driver.z_dim();
    let alpha = driver.alpha();
    let cert = driver.certificate();
    let ys: Vec<f64> = (0..per_axis)
        .map(|i| -y_max + 2.0 * y_max * i as f64 / (per_axis - 1) as f64)
        .collect();
    // Radial lattice along each axis and the diagonal keeps the cost linear in d.
    let mut radii: Vec<f64> = (0..4 * per_axis)
        .map(|i| z_max * i as f64 / (4 * per_axis - 1) as f64)
        .collect();
    radii.extend([1.0 - 1e-9, 1.0]);
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .flat_map(|j| {
            [1.0, -1.0].map(|s| {
                let mut v = vec![0.0; d];
                v[j] = s;
                v
            })
        })
        .collect();
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    let mut c1: f64 = 0.0;
    let mut excess: f64 = 0.0;
    let mut z = [0.0f64; MAX_Z_DIM];
    let mut visit = |view: &PathView<'_>| {
        let eta = cert.eta.eval(view);
        for &y in &ys {
            let yb = cert.alpha_prime.map_or(0.0, |a| y.abs().powf(a));
            for dir in &dirs {
                for &r in &radii {
                    for j in 0..d {
                        z[j] = dir[j] * r;
                    }
                    let rest = driver.eval(view, y, &z[..d]).abs() - eta - yb;
                    if r >= 1.0 {
                        c1 = c1.max(rest / r.powf(alpha));
                    } else {
                        excess = excess.max(rest);
                    }
                }
            }
        }
    };
    match paths {
        Some(batch) if driver.path_dependent() => {
            let np = batch.n_paths().min(8);
            let stride = batch.n_paths() / np;
            let nn = batch.grid().n_nodes();
            for i in 0..np {
                for k in [0, nn / 2, nn - 1] {
                    visit(&batch.view(i * stride, k));
                }
            }
        }
        _ => {
            let frozen = FrozenPath::zero(d);
            for t in [0.0, 0.5, 1.0] {
                visit(&frozen.view(t));
            }
        }
    }
    PolynomialBound {
        alpha,
        c1,
        eta_excess: excess.max(0.0),
    }
}

/// `E∫|φ(s, Y_s, Z_s)|^ᾱ ds ≤ (1 + c1^ᾱ)(4T + E∫(η1² + |Z|²) ds)` with
/// `η1 = η + excess + |Y|^α'`.
pub fn check_lemma43(sol: &BsdeSolution, paths: &ForwardPathBatch, driver: &DriverSpec) -> Result<EstimateReport> {
    check_inputs(sol, paths)?;
    let alpha = driver.alpha();
    let term = evaluate_generator_term(sol, paths, driver, alpha)?;
    let bound = fit_polynomial_bound(driver, Some(paths), 10.0, 100.0, 41);
    let ab = alpha_bar(alpha);
    let cert = driver.certificate();
    let grid = sol.grid();
    let t = grid.horizon();
    let inner: Vec<f64> = stats::par_map(sol.n_paths(), |i| {
        let mut s = 0.0;
        for k in 0..grid.n_steps() {
            let yb = cert.alpha_prime.map_or(0.0, |a| sol.y(k, i).abs().powf(a));
            let eta1 = cert.eta.eval(&paths.view(i, k)).abs() + bound.eta_excess + yb;
            let z2: f64 = sol.z(k, i).iter().map(|v| v * v).sum();
            s += (eta1 * eta1 + z2) * grid.dt(k);
        }
        s
    });
    let inner = stats::mean_se(&inner);
    let factor = 1.0 + bound.c1.powf(ab);
    let rhs = MeanSe {
        mean: factor * (4.0 * t + inner.mean),
        se: factor * inner.se,
    };
    let mut r = finish(
        "driver-integral",
        term.integrated,
        rhs,
        &format!("LHS <= RHS with c1 = {:.6}, alpha_bar = {ab:.6}", bound.c1),
        sol,
    );
    r.pass = r.finite() && r.margin > 0.0;
    Ok(r)
}

#[cfg(test)]
mod tests;
