//! Solution stability under perturbations `(φ_n, ξ_n) → (φ, ξ)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{
    check_uniform_domination, estimate_rho_n, mollify_truncate, validate_growth, ApproxDriver, CheckReport, DriverSpec, Eta,
    Generator, GrowthCertificate, SampleBox, SemiNormEstimate,
};
use crate::error::{Error, Result};
use crate::paths::{moment_exponent, ForwardPathBatch, PathView};
use crate::solver::{
    solution_gaps, solve_lipschitz, BsdeSolution, CauchyGap, PicardOptions, RegressionBasis, TerminalCondition,
};
use crate::stats::{self, MeanSe};

/// A perturbed generator: either a registered driver or a mollified one.
#[derive(Debug, Clone)]
pub enum PerturbedDriver {
    Spec(DriverSpec),
    Approx(ApproxDriver),
}

impl PerturbedDriver {
    pub fn generator(&self) -> &dyn Generator {
        match self {
            PerturbedDriver::Spec(d) => d,
            PerturbedDriver::Approx(a) => a,
        }
    }

    /// Uniform domination: the registered certificate for a driver, the
    /// width-shifted base certificate for an approximation.
    pub fn growth_check(&self) -> CheckReport {
        match self {
            PerturbedDriver::Spec(d) => validate_growth(d, &SampleBox::standard(), None),
            PerturbedDriver::Approx(a) => check_uniform_domination(a, &SampleBox::standard(), None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub n: usize,
    pub driver: PerturbedDriver,
    pub xi: TerminalCondition,
}

impl Perturbation {
    /// `φ_n = φ + sin(y)/n`, `ξ_n = ξ + 1/n`. The certificate adds 1 to `η`
    /// so that one bound covers every `n`.
    pub fn sin_y(base: &DriverSpec, xi: &TerminalCondition, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("perturbation index must be at least 1"));
        }
        let inv = 1.0 / n as f64;
        let f = base.func().clone();
        let cert = base.certificate();
        let eta = match &cert.eta {
            Eta::Const(c) => Eta::Const(c + 1.0),
            Eta::Process(p) => {
                let p = p.clone();
                Eta::Process(Arc::new(move |v: &PathView<'_>| p(v) + 1.0))
            }
        };
        let certificate = GrowthCertificate {
            eta,
            c0: cert.c0,
            alpha_prime: cert.alpha_prime,
        };
        let mut d = DriverSpec::new(
            format!("{}+sin(y)/{n}", base.name()),
            base.z_dim(),
            Arc::new(move |v: &PathView<'_>, y: f64, z: &[f64]| f(v, y, z) + inv * y.sin()),
            certificate,
        )
        .with_alpha(base.alpha());
        if let Some(l) = base.lipschitz() {
            d = d.with_lipschitz(l + inv);
        }
        if !base.path_dependent() {
            d = d.path_independent();
        }
        Ok(Self {
            n,
            driver: PerturbedDriver::Spec(d.register()?),
            xi: xi.shifted(inv),
        })
    }

    /// `φ_n` from the mollify/truncate schedule, `ξ_n = ξ`.
    pub fn mollified(base: &DriverSpec, xi: &TerminalCondition, n: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            n,
            driver: PerturbedDriver::Approx(mollify_truncate(base, n, alpha)?),
            xi: xi.clone(),
        })
    }

    /// `φ_n = φ`, `ξ_n = ξ`.
    pub fn identity(base: &DriverSpec, xi: &TerminalCondition, n: usize) -> Self {
        Self {
            n,
            driver: PerturbedDriver::Spec(base.clone()),
            xi: xi.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    /// `ρ_N(φ_n − φ)` for each tracked `N`.
    pub rho: Vec<SemiNormEstimate>,
    /// `E|ξ_n − ξ|^{ln(CT+2)+2}`
    pub xi_gap: MeanSe,
    /// `E max_k |Y^n_k − Y_k|^q`, when the base problem is solvable directly.
    pub y_gap: Option<MeanSe>,
    /// `E ∫|Z^n − Z|^q ds`
    pub z_gap: Option<MeanSe>,
    pub growth: CheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub base: String,
    pub q: f64,
    pub moment_exponent: f64,
    pub tracked_n: Vec<usize>,
    pub rows: Vec<StabilityRow>,
    /// Gaps between successive perturbed solutions (`Y` power `q`, `Z` power 1).
    pub successive: Vec<CauchyGap>,
    pub rho_decreasing: bool,
    pub xi_decreasing: bool,
    pub solution_decreasing: bool,
    pub pass: bool,
}

/// Solves the base problem (when its driver is Lipschitz) and every perturbed
/// problem on the same paths, then checks that `ρ_N`, the terminal gap and
/// the solution gap all decrease in `n` (each term ≤ predecessor + 2 s.e.).
#[allow(clippy::too_many_arguments)]
pub fn run_stability_experiment(
    base: &DriverSpec,
    xi: &TerminalCondition,
    perturbations: &[Perturbation],
    q: f64,
    tracked_n: &[usize],
    paths: &ForwardPathBatch,
    basis: &RegressionBasis,
    picard: PicardOptions,
) -> Result<StabilityReport> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::invalid(format!("q must lie in (1, 2), got {q}")));
    }
    if perturbations.windows(2).any(|w| w[1].n <= w[0].n) {
        return Err(Error::invalid("perturbation indices must increase"));
    }
    let growth: Vec<CheckReport> = perturbations.iter().map(|p| p.driver.growth_check()).collect();
    if let Some((p, g)) = perturbations.iter().zip(&growth).find(|(_, g)| !g.pass) {
        return Err(Error::RejectedInput(format!(
            "perturbation n={} fails uniform domination: {}",
            p.n,
            serde_json::to_string(g)?
        )));
    }
    let base_sol = match base.lipschitz() {
        Some(_) => Some(solve_lipschitz(base, xi, paths, basis, picard)?),
        None => None,
    };
    let p = moment_exponent(paths.grid().horizon(), xi.moment_constant());
    let xs = xi.evaluate(paths)?;
    let mut rows = Vec::new();
    let mut sols: Vec<BsdeSolution> = Vec::new();
    for (pert, growth) in perturbations.iter().zip(growth) {
        let gen = pert.driver.generator();
        let sol = solve_lipschitz(gen, &pert.xi, paths, basis, picard)?;
        let rho = tracked_n
            .iter()
            .map(|&n| estimate_rho_n(gen, base, n, paths, 32, 64))
            .collect::<Result<Vec<_>>>()?;
        let xn = pert.xi.evaluate(paths)?;
        let gaps: Vec<f64> = xn.iter().zip(&xs).map(|(a, b)| (a - b).abs().powf(p)).collect();
        let (y_gap, z_gap) = match &base_sol {
            Some(b) => {
                let g = solution_gaps(&sol, b, q, q)?;
                (Some(g.y), Some(g.z))
            }
            None => (None, None),
        };
        rows.push(StabilityRow {
            n: pert.n,
            rho,
            xi_gap: stats::mean_se(&gaps),
            y_gap,
            z_gap,
            growth,
        });
        sols.push(sol);
    }
    let mut successive = Vec::new();
    for (i, w) in sols.windows(2).enumerate() {
        let g = solution_gaps(&w[0], &w[1], q, 1.0)?;
        successive.push(CauchyGap {
            n: perturbations[i].n,
            n_next: perturbations[i + 1].n,
            y_gap: g.y,
            z_gap: g.z,
        });
    }
    let rho_decreasing = (0..tracked_n.len()).all(|j| {
        let seq: Vec<MeanSe> = rows.iter().map(|r| r.rho[j].mean_se()).collect();
        stats::is_decreasing(&seq, 2.0, 0.0)
    });
    let xi_seq: Vec<MeanSe> = rows.iter().map(|r| r.xi_gap).collect();
    let xi_decreasing = stats::is_decreasing(&xi_seq, 2.0, 0.0);
    let solution_decreasing = if base_sol.is_some() {
        let ys: Vec<MeanSe> = rows.iter().filter_map(|r| r.y_gap).collect();
        let zs: Vec<MeanSe> = rows.iter().filter_map(|r| r.z_gap).collect();
        stats::is_decreasing(&ys, 2.0, 0.0) && stats::is_decreasing(&zs, 2.0, 0.0)
    } else {
        let ys: Vec<MeanSe> = successive.iter().map(|c| c.y_gap).collect();
        stats::is_decreasing(&ys, 2.0, 0.0)
    };
    Ok(StabilityReport {
        base: base.name().to_string(),
        q,
        moment_exponent: p,
        tracked_n: tracked_n.to_vec(),
        rows,
        successive,
        rho_decreasing,
        xi_decreasing,
        solution_decreasing,
        pass: rho_decreasing && xi_decreasing && solution_decreasing,
    })
}
