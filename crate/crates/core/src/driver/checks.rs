//! Numerical checks of the generator hypotheses and the `ρ_N` semi-norm.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_plus, ApproxDriver, DriverSpec, FrozenPath, Generator, PathScalarFn, MAX_Z_DIM};
use crate::error::{Error, Result};
use crate::linalg;
use crate::paths::{moment_exponent, ForwardPathBatch, PathView};
use crate::stats::{self, MeanSe};

const GROWTH_SLACK: f64 = 1e-12;

/// Where a lattice or random check found its worst value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub t: f64,
    pub path: Option<usize>,
    pub y: f64,
    pub z: Vec<f64>,
}

/// JSON-friendly outcome of a driver check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub check: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_point: Option<SamplePoint>,
    pub n_samples: usize,
    pub violations: usize,
    pub seed: Option<u64>,
}

/// Lattice ranges for growth checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub y_max: f64,
    pub z_max: f64,
    /// Lattice points per axis (endpoints included).
    pub per_axis: usize,
    /// Number of time points (frozen path) or grid nodes (simulated paths).
    pub t_points: usize,
    /// Paths visited when a batch is supplied.
    pub max_paths: usize,
}

impl SampleBox {
    pub fn standard() -> Self {
        Self {
            y_max: 10.0,
            z_max: 100.0,
            per_axis: 41,
            t_points: 3,
            max_paths: 8,
        }
    }

    fn axis(max: f64, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|i| -max + 2.0 * max * i as f64 / (n - 1) as f64).collect()
    }
}

/// Enumerates `(t, path view)` pairs for a check: either a frozen zero path
/// at evenly spaced times in `[0, 1]`, or strided nodes of strided paths.
fn for_each_time_path<F>(z_dim: usize, sbox: &SampleBox, paths: Option<&ForwardPathBatch>, mut f: F)
where
    F: FnMut(&PathView<'_>, Option<usize>),
{
    match paths {
        None => {
            let frozen = FrozenPath::zero(z_dim);
            let nt = sbox.t_points.max(1);
            for i in 0..nt {
                let t = if nt == 1 { 0.0 } else { i as f64 / (nt - 1) as f64 };
                f(&frozen.view(t), None);
            }
        }
        Some(batch) => {
            let np = batch.n_paths().min(sbox.max_paths.max(1));
            let pstride = (batch.n_paths() / np).max(1);
            let nn = batch.grid().n_nodes();
            let nt = sbox.t_points.clamp(1, nn);
            for pi in 0..np {
                let p = pi * pstride;
                for ti in 0..nt {
                    let k = if nt == 1 { 0 } else { ti * (nn - 1) / (nt - 1) };
                    f(&batch.view(p, k), Some(p));
                }
            }
        }
    }
}

fn lattice_check<B>(
    name: &str,
    check: &str,
    gen: &dyn Generator,
    sbox: &SampleBox,
    paths: Option<&ForwardPathBatch>,
    bound: B,
) -> CheckReport
where
    B: Fn(&PathView<'_>, f64, f64) -> f64,
{
    let d = gen.z_dim();
    let dims = 1 + d;
    let per_axis = if dims <= 2 {
        sbox.per_axis
    } else {
        ((sbox.per_axis.pow(2) as f64).powf(1.0 / dims as f64).floor() as usize).max(3)
    };
    let ys = SampleBox::axis(sbox.y_max, per_axis);
    let zs = SampleBox::axis(sbox.z_max, per_axis);
    let n_z = per_axis.pow(d as u32);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = None;
    let mut count = 0;
    let mut violations = 0;
    let mut z = [0.0f64; MAX_Z_DIM];
    for_each_time_path(d, sbox, paths, |view, path| {
        for &y in &ys {
            for flat in 0..n_z {
                let mut rem = flat;
                for zi in z[..d].iter_mut() {
                    *zi = zs[rem % per_axis];
                    rem /= per_axis;
                }
                let zv = &z[..d];
                let margin = gen.eval(view, y, zv).abs() - bound(view, y, linalg::norm(zv));
                count += 1;
                if margin > GROWTH_SLACK || margin.is_nan() {
                    violations += 1;
                }
                if margin > worst || margin.is_nan() {
                    worst = if margin.is_nan() { f64::INFINITY } else { margin };
                    worst_point = Some(SamplePoint {
                        t: view.t(),
                        path,
                        y,
                        z: zv.to_vec(),
                    });
                }
            }
        }
    });
    CheckReport {
        name: name.to_string(),
        check: check.to_string(),
        pass: violations == 0,
        worst_margin: worst,
        worst_point,
        n_samples: count,
        violations,
        seed: None,
    }
}

/// Evaluates `|φ| − (η + [|y|^α'] + c0|z|√log⁺|z|)` on the lattice (times the
/// sampled paths, if any). Passes iff the maximum is ≤ 1e-12.
pub fn validate_growth(d: &DriverSpec, sbox: &SampleBox, paths: Option<&ForwardPathBatch>) -> CheckReport {
    let cert = d.certificate();
    lattice_check(d.name(), "growth", d, sbox, paths, |v, y, zn| cert.bound(v, y, zn))
}

/// Uniform domination of `φ_n` by the base certificate, shifted by one
/// mollifier width: `|φ_n| ≤ η + (|y|+w)^α' + c0 (|z|+w) √log⁺(|z|+w)`.
pub fn check_uniform_domination(
    approx: &ApproxDriver,
    sbox: &SampleBox,
    paths: Option<&ForwardPathBatch>,
) -> CheckReport {
    let cert = approx.base().certificate();
    let w = approx.width();
    lattice_check(approx.name(), "uniform_domination", approx, sbox, paths, |v, y, zn| {
        let zw = zn + w;
        let mut b = cert.eta.eval(v) + cert.c0 * zw * log_plus(zw).sqrt();
        if let Some(a) = cert.alpha_prime {
            b += (y.abs() + w).powf(a);
        }
        b
    })
}

/// Monte Carlo estimate of `E|ξ|^{ln(CT+2)+2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalMomentReport {
    pub exponent: f64,
    pub estimate: MeanSe,
    /// Same estimate on the first half of the paths.
    pub half_estimate: MeanSe,
    pub relative_change: f64,
    pub pass: bool,
}

/// Terminal-moment condition: finite and stable (< 10% relative change)
/// between the first half of the batch and the whole batch.
pub fn validate_terminal_moment(
    xi: &(dyn Fn(&PathView<'_>) -> f64 + Sync),
    paths: &ForwardPathBatch,
    c: f64,
) -> Result<TerminalMomentReport> {
    let p = moment_exponent(paths.grid().horizon(), c);
    let values: Vec<f64> = stats::par_map(paths.n_paths(), |i| xi(&paths.terminal_view(i)));
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            path: i,
            message: "terminal condition is not finite".into(),
        });
    }
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    let full = stats::mean_se(&powered);
    let half = stats::mean_se(&powered[..powered.len().div_ceil(2)]);
    let rel = stats::relative_change(full.mean, half.mean);
    Ok(TerminalMomentReport {
        exponent: p,
        estimate: full,
        half_estimate: half,
        relative_change: rel,
        pass: full.mean.is_finite() && rel < 0.1,
    })
}

/// Monte Carlo estimate of `ρ_N(φ1 − φ2) = E ∫ sup_{|y|,|z| ≤ N} |φ1 − φ2| ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiNormEstimate {
    pub n: usize,
    pub value: f64,
    pub se: f64,
    /// Same estimate with the lattice spacing halved once.
    pub refined_value: f64,
    pub lattice_intervals: usize,
    pub time_rule: String,
    pub n_paths: usize,
}

impl SemiNormEstimate {
    pub fn mean_se(&self) -> MeanSe {
        MeanSe {
            mean: self.value,
            se: self.se,
        }
    }
}

fn sup_on_lattice(a: &dyn Generator, b: &dyn Generator, view: &PathView<'_>, n: f64, intervals: usize) -> f64 {
    let d = a.z_dim();
    let axis = SampleBox::axis(n, intervals + 1);
    let per = axis.len();
    let n_z = per.pow(d as u32);
    let mut z = [0.0f64; MAX_Z_DIM];
    let mut best: f64 = 0.0;
    for &y in &axis {
        for flat in 0..n_z {
            let mut rem = flat;
            for zi in z[..d].iter_mut() {
                *zi = axis[rem % per];
                rem /= per;
            }
            let zv = &z[..d];
            if linalg::norm(zv) > n * (1.0 + 1e-12) {
                continue;
            }
            best = best.max((a.eval(view, y, zv) - b.eval(view, y, zv)).abs());
        }
    }
    best
}

/// Inner sup on a lattice with `intervals` cells per axis (default 32), time
/// integral by the left-point rule, expectation over at most `max_paths`
/// strided paths (one path when neither generator depends on ω).
pub fn estimate_rho_n(
    a: &dyn Generator,
    b: &dyn Generator,
    n: usize,
    paths: &ForwardPathBatch,
    intervals: usize,
    max_paths: usize,
) -> Result<SemiNormEstimate> {
    if n == 0 {
        return Err(Error::invalid("rho_N needs N >= 1"));
    }
    if a.z_dim() != b.z_dim() {
        return Err(Error::invalid("rho_N compares generators of different z dimension"));
    }
    let intervals = intervals.max(2);
    let nf = n as f64;
    let np = if a.path_dependent() || b.path_dependent() {
        paths.n_paths().min(max_paths.max(1))
    } else {
        1
    };
    let stride = (paths.n_paths() / np).max(1);
    let grid = paths.grid();
    let integrate = |p: usize, intervals: usize| -> f64 {
        let mut s = 0.0;
        for k in 0..grid.n_steps() {
            s += grid.dt(k) * sup_on_lattice(a, b, &paths.view(p, k), nf, intervals);
        }
        s
    };
    let coarse: Vec<f64> = stats::par_map(np, |i| integrate(i * stride, intervals));
    let fine: Vec<f64> = stats::par_map(np, |i| integrate(i * stride, 2 * intervals));
    let c = stats::mean_se(&coarse);
    Ok(SemiNormEstimate {
        n,
        value: c.mean,
        se: c.se,
        refined_value: stats::mean(&fine),
        lattice_intervals: intervals,
        time_rule: "left-point".into(),
        n_paths: np,
    })
}

/// Local monotonicity certificate `(M2, r, A_N, v)`.
#[derive(Clone)]
pub struct MonotonicityCertificate {
    pub m2: f64,
    pub r: f64,
    pub a_n: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Localising process `v_t(ω)`; `None` means `v ≡ 0`.
    pub localizer: Option<PathScalarFn>,
}

impl std::fmt::Debug for MonotonicityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonotonicityCertificate")
            .field("m2", &self.m2)
            .field("r", &self.r)
            .field("has_localizer", &self.localizer.is_some())
            .finish()
    }
}

impl MonotonicityCertificate {
    /// `A_N = N^r`.
    pub fn power(m2: f64, r: f64) -> Self {
        Self {
            m2,
            r,
            a_n: Arc::new(move |n: f64| n.powf(r)),
            localizer: None,
        }
    }

    pub fn with_localizer(mut self, v: PathScalarFn) -> Self {
        self.localizer = Some(v);
        self
    }

    /// Checks `1 < A_N ≤ N^r`, monotonicity and growth on `N = 2, 4, …, 2^40`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m2 >= 0.0) || !(self.r > 0.0) {
            return Err(Error::invalid("certificate needs M2 >= 0 and r > 0"));
        }
        let mut prev = 0.0;
        for e in 1..=40 {
            let n = 2f64.powi(e);
            let a = (self.a_n)(n);
            if !(a > 1.0) || a > n.powf(self.r) * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("A_N = {a} outside (1, N^r] at N = {n}")));
            }
            if a < prev {
                return Err(Error::invalid(format!("A_N decreases at N = {n}")));
            }
            prev = a;
        }
        if prev < 1e3 {
            return Err(Error::invalid("A_N does not grow on the sampled schedule"));
        }
        Ok(())
    }
}

/// Random check of
/// `(y−y')(φ(y,z) − φ(y',z')) 1{v ≤ N} ≤ M2|Δy|² log A_N + M2|Δy||Δz| √log A_N + M2 log A_N / A_N`
/// over `|y|, |y'|, |z|, |z'| ≤ N`.
pub fn check_local_monotonicity(
    gen: &dyn Generator,
    cert: &MonotonicityCertificate,
    n: usize,
    samples: usize,
    paths: &ForwardPathBatch,
    seed: u64,
) -> Result<CheckReport> {
    if n <= 1 {
        return Err(Error::invalid("local monotonicity needs N > 1"));
    }
    cert.validate()?;
    let nf = n as f64;
    let a_n = (cert.a_n)(nf);
    let log_a = a_n.ln();
    let d = gen.z_dim();
    const BLOCK: usize = 1 << 14;
    let blocks = samples.div_ceil(BLOCK);
    let n_steps = paths.grid().n_steps();
    let n_paths = paths.n_paths();

    struct Partial {
        evaluated: usize,
        violations: usize,
        worst: f64,
        point: Option<SamplePoint>,
    }

    let partials: Vec<Partial> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut out = Partial {
                evaluated: 0,
                violations: 0,
                worst: f64::NEG_INFINITY,
                point: None,
            };
            let mut z1 = [0.0f64; MAX_Z_DIM];
            let mut z2 = [0.0f64; MAX_Z_DIM];
            let ball = |rng: &mut ChaCha8Rng, z: &mut [f64]| loop {
                for zi in z.iter_mut() {
                    *zi = rng.random_range(-nf..=nf);
                }
                if linalg::norm(z) <= nf {
                    break;
                }
            };
            for _ in 0..count {
                let k = rng.random_range(0..n_steps.max(1));
                let p = rng.random_range(0..n_paths);
                let y1 = rng.random_range(-nf..=nf);
                let y2 = rng.random_range(-nf..=nf);
                ball(&mut rng, &mut z1[..d]);
                ball(&mut rng, &mut z2[..d]);
                let view = paths.view(p, k);
                if let Some(v) = &cert.localizer {
                    if v(&view) > nf {
                        continue;
                    }
                }
                out.evaluated += 1;
                let dy = y1 - y2;
                let dz: f64 = z1[..d]
                    .iter()
                    .zip(&z2[..d])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let lhs = dy * (gen.eval(&view, y1, &z1[..d]) - gen.eval(&view, y2, &z2[..d]));
                let rhs = cert.m2 * dy * dy * log_a + cert.m2 * dy.abs() * dz * log_a.sqrt() + cert.m2 * log_a / a_n;
                let excess = lhs - rhs;
                if excess > 1e-12 * (1.0 + rhs.abs()) {
                    out.violations += 1;
                }
                if excess > out.worst {
                    out.worst = excess;
                    out.point = Some(SamplePoint {
                        t: view.t(),
                        path: Some(p),
                        y: y1,
                        z: z1[..d].to_vec(),
                    });
                }
            }
            out
        })
        .collect();

    let mut evaluated = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut point = None;
    for p in partials {
        evaluated += p.evaluated;
        violations += p.violations;
        if p.worst > worst {
            worst = p.worst;
            point = p.point;
        }
    }
    Ok(CheckReport {
        name: gen.name().to_string(),
        check: "local_monotonicity".into(),
        pass: violations == 0,
        worst_margin: worst,
        worst_point: point,
        n_samples: evaluated,
        violations,
        seed: Some(seed),
    })
}
