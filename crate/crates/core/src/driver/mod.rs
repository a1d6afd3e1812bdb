//! BSDE generators, their growth certificates, and Lipschitz approximations.
//!
//! A generator is a map `φ(t, ω, y, z)`; here `(t, ω)` arrive together as a
//! [`PathView`]. Logarithmic growth in `z` is certified by
//! `|φ| ≤ η_t + c0 |z| √log⁺|z|` with `log⁺ r = ln(max(r, e))`, optionally
//! with an extra `|y|^α'` term.

mod checks;
mod mollify;

pub use checks::{
    check_local_monotonicity, check_uniform_domination, estimate_rho_n, validate_growth, validate_terminal_moment, CheckReport,
    MonotonicityCertificate, SampleBox, SamplePoint, SemiNormEstimate, TerminalMomentReport,
};
pub use mollify::{cutoff, mollify_truncate, ApproxDriver, MOLLIFIER_ORDER};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::PathView;

/// Largest supported dimension of `z`.
pub const MAX_Z_DIM: usize = 16;

/// `ln(max(r, e))`; always at least 1.
pub fn log_plus(r: f64) -> f64 {
    r.max(std::f64::consts::E).ln()
}

/// Anything the backward solver can integrate.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn z_dim(&self) -> usize;
    fn eval(&self, path: &PathView<'_>, y: f64, z: &[f64]) -> f64;
    /// Global Lipschitz constant in `(y, z)`, when one is known.
    fn lipschitz(&self) -> Option<f64>;
    /// `false` when `φ` ignores `ω`.
    fn path_dependent(&self) -> bool;
    /// `false` when `φ` ignores `y`; the solver then skips Picard iteration.
    fn y_dependent(&self) -> bool {
        true
    }
}

pub type GeneratorFn = Arc<dyn Fn(&PathView<'_>, f64, &[f64]) -> f64 + Send + Sync>;
pub type PathScalarFn = Arc<dyn Fn(&PathView<'_>) -> f64 + Send + Sync>;
/// Evaluates `φ` at several `(y_j, z_j)` sharing one path view; `zs` holds
/// the `z_j` back to back.
pub type BatchFn = Arc<dyn Fn(&PathView<'_>, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// The `η` part of a growth certificate.
#[derive(Clone)]
pub enum Eta {
    Const(f64),
    Process(PathScalarFn),
}

impl Eta {
    pub fn eval(&self, path: &PathView<'_>) -> f64 {
        match self {
            Eta::Const(c) => *c,
            Eta::Process(f) => f(path),
        }
    }
}

impl std::fmt::Debug for Eta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eta::Const(c) => write!(f, "Const({c})"),
            Eta::Process(_) => write!(f, "Process(..)"),
        }
    }
}

/// `|φ(t, ω, y, z)| ≤ η_t + [|y|^α'] + c0 |z| √log⁺|z|`.
#[derive(Debug, Clone)]
pub struct GrowthCertificate {
    pub eta: Eta,
    pub c0: f64,
    pub alpha_prime: Option<f64>,
}

impl GrowthCertificate {
    pub fn new(eta: f64, c0: f64) -> Self {
        Self {
            eta: Eta::Const(eta),
            c0,
            alpha_prime: None,
        }
    }

    pub fn with_alpha_prime(mut self, a: f64) -> Self {
        self.alpha_prime = Some(a);
        self
    }

    /// Right-hand side of the growth bound.
    pub fn bound(&self, path: &PathView<'_>, y: f64, z_norm: f64) -> f64 {
        let mut b = self.eta.eval(path) + self.c0 * z_norm * log_plus(z_norm).sqrt();
        if let Some(a) = self.alpha_prime {
            b += y.abs().powf(a);
        }
        b
    }
}

/// A registered generator with its growth certificate.
#[derive(Clone)]
pub struct DriverSpec {
    name: String,
    z_dim: usize,
    func: GeneratorFn,
    batch: Option<BatchFn>,
    certificate: GrowthCertificate,
    lipschitz: Option<f64>,
    /// Exponent of the effective polynomial bound `|φ| ≤ η + c1 |z|^α`.
    alpha: f64,
    path_dependent: bool,
    y_dependent: bool,
}

impl std::fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("z_dim", &self.z_dim)
            .field("certificate", &self.certificate)
            .field("lipschitz", &self.lipschitz)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl DriverSpec {
    /// Unregistered driver; see [`DriverSpec::register`].
    pub fn new(name: impl Into<String>, z_dim: usize, func: GeneratorFn, certificate: GrowthCertificate) -> Self {
        Self {
            name: name.into(),
            z_dim,
            func,
            batch: None,
            certificate,
            lipschitz: None,
            alpha: 1.2,
            path_dependent: true,
            y_dependent: true,
        }
    }

    /// Batch evaluator that must agree exactly with `func`.
    pub fn with_batch(mut self, batch: BatchFn) -> Self {
        self.batch = Some(batch);
        self
    }

    /// `out[j] = φ(view, ys[j], zs[j·d..(j+1)·d])`.
    pub fn eval_many(&self, view: &PathView<'_>, ys: &[f64], zs: &[f64], out: &mut [f64]) {
        match &self.batch {
            Some(b) => b(view, ys, zs, out),
            None => {
                let d = self.z_dim;
                for (j, o) in out.iter_mut().enumerate().take(ys.len()) {
                    *o = (self.func)(view, ys[j], &zs[j * d..(j + 1) * d]);
                }
            }
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Declares that `φ` ignores `ω`.
    pub fn path_independent(mut self) -> Self {
        self.path_dependent = false;
        self
    }

    /// Declares that `φ` ignores `y`.
    pub fn y_independent(mut self) -> Self {
        self.y_dependent = false;
        self
    }

    /// Validates the declared growth on the standard sample box (frozen zero
    /// path) and returns the driver if it passes.
    pub fn register(self) -> Result<Self> {
        if self.z_dim == 0 || self.z_dim > MAX_Z_DIM {
            return Err(Error::invalid(format!(
                "z dimension must be in 1..={MAX_Z_DIM}, got {}",
                self.z_dim
            )));
        }
        if !(0.0..2.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 2), got {}", self.alpha)));
        }
        if let Some(a) = self.certificate.alpha_prime {
            if !(a > 0.0 && a < 2.0) {
                return Err(Error::invalid(format!("alpha' must lie in (0, 2), got {a}")));
            }
        }
        let report = validate_growth(&self, &SampleBox::standard(), None);
        if !report.pass {
            return Err(Error::RejectedInput(format!(
                "driver `{}` violates its growth certificate (worst margin {:e} at {:?})",
                self.name, report.worst_margin, report.worst_point
            )));
        }
        Ok(self)
    }

    pub fn certificate(&self) -> &GrowthCertificate {
        &self.certificate
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn y_dependent(&self) -> bool {
        self.y_dependent
    }

    pub fn func(&self) -> &GeneratorFn {
        &self.func
    }

    /// `φ ≡ 0`.
    pub fn zero(z_dim: usize) -> Result<Self> {
        Self::new("zero", z_dim, Arc::new(|_, _, _| 0.0), GrowthCertificate::new(0.0, 0.0))
            .with_lipschitz(0.0)
            .path_independent()
            .y_independent()
            .register()
    }

    /// `φ = a·y`, certified through the `|y|^α'` variant with `α' = 1`.
    pub fn linear_y(a: f64, z_dim: usize) -> Result<Self> {
        Self::linear_y_with_eta(a, 0.0, z_dim)
    }

    pub(crate) fn linear_y_with_eta(a: f64, eta: f64, z_dim: usize) -> Result<Self> {
        let scale = a.abs();
        if scale > 1.0 {
            return Err(Error::invalid(format!(
                "linear_y is certified by |y|^1 and needs |a| <= 1, got {a}"
            )));
        }
        let cert = GrowthCertificate::new(eta, 0.0).with_alpha_prime(1.0);
        Self::new("linear_y", z_dim, Arc::new(move |_, y, _| a * y), cert)
            .with_lipschitz(scale)
            .path_independent()
            .register()
    }

    /// `φ = b·z_1`.
    pub fn linear_z(b: f64, z_dim: usize) -> Result<Self> {
        let scale = b.abs();
        Self::new("linear_z", z_dim, Arc::new(move |_, _, z| b * z[0]), GrowthCertificate::new(0.0, scale))
            .with_lipschitz(scale)
            .path_independent()
            .y_independent()
            .register()
    }

    /// `φ = c0 |z| √log⁺|z|`.
    pub fn loggrowth(c0: f64, z_dim: usize) -> Result<Self> {
        Self::new(
            "loggrowth",
            z_dim,
            Arc::new(move |_, _, z| {
                let r = crate::linalg::norm(z);
                c0 * r * log_plus(r).sqrt()
            }),
            GrowthCertificate::new(0.0, c0),
        )
        .path_independent()
        .y_independent()
        .register()
    }

    /// Built-in drivers addressable by name: `zero`, `linear_y`, `linear_z`,
    /// `loggrowth`. `param` is the coefficient (`a`, `b` or `c0`).
    pub fn named(name: &str, param: Option<f64>, z_dim: usize) -> Result<Self> {
        match name {
            "zero" => Self::zero(z_dim),
            "linear_y" => Self::linear_y(param.unwrap_or(-1.0), z_dim),
            "linear_z" => Self::linear_z(param.unwrap_or(1.0), z_dim),
            "loggrowth" => Self::loggrowth(param.unwrap_or(0.5), z_dim),
            other => Err(Error::invalid(format!("unknown driver `{other}`"))),
        }
    }

    /// Renames the driver (used for perturbed copies).
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_certificate(mut self, certificate: GrowthCertificate) -> Self {
        self.certificate = certificate;
        self
    }
}

impl Generator for DriverSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn z_dim(&self) -> usize {
        self.z_dim
    }

    #[inline]
    fn eval(&self, path: &PathView<'_>, y: f64, z: &[f64]) -> f64 {
        (self.func)(path, y, z)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn path_dependent(&self) -> bool {
        self.path_dependent
    }

    fn y_dependent(&self) -> bool {
        self.y_dependent
    }
}

/// A one-node zero path for evaluating path-independent drivers.
pub(crate) struct FrozenPath {
    states: Vec<f64>,
    sup: [f64; 1],
}

impl FrozenPath {
    pub(crate) fn zero(dim: usize) -> Self {
        Self {
            states: vec![0.0; dim],
            sup: [0.0],
        }
    }

    pub(crate) fn view(&self, t: f64) -> PathView<'_> {
        PathView::new(&self.states, &self.sup, self.states.len(), 0, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn log_plus_values() {
        assert_eq!(log_plus(0.0), 1.0);
        assert_eq!(log_plus(E), 1.0);
        assert!((log_plus(E * E) - 2.0).abs() < 1e-15);
        assert!((log_plus(10.0) - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn named_drivers_register() {
        for n in ["zero", "linear_y", "linear_z", "loggrowth"] {
            let d = DriverSpec::named(n, None, 1).unwrap();
            assert_eq!(d.name(), n);
        }
        assert!(DriverSpec::named("nope", None, 1).is_err());
    }

    #[test]
    fn registration_rejects_false_certificate() {
        let d = DriverSpec::new(
            "square",
            1,
            Arc::new(|_, _, z| z[0] * z[0]),
            GrowthCertificate::new(0.0, 1.0),
        );
        assert!(matches!(d.register(), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn named_drivers_evaluate() {
        let p = FrozenPath::zero(1);
        let v = p.view(0.3);
        let d = DriverSpec::named("linear_y", Some(-1.0), 1).unwrap();
        assert_eq!(d.eval(&v, 2.0, &[5.0]), -2.0);
        let d = DriverSpec::named("linear_z", Some(2.0), 1).unwrap();
        assert_eq!(d.eval(&v, 2.0, &[5.0]), 10.0);
        let d = DriverSpec::named("loggrowth", Some(0.5), 1).unwrap();
        assert!((d.eval(&v, 0.0, &[E * E]) - 0.5 * E * E * 2f64.sqrt()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn log_plus_is_monotone_and_at_least_one(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(log_plus(lo) >= 1.0);
            proptest::prop_assert!(log_plus(lo) <= log_plus(hi));
        }
    }
}
