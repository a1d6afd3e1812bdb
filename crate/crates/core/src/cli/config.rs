//! Declarative experiment configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Solve,
    Approx,
    Diagnose,
    Control,
    Game,
}

impl CommandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Solve => "solve",
            CommandKind::Approx => "approx",
            CommandKind::Diagnose => "diagnose",
            CommandKind::Control => "control",
            CommandKind::Game => "game",
        }
    }
}

/// Everything a run depends on. `out` and `threads` never change results and
/// are left out of the fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub format: FormatFlags,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub bsde: BsdeSpec,
    #[serde(default)]
    pub diagnose: DiagnoseSpec,
    #[serde(default)]
    pub problem: ProblemSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatFlags {
    pub csv: bool,
    /// Also write the binary solution dump.
    pub binary: bool,
}

impl Default for FormatFlags {
    fn default() -> Self {
        Self { csv: true, binary: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub sigma: SigmaForm,
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            sigma: SigmaForm::Const { value: 1.0 },
            x0: vec![0.0],
            horizon: 1.0,
        }
    }
}

/// Diffusion coefficient, always a multiple of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaForm {
    Const { value: f64 },
    Identity,
    /// `σ = (a + b‖x‖_t) I`
    SupLinear { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub n_paths: usize,
    pub n_steps: usize,
    pub degree: usize,
    pub ridge: f64,
    pub include_sup: bool,
    pub picard_max_iters: usize,
    pub picard_tol: f64,
    pub schedule: Vec<usize>,
    pub q: f64,
    pub beta: f64,
    /// Constant of the terminal-moment exponent `ln(Ct + 2) + 2`.
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 50,
            degree: 2,
            ridge: 1e-8,
            include_sup: true,
            picard_max_iters: 100,
            picard_tol: 1e-10,
            schedule: vec![8, 16, 32, 64],
            q: 1.5,
            beta: 1.5,
            c: 1.0,
            alpha: 1.2,
            tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsdeSpec {
    pub driver: DriverForm,
    pub xi: TerminalForm,
}

impl Default for BsdeSpec {
    fn default() -> Self {
        Self {
            driver: DriverForm::Zero,
            xi: TerminalForm::XT { scale: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverForm {
    Zero,
    LinearY { a: f64 },
    LinearZ { b: f64 },
    Loggrowth { c0: f64 },
}

impl DriverForm {
    /// `name[:param]`, e.g. `loggrowth:0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, param) = split_param(s, "driver")?;
        Ok(match name {
            "zero" => DriverForm::Zero,
            "linear_y" => DriverForm::LinearY { a: param.unwrap_or(-1.0) },
            "linear_z" => DriverForm::LinearZ { b: param.unwrap_or(1.0) },
            "loggrowth" => DriverForm::Loggrowth { c0: param.unwrap_or(0.5) },
            other => return Err(config_err("bsde.driver", format!("unknown driver `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalForm {
    /// `scale · x_T` (first component)
    #[serde(rename = "x_T")]
    XT {
        #[serde(default = "one")]
        scale: f64,
    },
    Const { value: f64 },
    /// `scale · max_{t≤T} |x_t|`
    Sup {
        #[serde(default = "one")]
        scale: f64,
    },
}

impl TerminalForm {
    /// `name[:param]`, e.g. `x_T:3`.
    pub fn parse(s: &str, field: &str) -> Result<Self> {
        let (name, param) = split_param(s, field)?;
        Ok(match name {
            "x_T" => TerminalForm::XT { scale: param.unwrap_or(1.0) },
            "const" => TerminalForm::Const { value: param.unwrap_or(0.0) },
            "sup" => TerminalForm::Sup { scale: param.unwrap_or(1.0) },
            other => return Err(config_err(field, format!("unknown terminal form `{other}`"))),
        })
    }
}

fn one() -> f64 {
    1.0
}

fn split_param<'a>(s: &'a str, field: &str) -> Result<(&'a str, Option<f64>)> {
    match s.split_once(':') {
        None => Ok((s, None)),
        Some((n, p)) => p
            .parse::<f64>()
            .map(|v| (n, Some(v)))
            .map_err(|_| config_err(field, format!("bad parameter `{p}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Random fuzz of the algebraic inequality behind uniqueness.
    Lemma46,
    /// Growth certificate, uniform domination and `ρ_N` along a schedule.
    Growth,
    /// A priori moment estimates with path doubling.
    Moments,
    /// `sin(y)/n` perturbation family.
    Stability,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| config_err("diagnose.suite", format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSpec {
    pub suite: Suite,
    pub samples: usize,
    pub betas: Vec<f64>,
    pub range: f64,
    pub perturbations: Vec<usize>,
    pub tracked_n: Vec<usize>,
    pub rho_schedule: Vec<usize>,
    /// Exponent of the `Z` moment estimate.
    pub p: f64,
}

impl Default for DiagnoseSpec {
    fn default() -> Self {
        Self {
            suite: Suite::Lemma46,
            samples: 1_000_000,
            betas: vec![1.1, 1.5, 2.0],
            range: 10.0,
            perturbations: vec![2, 4, 8, 16],
            tracked_n: vec![10],
            rho_schedule: vec![12, 24, 48, 96],
            p: 2.0,
        }
    }
}

/// Finite action grid: explicit points or `n` uniform points on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Uniform(UniformGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Uniform(u) => crate::control::uniform_grid(u.lo, u.hi, u.n),
        }
    }
}

/// Drift forms; `b` is 0 in a control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftForm {
    Zero,
    /// `scale · a` in every component
    Linear {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `a (intercept + slope ‖x‖_t)`
    AffineSup { intercept: f64, slope: f64 },
    /// `scale · (a + b)`
    Sum {
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardForm {
    Zero,
    Const { value: f64 },
    /// `scale · a²`
    QuadraticAction {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · (a² − b²)`
    QuadraticDiff {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sign(a) sign(b)`
    SignProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub action_grid: GridSpec,
    pub action_grid_b: Option<GridSpec>,
    pub f: DriftForm,
    pub h: RewardForm,
    pub g1: TerminalForm,
    /// Growth constant of `f` and `h`.
    #[serde(rename = "K")]
    pub k: f64,
    /// Growth constant of `g₁`.
    #[serde(rename = "C")]
    pub c: f64,
    /// Fresh paths per policy evaluation; `solver.n_paths` when absent.
    pub eval_paths: Option<usize>,
    pub constants: Vec<f64>,
    pub random_candidates: usize,
    pub isaacs_tol: f64,
    pub pilot_samples: usize,
    pub pilot_z_range: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            action_grid: GridSpec::Uniform(UniformGrid { lo: -1.0, hi: 1.0, n: 21 }),
            action_grid_b: None,
            f: DriftForm::Linear { scale: 1.0 },
            h: RewardForm::Zero,
            g1: TerminalForm::XT { scale: 1.0 },
            k: 10.0,
            c: 10.0,
            eval_paths: None,
            constants: vec![-1.0, 0.0, 1.0],
            random_candidates: 10,
            isaacs_tol: crate::games::ISAACS_TOL,
            pilot_samples: 256,
            pilot_z_range: 10.0,
        }
    }
}

/// Problem document accepted by `control --problem` and `game --problem`:
/// model, grids, named forms and optional solver parameters in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub sigma: Option<SigmaForm>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default, rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub action_grid: Option<GridSpec>,
    #[serde(default)]
    pub action_grid_b: Option<GridSpec>,
    #[serde(default)]
    pub f: Option<DriftForm>,
    #[serde(default)]
    pub h: Option<RewardForm>,
    #[serde(default)]
    pub g1: Option<TerminalForm>,
    #[serde(default, rename = "K")]
    pub k: Option<f64>,
    #[serde(default, rename = "C")]
    pub c: Option<f64>,
    #[serde(default)]
    pub eval_paths: Option<usize>,
    #[serde(default)]
    pub constants: Option<Vec<f64>>,
    #[serde(default)]
    pub random_candidates: Option<usize>,
    #[serde(default)]
    pub solver: Option<SolverParams>,
}

impl ProblemFile {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.solver {
            cfg.solver = s;
        }
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.sigma, cfg.model.sigma);
        set!(self.x0, cfg.model.x0);
        set!(self.horizon, cfg.model.horizon);
        set!(self.n_steps, cfg.solver.n_steps);
        set!(self.action_grid, cfg.problem.action_grid);
        if self.action_grid_b.is_some() {
            cfg.problem.action_grid_b = self.action_grid_b;
        }
        set!(self.f, cfg.problem.f);
        set!(self.h, cfg.problem.h);
        set!(self.g1, cfg.problem.g1);
        set!(self.k, cfg.problem.k);
        set!(self.c, cfg.problem.c);
        if self.eval_paths.is_some() {
            cfg.problem.eval_paths = self.eval_paths;
        }
        set!(self.constants, cfg.problem.constants);
        set!(self.random_candidates, cfg.problem.random_candidates);
    }
}

pub(crate) fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn check(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(path, message))
    }
}

fn check_increasing(v: &[usize], path: &str, min_len: usize) -> Result<()> {
    check(v.len() >= min_len, path, &format!("needs at least {min_len} entries"))?;
    check(
        v.first().is_none_or(|&x| x >= 1) && v.windows(2).all(|w| w[1] > w[0]),
        path,
        "must be positive and strictly increasing",
    )
}

fn check_grid(g: &GridSpec, path: &str) -> Result<()> {
    if let GridSpec::Uniform(u) = g {
        check(u.n >= 1, &format!("{path}.n"), "must be at least 1")?;
        check(u.lo.is_finite() && u.hi.is_finite() && u.lo <= u.hi, path, "needs finite lo <= hi")?;
    }
    let p = g.points();
    check(!p.is_empty(), path, "must not be empty")?;
    check(p.iter().all(|v| v.is_finite()), path, "entries must be finite")
}

impl ExperimentConfig {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            seed: 0,
            out: None,
            threads: None,
            format: FormatFlags::default(),
            model: ModelSpec::default(),
            solver: SolverParams::default(),
            bsde: BsdeSpec::default(),
            diagnose: DiagnoseSpec::default(),
            problem: ProblemSpec::default(),
        }
    }

    /// Every check that can fail before computation starts, reported with the
    /// path of the offending field.
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.threads {
            check(t >= 1, "threads", "must be at least 1")?;
        }
        let m = &self.model;
        check(!m.x0.is_empty(), "model.x0", "must not be empty")?;
        check(m.x0.len() <= crate::driver::MAX_Z_DIM, "model.x0", "dimension too large")?;
        check(m.x0.iter().all(|v| v.is_finite()), "model.x0", "entries must be finite")?;
        check(m.horizon.is_finite() && m.horizon > 0.0, "model.T", "must be positive")?;
        match m.sigma {
            SigmaForm::Const { value } => check(value.is_finite() && value != 0.0, "model.sigma.value", "must be finite and non-zero")?,
            SigmaForm::Identity => {}
            SigmaForm::SupLinear { a, b } => {
                check(a.is_finite() && a > 0.0, "model.sigma.a", "must be positive")?;
                check(b.is_finite() && b >= 0.0, "model.sigma.b", "must be non-negative")?;
            }
        }
        let s = &self.solver;
        check(s.n_paths >= 2, "solver.n_paths", "must be at least 2")?;
        check(s.n_steps >= 1, "solver.n_steps", "must be at least 1")?;
        self.basis().validate().map_err(|e| config_err("solver.degree", e.to_string()))?;
        check(s.ridge >= 0.0 && s.ridge.is_finite(), "solver.ridge", "must be finite and non-negative")?;
        check(s.picard_max_iters >= 1, "solver.picard_max_iters", "must be at least 1")?;
        check(s.picard_tol > 0.0, "solver.picard_tol", "must be positive")?;
        check(s.q > 1.0 && s.q < 2.0, "solver.q", "must lie in (1, 2)")?;
        check(s.beta > 1.0 && s.beta < 2.0, "solver.beta", "must lie in (1, 2)")?;
        check(s.c >= 0.0 && s.c.is_finite(), "solver.C", "must be finite and non-negative")?;
        check(s.alpha > 0.0 && s.alpha < 2.0, "solver.alpha", "must lie in (0, 2)")?;
        check(s.tol > 0.0, "solver.tol", "must be positive")?;
        if matches!(self.command, CommandKind::Approx | CommandKind::Control | CommandKind::Game)
            || matches!(self.bsde.driver, DriverForm::Loggrowth { .. })
        {
            check_increasing(&s.schedule, "solver.schedule", 3)?;
        }
        if matches!(self.command, CommandKind::Solve | CommandKind::Approx | CommandKind::Diagnose) {
            super::forms::driver(&self.bsde.driver, m.x0.len()).map_err(|e| config_err("bsde.driver", e.to_string()))?;
            if self.command == CommandKind::Approx {
                check(
                    matches!(self.bsde.driver, DriverForm::Loggrowth { .. }),
                    "bsde.driver",
                    "approx needs a non-Lipschitz driver (loggrowth)",
                )?;
            }
        }
        if self.command == CommandKind::Diagnose {
            let d = &self.diagnose;
            check(d.samples >= 1, "diagnose.samples", "must be at least 1")?;
            check(!d.betas.is_empty(), "diagnose.betas", "must not be empty")?;
            check(d.betas.iter().all(|b| *b > 1.0 && *b <= 2.0), "diagnose.betas", "entries must lie in (1, 2]")?;
            check(d.range > 1e-6 && d.range.is_finite(), "diagnose.range", "must exceed 1e-6")?;
            check_increasing(&d.perturbations, "diagnose.perturbations", 2)?;
            check_increasing(&d.tracked_n, "diagnose.tracked_n", 1)?;
            check_increasing(&d.rho_schedule, "diagnose.rho_schedule", 2)?;
            check(d.p > 0.0, "diagnose.p", "must be positive")?;
        }
        if matches!(self.command, CommandKind::Control | CommandKind::Game) {
            let p = &self.problem;
            check_grid(&p.action_grid, "problem.action_grid")?;
            match (&p.action_grid_b, self.command) {
                (Some(g), CommandKind::Game) => check_grid(g, "problem.action_grid_b")?,
                (None, CommandKind::Game) => return Err(config_err("problem.action_grid_b", "a game needs a second grid")),
                (Some(_), _) => return Err(config_err("problem.action_grid_b", "only valid for game")),
                (None, _) => {}
            }
            check(p.k > 0.0, "problem.K", "must be positive")?;
            check(p.c > 0.0, "problem.C", "must be positive")?;
            if let Some(e) = p.eval_paths {
                check(e >= 2, "problem.eval_paths", "must be at least 2")?;
            }
            check(p.constants.iter().all(|v| v.is_finite()), "problem.constants", "entries must be finite")?;
            check(p.isaacs_tol >= 0.0, "problem.isaacs_tol", "must be non-negative")?;
            check(p.pilot_samples >= 1, "problem.pilot_samples", "must be at least 1")?;
            check(p.pilot_z_range > 0.0, "problem.pilot_z_range", "must be positive")?;
        }
        Ok(())
    }

    pub fn basis(&self) -> crate::solver::RegressionBasis {
        let mut b = crate::solver::RegressionBasis::polynomial(self.solver.degree).with_ridge(self.solver.ridge);
        if !self.solver.include_sup {
            b = b.without_sup();
        }
        b
    }

    pub fn picard(&self) -> crate::solver::PicardOptions {
        crate::solver::PicardOptions {
            max_iters: self.solver.picard_max_iters,
            tol: self.solver.picard_tol,
        }
    }

    /// SHA-256 of the config with `out` and `threads` cleared.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        c.threads = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
