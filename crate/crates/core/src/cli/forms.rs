//! Named-form registry: turns config forms into library objects.

use std::sync::Arc;

use super::config::{DriftForm, DriverForm, ExperimentConfig, ModelSpec, RewardForm, SigmaForm, TerminalForm};
use crate::control::{ControlProblem, PairFn, PairScalarFn};
use crate::driver::DriverSpec;
use crate::error::Result;
use crate::games::GameProblem;
use crate::paths::{ForwardModel, PathFn, PathView};
use crate::solver::TerminalCondition;

pub fn model(spec: &ModelSpec) -> Result<ForwardModel> {
    let x0 = spec.x0.clone();
    match spec.sigma {
        SigmaForm::Const { value } => ForwardModel::constant(x0, value),
        SigmaForm::Identity => ForwardModel::constant(x0, 1.0),
        SigmaForm::SupLinear { a, b } => {
            let m = x0.len();
            let sigma: PathFn = Arc::new(move |v: &PathView<'_>, out: &mut [f64]| {
                let s = a + b * v.running_sup();
                out.fill(0.0);
                for i in 0..m {
                    out[i * m + i] = s;
                }
            });
            Ok(ForwardModel::new(x0, sigma)?.with_lipschitz(a.max(b)))
        }
    }
}

pub fn driver(form: &DriverForm, z_dim: usize) -> Result<DriverSpec> {
    match *form {
        DriverForm::Zero => DriverSpec::zero(z_dim),
        DriverForm::LinearY { a } => DriverSpec::linear_y(a, z_dim),
        DriverForm::LinearZ { b } => DriverSpec::linear_z(b, z_dim),
        DriverForm::Loggrowth { c0 } => DriverSpec::loggrowth(c0, z_dim),
    }
}

pub fn terminal(form: &TerminalForm, moment_constant: f64) -> TerminalCondition {
    let t = match *form {
        TerminalForm::XT { scale } => TerminalCondition::x_terminal(scale),
        TerminalForm::Const { value } => TerminalCondition::constant(value),
        TerminalForm::Sup { scale } => {
            TerminalCondition::new(format!("{scale}*sup|x|"), Arc::new(move |v: &PathView<'_>| scale * v.running_sup()))
        }
    };
    t.with_moment_constant(moment_constant)
}

pub fn drift(form: &DriftForm) -> PairFn {
    match *form {
        DriftForm::Zero => Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
        DriftForm::Linear { scale } => Arc::new(move |_, a, _, out: &mut [f64]| out.fill(scale * a)),
        DriftForm::AffineSup { intercept, slope } => Arc::new(move |v: &PathView<'_>, a, _, out: &mut [f64]| {
            out.fill(a * (intercept + slope * v.running_sup()))
        }),
        DriftForm::Sum { scale } => Arc::new(move |_, a, b, out: &mut [f64]| out.fill(scale * (a + b))),
    }
}

pub fn reward(form: &RewardForm) -> PairScalarFn {
    match *form {
        RewardForm::Zero => Arc::new(|_, _, _| 0.0),
        RewardForm::Const { value } => Arc::new(move |_, _, _| value),
        RewardForm::QuadraticAction { scale } => Arc::new(move |_, a, _| scale * a * a),
        RewardForm::QuadraticDiff { scale } => Arc::new(move |_, a, b| scale * (a * a - b * b)),
        RewardForm::SignProduct => Arc::new(|_, a: f64, b: f64| sign(a) * sign(b)),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn state_free(cfg: &ExperimentConfig) -> bool {
    !matches!(cfg.model.sigma, SigmaForm::SupLinear { .. }) && !matches!(cfg.problem.f, DriftForm::AffineSup { .. })
}

pub fn control_problem(cfg: &ExperimentConfig) -> Result<ControlProblem> {
    let p = &cfg.problem;
    let f = drift(&p.f);
    let h = reward(&p.h);
    let mut out = ControlProblem::new(
        "config",
        model(&cfg.model)?,
        p.action_grid.points(),
        Arc::new(move |v, a, o| f(v, a, 0.0, o)),
        Arc::new(move |v, a| h(v, a, 0.0)),
        terminal(&p.g1, cfg.solver.c),
    )?
    .with_constants(p.k, p.c);
    if state_free(cfg) {
        out = out.state_independent();
    }
    Ok(out)
}

pub fn game_problem(cfg: &ExperimentConfig) -> Result<GameProblem> {
    let p = &cfg.problem;
    let b = p.action_grid_b.as_ref().map(|g| g.points()).unwrap_or_else(|| vec![0.0]);
    let mut out = GameProblem::new(
        "config",
        model(&cfg.model)?,
        p.action_grid.points(),
        b,
        drift(&p.f),
        reward(&p.h),
        terminal(&p.g1, cfg.solver.c),
    )?
    .with_constants(p.k, p.c);
    if state_free(cfg) {
        out = out.state_independent();
    }
    Ok(out)
}
