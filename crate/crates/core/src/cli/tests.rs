use super::*;

fn small(kind: CommandKind, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.solver.n_paths = 1500;
    cfg.solver.n_steps = 8;
    cfg.out = Some(dir.display().to_string());
    cfg
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn config_round_trips() {
    let mut cfg = ExperimentConfig::new(CommandKind::Game);
    cfg.problem.action_grid_b = Some(GridSpec::Points(vec![-0.5, 0.5]));
    cfg.bsde.driver = DriverForm::Loggrowth { c0: 0.25 };
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.fingerprint(), cfg.fingerprint());
}

#[test]
fn unknown_keys_report_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"command": "solve", "model": {"sigmaa": 1}}"#).unwrap();
    match read_json::<ExperimentConfig>(&p) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "model.sigmaa"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fingerprint_ignores_out_and_threads() {
    let a = ExperimentConfig::new(CommandKind::Solve);
    let mut b = a.clone();
    b.out = Some("elsewhere".into());
    b.threads = Some(3);
    assert_eq!(a.fingerprint(), b.fingerprint());
    b.seed = 1;
    assert_ne!(a.fingerprint(), b.fingerprint());
    assert_eq!(a.fingerprint().len(), 64);
}

#[test]
fn named_forms_parse() {
    assert_eq!(DriverForm::parse("loggrowth:0.5").unwrap(), DriverForm::Loggrowth { c0: 0.5 });
    assert_eq!(DriverForm::parse("zero").unwrap(), DriverForm::Zero);
    assert!(DriverForm::parse("cubic").is_err());
    assert_eq!(TerminalForm::parse("x_T:3", "xi").unwrap(), TerminalForm::XT { scale: 3.0 });
    assert!(matches!(Suite::parse("all"), Ok(Suite::All)));
    assert!(Suite::parse("everything").is_err());
}

#[test]
fn flags_override_config() {
    let cli = Cli::try_parse_from([
        "lbsde", "approx", "--driver", "loggrowth:0.5", "--schedule", "4,8,16", "--seed", "9", "--paths", "100",
    ])
    .unwrap();
    let cfg = resolve(&cli).unwrap();
    assert_eq!(cfg.command, CommandKind::Approx);
    assert_eq!(cfg.solver.schedule, vec![4, 8, 16]);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.solver.n_paths, 100);
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"command": "game"}"#).unwrap();
    let cli = Cli::try_parse_from(["lbsde", "solve", "--config", p.to_str().unwrap()]).unwrap();
    assert!(matches!(resolve(&cli), Err(Error::Config { .. })));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ok");
    let args = ["lbsde", "solve", "--paths", "500", "--steps", "4", "--out", out.to_str().unwrap()];
    assert_eq!(main_with_args(args), 0);
    assert_eq!(main_with_args(["lbsde", "solve", "--driver", "cubic"]), 2);
    assert_eq!(main_with_args(["lbsde", "nope"]), 2);
    let p = dir.path().join("pennies.json");
    std::fs::write(
        &p,
        r#"{"action_grid": [-1, 1], "action_grid_b": [-1, 1], "f": {"name": "zero"}, "h": {"name": "sign_product"}}"#,
    )
    .unwrap();
    let out = dir.path().join("pennies");
    let args = ["lbsde", "game", "--problem", p.to_str().unwrap(), "--paths", "500", "--steps", "4", "--out", out.to_str().unwrap()];
    assert_eq!(main_with_args(args), 1);
    assert!(out.join("isaacs.csv").exists());
}

#[test]
fn run_writes_resolved_config_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(CommandKind::Solve, dir.path());
    cfg.format.binary = true;
    let m = run(&cfg).unwrap();
    assert!(m.pass);
    assert_eq!(m.outputs, ["config.json", "result.json", "solution.csv", "solution.bin", "manifest.json"]);
    let back: ExperimentConfig = serde_json::from_slice(&read(dir.path(), "config.json")).unwrap();
    assert_eq!(back, cfg);
    let manifest: RunManifest = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest.fingerprint, cfg.fingerprint());
}

#[test]
fn outputs_do_not_depend_on_threads() {
    for kind in [CommandKind::Solve, CommandKind::Approx, CommandKind::Diagnose, CommandKind::Control, CommandKind::Game] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = small(kind, a.path());
        if kind == CommandKind::Approx {
            ca.bsde.driver = DriverForm::Loggrowth { c0: 0.5 };
            ca.solver.schedule = vec![4, 8, 16];
        }
        if kind == CommandKind::Diagnose {
            ca.diagnose.suite = Suite::All;
            ca.diagnose.samples = 70_000;
        }
        if kind == CommandKind::Game {
            ca.problem.action_grid = GridSpec::Points(vec![-0.5, 0.5]);
            ca.problem.action_grid_b = Some(GridSpec::Points(vec![-0.5, 0.5]));
            ca.problem.f = DriftForm::Sum { scale: 1.0 };
            ca.problem.eval_paths = Some(1000);
        }
        if kind == CommandKind::Control {
            ca.problem.random_candidates = 2;
            ca.problem.eval_paths = Some(1000);
        }
        ca.threads = Some(1);
        let mut cb = ca.clone();
        cb.threads = Some(3);
        cb.out = Some(b.path().display().to_string());
        let ma = run(&ca).unwrap();
        run(&cb).unwrap();
        for name in ma.outputs.iter().filter(|n| *n != "manifest.json" && *n != "config.json") {
            assert_eq!(read(a.path(), name), read(b.path(), name), "{kind:?} {name}");
        }
    }
}
