use std::process::Command;

use rqlab::harness::{run, run_suite, ExperimentConfig, InstanceSource, Mode};
use rqlab::Pomdp;

fn suite_config(instances: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str("mode = \"suite\"").unwrap();
    cfg.suite.instances = instances;
    cfg.bounds.t_dp = 25;
    cfg
}

#[test]
fn empty_suite_passes() {
    let r = run_suite(&suite_config(0));
    assert_eq!(r.jobs, 0);
    assert!(r.passed);
}

#[test]
fn reducible_instance_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reducible.json");
    // two absorbing states, told apart by the observation
    let p = Pomdp::new(
        vec![vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2]],
        vec![vec![vec![0.9, 0.1]; 2], vec![vec![0.1, 0.9]; 2]],
        vec![vec![0.0, 0.2], vec![1.0, 0.5]],
        vec![0.5, 0.5],
        0.9,
    )
    .unwrap();
    std::fs::write(&path, p.to_json_string().unwrap()).unwrap();
    let mut cfg = suite_config(2);
    cfg.suite.extra = vec![InstanceSource::File { path: path.clone() }];
    let r = run_suite(&cfg);
    assert_eq!(r.jobs, 3 * 2 * 2);
    let flagged: Vec<_> = r.rows.iter().filter(|row| row.instance == path.display().to_string()).collect();
    assert_eq!(flagged.len(), 4);
    assert!(flagged.iter().all(|row| !row.unique_stationary && row.error.is_empty()));
    assert_eq!(r.non_unique, 4);
    assert!(r.rows.iter().filter(|row| !flagged.contains(row)).all(|row| row.unique_stationary));
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
        mode = "bounds"
        [instance]
        kind = "canonical"
        name = "two-state-drift"
        [representation]
        kind = "frame-stack"
        n = 2
        [bounds]
        t_dp = 20
        "#,
    )
    .unwrap();
    let read = |dir: &std::path::Path| {
        let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.into_iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let mut outputs = Vec::new();
    for mode in [Mode::Bounds, Mode::Bounds, Mode::Solve] {
        let dir = tempfile::tempdir().unwrap();
        cfg.mode = mode;
        cfg.out = Some(dir.path().to_path_buf());
        let out = run(&cfg).unwrap();
        assert!(out.passed);
        outputs.push(read(dir.path()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[0].is_empty());
    assert_ne!(outputs[0], outputs[2]);
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = suite_config(7);
    cfg.seeds = vec![3, 4];
    cfg.gamma = Some(0.8);
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

fn rqlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rqlab")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let (code, stdout) = rqlab(&["validate", "--instance", "fully-observed-3"]);
    assert_eq!(code, 0);
    assert!(!stdout.is_empty());
    assert_eq!(rqlab(&["analyze", "--instance", "two-state-drift", "--repr", "fs2"]).0, 0);
    assert_eq!(rqlab(&["analyze", "--repr", "fs0"]).0, 2);
    assert_eq!(rqlab(&["bounds", "--gamma", "1.5"]).0, 2);
    assert_eq!(rqlab(&["solve", "--instance", "/nonexistent/instance.json"]).0, 1);
    assert_eq!(rqlab(&["no-such-command"]).0, 2);

    let (code, stdout) = rqlab(&["ipm", "--ipm", "wasserstein", "--metric", "line", "--mu", "1,0,0", "--nu", "0,0,1"]);
    assert_eq!(code, 0);
    assert!(stdout.contains(": 2"), "{stdout}");
    assert_eq!(rqlab(&["ipm", "--mu", "1,0", "--nu", "0,0,1"]).0, 2);
}

#[test]
fn per_seed_artifacts_do_not_depend_on_the_other_seeds() {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
        mode = "train-rql-ais"
        seeds = [0, 1]
        [instance]
        kind = "canonical"
        name = "sparse-corridor"
        [rql_ais]
        steps = 4000
        warmup_steps = 500
        eval_every = 2000
        batch_size = 16
        "#,
    )
    .unwrap();
    let both = tempfile::tempdir().unwrap();
    cfg.out = Some(both.path().to_path_buf());
    run(&cfg).unwrap();
    let alone = tempfile::tempdir().unwrap();
    cfg.seeds = vec![0];
    cfg.out = Some(alone.path().to_path_buf());
    run(&cfg).unwrap();
    for name in ["rql_ais_seed0.csv", "rql_ais_seed0.json"] {
        assert_eq!(
            std::fs::read(both.path().join(name)).unwrap(),
            std::fs::read(alone.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
