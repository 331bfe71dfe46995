#[allow(dead_code)]
#[path = "../examples/certification_suite.rs"]
mod certification_suite;

#[allow(dead_code)]
#[path = "../examples/certify_bounds.rs"]
mod certify_bounds;

#[allow(dead_code)]
#[path = "../examples/custom_machine.rs"]
mod custom_machine;

#[allow(dead_code)]
#[path = "../examples/experiment_config.rs"]
mod experiment_config;

#[allow(dead_code)]
#[path = "../examples/history_values.rs"]
mod history_values;

#[allow(dead_code)]
#[path = "../examples/instances.rs"]
mod instances;

#[allow(dead_code)]
#[path = "../examples/ipm_distances.rs"]
mod ipm_distances;

#[allow(dead_code)]
#[path = "../examples/online_rql.rs"]
mod online_rql;

#[allow(dead_code)]
#[path = "../examples/replay_and_targets.rs"]
mod replay_and_targets;

#[allow(dead_code)]
#[path = "../examples/rql_ais_corridor.rs"]
mod rql_ais_corridor;

#[allow(dead_code)]
#[path = "../examples/solve_q_xi.rs"]
mod solve_q_xi;

#[allow(dead_code)]
#[path = "../examples/stationary_analysis.rs"]
mod stationary_analysis;


#[test]
fn certification_suite_runs() {
    certification_suite::run_example().unwrap();
}

#[test]
fn certify_bounds_runs() {
    certify_bounds::run_example().unwrap();
}

#[test]
fn custom_machine_runs() {
    custom_machine::run_example().unwrap();
}

#[test]
fn experiment_config_runs() {
    experiment_config::run_example().unwrap();
}

#[test]
fn history_values_runs() {
    history_values::run_example().unwrap();
}

#[test]
fn instances_runs() {
    instances::run_example().unwrap();
}

#[test]
fn ipm_distances_runs() {
    ipm_distances::run_example().unwrap();
}

#[test]
fn online_rql_runs() {
    online_rql::run_example().unwrap();
}

#[test]
fn replay_and_targets_runs() {
    replay_and_targets::run_example().unwrap();
}

#[test]
fn rql_ais_corridor_runs() {
    rql_ais_corridor::run_example().unwrap();
}

#[test]
fn solve_q_xi_runs() {
    solve_q_xi::run_example().unwrap();
}

#[test]
fn stationary_analysis_runs() {
    stationary_analysis::run_example().unwrap();
}
