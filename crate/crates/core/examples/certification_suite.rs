//! A small randomized certification suite: random instances, one- and
//! two-frame windows, TV and Wasserstein.

use rqlab::harness::{run_suite, ExperimentConfig};

pub fn run_example() -> rqlab::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.suite.instances = 5;
    cfg.bounds.t_dp = 30;
    let r = run_suite(&cfg);
    for row in &r.rows {
        println!(
            "{:<10} fs{} {:<11} |Z|={:<3} certified={} worst slack {:.3} rho {:.3} <= {:?}",
            row.instance,
            row.frame_stack,
            row.ipm.to_string(),
            row.n_z,
            row.certified,
            row.worst_slack,
            row.rho_exact,
            row.rho_bound
        );
    }
    println!("{}/{} certified, passed: {}", r.certified, r.jobs, r.passed);
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
