//! Online recurrent Q-learning on one long trajectory, tracking the gap to
//! the induced fixed point.

use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::two_state_drift;
use rqlab::rql::{rql_train, RqlConfig};
use rqlab::solvers::policy_iteration;
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift().with_discount(0.6)?;
    let m = AgentStateMachine::frame_stack(2, &p)?;
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default())?;
    let q = policy_iteration(&sm, p.discount());
    let cfg = RqlConfig {
        steps: 100_000,
        checkpoints: vec![1_000, 10_000, 100_000],
        ..Default::default()
    };
    let run = rql_train(&p, &m, &pi, &cfg, Some(&q), Some(&sm))?;
    for r in &run.log {
        println!(
            "step {:>7}: |Q - Q*| = {:.4}, visit TV = {:.4}",
            r.step,
            r.sup_gap.unwrap_or(f64::NAN),
            r.visit_tv.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
