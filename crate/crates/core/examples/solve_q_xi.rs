//! The fixed point of the induced agent-state Bellman operator, reached by
//! value iteration and by policy iteration.

use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::two_state_drift;
use rqlab::solvers::{policy_iteration, solve_q_xi};
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(1, &p)?;
    let sm = analyze(&p, &m, &AgentPolicy::uniform(m.n_z(), p.n_actions()), &StationaryOptions::default())?;

    let vi = solve_q_xi(&sm, p.discount(), 1e-10);
    let pi = policy_iteration(&sm, p.discount());
    println!("value iteration: {} sweeps, error <= {:.1e}", vi.iterations, vi.certified_error);
    println!("|Q_vi - Q_pi| = {:.2e}", vi.table.sup_gap(&pi));
    for z in 0..m.n_z() {
        if sm.is_reachable(z, 0) {
            println!("  z={z}: Q={:?} greedy={}", pi.row(z), pi.greedy_action(z));
        }
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
