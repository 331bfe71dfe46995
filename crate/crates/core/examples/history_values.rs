//! Finite-horizon optimal values along every history of depth at most 3,
//! with the interval that must contain the infinite-horizon value.

use rqlab::harness::instances::two_state_drift;
use rqlab::solvers::solve_history_dp;
use rqlab::{AgentStateMachine, HistoryTree};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(2, &p)?;
    let tree = HistoryTree::enumerate(&p, &m, None, 3)?;
    let dp = solve_history_dp(&p, &m, &tree, 40, None)?;
    println!("{} histories, numerical error {:.1e}", tree.len(), dp.numerical_error);
    for i in tree.level(2) {
        let iv = dp.v_interval(i);
        println!("  {:<24} V_40 = {:.5}  V in [{:.5}, {:.5}]", tree.history_string(i), dp.v(i), iv.lo, iv.hi);
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
