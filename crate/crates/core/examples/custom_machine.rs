//! A hand-written agent-state machine: a two-state controller that
//! remembers whether the last two observations agreed.

use rqlab::agent_state::MachineFile;
use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::two_state_drift;
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift();
    // z = 2 * last observation + (1 if it repeated); z = 4 is the start
    let mut update = vec![vec![vec![0usize; p.n_actions()]; p.n_obs()]; 5];
    for z in 0..5 {
        for y in 0..p.n_obs() {
            let repeated = z < 4 && z / 2 == y;
            update[z][y] = vec![2 * y + repeated as usize; p.n_actions()];
        }
    }
    let m = AgentStateMachine::from_file(MachineFile {
        n_z: 5,
        initial_z: 4,
        update,
        metric: None,
    })?;
    println!("z after y = [0, 0, 1]: {}", m.unroll(&[0, 0, 1], &[0, 0])?);
    let sm = analyze(&p, &m, &AgentPolicy::uniform(m.n_z(), p.n_actions()), &StationaryOptions::default())?;
    for (z, mass) in sm.xi_z().iter().enumerate() {
        println!("  xi(z={z}) = {mass:.4}");
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
