//! Stationary law of the joint (state, observation, agent state, action)
//! chain under uniform exploration, and the induced agent-state model.

use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::two_state_drift;
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(2, &p)?;
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default())?;

    let st = &sm.stationary;
    println!(
        "{} agent states, {} recurrent class(es), unique: {}, residual {:.1e}",
        m.n_z(),
        st.recurrent_classes,
        st.unique,
        st.residual
    );
    for z in 0..m.n_z() {
        for a in 0..p.n_actions() {
            if !sm.is_reachable(z, a) {
                continue;
            }
            println!(
                "  z={z} a={a}: xi={:.4} r_xi={:.4} P_xi={:?}",
                sm.xi_za[z * p.n_actions() + a],
                sm.r_xi(z, a),
                sm.p_xi_row(z, a).iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
        }
    }
    for note in sm.notes() {
        println!("note: {note}");
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
