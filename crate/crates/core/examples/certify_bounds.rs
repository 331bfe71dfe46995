//! Certifies the approximation bounds on the two-state drift problem with a
//! two-frame window, for TV and Wasserstein.

use rqlab::bounds::{certify, CertifyOptions};
use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::two_state_drift;
use rqlab::ipm::IpmKind;
use rqlab::solvers::policy_iteration;
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_example() -> rqlab::Result<()> {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(2, &p)?;
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default())?;
    let q = policy_iteration(&sm, p.discount());
    let opts = CertifyOptions {
        exploration: Some(pi),
        ..Default::default()
    };
    for kind in [IpmKind::Tv, IpmKind::Wasserstein] {
        let c = certify(&p, &m, &sm, &q, kind, 3, 40, &opts)?;
        println!("{kind}: rho(V) = {:.4}, bound {:?}", c.rho_value, c.rho_bound.value());
        for row in &c.rows {
            println!(
                "  t={} eps={:.4} delta={:.4} rhs={:.4} worst lhs={:.4} {:?}",
                row.t, row.epsilon, row.delta, row.rhs, row.worst_lhs, row.verdict
            );
        }
        println!(
            "  Q {}/{}  V {}/{}  policy {}/{} certified",
            c.q_check.certified, c.q_check.checked, c.v_check.certified, c.v_check.checked, c.policy_check.certified, c.policy_check.checked
        );
        assert!(c.all_certified());
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
