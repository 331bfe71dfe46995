//! Load the bundled instances, validate a malformed one and simulate a few
//! steps of the two-state drift problem.

use rqlab::harness::instances::{canonical, generate_instance, RandomInstanceSpec, CANONICAL_NAMES};
use rqlab::pomdp::PomdpFile;

pub fn run_example() -> rqlab::Result<()> {
    for name in CANONICAL_NAMES {
        let p = canonical(name)?;
        println!(
            "{name}: |S|={} |Y|={} |A|={} gamma={} rewards in [{}, {}]",
            p.n_states(),
            p.n_obs(),
            p.n_actions(),
            p.discount(),
            p.r_min(),
            p.r_max()
        );
    }

    let p = generate_instance(&RandomInstanceSpec {
        seed: 42,
        ..Default::default()
    })?;
    println!("random-42: |S|={} |Y|={}", p.n_states(), p.n_obs());

    // rows that do not sum to one are reported rather than normalised
    let mut file = PomdpFile::from(&canonical("two-state-drift")?);
    file.transition[0][1] = vec![0.7, 0.7];
    let report = file.into_pomdp_unchecked()?.validate();
    println!("malformed copy valid: {}", report.is_ok());
    assert!(!report.is_ok());

    let traj = canonical("two-state-drift")?.simulate(8, 1, |t, _y, _r| t % 2)?;
    for s in &traj.steps {
        println!("  s={} y={} a={} r={}", s.state, s.observation, s.action, s.reward);
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
