//! A short episodic run with sequence replay and learned reward and
//! observation predictors on the sparse corridor. Pass a step count as the
//! first argument for a longer run (the default configuration uses 1.5M).

use rqlab::ais::{model_gap, train_rql_ais, AisConfig};
use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::sparse_corridor;
use rqlab::{AgentPolicy, AgentStateMachine};

pub fn run_with(steps: u64) -> rqlab::Result<()> {
    let p = sparse_corridor();
    let m = AgentStateMachine::frame_stack(1, &p)?;
    let cfg = AisConfig {
        steps,
        eval_every: steps / 4,
        eps_decay: steps as f64 / 4.0,
        ..Default::default()
    };
    let run = train_rql_ais(&p, &m, &cfg)?;
    for l in &run.log {
        println!(
            "step {:>8}: return {:.3} +- {:.3}, reward loss {:.4}, obs loss {:.4}, eps {:.3}",
            l.step, l.return_mean, l.return_std, l.reward_loss, l.obs_loss, l.epsilon
        );
    }
    let sm = analyze(&p, &m, &AgentPolicy::uniform(m.n_z(), p.n_actions()), &StationaryOptions::default())?;
    let gap = model_gap(&run.params, &sm);
    println!(
        "{} updates over {} episodes; reward gap {:.2e}, obs TV {:.4}, drift violations {}",
        run.updates, run.episodes, gap.reward, gap.obs_tv, run.drift_violations
    );
    Ok(())
}

pub fn run_example() -> rqlab::Result<()> {
    run_with(20_000)
}

fn main() -> rqlab::Result<()> {
    match std::env::args().nth(1) {
        Some(s) => run_with(s.parse().map_err(|_| rqlab::Error::Config(format!("bad step count `{s}`")))?),
        None => run_example(),
    }
}
