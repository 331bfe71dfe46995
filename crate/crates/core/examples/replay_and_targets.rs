//! Prioritized sequence replay and n-step double-Q targets on hand-made data.

use rqlab::ais::{nstep_target, ReplayBuffer, ReplaySequence, Step};
use rqlab::rng;
use rqlab::solvers::QTable;

pub fn run_example() -> rqlab::Result<()> {
    let mut buf = ReplayBuffer::new(4, 0.6);
    for (i, pr) in [1.0, 3.0, 0.5, 2.0].into_iter().enumerate() {
        let idx = buf.push(ReplaySequence {
            episode: i as u64,
            initial_agent_state: 0,
            burn_in: Vec::new(),
            main: Vec::new(),
            main_start_state: 0,
            priority: 0.0,
        });
        buf.set_priority(idx, pr);
    }
    for i in 0..buf.len() {
        println!("item {i}: P = {:.4}", buf.probability(i));
    }
    let batch = buf.sample(8, true, 0.4, &mut rng::seeded(0));
    println!("sampled {:?}", batch.indices);
    println!("weights {:?}", batch.weights.iter().map(|w| (w * 1e3).round() / 1e3).collect::<Vec<_>>());

    let steps: Vec<Step> = [0.0, 0.0, 1.0]
        .into_iter()
        .map(|reward| Step {
            action: 1,
            reward,
            next_obs: 0,
            done: false,
        })
        .collect();
    let states = [0, 1, 2, 3];
    let q = QTable::from_values(4, 2, vec![0.0, 0.1, 0.0, 0.2, 0.0, 0.5, 0.3, 0.9]);
    let target = QTable::filled(4, 2, 1.0);
    for n in 1..=3 {
        println!("{n}-step target from t=0: {:.4}", nstep_target(&steps, &states, 0, n, 0.9, &q, &target));
    }
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
