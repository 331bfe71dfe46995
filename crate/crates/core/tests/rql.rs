use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::{fully_observed3, two_state_drift, two_state_drift_with_noise};
use rqlab::rql::*;
use rqlab::solvers::policy_iteration;
use rqlab::{AgentPolicy, AgentStateMachine, Pomdp};

fn drift(gamma: f64) -> Pomdp {
    two_state_drift().with_discount(gamma).unwrap()
}

#[test]
fn replaying_the_log_reproduces_the_table() {
    let p = drift(0.6);
    let m = AgentStateMachine::frame_stack(2, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    for rate in [RateMode::Harmonic, RateMode::PowerLaw { power: 0.7 }] {
        let cfg = RqlConfig {
            steps: 20_000,
            rate,
            seed: 3,
            log_transitions: true,
            ..Default::default()
        };
        let run = rql_train(&p, &m, &pi, &cfg, None, None).unwrap();
        let log = run.transitions.as_ref().unwrap();
        assert_eq!(log.len(), 20_000);
        let q = replay_updates(log, m.n_z(), p.n_actions(), p.discount(), rate, run.initial_value);
        assert_eq!(q.values(), run.q.values());
        let visits: u64 = run.visit_counts.iter().sum();
        assert_eq!(visits, 20_000);
    }
}

#[test]
fn noise_averages_vanish_under_the_matching_model() {
    let p = drift(0.6);
    let m = AgentStateMachine::frame_stack(2, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default()).unwrap();
    let q = policy_iteration(&sm, p.discount());
    let cfg = RqlConfig {
        steps: 400_000,
        seed: 11,
        log_transitions: true,
        ..Default::default()
    };
    let run = rql_train(&p, &m, &pi, &cfg, Some(&q), Some(&sm)).unwrap();
    let log = run.transitions.as_ref().unwrap();
    let diag = w2_diagnostic(log, &q, &sm);
    assert!(diag.within_clt(), "{:?}", diag.pairs);
    assert!(diag.max_abs_mean() < 0.02);
    assert!(diag.unvisited.is_empty());
    assert!(!diag.transient.is_empty());

    // the same log against the induced model of a noisier sensor
    let noisy = two_state_drift_with_noise(0.45).unwrap().with_discount(0.6).unwrap();
    let other = analyze(&noisy, &m, &pi, &StationaryOptions::default()).unwrap();
    let diag = w2_diagnostic(log, &policy_iteration(&other, p.discount()), &other);
    assert!(!diag.within_clt());
}

#[test]
fn fully_observed_run_approaches_state_values() {
    let p = fully_observed3();
    let m = AgentStateMachine::frame_stack(1, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default()).unwrap();
    let q = policy_iteration(&sm, p.discount());
    let cfg = RqlConfig {
        steps: 200_000,
        rate: RateMode::PowerLaw { power: 0.6 },
        checkpoints: vec![1_000, 200_000],
        ..Default::default()
    };
    let run = rql_train(&p, &m, &pi, &cfg, Some(&q), Some(&sm)).unwrap();
    let early = run.gap_at(1_000).unwrap();
    let late = run.gap_at(200_000).unwrap();
    assert!(late < early);
    assert!(late < 0.3, "gap {late}");
    assert!(run.log[1].visit_tv.unwrap() < 0.01);
    assert_eq!(run.log[1].visited_fraction, sm.xi_za.iter().filter(|&&x| x > 0.0).count() as f64 / sm.xi_za.len() as f64);
}

#[test]
fn runaway_values_abort() {
    let p = drift(0.6);
    let m = AgentStateMachine::frame_stack(1, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let cfg = RqlConfig {
        steps: 1_000,
        divergence_factor: 0.01,
        ..Default::default()
    };
    assert!(matches!(rql_train(&p, &m, &pi, &cfg, None, None), Err(rqlab::Error::Divergence { .. })));
}
