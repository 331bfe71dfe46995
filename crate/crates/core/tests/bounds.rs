use proptest::prelude::*;

use rqlab::bounds::*;
use rqlab::chain::{analyze, StationaryModel, StationaryOptions};
use rqlab::harness::instances::{generate_instance, two_state_drift, RandomInstanceSpec};
use rqlab::ipm::{IpmKind, IpmSpec};
use rqlab::pomdp::NULL_ACTION;
use rqlab::solvers::policy_iteration;
use rqlab::{AgentPolicy, AgentStateMachine, Pomdp};

fn setup(seed: u64, fs: usize) -> (Pomdp, AgentStateMachine, StationaryModel) {
    let p = generate_instance(&RandomInstanceSpec {
        seed,
        sparsity: 0.3,
        ..Default::default()
    })
    .unwrap();
    let m = AgentStateMachine::frame_stack(fs, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default()).unwrap();
    (p, m, sm)
}

/// Unnormalised `P(S_t = s, h_t)` for every positive-probability history,
/// grouped by depth, with the agent state of each history.
fn joint_weights(p: &Pomdp, m: &AgentStateMachine, depth: usize) -> Vec<Vec<(Vec<f64>, usize)>> {
    let (ns, na, ny) = (p.n_states(), p.n_actions(), p.n_obs());
    let mut levels = vec![Vec::new()];
    for y in 0..ny {
        let w: Vec<f64> = (0..ns)
            .map(|s| p.initial_state_dist()[s] * p.observation_prob(s, NULL_ACTION, y))
            .collect();
        if w.iter().sum::<f64>() > 0.0 {
            levels[0].push((w, m.next(m.initial_z(), y, NULL_ACTION)));
        }
    }
    for t in 1..depth {
        let mut next = Vec::new();
        for (w, z) in &levels[t - 1] {
            for a in 0..na {
                for y in 0..ny {
                    let wn: Vec<f64> = (0..ns)
                        .map(|sp| {
                            (0..ns).map(|s| w[s] * p.transition_prob(s, a, sp)).sum::<f64>()
                                * p.observation_prob(sp, a, y)
                        })
                        .collect();
                    if wn.iter().sum::<f64>() > 0.0 {
                        next.push((wn, m.next(*z, y, a)));
                    }
                }
            }
        }
        levels.push(next);
    }
    levels
}

/// `eps_t`, `delta_t` and the observation-level gaps by explicit sums over
/// `s`, `s'` and `y`.
fn oracle(p: &Pomdp, m: &AgentStateMachine, sm: &StationaryModel, spec: &IpmSpec, depth: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ns, na, ny) = (p.n_states(), p.n_actions(), p.n_obs());
    let mut eps = Vec::new();
    let mut delta = Vec::new();
    let mut obs_gap = Vec::new();
    for level in joint_weights(p, m, depth) {
        let (mut e, mut d, mut o) = (0.0f64, 0.0f64, 0.0f64);
        for (w, z) in &level {
            let total: f64 = w.iter().sum();
            for a in 0..na {
                let r: f64 = (0..ns).map(|s| w[s] * p.reward(s, a)).sum::<f64>() / total;
                e = e.max((r - sm.r_xi(*z, a)).abs());
                let mut law = vec![0.0; m.n_z()];
                let mut y_law = vec![0.0; ny];
                for s in 0..ns {
                    for sp in 0..ns {
                        for y in 0..ny {
                            let q = w[s] * p.transition_prob(s, a, sp) * p.observation_prob(sp, a, y) / total;
                            law[m.next(*z, y, a)] += q;
                            y_law[y] += q;
                        }
                    }
                }
                d = d.max(spec.distance(&law, sm.p_xi_row(*z, a)).unwrap());
                o = o.max(IpmSpec::tv(ny).distance(&y_law, sm.obs_pred_row(*z, a)).unwrap());
            }
        }
        eps.push(e);
        delta.push(d);
        obs_gap.push(o);
    }
    (eps, delta, obs_gap)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profiles_match_explicit_sums(seed in 0u64..1000, fs in 1usize..=2, was in any::<bool>()) {
        let (p, m, sm) = setup(seed, fs);
        let kind = if was { IpmKind::Wasserstein } else { IpmKind::Tv };
        let spec = agent_state_ipm(kind, &m).unwrap();
        let prof = epsilon_delta_profile(&p, &m, &sm, &spec, 3).unwrap();
        let (eps, delta, _) = oracle(&p, &m, &sm, &spec, 3);
        for t in 0..3 {
            prop_assert!((prof.epsilon.values[t] - eps[t]).abs() <= 1e-12, "eps_{}: {} vs {}", t + 1, prof.epsilon.values[t], eps[t]);
            prop_assert!((prof.delta.values[t] - delta[t]).abs() <= 1e-9, "delta_{}: {} vs {}", t + 1, prof.delta.values[t], delta[t]);
        }
    }

    #[test]
    fn observation_profile_matches_explicit_sums(seed in 0u64..1000) {
        let (p, m, sm) = setup(seed, 1);
        let spec = IpmSpec::tv(p.n_obs());
        let prof = delta_tilde_profile(&p, &m, &sm.obs_pred, &spec, 3).unwrap();
        let (_, _, obs) = oracle(&p, &m, &sm, &agent_state_ipm(IpmKind::Tv, &m).unwrap(), 3);
        for t in 0..3 {
            prop_assert!((prof.values[t] - obs[t]).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregates_are_monotone(
        x in prop::collection::vec(0.0f64..2.0, 1..8),
        bump in prop::collection::vec(0.0f64..1.0, 8),
        gamma in 0.0f64..0.99,
        tail in 0.0f64..3.0,
        extra in 0.0f64..1.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let ax = aggregate(&x, gamma, tail);
        let ay = aggregate(&y, gamma, tail + extra);
        for t in 0..x.len() {
            prop_assert!(ax.bar[t] <= ay.bar[t] + 1e-12);
            prop_assert!(ax.sup[t] <= ay.sup[t]);
            prop_assert!(ax.bar[t] <= ax.sup[t] + 1e-12);
        }
    }
}

#[test]
fn certificate_rhs_recomputes_from_its_parts() {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(2, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default()).unwrap();
    let q = policy_iteration(&sm, p.discount());
    let c = certify(&p, &m, &sm, &q, IpmKind::Tv, 2, 30, &CertifyOptions::default()).unwrap();
    assert!(c.all_certified());
    let g = c.gamma;
    for row in &c.rows {
        let rhs = (row.eps_bar + g * row.delta_bar * c.rho_value) / (1.0 - g);
        assert!((rhs - row.rhs).abs() <= 1e-12);
        assert!(row.worst_lhs <= row.rhs);
    }
    for ch in &c.checks {
        match ch.kind {
            CheckKind::Policy => assert!(ch.rhs >= 2.0 * c.rhs(ch.t) - 1e-12),
            _ => assert!((ch.rhs - c.rhs(ch.t)).abs() <= 1e-12),
        }
    }
}

#[test]
fn mmd_is_not_certifiable() {
    let (p, m, sm) = setup(1, 1);
    let q = policy_iteration(&sm, p.discount());
    assert!(certify(&p, &m, &sm, &q, IpmKind::Mmd, 2, 10, &CertifyOptions::default()).is_err());
}

#[test]
fn span_formula_for_unit_rewards() {
    assert!((span_bound(0.0, 1.0, 0.99) - 100.0).abs() <= 1e-9);
}
