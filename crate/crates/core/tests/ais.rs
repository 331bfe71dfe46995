use proptest::prelude::*;
use rand::Rng as _;

use rqlab::ais::*;
use rqlab::harness::instances::{sparse_corridor, two_state_drift};
use rqlab::pomdp::NULL_ACTION;
use rqlab::rng;
use rqlab::solvers::QTable;
use rqlab::AgentStateMachine;

fn random_params(n_z: usize, n_a: usize, n_y: usize, lambda: f64, seed: u64) -> AisParameters {
    let mut r = rng::seeded(seed);
    let mut p = AisParameters::new(n_z, n_a, n_y, 0.3, lambda).unwrap();
    p.r_hat.iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0));
    p.obs_logits.iter_mut().for_each(|x| *x = r.gen_range(-2.0..2.0));
    p
}

fn random_batch(n_z: usize, n_a: usize, n_y: usize, len: usize, seed: u64) -> Vec<AisSample> {
    let mut r = rng::seeded(seed);
    (0..len)
        .map(|_| AisSample {
            z: r.gen_range(0..n_z),
            a: r.gen_range(0..n_a),
            reward: r.gen_range(-1.0..2.0),
            next_obs: r.gen_range(0..n_y),
            weight: r.gen_range(0.1..1.0),
        })
        .collect()
}

fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

/// Largest relative error between analytic gradients and a five-point
/// central stencil; entries where both are below `1e-8` are compared absolutely.
fn fd_error(params: &AisParameters, batch: &[AisSample]) -> f64 {
    let g = params.gradient(batch);
    let h = 1e-4;
    let stencil = |set: &dyn Fn(&mut AisParameters, f64)| {
        let at = |d: f64| {
            let mut q = params.clone();
            set(&mut q, d);
            q.loss(batch)
        };
        (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
    };
    let mut worst: f64 = 0.0;
    let mut compare = |an: f64, fd: f64| {
        let scale = an.abs().max(fd.abs());
        let err = if scale < 1e-8 { (an - fd).abs() } else { (an - fd).abs() / scale };
        worst = worst.max(err);
    };
    for i in 0..params.r_hat.len() {
        compare(g.r_hat[i], stencil(&|q, d| q.r_hat[i] += d));
    }
    for i in 0..params.obs_logits.len() {
        compare(g.obs_logits[i], stencil(&|q, d| q.obs_logits[i] += d));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplified_loss_identity(m in dist(5), p in dist(5)) {
        let lhs = expected_simplified_obs_loss(&m, &p) + p.iter().map(|x| x * x).sum::<f64>();
        let rhs: f64 = m.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..10_000, lambda in 0.0f64..1.0) {
        let params = random_params(3, 2, 4, lambda, seed);
        let batch = random_batch(3, 2, 4, 40, seed + 1);
        let err = fd_error(&params, &batch);
        prop_assert!(err < 1e-5, "relative error {}", err);
    }

    #[test]
    fn nstep_targets_match_literal_sum(
        seed in 0u64..10_000,
        n in 1usize..7,
        len in 1usize..12,
        gamma in 0.0f64..0.999,
    ) {
        let mut r = rng::seeded(seed);
        let (n_z, n_a) = (4, 3);
        let steps: Vec<Step> = (0..len)
            .map(|_| Step {
                action: r.gen_range(0..n_a),
                reward: r.gen_range(-1.0..1.0),
                next_obs: 0,
                done: r.gen::<f64>() < 0.1,
            })
            .collect();
        let states: Vec<usize> = (0..=len).map(|_| r.gen_range(0..n_z)).collect();
        let q = QTable::from_values(n_z, n_a, (0..n_z * n_a).map(|_| r.gen_range(-1.0..1.0)).collect());
        let qt = QTable::from_values(n_z, n_a, (0..n_z * n_a).map(|_| r.gen_range(-1.0..1.0)).collect());
        for k in 0..len {
            let m = n.min(len - k);
            let stop = (k..k + m).find(|&j| steps[j].done);
            let last = stop.map_or(k + m, |d| d + 1);
            let mut expect: f64 = (k..last).map(|j| gamma.powi((j - k) as i32) * steps[j].reward).sum();
            if stop.is_none() {
                let zb = states[k + m];
                let row = q.row(zb);
                let mut best = 0;
                for a in 1..n_a {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                expect += gamma.powi(m as i32) * qt.get(zb, best);
            }
            let got = nstep_target(&steps, &states, k, n, gamma, &q, &qt);
            prop_assert!((got - expect).abs() <= 1e-12, "k={} {} vs {}", k, got, expect);
        }
    }
}

#[test]
fn empirical_optimum_is_stationary() {
    let (n_z, n_a, n_y) = (2, 2, 3);
    let batch = random_batch(n_z, n_a, n_y, 400, 9);
    let mut params = AisParameters::new(n_z, n_a, n_y, 0.1, 0.5).unwrap();
    for z in 0..n_z {
        for a in 0..n_a {
            let rows: Vec<&AisSample> = batch.iter().filter(|s| s.z == z && s.a == a).collect();
            let w: f64 = rows.iter().map(|s| s.weight).sum();
            params.r_hat[z * n_a + a] = rows.iter().map(|s| s.weight * s.reward).sum::<f64>() / w;
            for y in 0..n_y {
                let py: f64 = rows.iter().filter(|s| s.next_obs == y).map(|s| s.weight).sum::<f64>() / w;
                params.obs_logits[(z * n_a + a) * n_y + y] = py.ln();
            }
        }
    }
    assert!(params.gradient(&batch).max_abs() < 1e-8);
}

#[test]
fn lambda_one_leaves_logits_bitwise() {
    let mut params = random_params(3, 2, 4, 1.0, 5);
    let before = params.obs_logits.clone();
    ais_update(&mut params, &random_batch(3, 2, 4, 64, 6)).unwrap();
    assert_eq!(params.obs_logits, before);
}

#[test]
fn q_tables_never_touch_ais_parameters() {
    let batch = random_batch(3, 2, 4, 32, 11);
    let steps: Vec<Step> = batch
        .iter()
        .map(|s| Step {
            action: s.a,
            reward: s.reward,
            next_obs: s.next_obs,
            done: false,
        })
        .collect();
    let states: Vec<usize> = batch.iter().map(|s| s.z).chain([0]).collect();
    let mut a = random_params(3, 2, 4, 0.5, 12);
    let mut b = a.clone();
    for (k, qv) in [0.0, 1e6].into_iter().enumerate() {
        let mut q = QTable::filled(3, 2, qv + k as f64);
        let qt = q.clone();
        let seg = Segment {
            steps: &steps,
            states: states.clone(),
            weight: 1.0,
        };
        nstep_q_update(&[seg], &mut q, &qt, 5, 0.9, 0.5);
        let target = if k == 0 { &mut a } else { &mut b };
        ais_update(target, &batch).unwrap();
    }
    assert_eq!(a, b);
}

fn buffer_with(priorities: &[f64], alpha: f64) -> ReplayBuffer {
    let mut b = ReplayBuffer::new(priorities.len(), alpha);
    for (i, &pr) in priorities.iter().enumerate() {
        let idx = b.push(ReplaySequence {
            episode: i as u64,
            initial_agent_state: 0,
            burn_in: Vec::new(),
            main: Vec::new(),
            main_start_state: 0,
            priority: 0.0,
        });
        b.set_priority(idx, pr);
    }
    b
}

#[test]
fn two_item_priorities() {
    let b = buffer_with(&[1.0, 3.0], 0.6);
    let p1 = 3f64.powf(0.6) / (1.0 + 3f64.powf(0.6));
    assert!((b.probability(1) - p1).abs() < 1e-15);
    assert!((b.probability(0) - 0.341).abs() < 1e-3);
    assert!((b.probability(1) - 0.659).abs() < 1e-3);
}

#[test]
fn zero_alpha_is_uniform() {
    let b = buffer_with(&[0.5, 4.0, 9.0], 0.0);
    for i in 0..3 {
        assert!((b.probability(i) - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn sampling_frequencies_follow_priorities() {
    let pr = [0.3, 1.0, 2.5, 0.05, 4.0, 1.7];
    let b = buffer_with(&pr, 0.6);
    let n = 100_000;
    let batch = b.sample(n, true, 0.4, &mut rng::seeded(3));
    let mut counts = [0usize; 6];
    for &i in &batch.indices {
        counts[i] += 1;
    }
    let total: f64 = pr.iter().map(|x: &f64| x.powf(0.6)).sum();
    for i in 0..6 {
        let p = pr[i].powf(0.6) / total;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[i] as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "item {i}: {} vs {}", counts[i], n as f64 * p);
    }
    assert_eq!(batch.weights.iter().copied().fold(0.0, f64::max), 1.0);
}

#[test]
fn burn_in_matches_unroll_from_episode_start() {
    let p = two_state_drift();
    let m = AgentStateMachine::frame_stack(3, &p).unwrap();
    let mut r = rng::seeded(4);
    let (mut s, y0) = p.reset(&mut r);
    let mut obs = vec![y0];
    let mut acts = Vec::new();
    let mut z = m.next(m.initial_z(), y0, NULL_ACTION);
    let mut c = SequenceCollector::new(5, 4);
    c.start_episode(0, z);
    let mut seqs = Vec::new();
    for _ in 0..37 {
        let a = r.gen_range(0..2);
        let out = p.step(s, a, &mut r).unwrap();
        z = m.next(z, out.observation, a);
        seqs.extend(c.push(
            Step {
                action: a,
                reward: out.reward,
                next_obs: out.observation,
                done: false,
            },
            z,
        ));
        obs.push(out.observation);
        acts.push(a);
        s = out.next_state;
    }
    seqs.extend(c.finish_episode());
    let mut start = 0;
    for seq in &seqs {
        let states = burn_in_unroll(seq, &m).expect("no drift");
        for (k, &zk) in states.iter().enumerate() {
            let t = start + k;
            assert_eq!(zk, m.unroll(&obs[..=t], &acts[..t]).unwrap());
        }
        start += seq.main.len();
    }
    assert_eq!(start, 37);
}

#[test]
fn short_training_run_is_reproducible() {
    let p = sparse_corridor();
    let m = AgentStateMachine::frame_stack(1, &p).unwrap();
    let cfg = AisConfig {
        steps: 6_000,
        warmup_steps: 500,
        eval_every: 2_000,
        batch_size: 16,
        seed: 7,
        ..Default::default()
    };
    let a = train_rql_ais(&p, &m, &cfg).unwrap();
    let b = train_rql_ais(&p, &m, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.drift_violations, 0);
    assert!(a.sequences_checked > 0);
    assert_eq!(a.log.len(), 3);
    assert_eq!(a.log[0].delta_tilde.len(), cfg.delta_tilde_depth);
    assert_eq!(a.per_check.len(), PER_CHECK_GROUPS);
}

#[test]
fn grouped_frequencies_follow_priorities() {
    let pr: Vec<f64> = (0..500).map(|i| 0.01 + (i % 37) as f64 * 0.3).collect();
    let b = buffer_with(&pr, 0.6);
    let bins = b.frequency_check(100_000, 20, &mut rng::seeded(8));
    assert_eq!(bins.iter().map(|x| x.items).sum::<usize>(), 500);
    assert_eq!(bins.iter().map(|x| x.observed).sum::<u64>(), 100_000);
    assert!((bins.iter().map(|x| x.expected).sum::<f64>() - 1e5).abs() < 1e-6);
    assert!(bins.iter().all(|x| x.z_score().abs() <= 3.0), "{bins:?}");
    // the same draws against a flattened law fail
    let flat = buffer_with(&pr, 0.0);
    let mut skewed = flat.frequency_check(100_000, 20, &mut rng::seeded(8));
    let heavy = b.frequency_check(100_000, 20, &mut rng::seeded(8));
    for (s, h) in skewed.iter_mut().zip(&heavy) {
        s.observed = h.observed;
    }
    assert!(skewed.iter().any(|x| x.z_score().abs() > 3.0));
}
