//! Online tabular recurrent Q-learning on a single continuing trajectory.
//!
//! At each step the agent samples `a_t ~ pi(z_t)`, observes `(R_t, y_{t+1})`,
//! moves to `z_{t+1} = f(z_t, y_{t+1}, a_t)` and applies
//!
//! ```text
//! Q(z_t,a_t) += alpha_t (R_t + gamma max_a Q(z_{t+1}, a) - Q(z_t,a_t))
//! ```
//!
//! with a visit-count learning rate `alpha = 1 / (1 + N)^p`, where `N` counts
//! the earlier visits to `(z_t, a_t)` (`p = 1` is the harmonic schedule).

use serde::{Deserialize, Serialize};

use crate::agent_state::{AgentPolicy, AgentStateMachine};
use crate::chain::StationaryModel;
use crate::error::{Error, Result};
use crate::ipm::total_variation;
use crate::pomdp::{Pomdp, NULL_ACTION};
use crate::rng::{self, sample_index};
use crate::solvers::QTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateMode {
    /// `1 / (1 + N)`.
    Harmonic,
    /// `1 / (1 + N)^power` with `power` in `(0.5, 1]`.
    PowerLaw { power: f64 },
}

impl RateMode {
    #[inline]
    pub fn rate(&self, prior_visits: u64) -> f64 {
        let d = 1.0 + prior_visits as f64;
        match *self {
            RateMode::Harmonic => 1.0 / d,
            RateMode::PowerLaw { power } => d.powf(-power),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let RateMode::PowerLaw { power } = *self {
            if !(power > 0.5 && power <= 1.0) {
                return Err(Error::Config(format!("rate power {power} outside (0.5, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RqlConfig {
    pub steps: u64,
    pub rate: RateMode,
    /// Record the metrics every this many steps (0 disables periodic records).
    pub eval_every: u64,
    /// Extra steps at which the metrics are recorded.
    pub checkpoints: Vec<u64>,
    pub seed: u64,
    /// Keep every `(z, a, R, z')` for [`w2_diagnostic`].
    pub log_transitions: bool,
    /// Abort when `|Q|_inf` exceeds this multiple of `max|r| / (1 - gamma)`.
    pub divergence_factor: f64,
}

impl Default for RqlConfig {
    fn default() -> Self {
        RqlConfig {
            steps: 100_000,
            rate: RateMode::Harmonic,
            eval_every: 0,
            checkpoints: Vec::new(),
            seed: 0,
            log_transitions: false,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub z: u32,
    pub a: u32,
    pub reward: f64,
    pub next_z: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    /// `|Q - Q*_xi|_inf` over reachable pairs, when a reference was given.
    pub sup_gap: Option<f64>,
    /// Fraction of agent-state/action pairs visited at least once.
    pub visited_fraction: f64,
    /// TV distance between empirical visit frequencies and `xi(z, a)`.
    pub visit_tv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RqlRun {
    pub q: QTable,
    pub visit_counts: Vec<u64>,
    pub steps: u64,
    pub seed: u64,
    pub rate: RateMode,
    pub initial_value: f64,
    pub log: Vec<MetricRecord>,
    #[serde(skip)]
    pub transitions: Option<Vec<Transition>>,
}

impl RqlRun {
    pub fn visit_frequencies(&self) -> Vec<f64> {
        let total = self.steps.max(1) as f64;
        self.visit_counts.iter().map(|&n| n as f64 / total).collect()
    }

    pub fn gap_at(&self, step: u64) -> Option<f64> {
        self.log.iter().find(|r| r.step == step).and_then(|r| r.sup_gap)
    }
}

/// Starting value of every cell: 0 when `0` lies in the reward range,
/// otherwise the midpoint of the value range.
pub fn initial_value(p: &Pomdp) -> f64 {
    if p.r_min() <= 0.0 && 0.0 <= p.r_max() {
        0.0
    } else {
        0.5 * (p.r_min() + p.r_max()) / (1.0 - p.discount())
    }
}

/// Runs online RQL under a fixed exploration policy. `reference` (usually
/// `Q*_xi`) and `sm` only feed the metric log.
pub fn rql_train(
    p: &Pomdp,
    m: &AgentStateMachine,
    policy: &AgentPolicy,
    cfg: &RqlConfig,
    reference: Option<&QTable>,
    sm: Option<&StationaryModel>,
) -> Result<RqlRun> {
    m.check_compatible(p)?;
    policy.check_compatible(m)?;
    cfg.rate.validate()?;
    let (n_z, n_a) = (m.n_z(), p.n_actions());
    let gamma = p.discount();
    let q0 = initial_value(p);
    let mut q = QTable::filled(n_z, n_a, q0);
    let mut counts = vec![0u64; n_z * n_a];
    let limit = cfg.divergence_factor * p.r_max().abs().max(p.r_min().abs()).max(1e-12) / (1.0 - gamma);
    let mut log = Vec::new();
    let mut transitions = cfg.log_transitions.then(|| Vec::with_capacity(cfg.steps as usize));

    let record = |step: u64, q: &QTable, counts: &[u64]| -> MetricRecord {
        let visited = counts.iter().filter(|&&n| n > 0).count();
        let visit_tv = sm.map(|sm| {
            let freq: Vec<f64> = counts.iter().map(|&n| n as f64 / step.max(1) as f64).collect();
            total_variation(&freq, &sm.xi_za)
        });
        MetricRecord {
            step,
            sup_gap: reference.map(|r| r.sup_gap(q)),
            visited_fraction: visited as f64 / counts.len() as f64,
            visit_tv,
        }
    };

    let mut r = rng::seeded(cfg.seed);
    let (mut s, y) = p.reset(&mut r);
    let mut z = m.next(m.initial_z(), y, NULL_ACTION);
    for t in 1..=cfg.steps {
        let a = sample_index(policy.row(z), &mut r);
        let out = p.step(s, a, &mut r)?;
        let zp = m.next(z, out.observation, a);
        let cell = z * n_a + a;
        let alpha = cfg.rate.rate(counts[cell]);
        let v_next = q.greedy_value(zp);
        let old = q.get(z, a);
        let new = old + alpha * (out.reward + gamma * v_next - old);
        q.set(z, a, new);
        counts[cell] += 1;
        if !new.is_finite() || new.abs() > limit {
            return Err(Error::Divergence {
                step: t,
                magnitude: new.abs(),
                limit,
            });
        }
        if let Some(log) = transitions.as_mut() {
            log.push(Transition {
                z: z as u32,
                a: a as u32,
                reward: out.reward,
                next_z: zp as u32,
            });
        }
        s = out.next_state;
        z = zp;
        if (cfg.eval_every > 0 && t % cfg.eval_every == 0) || cfg.checkpoints.contains(&t) {
            log.push(record(t, &q, &counts));
        }
    }
    Ok(RqlRun {
        q,
        visit_counts: counts,
        steps: cfg.steps,
        seed: cfg.seed,
        rate: cfg.rate,
        initial_value: q0,
        log,
        transitions,
    })
}

/// Replays a transition log through the update rule; reproduces the run's
/// table exactly when the log is complete.
pub fn replay_updates(transitions: &[Transition], n_z: usize, n_a: usize, gamma: f64, rate: RateMode, q0: f64) -> QTable {
    let mut q = QTable::filled(n_z, n_a, q0);
    let mut counts = vec![0u64; n_z * n_a];
    for tr in transitions {
        let (z, a, zp) = (tr.z as usize, tr.a as usize, tr.next_z as usize);
        let alpha = rate.rate(counts[z * n_a + a]);
        let old = q.get(z, a);
        let target = tr.reward + gamma * q.greedy_value(zp);
        q.set(z, a, old + alpha * (target - old));
        counts[z * n_a + a] += 1;
    }
    q
}

/// Empirical mean of the one-step noise at one agent-state/action pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseAverage {
    pub z: usize,
    pub a: usize,
    pub visits: u64,
    pub mean: f64,
    pub std: f64,
}

impl NoiseAverage {
    /// `3 std / sqrt(n)`.
    pub fn clt_band(&self) -> f64 {
        3.0 * self.std / (self.visits as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W2Diagnostic {
    /// Visited pairs with positive stationary mass.
    pub pairs: Vec<NoiseAverage>,
    /// Pairs with positive stationary mass that the log never visits.
    pub unvisited: Vec<(usize, usize)>,
    /// Visited pairs outside the stationary support (start-up transients).
    pub transient: Vec<(usize, usize)>,
}

impl W2Diagnostic {
    pub fn max_abs_mean(&self) -> f64 {
        self.pairs.iter().map(|x| x.mean.abs()).fold(0.0, f64::max)
    }

    /// True when every visited pair lies inside its CLT band.
    pub fn within_clt(&self) -> bool {
        self.pairs.iter().all(|x| x.mean.abs() <= x.clt_band())
    }
}

/// Per-pair averages of
/// `R_k - r_xi(z,a) + gamma V*(z_{k+1}) - gamma sum_z' P_xi(z'|z,a) V*(z')`.
pub fn w2_diagnostic(transitions: &[Transition], q_xi: &QTable, sm: &StationaryModel) -> W2Diagnostic {
    let (n_z, n_a) = (sm.n_z, sm.n_a);
    let gamma = sm.discount;
    let v = q_xi.greedy_values();
    let expected: Vec<f64> = (0..n_z * n_a)
        .map(|i| {
            let (z, a) = (i / n_a, i % n_a);
            sm.r_xi(z, a) + gamma * sm.p_xi_row(z, a).iter().zip(&v).map(|(p, v)| p * v).sum::<f64>()
        })
        .collect();
    let mut n = vec![0u64; n_z * n_a];
    let mut sum = vec![0.0; n_z * n_a];
    let mut sum_sq = vec![0.0; n_z * n_a];
    for tr in transitions {
        let i = tr.z as usize * n_a + tr.a as usize;
        let x = tr.reward + gamma * v[tr.next_z as usize] - expected[i];
        n[i] += 1;
        sum[i] += x;
        sum_sq[i] += x * x;
    }
    let mut pairs = Vec::new();
    let mut unvisited = Vec::new();
    let mut transient = Vec::new();
    for i in 0..n_z * n_a {
        if !sm.is_reachable(i / n_a, i % n_a) {
            if n[i] > 0 {
                transient.push((i / n_a, i % n_a));
            }
            continue;
        }
        if n[i] == 0 {
            unvisited.push((i / n_a, i % n_a));
            continue;
        }
        let k = n[i] as f64;
        let mean = sum[i] / k;
        let var = (sum_sq[i] / k - mean * mean).max(0.0);
        pairs.push(NoiseAverage {
            z: i / n_a,
            a: i % n_a,
            visits: n[i],
            mean,
            std: var.sqrt(),
        });
    }
    W2Diagnostic {
        pairs,
        unvisited,
        transient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell(reward: f64, gamma: f64) -> Pomdp {
        Pomdp::new(vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], vec![vec![reward]], vec![1.0], gamma).unwrap()
    }

    #[test]
    fn harmonic_rate_values() {
        assert_eq!(RateMode::Harmonic.rate(0), 1.0);
        assert_eq!(RateMode::Harmonic.rate(3), 0.25);
        assert!(RateMode::PowerLaw { power: 0.5 }.validate().is_err());
        assert!(RateMode::PowerLaw { power: 0.7 }.validate().is_ok());
    }

    #[test]
    fn deterministic_chain_converges_to_geometric_value() {
        let p = single_cell(1.0, 0.5);
        let m = AgentStateMachine::trivial(1, 1);
        let cfg = RqlConfig {
            steps: 20_000,
            ..Default::default()
        };
        let run = rql_train(&p, &m, &AgentPolicy::uniform(1, 1), &cfg, None, None).unwrap();
        assert!((run.q.get(0, 0) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn zero_discount_gives_running_mean() {
        let p = Pomdp::new(
            vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
            vec![vec![vec![1.0]], vec![vec![1.0]]],
            vec![vec![1.0], vec![0.0]],
            vec![0.5, 0.5],
            0.0,
        )
        .unwrap();
        let m = AgentStateMachine::trivial(1, 1);
        let cfg = RqlConfig {
            steps: 1000,
            log_transitions: true,
            ..Default::default()
        };
        let run = rql_train(&p, &m, &AgentPolicy::uniform(1, 1), &cfg, None, None).unwrap();
        let log = run.transitions.as_ref().unwrap();
        let mean = log.iter().map(|t| t.reward).sum::<f64>() / log.len() as f64;
        assert!((run.q.get(0, 0) - mean).abs() < 1e-12);
    }

    #[test]
    fn replay_reproduces_the_run() {
        let p = single_cell(0.3, 0.9);
        let m = AgentStateMachine::trivial(1, 1);
        let cfg = RqlConfig {
            steps: 500,
            log_transitions: true,
            rate: RateMode::PowerLaw { power: 0.8 },
            ..Default::default()
        };
        let run = rql_train(&p, &m, &AgentPolicy::uniform(1, 1), &cfg, None, None).unwrap();
        let q = replay_updates(run.transitions.as_ref().unwrap(), 1, 1, 0.9, cfg.rate, run.initial_value);
        assert_eq!(q.values(), run.q.values());
    }
}
