use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{ais_update, AisParameters, AisSample};
use super::nstep::{nstep_q_update, Segment};
use super::replay::{burn_in_unroll, FrequencyBin, PerConfig, ReplayBuffer, SequenceCollector, Step};
use super::epsilon_at;
use crate::agent_state::{AgentStateMachine, HistoryTree};
use crate::bounds::delta_tilde_on_tree;
use crate::chain::StationaryModel;
use crate::error::{Error, Result};
use crate::ipm::{total_variation, IpmSpec};
use crate::pomdp::{Pomdp, NULL_ACTION};
use crate::rng::{self, Rng};
use crate::solvers::QTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AisConfig {
    /// Environment steps.
    pub steps: u64,
    pub seed: u64,
    pub lambda: f64,
    pub seq_len: usize,
    pub burn_in: usize,
    pub n_step: usize,
    pub batch_size: usize,
    /// Updates between target-table syncs.
    pub target_sync: u64,
    /// Environment steps between updates.
    pub update_every: u64,
    pub q_lr: f64,
    pub ais_lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: f64,
    pub per: PerConfig,
    /// Sequences kept in the buffer.
    pub buffer_capacity: usize,
    /// Environment steps before the first update.
    pub warmup_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub max_episode_len: usize,
    /// History depth of the logged `delta~` profile (0 disables it).
    pub delta_tilde_depth: usize,
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig {
            steps: 1_500_000,
            seed: 0,
            lambda: 0.5,
            seq_len: 10,
            burn_in: 50,
            n_step: 5,
            batch_size: 256,
            target_sync: 100,
            update_every: 10,
            q_lr: 0.1,
            ais_lr: 0.5,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay: 400_000.0,
            per: PerConfig {
                enabled: true,
                ..PerConfig::default()
            },
            buffer_capacity: 20_000,
            warmup_steps: 2_560,
            eval_every: 5_000,
            eval_episodes: 10,
            max_episode_len: 200,
            delta_tilde_depth: 3,
        }
    }
}

impl AisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.seq_len == 0 || self.n_step == 0 || self.batch_size == 0 {
            return bad("seq_len, n_step and batch_size must be positive");
        }
        if self.update_every == 0 || self.target_sync == 0 || self.buffer_capacity == 0 {
            return bad("update_every, target_sync and buffer_capacity must be positive");
        }
        if self.max_episode_len == 0 || self.eval_episodes == 0 {
            return bad("max_episode_len and eval_episodes must be positive");
        }
        if !(self.q_lr > 0.0 && self.q_lr <= 1.0) {
            return bad("q_lr must lie in (0, 1]");
        }
        if !(self.eps_decay > 0.0) || !(0.0..=1.0).contains(&self.eps_end) || !(0.0..=1.0).contains(&self.eps_start) {
            return bad("invalid epsilon schedule");
        }
        if !(self.per.alpha >= 0.0) || !(0.0..=1.0).contains(&self.per.beta_start) || !(0.0..=1.0).contains(&self.per.beta_end) {
            return bad("invalid PER exponents");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean discounted return.
    pub mean: f64,
    pub std: f64,
    pub success_rate: f64,
}

/// Greedy episodes with respect to `q`, at most `max_len` steps each.
/// Success means the episode reached a terminal state.
pub fn evaluate_greedy(
    p: &Pomdp,
    m: &AgentStateMachine,
    q: &QTable,
    episodes: usize,
    max_len: usize,
    rng: &mut Rng,
) -> Result<EvalResult> {
    let gamma = p.discount();
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0;
    for _ in 0..episodes {
        let (mut s, y) = p.reset(rng);
        let mut z = m.next(m.initial_z(), y, NULL_ACTION);
        let (mut g, mut disc) = (0.0, 1.0);
        for _ in 0..max_len {
            let a = q.greedy_action(z);
            let done = p.is_terminal(s);
            let out = p.step(s, a, rng)?;
            g += disc * out.reward;
            disc *= gamma;
            if done {
                successes += 1;
                break;
            }
            s = out.next_state;
            z = m.next(z, out.observation, a);
        }
        returns.push(g);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalResult {
        mean,
        std: var.sqrt(),
        success_rate: successes as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisLogRecord {
    pub step: u64,
    pub episodes: u64,
    pub updates: u64,
    pub return_mean: f64,
    pub return_std: f64,
    /// Means over the updates since the previous record.
    pub reward_loss: f64,
    pub obs_loss: f64,
    pub mean_abs_td: f64,
    pub epsilon: f64,
    pub buffer_size: usize,
    /// `delta~_t` (TV over observations) of the current predictor.
    pub delta_tilde: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisRun {
    pub q: QTable,
    pub params: AisParameters,
    pub log: Vec<AisLogRecord>,
    pub updates: u64,
    pub episodes: u64,
    /// Replayed sequences whose burn-in reconstruction missed the logged state.
    pub drift_violations: u64,
    pub sequences_checked: u64,
    pub final_eval: EvalResult,
    /// First logged step where the observation loss fell halfway from its
    /// first to its last logged value.
    pub loss_drop_step: Option<u64>,
    /// First logged step where the return rose halfway.
    pub return_rise_step: Option<u64>,
    /// Sampling frequencies of the final buffer against its priority law
    /// (prioritised runs only).
    pub per_check: Vec<FrequencyBin>,
}

/// Draws used for the end-of-run sampling check.
pub const PER_CHECK_DRAWS: usize = 100_000;
/// Priority-ordered groups in that check.
pub const PER_CHECK_GROUPS: usize = 10;

fn halfway_step(log: &[AisLogRecord], value: impl Fn(&AisLogRecord) -> f64, falling: bool) -> Option<u64> {
    let first = value(log.first()?);
    let last = value(log.last()?);
    let mid = 0.5 * (first + last);
    log.iter()
        .find(|r| if falling { value(r) <= mid } else { value(r) >= mid })
        .map(|r| r.step)
}

/// Runs the collect / sample / fit / Q-update loop.
pub fn train_rql_ais(p: &Pomdp, m: &AgentStateMachine, cfg: &AisConfig) -> Result<AisRun> {
    cfg.validate()?;
    m.check_compatible(p)?;
    let (n_z, n_a, n_y) = (m.n_z(), p.n_actions(), p.n_obs());
    let gamma = p.discount();
    let mut env_rng = rng::derive(cfg.seed, 0);
    let mut replay_rng = rng::derive(cfg.seed, 1);
    let mut eval_rng = rng::derive(cfg.seed, 2);

    let mut q = QTable::filled(n_z, n_a, 0.0);
    let mut q_target = q.clone();
    let mut params = AisParameters::new(n_z, n_a, n_y, cfg.ais_lr, cfg.lambda)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.per.alpha);
    let mut collector = SequenceCollector::new(cfg.seq_len, cfg.burn_in);
    let tree = if cfg.delta_tilde_depth > 0 {
        Some(HistoryTree::enumerate(p, m, None, cfg.delta_tilde_depth)?)
    } else {
        None
    };
    let obs_tv = IpmSpec::tv(n_y);

    let mut log = Vec::new();
    let (mut t, mut updates, mut episodes) = (0u64, 0u64, 0u64);
    let (mut drift_violations, mut sequences_checked) = (0u64, 0u64);
    let (mut acc_r, mut acc_o, mut acc_td, mut acc_n) = (0.0, 0.0, 0.0, 0u64);

    while t < cfg.steps {
        let (mut s, y) = p.reset(&mut env_rng);
        let mut z = m.next(m.initial_z(), y, NULL_ACTION);
        collector.start_episode(episodes, z);
        episodes += 1;
        for _ in 0..cfg.max_episode_len {
            let eps = epsilon_at(t, cfg.eps_start, cfg.eps_end, cfg.eps_decay);
            let a = if env_rng.gen::<f64>() < eps {
                env_rng.gen_range(0..n_a)
            } else {
                q.greedy_action(z)
            };
            let done = p.is_terminal(s);
            let out = p.step(s, a, &mut env_rng)?;
            let zp = m.next(z, out.observation, a);
            let step = Step {
                action: a,
                reward: out.reward,
                next_obs: out.observation,
                done,
            };
            if let Some(seq) = collector.push(step, zp) {
                buffer.push(seq);
            }
            t += 1;

            if t >= cfg.warmup_steps && t % cfg.update_every == 0 && !buffer.is_empty() {
                let beta = cfg.per.beta(t as f64 / cfg.steps as f64);
                let batch = buffer.sample(cfg.batch_size, cfg.per.enabled, beta, &mut replay_rng);
                let mut segments = Vec::with_capacity(batch.indices.len());
                let mut samples = Vec::new();
                for (&i, &w) in batch.indices.iter().zip(&batch.weights) {
                    let seq = buffer.get(i);
                    sequences_checked += 1;
                    let Some(states) = burn_in_unroll(seq, m) else {
                        drift_violations += 1;
                        continue;
                    };
                    for (k, st) in seq.main.iter().enumerate() {
                        samples.push(AisSample {
                            z: states[k],
                            a: st.action,
                            reward: st.reward,
                            next_obs: st.next_obs,
                            weight: w,
                        });
                    }
                    segments.push(Segment {
                        steps: &seq.main,
                        states,
                        weight: w,
                    });
                }
                let ais = ais_update(&mut params, &samples)?;
                let td = nstep_q_update(&segments, &mut q, &q_target, cfg.n_step, gamma, cfg.q_lr);
                if q.values().iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("Q table at step {t}")));
                }
                drop(segments);
                if cfg.per.enabled {
                    for (&i, &e) in batch.indices.iter().zip(&td.mean_abs_td) {
                        buffer.set_priority(i, e + cfg.per.min_priority);
                    }
                }
                updates += 1;
                if updates % cfg.target_sync == 0 {
                    q_target = q.clone();
                }
                acc_r += ais.reward_loss;
                acc_o += ais.obs_loss;
                acc_td += td.batch_mean_abs_td;
                acc_n += 1;
            }

            if cfg.eval_every > 0 && t % cfg.eval_every == 0 {
                let ev = evaluate_greedy(p, m, &q, cfg.eval_episodes, cfg.max_episode_len, &mut eval_rng)?;
                let delta_tilde = match &tree {
                    Some(tr) => delta_tilde_on_tree(p, &params.predictor_table(), &obs_tv, tr)?.values,
                    None => Vec::new(),
                };
                let k = acc_n.max(1) as f64;
                log.push(AisLogRecord {
                    step: t,
                    episodes,
                    updates,
                    return_mean: ev.mean,
                    return_std: ev.std,
                    reward_loss: acc_r / k,
                    obs_loss: acc_o / k,
                    mean_abs_td: acc_td / k,
                    epsilon: epsilon_at(t, cfg.eps_start, cfg.eps_end, cfg.eps_decay),
                    buffer_size: buffer.len(),
                    delta_tilde,
                });
                (acc_r, acc_o, acc_td, acc_n) = (0.0, 0.0, 0.0, 0);
            }
            if done || t >= cfg.steps {
                break;
            }
            s = out.next_state;
            z = zp;
        }
        if let Some(seq) = collector.finish_episode() {
            buffer.push(seq);
        }
    }
    let final_eval = evaluate_greedy(p, m, &q, cfg.eval_episodes, cfg.max_episode_len, &mut eval_rng)?;
    let per_check = if cfg.per.enabled && !buffer.is_empty() {
        buffer.frequency_check(PER_CHECK_DRAWS, PER_CHECK_GROUPS, &mut rng::derive(cfg.seed, 3))
    } else {
        Vec::new()
    };
    let learning_log: Vec<AisLogRecord> = log.iter().filter(|r| r.updates > 0).cloned().collect();
    Ok(AisRun {
        loss_drop_step: halfway_step(&learning_log, |r| r.obs_loss, true),
        return_rise_step: halfway_step(&learning_log, |r| r.return_mean, false),
        q,
        params,
        log,
        updates,
        episodes,
        drift_violations,
        sequences_checked,
        final_eval,
        per_check,
    })
}

/// Largest differences between learned predictors and the induced model
/// over reachable agent-state/action pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGap {
    pub reward: f64,
    pub obs_tv: f64,
    pub pairs: usize,
}

pub fn model_gap(params: &AisParameters, sm: &StationaryModel) -> ModelGap {
    let mut gap = ModelGap {
        reward: 0.0,
        obs_tv: 0.0,
        pairs: 0,
    };
    for z in 0..sm.n_z {
        for a in 0..sm.n_a {
            if !sm.is_reachable(z, a) {
                continue;
            }
            gap.pairs += 1;
            gap.reward = gap.reward.max((params.reward(z, a) - sm.r_xi(z, a)).abs());
            gap.obs_tv = gap.obs_tv.max(total_variation(&params.predictor(z, a), sm.obs_pred_row(z, a)));
        }
    }
    gap
}
