//! Sequence replay with burn-in prefixes and proportional prioritisation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent_state::AgentStateMachine;
use crate::rng::Rng;

/// One environment step as stored in the buffer: the action taken from the
/// current agent state, its reward, the next observation and whether the
/// episode ended with this step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: usize,
    pub reward: f64,
    pub next_obs: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaySequence {
    pub episode: u64,
    /// Agent state at the first burn-in step.
    pub initial_agent_state: usize,
    pub burn_in: Vec<Step>,
    pub main: Vec<Step>,
    /// Agent state at the first main step, as seen during collection.
    pub main_start_state: usize,
    pub priority: f64,
}

/// Agent states `z_0..z_L` along the main segment, rebuilt by folding the
/// update through the burn-in. Returns `None` when the rebuilt start state
/// differs from the one logged at collection time.
pub fn burn_in_unroll(seq: &ReplaySequence, m: &AgentStateMachine) -> Option<Vec<usize>> {
    let mut z = seq.initial_agent_state;
    for s in &seq.burn_in {
        z = m.next(z, s.next_obs, s.action);
    }
    if z != seq.main_start_state {
        return None;
    }
    let mut states = Vec::with_capacity(seq.main.len() + 1);
    states.push(z);
    for s in &seq.main {
        z = m.next(z, s.next_obs, s.action);
        states.push(z);
    }
    Some(states)
}

/// Cuts an episode into non-overlapping main segments of length `seq_len`,
/// each with up to `burn_in` preceding steps.
#[derive(Clone, Debug)]
pub struct SequenceCollector {
    seq_len: usize,
    burn_in: usize,
    episode: u64,
    steps: Vec<Step>,
    /// `states[k]` is the agent state before `steps[k]`.
    states: Vec<usize>,
    cut: usize,
}

impl SequenceCollector {
    pub fn new(seq_len: usize, burn_in: usize) -> Self {
        SequenceCollector {
            seq_len,
            burn_in,
            episode: 0,
            steps: Vec::new(),
            states: Vec::new(),
            cut: 0,
        }
    }

    pub fn start_episode(&mut self, episode: u64, z: usize) {
        self.episode = episode;
        self.steps.clear();
        self.states.clear();
        self.states.push(z);
        self.cut = 0;
    }

    /// Records a step taken from the current agent state; `next_z` is the
    /// state after it. Returns a sequence once `seq_len` steps accumulate.
    pub fn push(&mut self, step: Step, next_z: usize) -> Option<ReplaySequence> {
        self.steps.push(step);
        self.states.push(next_z);
        (self.steps.len() - self.cut == self.seq_len).then(|| self.emit())
    }

    /// Flushes a shorter final segment at the end of an episode.
    pub fn finish_episode(&mut self) -> Option<ReplaySequence> {
        (self.steps.len() > self.cut).then(|| self.emit())
    }

    fn emit(&mut self) -> ReplaySequence {
        let start = self.cut.saturating_sub(self.burn_in);
        let seq = ReplaySequence {
            episode: self.episode,
            initial_agent_state: self.states[start],
            burn_in: self.steps[start..self.cut].to_vec(),
            main: self.steps[self.cut..].to_vec(),
            main_start_state: self.states[self.cut],
            priority: 1.0,
        };
        self.cut = self.steps.len();
        seq
    }
}

/// Binary sum tree over leaf weights.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative weight interval contains `u` in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerConfig {
    pub enabled: bool,
    /// Priority exponent.
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Added to every refreshed priority so no sequence starves.
    pub min_priority: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        PerConfig {
            enabled: false,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            min_priority: 1e-6,
        }
    }
}

impl PerConfig {
    /// Linear anneal of the IS exponent over `progress` in `[0, 1]`.
    pub fn beta(&self, progress: f64) -> f64 {
        self.beta_start + (self.beta_end - self.beta_start) * progress.clamp(0.0, 1.0)
    }
}

/// Ring buffer of sequences with a sum tree over `priority^alpha`.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplaySequence>,
    next: usize,
    tree: SumTree,
    alpha: f64,
    max_priority: f64,
}

/// Observed and expected draw counts for a group of buffer items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBin {
    pub items: usize,
    pub expected: f64,
    pub observed: u64,
    /// Binomial standard deviation of the count.
    pub sigma: f64,
}

impl FrequencyBin {
    pub fn z_score(&self) -> f64 {
        if self.sigma > 0.0 {
            (self.observed as f64 - self.expected) / self.sigma
        } else if self.observed as f64 == self.expected {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            alpha,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &ReplaySequence {
        &self.items[i]
    }

    /// Inserts with the largest priority seen so far, overwriting the oldest
    /// sequence when full.
    pub fn push(&mut self, mut seq: ReplaySequence) -> usize {
        seq.priority = self.max_priority;
        let i = if self.items.len() < self.capacity {
            self.items.push(seq);
            self.items.len() - 1
        } else {
            let i = self.next;
            self.items[i] = seq;
            i
        };
        self.next = (i + 1) % self.capacity;
        self.tree.set(i, self.max_priority.powf(self.alpha));
        i
    }

    pub fn set_priority(&mut self, i: usize, priority: f64) {
        self.items[i].priority = priority;
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(i, priority.powf(self.alpha));
    }

    /// `P(i) = priority_i^alpha / sum_j priority_j^alpha`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Draws `n` indices with replacement. Prioritised draws carry IS
    /// weights `(N P(i))^-beta` scaled by the batch maximum; uniform draws
    /// carry weight 1.
    pub fn sample(&self, n: usize, prioritized: bool, beta: f64, rng: &mut Rng) -> SampledBatch {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        let len = self.items.len();
        if !prioritized {
            return SampledBatch {
                indices: (0..n).map(|_| rng.gen_range(0..len)).collect(),
                weights: vec![1.0; n],
            };
        }
        let total = self.tree.total();
        let indices: Vec<usize> = (0..n)
            .map(|_| {
                let u = rng.gen::<f64>() * total;
                self.tree.find(u).min(len - 1)
            })
            .collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (len as f64 * self.probability(i)).powf(-beta))
            .collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        SampledBatch {
            indices,
            weights: raw.iter().map(|w| w / max).collect(),
        }
    }
}

impl ReplayBuffer {
    /// Draws `n` prioritised indices and tallies them in `groups` bins of
    /// items ordered by priority, against the `priority^alpha` law.
    pub fn frequency_check(&self, n: usize, groups: usize, rng: &mut Rng) -> Vec<FrequencyBin> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.tree.get(a).total_cmp(&self.tree.get(b)).then(a.cmp(&b)));
        let groups = groups.clamp(1, order.len().max(1));
        let mut bin_of = vec![0usize; self.len()];
        for (rank, &i) in order.iter().enumerate() {
            bin_of[i] = rank * groups / order.len();
        }
        let mut mass = vec![0.0; groups];
        let mut items = vec![0usize; groups];
        for i in 0..self.len() {
            mass[bin_of[i]] += self.probability(i);
            items[bin_of[i]] += 1;
        }
        let mut observed = vec![0u64; groups];
        for i in self.sample(n, true, 0.0, rng).indices {
            observed[bin_of[i]] += 1;
        }
        let n = n as f64;
        (0..groups)
            .map(|g| {
                let p = mass[g].min(1.0);
                FrequencyBin {
                    items: items[g],
                    expected: n * p,
                    observed: observed[g],
                    sigma: (n * p * (1.0 - p)).sqrt(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn step(a: usize, y: usize) -> Step {
        Step {
            action: a,
            reward: 0.0,
            next_obs: y,
            done: false,
        }
    }

    fn dummy(i: usize) -> ReplaySequence {
        ReplaySequence {
            episode: i as u64,
            initial_agent_state: 0,
            burn_in: vec![],
            main: vec![step(0, 0)],
            main_start_state: 0,
            priority: 1.0,
        }
    }

    #[test]
    fn sum_tree_finds_intervals() {
        let mut t = SumTree::new(3);
        t.set(0, 1.0);
        t.set(1, 3.0);
        t.set(2, 0.0);
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(3.99), 1);
    }

    #[test]
    fn two_priorities_law() {
        let mut b = ReplayBuffer::new(4, 0.6);
        b.push(dummy(0));
        b.push(dummy(1));
        b.set_priority(0, 1.0);
        b.set_priority(1, 3.0);
        let p1 = 3f64.powf(0.6) / (1.0 + 3f64.powf(0.6));
        assert!((b.probability(1) - p1).abs() < 1e-15);
        assert!((b.probability(0) - 0.341).abs() < 5e-4);
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut b = ReplayBuffer::new(8, 0.6);
        for i in 0..5 {
            b.push(dummy(i));
        }
        let batch = b.sample(64, true, 0.4, &mut rng::seeded(1));
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(2, 0.6);
        for i in 0..3 {
            b.push(dummy(i));
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0).episode, 2);
    }

    #[test]
    fn collector_cuts_and_unrolls() {
        let p = crate::harness::instances::two_state_drift();
        let m = AgentStateMachine::frame_stack(2, &p).unwrap();
        let mut c = SequenceCollector::new(3, 2);
        let mut z = m.next(m.initial_z(), 1, 0);
        c.start_episode(0, z);
        let mut seqs = Vec::new();
        for k in 0..7 {
            let (a, y) = (k % 2, (k / 2) % 2);
            let zn = m.next(z, y, a);
            seqs.extend(c.push(step(a, y), zn));
            z = zn;
        }
        seqs.extend(c.finish_episode());
        assert_eq!(seqs.iter().map(|s| s.main.len()).collect::<Vec<_>>(), vec![3, 3, 1]);
        assert!(seqs[0].burn_in.is_empty());
        assert_eq!(seqs[1].burn_in.len(), 2);
        for s in &seqs {
            assert!(burn_in_unroll(s, &m).is_some());
        }
        let mut bad = seqs[1].clone();
        bad.main_start_state = (bad.main_start_state + 1) % m.n_z();
        assert!(burn_in_unroll(&bad, &m).is_none());
    }
}
