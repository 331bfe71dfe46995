//! Finite agent-state machines `z_t = f(z_{t-1}, y_t, a_{t-1})` and the
//! history trees they compress.
//!
//! Histories are written `h_t = (y_1, a_1, ..., a_{t-1}, y_t)`. The first
//! update uses the null action: `z_1 = f(z_0, y_1, NULL_ACTION)`.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::{Belief, Pomdp, NULL_ACTION};

pub const DEFAULT_SIZE_CAP: usize = 1_000_000;

const METRIC_TOL: f64 = 1e-9;

/// Window bookkeeping for frame-stacking machines.
#[derive(Clone, Debug, PartialEq)]
struct FrameStack {
    window: usize,
    /// Fill level (number of stored observations) of each state.
    fill: Vec<usize>,
    /// First index of each fill level.
    offsets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentStateMachine {
    n_z: usize,
    n_obs: usize,
    n_actions: usize,
    initial_z: usize,
    update: Vec<usize>,
    metric: Option<Vec<f64>>,
    frame: Option<FrameStack>,
}

/// On-disk JSON layout of a machine; `update[z][y][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineFile {
    pub n_z: usize,
    pub initial_z: usize,
    pub update: Vec<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
}

fn check_metric(d: &[f64], n: usize) -> Result<()> {
    if d.len() != n * n {
        return Err(Error::InvalidMetric(format!("expected {n}x{n} matrix")));
    }
    for i in 0..n {
        if d[i * n + i].abs() > METRIC_TOL {
            return Err(Error::InvalidMetric(format!("d({i},{i}) = {}", d[i * n + i])));
        }
        for j in 0..n {
            let x = d[i * n + j];
            if !x.is_finite() || x < -METRIC_TOL {
                return Err(Error::InvalidMetric(format!("d({i},{j}) = {x}")));
            }
            if (x - d[j * n + i]).abs() > METRIC_TOL {
                return Err(Error::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if d[i * n + j] > d[i * n + k] + d[k * n + j] + METRIC_TOL {
                    return Err(Error::InvalidMetric(format!(
                        "triangle inequality fails for ({i},{k},{j})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Checks the metric axioms on a row-major `n x n` matrix.
pub fn validate_metric(d: &[f64], n: usize) -> Result<()> {
    check_metric(d, n)
}

impl AgentStateMachine {
    /// Builds a machine from a flat update table indexed `(z * n_obs + y) * n_actions + a`.
    pub fn new(
        n_z: usize,
        n_obs: usize,
        n_actions: usize,
        initial_z: usize,
        update: Vec<usize>,
        metric: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_z == 0 || n_obs == 0 || n_actions == 0 {
            return Err(Error::InvalidMachine("empty dimension".into()));
        }
        if initial_z >= n_z {
            return Err(Error::InvalidMachine(format!("initial_z {initial_z} >= n_z {n_z}")));
        }
        if update.len() != n_z * n_obs * n_actions {
            return Err(Error::InvalidMachine(format!(
                "update table has {} entries, expected {}",
                update.len(),
                n_z * n_obs * n_actions
            )));
        }
        if let Some(bad) = update.iter().find(|&&z| z >= n_z) {
            return Err(Error::InvalidMachine(format!("update entry {bad} >= n_z {n_z}")));
        }
        if let Some(d) = &metric {
            check_metric(d, n_z)?;
        }
        Ok(AgentStateMachine {
            n_z,
            n_obs,
            n_actions,
            initial_z,
            update,
            metric,
            frame: None,
        })
    }

    /// The memoryless machine with a single agent state.
    pub fn trivial(n_obs: usize, n_actions: usize) -> Self {
        AgentStateMachine::new(1, n_obs, n_actions, 0, vec![0; n_obs * n_actions], None)
            .expect("trivial machine is valid")
    }

    pub fn from_file(file: MachineFile) -> Result<Self> {
        let n_obs = file.update.first().map_or(0, |m| m.len());
        let n_actions = file
            .update
            .first()
            .and_then(|m| m.first())
            .map_or(0, |r| r.len());
        if file.update.len() != file.n_z
            || file
                .update
                .iter()
                .any(|m| m.len() != n_obs || m.iter().any(|r| r.len() != n_actions))
        {
            return Err(Error::InvalidMachine("update must be n_z x n_obs x n_actions".into()));
        }
        let flat: Vec<usize> = file.update.iter().flatten().flatten().copied().collect();
        let metric = file.metric.map(|m| m.concat());
        AgentStateMachine::new(file.n_z, n_obs, n_actions, file.initial_z, flat, metric)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> MachineFile {
        MachineFile {
            n_z: self.n_z,
            initial_z: self.initial_z,
            update: (0..self.n_z)
                .map(|z| {
                    (0..self.n_obs)
                        .map(|y| (0..self.n_actions).map(|a| self.next(z, y, a)).collect())
                        .collect()
                })
                .collect(),
            metric: self
                .metric
                .as_ref()
                .map(|d| d.chunks(self.n_z).map(|r| r.to_vec()).collect()),
        }
    }

    /// Frame-stacking over the last `n` observations and `n - 1` actions,
    /// with an explicit pad state for the empty window.
    ///
    /// States are grouped by fill level `k = 0..=n`; a level-`k` state
    /// stores `k` observations and `k - 1` actions, oldest first.
    pub fn frame_stack(n: usize, p: &Pomdp) -> Result<Self> {
        Self::frame_stack_with_cap(n, p.n_obs(), p.n_actions(), DEFAULT_SIZE_CAP)
    }

    pub fn frame_stack_with_cap(n: usize, n_obs: usize, n_actions: usize, cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMachine("frame-stack window must be at least 1".into()));
        }
        let mut offsets = vec![0usize, 1];
        let mut level_size = 1usize;
        for k in 1..=n {
            let size = if k == 1 {
                n_obs
            } else {
                level_size
                    .checked_mul(n_obs)
                    .and_then(|x| x.checked_mul(n_actions))
                    .ok_or(Error::SizeCap {
                        what: "frame-stack states",
                        depth: k,
                        limit: cap,
                    })?
            };
            level_size = size;
            let next = offsets[k].checked_add(size).filter(|&t| t <= cap).ok_or(Error::SizeCap {
                what: "frame-stack states",
                depth: k,
                limit: cap,
            })?;
            offsets.push(next);
        }
        let n_z = offsets[n + 1];
        let mut fill = vec![0usize; n_z];
        for k in 1..=n {
            for f in fill.iter_mut().take(offsets[k + 1]).skip(offsets[k]) {
                *f = k;
            }
        }
        let frame = FrameStack {
            window: n,
            fill,
            offsets,
        };
        let mut update = vec![0usize; n_z * n_obs * n_actions];
        for z in 0..n_z {
            let (obs, acts) = frame.decode(z, n_obs, n_actions);
            for y in 0..n_obs {
                for a in 0..n_actions {
                    let (mut o, mut ac) = (obs.clone(), acts.clone());
                    if !o.is_empty() {
                        ac.push(a);
                    }
                    o.push(y);
                    if o.len() > n {
                        o.remove(0);
                        ac.remove(0);
                    }
                    update[(z * n_obs + y) * n_actions + a] = frame.encode(&o, &ac, n_obs, n_actions);
                }
            }
        }
        let mut m = AgentStateMachine::new(n_z, n_obs, n_actions, 0, update, None)?;
        m.frame = Some(frame);
        Ok(m)
    }

    pub fn with_metric(mut self, metric: Vec<f64>) -> Result<Self> {
        check_metric(&metric, self.n_z)?;
        self.metric = Some(metric);
        Ok(self)
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn initial_z(&self) -> usize {
        self.initial_z
    }

    #[inline]
    pub fn next(&self, z: usize, y: usize, a: usize) -> usize {
        self.update[(z * self.n_obs + y) * self.n_actions + a]
    }

    /// Metric on Z; the discrete metric when none was supplied.
    pub fn distance(&self, z: usize, w: usize) -> f64 {
        match &self.metric {
            Some(d) => d[z * self.n_z + w],
            None => f64::from(u8::from(z != w)),
        }
    }

    pub fn metric_matrix(&self) -> Vec<f64> {
        match &self.metric {
            Some(d) => d.clone(),
            None => (0..self.n_z * self.n_z)
                .map(|k| f64::from(u8::from(k / self.n_z != k % self.n_z)))
                .collect(),
        }
    }

    pub fn has_explicit_metric(&self) -> bool {
        self.metric.is_some()
    }

    /// Frame-stack window length, if this is a frame-stacking machine.
    pub fn window(&self) -> Option<usize> {
        self.frame.as_ref().map(|f| f.window)
    }

    /// True unless `z` is a partially filled frame-stack window.
    pub fn is_filled(&self, z: usize) -> bool {
        self.frame.as_ref().map_or(true, |f| f.fill[z] == f.window)
    }

    /// Observations and actions stored in a frame-stack state, oldest first.
    pub fn decode_window(&self, z: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        self.frame
            .as_ref()
            .map(|f| f.decode(z, self.n_obs, self.n_actions))
    }

    pub fn check_compatible(&self, p: &Pomdp) -> Result<()> {
        if self.n_obs != p.n_obs() || self.n_actions != p.n_actions() {
            return Err(Error::InvalidMachine(format!(
                "machine expects |Y|={}, |A|={} but POMDP has |Y|={}, |A|={}",
                self.n_obs,
                self.n_actions,
                p.n_obs(),
                p.n_actions()
            )));
        }
        Ok(())
    }

    /// Agent state after the history `(y_1, a_1, ..., a_{t-1}, y_t)`.
    ///
    /// `actions` holds `a_1..a_{t-1}`; the empty history maps to `z_0`.
    pub fn unroll(&self, observations: &[usize], actions: &[usize]) -> Result<usize> {
        if observations.is_empty() {
            if !actions.is_empty() {
                return Err(Error::InvalidMachine("actions without observations".into()));
            }
            return Ok(self.initial_z);
        }
        if actions.len() + 1 != observations.len() {
            return Err(Error::InvalidMachine(format!(
                "history has {} observations but {} actions",
                observations.len(),
                actions.len()
            )));
        }
        let mut z = self.initial_z;
        for (t, &y) in observations.iter().enumerate() {
            let a = if t == 0 { NULL_ACTION } else { actions[t - 1] };
            if y >= self.n_obs {
                return Err(Error::IndexOutOfRange {
                    what: "observation",
                    index: y,
                    limit: self.n_obs,
                });
            }
            if a >= self.n_actions {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    limit: self.n_actions,
                });
            }
            z = self.next(z, y, a);
        }
        Ok(z)
    }

    /// Forward closure of `{f(z_0, y, NULL_ACTION)}` under `f`: every agent
    /// state that some history of length at least one can produce.
    pub fn active_states(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n_z];
        let mut stack: Vec<usize> = (0..self.n_obs)
            .map(|y| self.next(self.initial_z, y, NULL_ACTION))
            .collect();
        while let Some(z) = stack.pop() {
            if seen[z] {
                continue;
            }
            seen[z] = true;
            for y in 0..self.n_obs {
                for a in 0..self.n_actions {
                    let w = self.next(z, y, a);
                    if !seen[w] {
                        stack.push(w);
                    }
                }
            }
        }
        seen
    }
}

impl FrameStack {
    fn decode(&self, z: usize, n_obs: usize, n_actions: usize) -> (Vec<usize>, Vec<usize>) {
        let k = self.fill[z];
        if k == 0 {
            return (Vec::new(), Vec::new());
        }
        // mixed radix, most significant first: y_1, a_1, y_2, ..., y_k
        let mut code = z - self.offsets[k];
        let mut obs = vec![0; k];
        let mut acts = vec![0; k - 1];
        for i in (0..k).rev() {
            obs[i] = code % n_obs;
            code /= n_obs;
            if i > 0 {
                acts[i - 1] = code % n_actions;
                code /= n_actions;
            }
        }
        (obs, acts)
    }

    fn encode(&self, obs: &[usize], acts: &[usize], n_obs: usize, n_actions: usize) -> usize {
        let k = obs.len();
        if k == 0 {
            return 0;
        }
        let mut code = obs[0];
        for i in 1..k {
            code = code * n_actions + acts[i - 1];
            code = code * n_obs + obs[i];
        }
        self.offsets[k] + code
    }
}

/// A stationary randomized policy over agent states, `pi[z][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    n_z: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl AgentPolicy {
    pub fn uniform(n_z: usize, n_actions: usize) -> Self {
        AgentPolicy {
            n_z,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_z * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (z, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    limit: n_actions,
                });
            }
            probs[z * n_actions + a] = 1.0;
        }
        Ok(AgentPolicy {
            n_z: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, |r| r.len());
        for (z, r) in rows.iter().enumerate() {
            if r.len() != n_actions {
                return Err(Error::InvalidPolicy(format!("row {z} has wrong length")));
            }
            crate::pomdp::check_distribution(r, 1e-12)
                .map_err(|e| Error::InvalidPolicy(format!("row {z}: {e}")))?;
        }
        Ok(AgentPolicy {
            n_z: rows.len(),
            n_actions,
            probs: rows.concat(),
        })
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.probs[z * self.n_actions..(z + 1) * self.n_actions]
    }

    #[inline]
    pub fn prob(&self, z: usize, a: usize) -> f64 {
        self.probs[z * self.n_actions + a]
    }

    pub fn check_compatible(&self, m: &AgentStateMachine) -> Result<()> {
        if self.n_z != m.n_z() || self.n_actions != m.n_actions() {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}x{}, machine needs {}x{}",
                self.n_z,
                self.n_actions,
                m.n_z(),
                m.n_actions()
            )));
        }
        Ok(())
    }
}

/// One positive-probability history `h_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryNode {
    pub depth: usize,
    pub parent: Option<usize>,
    /// Action `a_{t-1}` leading here (`NULL_ACTION` at depth 1).
    pub action_in: usize,
    pub observation: usize,
    /// Occurrence probability under the enumeration policy.
    pub prob: f64,
    /// `P(y_t | h_{t-1}, a_{t-1})`.
    pub cond_prob: f64,
    pub belief: Belief,
    pub agent_state: usize,
}

/// All positive-probability histories up to a fixed depth, stored level by
/// level. Every node of depth `< max_depth` has its children grouped per
/// action in `children[node][a]`.
#[derive(Clone, Debug)]
pub struct HistoryTree {
    nodes: Vec<HistoryNode>,
    levels: Vec<Range<usize>>,
    children: Vec<Vec<Range<usize>>>,
    n_actions: usize,
}

impl HistoryTree {
    /// Enumerates histories to depth `t_max`. Actions are expanded where the
    /// policy gives them positive probability; `None` means uniform.
    pub fn enumerate(
        p: &Pomdp,
        m: &AgentStateMachine,
        policy: Option<&AgentPolicy>,
        t_max: usize,
    ) -> Result<Self> {
        Self::enumerate_with_cap(p, m, policy, t_max, DEFAULT_SIZE_CAP)
    }

    pub fn enumerate_with_cap(
        p: &Pomdp,
        m: &AgentStateMachine,
        policy: Option<&AgentPolicy>,
        t_max: usize,
        cap: usize,
    ) -> Result<Self> {
        m.check_compatible(p)?;
        if let Some(pi) = policy {
            pi.check_compatible(m)?;
        }
        let na = p.n_actions();
        let uniform = 1.0 / na as f64;
        let act_prob = |z: usize, a: usize| policy.map_or(uniform, |pi| pi.prob(z, a));
        let mut nodes: Vec<HistoryNode> = Vec::new();
        let mut levels = Vec::new();
        let mut children: Vec<Vec<Range<usize>>> = Vec::new();
        if t_max == 0 {
            return Ok(HistoryTree {
                nodes,
                levels,
                children,
                n_actions: na,
            });
        }
        for (y, &py) in p.initial_observation_probs().iter().enumerate() {
            if py <= 0.0 {
                continue;
            }
            nodes.push(HistoryNode {
                depth: 1,
                parent: None,
                action_in: NULL_ACTION,
                observation: y,
                prob: py,
                cond_prob: py,
                belief: p.initial_belief(y)?,
                agent_state: m.next(m.initial_z(), y, NULL_ACTION),
            });
        }
        levels.push(0..nodes.len());
        for depth in 2..=t_max {
            let prev = levels[depth - 2].clone();
            let start = nodes.len();
            for parent in prev {
                let mut per_action = Vec::with_capacity(na);
                for a in 0..na {
                    let first = nodes.len();
                    let pa = act_prob(nodes[parent].agent_state, a);
                    if pa > 0.0 {
                        let parent_node = &nodes[parent];
                        let py = p.observation_probs(&parent_node.belief, a);
                        let mut fresh = Vec::new();
                        for (y, &q) in py.iter().enumerate() {
                            if q <= 0.0 {
                                continue;
                            }
                            fresh.push(HistoryNode {
                                depth,
                                parent: Some(parent),
                                action_in: a,
                                observation: y,
                                prob: parent_node.prob * pa * q,
                                cond_prob: q,
                                belief: p.belief_update(&parent_node.belief, a, y)?,
                                agent_state: m.next(parent_node.agent_state, y, a),
                            });
                        }
                        nodes.extend(fresh);
                        if nodes.len() > cap {
                            return Err(Error::SizeCap {
                                what: "history nodes",
                                depth,
                                limit: cap,
                            });
                        }
                    }
                    per_action.push(first..nodes.len());
                }
                children.push(per_action);
            }
            levels.push(start..nodes.len());
        }
        // leaves carry empty child lists
        let leaves = levels.last().map_or(0, |r| r.len());
        children.extend(std::iter::repeat_with(|| vec![0..0; na]).take(leaves));
        Ok(HistoryTree {
            nodes,
            levels,
            children,
            n_actions: na,
        })
    }

    pub fn nodes(&self) -> &[HistoryNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &HistoryNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.levels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Node indices at depth `t` (1-based).
    pub fn level(&self, t: usize) -> Range<usize> {
        self.levels[t - 1].clone()
    }

    /// Children of `node` reached by action `a`.
    pub fn children(&self, node: usize, a: usize) -> Range<usize> {
        self.children[node][a].clone()
    }

    /// Observation and action sequences of the history ending at `node`.
    pub fn prefix(&self, node: usize) -> (Vec<usize>, Vec<usize>) {
        let mut obs = Vec::new();
        let mut acts = Vec::new();
        let mut cur = Some(node);
        while let Some(i) = cur {
            let n = &self.nodes[i];
            obs.push(n.observation);
            if n.parent.is_some() {
                acts.push(n.action_in);
            }
            cur = n.parent;
        }
        obs.reverse();
        acts.reverse();
        (obs, acts)
    }

    /// Compact label such as `y0 a1 y1`.
    pub fn history_string(&self, node: usize) -> String {
        let (obs, acts) = self.prefix(node);
        let mut s = format!("y{}", obs[0]);
        for (y, a) in obs[1..].iter().zip(&acts) {
            s.push_str(&format!(" a{a} y{y}"));
        }
        s
    }
}
