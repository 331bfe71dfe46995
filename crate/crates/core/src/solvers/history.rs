use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alpha::{AlphaSets, PolicyVectors};
use super::{sandwich_with, Interval};
use crate::agent_state::{AgentStateMachine, HistoryTree};
use crate::error::{Error, Result};
use crate::pomdp::Pomdp;

/// Finite-horizon values `Q*_{t,T}`, `V*_{t,T}` and optionally `V^pi_{t,T}`
/// at every node of a history tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryValueTable {
    pub horizon: usize,
    pub n_a: usize,
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub depth: Vec<usize>,
    pub q_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub v_pi: Option<Vec<f64>>,
    /// Bound on the difference between stored and exact values.
    pub numerical_error: f64,
}

impl HistoryValueTable {
    pub fn q(&self, node: usize, a: usize) -> f64 {
        self.q_star[node * self.n_a + a]
    }

    pub fn v(&self, node: usize) -> f64 {
        self.v_star[node]
    }

    pub fn v_pi(&self, node: usize) -> Option<f64> {
        self.v_pi.as_ref().map(|v| v[node])
    }

    /// Sandwich width `gamma^{T-t} (r_max - r_min) / (1 - gamma)` at depth `t`.
    pub fn slack(&self, t: usize) -> f64 {
        self.gamma.powi((self.horizon - t) as i32) * (self.r_max - self.r_min) / (1.0 - self.gamma)
    }

    /// Interval holding the infinite-horizon counterpart of a stored value
    /// at depth `t`, widened by the numerical error.
    pub fn interval(&self, value: f64, t: usize) -> Interval {
        sandwich_with(value, t, self.horizon, self.gamma, self.r_min, self.r_max).widen(self.numerical_error)
    }

    pub fn q_interval(&self, node: usize, a: usize) -> Interval {
        self.interval(self.q(node, a), self.depth[node])
    }

    pub fn v_interval(&self, node: usize) -> Interval {
        self.interval(self.v(node), self.depth[node])
    }

    pub fn v_pi_interval(&self, node: usize) -> Option<Interval> {
        self.v_pi(node).map(|v| self.interval(v, self.depth[node]))
    }
}

fn check_policy(m: &AgentStateMachine, p: &Pomdp, policy: Option<&[usize]>) -> Result<()> {
    if let Some(pi) = policy {
        if pi.len() != m.n_z() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} agent states, machine has {}",
                pi.len(),
                m.n_z()
            )));
        }
        if let Some(&a) = pi.iter().find(|&&a| a >= p.n_actions()) {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                limit: p.n_actions(),
            });
        }
    }
    Ok(())
}

/// Horizon-`T` values at every tree node via pruned alpha-vector sets (for
/// `Q*`) and exact policy vectors (for `V^pi`, where `pi` is a
/// deterministic agent-state policy applied through `sigma_t`).
pub fn solve_history_dp(
    p: &Pomdp,
    m: &AgentStateMachine,
    tree: &HistoryTree,
    horizon: usize,
    policy: Option<&[usize]>,
) -> Result<HistoryValueTable> {
    check_policy(m, p, policy)?;
    if tree.max_depth() > horizon {
        return Err(Error::Unsupported(format!(
            "history tree depth {} exceeds horizon {horizon}",
            tree.max_depth()
        )));
    }
    let max_k = horizon.saturating_sub(1);
    let sets = AlphaSets::compute(p, max_k, AlphaSets::DEFAULT_PRUNE_TOL);
    let vectors = policy.map(|pi| PolicyVectors::compute(p, m, pi, horizon));
    let n_a = p.n_actions();
    let per_node: Vec<(Vec<f64>, f64, Option<f64>)> = tree
        .nodes()
        .par_iter()
        .map(|node| {
            let k = horizon - node.depth;
            let q: Vec<f64> = (0..n_a).map(|a| sets.q_value(p, &node.belief, a, k)).collect();
            let v = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = if k == 0 { 0.0 } else { v };
            let vp = vectors
                .as_ref()
                .map(|pv| pv.value(node.belief.as_slice(), node.agent_state, k));
            (q, v, vp)
        })
        .collect();
    let mut q_star = Vec::with_capacity(tree.len() * n_a);
    let mut v_star = Vec::with_capacity(tree.len());
    let mut v_pi = policy.map(|_| Vec::with_capacity(tree.len()));
    for (q, v, vp) in per_node {
        q_star.extend(q);
        v_star.push(v);
        if let (Some(dst), Some(x)) = (v_pi.as_mut(), vp) {
            dst.push(x);
        }
    }
    let numerical_error = (0..=max_k).map(|k| sets.error(k)).fold(0.0, f64::max) + 1e-12;
    Ok(HistoryValueTable {
        horizon,
        n_a,
        gamma: p.discount(),
        r_min: p.r_min(),
        r_max: p.r_max(),
        depth: tree.nodes().iter().map(|n| n.depth).collect(),
        q_star,
        v_star,
        v_pi,
        numerical_error,
    })
}

/// The same values by explicit backward induction over the tree: every node
/// of depth `t < T` must have its children for every action materialised
/// down to depth `T - 1`.
pub fn tree_backward_induction(
    p: &Pomdp,
    m: &AgentStateMachine,
    tree: &HistoryTree,
    horizon: usize,
    policy: Option<&[usize]>,
) -> Result<HistoryValueTable> {
    check_policy(m, p, policy)?;
    let n_a = p.n_actions();
    let gamma = p.discount();
    let n = tree.len();
    let mut q_star = vec![0.0; n * n_a];
    let mut v_star = vec![0.0; n];
    let mut q_pi = vec![0.0; n * n_a];
    let mut v_pi = vec![0.0; n];
    for t in (1..=tree.max_depth()).rev() {
        if t >= horizon {
            continue;
        }
        for i in tree.level(t) {
            let node = tree.node(i);
            for a in 0..n_a {
                let r = p.expected_reward(&node.belief, a);
                let (mut fut, mut fut_pi) = (0.0, 0.0);
                if t + 1 < horizon {
                    let kids = tree.children(i, a);
                    if kids.is_empty() {
                        return Err(Error::Unsupported(format!(
                            "history tree lacks children of node {i} under action {a} (depth {t})"
                        )));
                    }
                    for c in kids {
                        let w = tree.node(c).cond_prob;
                        fut += w * v_star[c];
                        fut_pi += w * v_pi[c];
                    }
                }
                q_star[i * n_a + a] = r + gamma * fut;
                q_pi[i * n_a + a] = r + gamma * fut_pi;
            }
            v_star[i] = q_star[i * n_a..(i + 1) * n_a]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if let Some(pi) = policy {
                v_pi[i] = q_pi[i * n_a + pi[node.agent_state]];
            }
        }
    }
    Ok(HistoryValueTable {
        horizon,
        n_a,
        gamma,
        r_min: p.r_min(),
        r_max: p.r_max(),
        depth: tree.nodes().iter().map(|n| n.depth).collect(),
        q_star,
        v_star,
        v_pi: policy.map(|_| v_pi),
        numerical_error: 1e-12,
    })
}
