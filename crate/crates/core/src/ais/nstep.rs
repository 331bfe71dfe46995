//! n-step double-Q targets on replayed sequences.

use serde::{Deserialize, Serialize};

use super::replay::Step;
use crate::solvers::QTable;

/// Target for main step `k` of a segment with agent states `states`
/// (`states.len() == steps.len() + 1`):
///
/// ```text
/// sum_{j<m} g^j R_{k+j} + g^m Q_target(z_{k+m}, argmax_a Q(z_{k+m}, a))
/// ```
///
/// where `m = min(n, len - k)`. A `done` step inside the window ends the
/// sum and drops the bootstrap.
pub fn nstep_target(
    steps: &[Step],
    states: &[usize],
    k: usize,
    n: usize,
    gamma: f64,
    q: &QTable,
    q_target: &QTable,
) -> f64 {
    let end = (k + n).min(steps.len());
    let mut g = 0.0;
    let mut disc = 1.0;
    for s in &steps[k..end] {
        g += disc * s.reward;
        disc *= gamma;
        if s.done {
            return g;
        }
    }
    let z = states[end];
    g + disc * q_target.get(z, q.greedy_action(z))
}

/// A replayed segment ready for the Q update.
#[derive(Clone, Debug)]
pub struct Segment<'a> {
    pub steps: &'a [Step],
    pub states: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TdStats {
    /// Mean `|target - Q|` per segment, before the update.
    pub mean_abs_td: Vec<f64>,
    pub batch_mean_abs_td: f64,
}

/// Computes every target from the tables as they are before the batch, then
/// moves each visited cell toward its target,
/// `Q(z,a) += lr w (target - Q(z,a))`, one sample at a time.
pub fn nstep_q_update(
    batch: &[Segment<'_>],
    q: &mut QTable,
    q_target: &QTable,
    n: usize,
    gamma: f64,
    lr: f64,
) -> TdStats {
    let mut pending = Vec::new();
    let mut stats = TdStats::default();
    let mut total = 0.0;
    let mut count = 0usize;
    for seg in batch {
        let mut acc = 0.0;
        for k in 0..seg.steps.len() {
            let (z, a) = (seg.states[k], seg.steps[k].action);
            let target = nstep_target(seg.steps, &seg.states, k, n, gamma, q, q_target);
            acc += (target - q.get(z, a)).abs();
            pending.push((z, a, target, seg.weight));
        }
        let len = seg.steps.len().max(1) as f64;
        stats.mean_abs_td.push(acc / len);
        total += acc;
        count += seg.steps.len();
    }
    for (z, a, target, w) in pending {
        let old = q.get(z, a);
        q.set(z, a, old + lr * w * (target - old));
    }
    stats.batch_mean_abs_td = total / count.max(1) as f64;
    stats
}
