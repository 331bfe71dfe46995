//! Exact dynamic programming: the agent-state fixed point `Q*_xi`, finite
//! horizon history values, policy evaluation and the sandwich intervals
//! that turn finite-horizon values into bounds on infinite-horizon ones.

mod alpha;
mod history;
mod mdp;
mod q_xi;

pub use alpha::{AlphaSets, PolicyVectors};
pub use history::{solve_history_dp, tree_backward_induction, HistoryValueTable};
pub use mdp::{state_value_iteration, StateValues};
pub use q_xi::{bellman_backup, policy_iteration, solve_q_xi, QSolution};

use serde::{Deserialize, Serialize};

use crate::pomdp::Pomdp;

/// Real table over `Z x A` with a reachability mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_z: usize,
    n_a: usize,
    q: Vec<f64>,
    reachable: Vec<bool>,
}

impl QTable {
    pub fn filled(n_z: usize, n_a: usize, value: f64) -> Self {
        QTable {
            n_z,
            n_a,
            q: vec![value; n_z * n_a],
            reachable: vec![true; n_z * n_a],
        }
    }

    pub fn from_values(n_z: usize, n_a: usize, q: Vec<f64>) -> Self {
        assert_eq!(q.len(), n_z * n_a, "table size");
        QTable {
            n_z,
            n_a,
            q,
            reachable: vec![true; n_z * n_a],
        }
    }

    pub fn with_reachable(mut self, reachable: Vec<bool>) -> Self {
        assert_eq!(reachable.len(), self.q.len(), "mask size");
        self.reachable = reachable;
        self
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    pub fn reachable(&self) -> &[bool] {
        &self.reachable
    }

    #[inline]
    pub fn get(&self, z: usize, a: usize) -> f64 {
        self.q[z * self.n_a + a]
    }

    #[inline]
    pub fn set(&mut self, z: usize, a: usize, v: f64) {
        self.q[z * self.n_a + a] = v;
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.q[z * self.n_a..(z + 1) * self.n_a]
    }

    /// Lowest-index maximiser of `q(z, .)`.
    pub fn greedy_action(&self, z: usize) -> usize {
        argmax(self.row(z))
    }

    pub fn greedy_value(&self, z: usize) -> f64 {
        self.row(z).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_values(&self) -> Vec<f64> {
        (0..self.n_z).map(|z| self.greedy_value(z)).collect()
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_z).map(|z| self.greedy_action(z)).collect()
    }

    /// `max |self - other|` over entries reachable in `self`.
    pub fn sup_gap(&self, other: &QTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .zip(&self.reachable)
            .filter(|(_, &r)| r)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

/// Lowest index among the maximisers.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn widen(&self, by: f64) -> Interval {
        Interval {
            lo: self.lo - by,
            hi: self.hi + by,
        }
    }

    /// Largest `|x - c|` over the interval.
    pub fn max_abs_deviation(&self, c: f64) -> f64 {
        (self.lo - c).abs().max((self.hi - c).abs())
    }
}

/// Interval containing the infinite-horizon value whose horizon-`T`
/// truncation at time `t` equals `v_fin`.
pub fn sandwich_interval(v_fin: f64, t: usize, horizon: usize, p: &Pomdp) -> Interval {
    sandwich_with(v_fin, t, horizon, p.discount(), p.r_min(), p.r_max())
}

pub fn sandwich_with(v_fin: f64, t: usize, horizon: usize, gamma: f64, r_min: f64, r_max: f64) -> Interval {
    assert!(t <= horizon, "t must not exceed the horizon");
    let w = gamma.powi((horizon - t) as i32) / (1.0 - gamma);
    Interval {
        lo: v_fin + w * r_min,
        hi: v_fin + w * r_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        let q = QTable::from_values(1, 3, vec![0.5, 0.5, 0.5]);
        assert_eq!(q.greedy_action(0), 0);
    }

    #[test]
    fn constant_reward_sandwich_is_a_point() {
        let i = sandwich_with(2.0, 1, 4, 0.5, 1.0, 1.0);
        assert_eq!(i.lo, i.hi);
        assert!((i.lo - (2.0 + 0.125 / 0.5)).abs() < 1e-15);
    }

    #[test]
    fn sandwich_width_matches_arithmetic() {
        let i = sandwich_with(0.0, 0, 10, 0.9, 0.0, 1.0);
        assert!((i.width() - 0.9f64.powi(10) / 0.1).abs() < 1e-12);
        assert!((i.width() - 3.486784401).abs() < 1e-9);
    }

    #[test]
    fn long_horizon_sandwich_collapses() {
        let i = sandwich_with(0.0, 0, 400, 0.9, 0.0, 1.0);
        assert!(i.width() < 1e-12 * 1.0 / 0.1);
    }
}
