//! Piecewise-linear representations of finite-horizon values over beliefs.
//!
//! `AlphaSets` holds, for each number of remaining steps `k`, a pruned set
//! `Gamma_k` with `V*_k(b) = max_{alpha in Gamma_k} b . alpha`. Pruning is
//! incremental (per observation) and uses a dominance LP; vectors whose best
//! advantage is below the pruning tolerance are dropped, and the resulting
//! one-sided error is tracked per horizon.
//!
//! `PolicyVectors` evaluates a fixed agent-state policy exactly: with `k`
//! steps to go from agent state `z`, the value is linear in the belief.

use crate::agent_state::AgentStateMachine;
use crate::lp;
use crate::pomdp::{Belief, Pomdp};

type Vector = Vec<f64>;

#[derive(Clone, Debug)]
pub struct AlphaSets {
    gamma: f64,
    sets: Vec<Vec<Vector>>,
    /// `errors[k]` bounds `V*_k(b) - max_alpha b.alpha` from above.
    errors: Vec<f64>,
    tols: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dominated(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(x, y)| x <= y)
}

/// Removes pointwise-dominated vectors and exact duplicates.
fn pointwise_prune(mut cands: Vec<Vector>) -> Vec<Vector> {
    cands.sort_by(|a, b| {
        b.iter()
            .sum::<f64>()
            .total_cmp(&a.iter().sum::<f64>())
            .then_with(|| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| y.total_cmp(x))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut kept: Vec<Vector> = Vec::with_capacity(cands.len());
    for c in cands {
        if !kept.iter().any(|k| dominated(&c, k)) {
            kept.push(c);
        }
    }
    kept
}

/// Largest `d` such that some belief `b` gives `b.phi >= b.w + d` for every
/// `w` in `winners`, together with that belief. Solved over the relaxed
/// region `sum b <= 1` so the origin is a feasible start.
fn advantage(phi: &[f64], winners: &[Vector]) -> (f64, Vec<f64>) {
    let n = phi.len();
    // variables b_0..b_{n-1}, d
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut a = Vec::with_capacity(winners.len() + 1);
    let mut rhs = Vec::with_capacity(winners.len() + 1);
    for w in winners {
        let mut row: Vec<f64> = phi.iter().zip(w).map(|(p, w)| w - p).collect();
        row.push(1.0);
        a.push(row);
        rhs.push(0.0);
    }
    let mut simplex = vec![1.0; n];
    simplex.push(0.0);
    a.push(simplex);
    rhs.push(1.0);
    match lp::maximize(&c, &a, &rhs) {
        Some(sol) => {
            let mut b = sol.x[..n].to_vec();
            let s: f64 = b.iter().sum();
            if s > 0.0 {
                b.iter_mut().for_each(|x| *x /= s);
                (sol.objective / s, b)
            } else {
                (sol.objective, vec![1.0 / n as f64; n])
            }
        }
        None => (f64::INFINITY, vec![1.0 / n as f64; n]),
    }
}

fn best_at(b: &[f64], cands: &[Vector]) -> usize {
    let mut best = 0;
    let mut best_v = dot(b, &cands[0]);
    for (i, c) in cands.iter().enumerate().skip(1) {
        let v = dot(b, c);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Lark's filter: keeps only vectors that are strictly best (by more than
/// `tol`) somewhere on the simplex.
fn lp_prune(cands: Vec<Vector>, tol: f64) -> Vec<Vector> {
    let mut rest = pointwise_prune(cands);
    if rest.len() <= 1 {
        return rest;
    }
    let n = rest[0].len();
    let mut winners: Vec<Vector> = Vec::new();
    // seed with the best vectors at the simplex corners
    for s in 0..n {
        if rest.is_empty() {
            break;
        }
        let mut e = vec![0.0; n];
        e[s] = 1.0;
        let i = best_at(&e, &rest);
        if winners.iter().all(|w| dot(&e, w) < dot(&e, &rest[i])) {
            winners.push(rest.swap_remove(i));
        }
    }
    while let Some(phi) = rest.pop() {
        let (d, b) = advantage(&phi, &winners);
        if d > tol {
            rest.push(phi);
            let i = best_at(&b, &rest);
            winners.push(rest.swap_remove(i));
        }
    }
    winners
}

fn cross_sum(a: &[Vector], b: &[Vector]) -> Vec<Vector> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for u in a {
        for v in b {
            out.push(u.iter().zip(v).map(|(x, y)| x + y).collect());
        }
    }
    out
}

/// One exact Bellman backup of `prev` with incremental pruning; `None` when
/// an intermediate set exceeds the budget.
fn backup(p: &Pomdp, prev: &[Vector], tol: f64, budget: usize) -> Option<Vec<Vector>> {
    let (n_s, n_y, n_a) = (p.n_states(), p.n_obs(), p.n_actions());
    let gamma = p.discount();
    let over = |v: &Vec<Vector>| v.len() > budget;
    let mut all = Vec::new();
    for a in 0..n_a {
        let mut acc: Option<Vec<Vector>> = None;
        for y in 0..n_y {
            let g: Vec<Vector> = prev
                .iter()
                .map(|alpha| {
                    (0..n_s)
                        .map(|s| {
                            let mut v = 0.0;
                            for (sp, &pt) in p.transition_row(s, a).iter().enumerate() {
                                v += pt * p.observation_prob(sp, a, y) * alpha[sp];
                            }
                            gamma * v
                        })
                        .collect()
                })
                .collect();
            let g = lp_prune(g, tol);
            if over(&g) {
                return None;
            }
            let next = match acc {
                None => g,
                Some(s) => lp_prune(cross_sum(&s, &g), tol),
            };
            if over(&next) {
                return None;
            }
            acc = Some(next);
        }
        for mut v in acc.unwrap_or_default() {
            for (s, x) in v.iter_mut().enumerate() {
                *x += p.reward(s, a);
            }
            all.push(v);
        }
    }
    let set = lp_prune(all, tol);
    if over(&set) {
        None
    } else {
        Some(set)
    }
}

impl AlphaSets {
    pub const DEFAULT_PRUNE_TOL: f64 = 1e-10;
    pub const DEFAULT_BUDGET: usize = 100;

    /// Computes `Gamma_0 .. Gamma_horizon` with the default size budget.
    pub fn compute(p: &Pomdp, horizon: usize, prune_tol: f64) -> Self {
        Self::compute_with_budget(p, horizon, prune_tol, Self::DEFAULT_BUDGET)
    }

    /// Like [`AlphaSets::compute`], but whenever a pruned set would exceed
    /// `budget` vectors the stage is redone with a tenfold larger tolerance.
    /// The tolerance never decreases across stages; the error bound accounts
    /// for the tolerance actually used at each stage.
    pub fn compute_with_budget(p: &Pomdp, horizon: usize, prune_tol: f64, budget: usize) -> Self {
        let n_y = p.n_obs();
        let gamma = p.discount();
        let mut sets = vec![vec![vec![0.0; p.n_states()]]];
        let mut errors = vec![0.0];
        let mut tols = vec![0.0];
        let mut tol = prune_tol;
        for k in 1..=horizon {
            let set = loop {
                match backup(p, &sets[k - 1], tol, budget) {
                    Some(set) => break set,
                    None => tol *= 10.0,
                }
            };
            sets.push(set);
            tols.push(tol);
            errors.push(gamma * errors[k - 1] + (2 * n_y + 1) as f64 * tol);
        }
        AlphaSets {
            gamma,
            sets,
            errors,
            tols,
        }
    }

    pub fn horizon(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn set(&self, k: usize) -> &[Vector] {
        &self.sets[k]
    }

    /// Pruning tolerance used when building `Gamma_k`.
    pub fn prune_tol(&self, k: usize) -> f64 {
        self.tols[k]
    }

    /// Bound on the pruning error of `value(., k)`.
    pub fn error(&self, k: usize) -> f64 {
        self.errors[k]
    }

    /// `V*_k(b)`: optimal expected discounted reward over `k` steps.
    pub fn value(&self, b: &[f64], k: usize) -> f64 {
        self.sets[k].iter().map(|alpha| dot(b, alpha)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Q*_k(b, a) = b.r_a + gamma sum_y max_{alpha in Gamma_{k-1}} u_y.alpha`,
    /// with `u_y(s') = sum_s b(s) P(s'|s,a) O(y|s',a)`.
    pub fn q_value(&self, p: &Pomdp, b: &Belief, a: usize, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let r = p.expected_reward(b, a);
        if k == 1 {
            return r;
        }
        let pred = p.predict(b, a);
        let mut future = 0.0;
        for y in 0..p.n_obs() {
            let u: Vec<f64> = pred
                .iter()
                .enumerate()
                .map(|(sp, w)| w * p.observation_prob(sp, a, y))
                .collect();
            if u.iter().all(|&x| x == 0.0) {
                continue;
            }
            future += self.value(&u, k - 1);
        }
        r + self.gamma * future
    }

    /// Bound on the pruning error of `q_value(., ., k)`.
    pub fn q_error(&self, k: usize) -> f64 {
        if k <= 1 {
            0.0
        } else {
            self.gamma * self.errors[k - 1]
        }
    }
}

/// Exact value vectors of a deterministic agent-state policy `pi[z]`:
/// `beta_k[z](s)` is the `k`-step value from hidden state `s` and agent
/// state `z`.
#[derive(Clone, Debug)]
pub struct PolicyVectors {
    n_s: usize,
    beta: Vec<Vec<f64>>,
}

impl PolicyVectors {
    pub fn compute(p: &Pomdp, m: &AgentStateMachine, policy: &[usize], horizon: usize) -> Self {
        let (n_s, n_z) = (p.n_states(), m.n_z());
        let gamma = p.discount();
        let mut beta = vec![vec![0.0; n_z * n_s]];
        for k in 1..=horizon {
            let prev = &beta[k - 1];
            let mut cur = vec![0.0; n_z * n_s];
            for z in 0..n_z {
                let a = policy[z];
                for s in 0..n_s {
                    let mut fut = 0.0;
                    for (sp, &pt) in p.transition_row(s, a).iter().enumerate() {
                        if pt == 0.0 {
                            continue;
                        }
                        for (y, &po) in p.observation_row(sp, a).iter().enumerate() {
                            if po == 0.0 {
                                continue;
                            }
                            fut += pt * po * prev[m.next(z, y, a) * n_s + sp];
                        }
                    }
                    cur[z * n_s + s] = p.reward(s, a) + gamma * fut;
                }
            }
            beta.push(cur);
        }
        PolicyVectors { n_s, beta }
    }

    pub fn horizon(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn vector(&self, k: usize, z: usize) -> &[f64] {
        &self.beta[k][z * self.n_s..(z + 1) * self.n_s]
    }

    /// `k`-step value of the policy from agent state `z` and belief `b`.
    pub fn value(&self, b: &[f64], z: usize, k: usize) -> f64 {
        dot(b, self.vector(k, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pruning_keeps_upper_envelope() {
        let cands = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.4, 0.4], // below the envelope everywhere
            vec![0.6, 0.6], // best in the middle
            vec![0.5, -1.0],
        ];
        let kept = lp_prune(cands, 1e-12);
        assert_eq!(kept.len(), 3);
        assert!(kept.contains(&vec![0.6, 0.6]));
        assert!(!kept.contains(&vec![0.4, 0.4]));
    }

    #[test]
    fn advantage_detects_interior_winner() {
        let (d, b) = advantage(&[0.6, 0.6], &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((d - 0.1).abs() < 1e-12);
        assert!((b[0] - 0.5).abs() < 1e-12);
    }
}
