use serde::{Deserialize, Serialize};

use crate::pomdp::Pomdp;

/// Optimal values of the underlying state MDP (observations ignored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateValues {
    pub v: Vec<f64>,
    /// Indexed `s * n_a + a`.
    pub q: Vec<f64>,
    pub iterations: usize,
    pub certified_error: f64,
}

impl StateValues {
    /// `sum_s init(s) V(s)`.
    pub fn initial_value(&self, p: &Pomdp) -> f64 {
        p.initial_state_dist().iter().zip(&self.v).map(|(a, b)| a * b).sum()
    }
}

/// Value iteration on `(S, A, P, r, gamma)` until the error is below `tol`.
/// When every state is revealed by its observation this is also the optimal
/// value of the POMDP.
pub fn state_value_iteration(p: &Pomdp, tol: f64) -> StateValues {
    let (ns, na) = (p.n_states(), p.n_actions());
    let gamma = p.discount();
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut iterations = 0;
    loop {
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = p.transition_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                q[s * na + a] = p.reward(s, a) + gamma * ev;
            }
        }
        let next: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        let err = if gamma > 0.0 { gamma * res / (1.0 - gamma) } else { 0.0 };
        if err <= tol {
            return StateValues {
                v,
                q,
                iterations,
                certified_error: err,
            };
        }
    }
}
