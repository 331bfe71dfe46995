use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::QTable;
use crate::chain::StationaryModel;

/// Fixed point of the induced agent-state Bellman operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QSolution {
    pub table: QTable,
    pub iterations: usize,
    /// Last sup-norm change between iterates.
    pub residual: f64,
    /// Guaranteed bound on `|Q - Q*_xi|_inf`.
    pub certified_error: f64,
}

/// `(B Q)(z,a) = r_xi(z,a) + gamma sum_z' P_xi(z'|z,a) max_a' Q(z',a')`.
pub fn bellman_backup(sm: &StationaryModel, gamma: f64, q: &QTable) -> QTable {
    let v = q.greedy_values();
    let mut out = q.clone();
    for z in 0..sm.n_z {
        for a in 0..sm.n_a {
            let ev: f64 = sm.p_xi_row(z, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            out.set(z, a, sm.r_xi(z, a) + gamma * ev);
        }
    }
    out
}

/// Value iteration until the iterate change is at most
/// `tol (1 - gamma) / (2 gamma)`, which bounds the error by `tol / 2`.
pub fn solve_q_xi(sm: &StationaryModel, gamma: f64, tol: f64) -> QSolution {
    let mut q = QTable::filled(sm.n_z, sm.n_a, 0.0).with_reachable(sm.reachable.clone());
    if gamma == 0.0 {
        let table = bellman_backup(sm, 0.0, &q);
        return QSolution {
            table,
            iterations: 1,
            residual: 0.0,
            certified_error: 0.0,
        };
    }
    let stop = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut iterations = 0;
    loop {
        let next = bellman_backup(sm, gamma, &q);
        let residual = next
            .values()
            .iter()
            .zip(q.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        iterations += 1;
        q = next;
        if residual <= stop {
            return QSolution {
                table: q,
                iterations,
                residual,
                certified_error: gamma * residual / (1.0 - gamma),
            };
        }
    }
}

/// Howard policy iteration with exact linear solves; an independent route
/// to the same fixed point.
pub fn policy_iteration(sm: &StationaryModel, gamma: f64) -> QTable {
    let (n_z, n_a) = (sm.n_z, sm.n_a);
    let mut policy = vec![0usize; n_z];
    loop {
        let mut m = DMatrix::<f64>::identity(n_z, n_z);
        let mut rhs = DVector::<f64>::zeros(n_z);
        for z in 0..n_z {
            let a = policy[z];
            rhs[z] = sm.r_xi(z, a);
            for (zp, &p) in sm.p_xi_row(z, a).iter().enumerate() {
                m[(z, zp)] -= gamma * p;
            }
        }
        let v = m.lu().solve(&rhs).expect("I - gamma P is invertible");
        let mut q = QTable::filled(n_z, n_a, 0.0).with_reachable(sm.reachable.clone());
        for z in 0..n_z {
            for a in 0..n_a {
                let ev: f64 = sm.p_xi_row(z, a).iter().enumerate().map(|(zp, p)| p * v[zp]).sum();
                q.set(z, a, sm.r_xi(z, a) + gamma * ev);
            }
        }
        let mut changed = false;
        for z in 0..n_z {
            let best = q.greedy_action(z);
            // switch only on strict improvement so the loop terminates
            if q.get(z, best) > q.get(z, policy[z]) + 1e-12 {
                policy[z] = best;
                changed = true;
            }
        }
        if !changed {
            return q;
        }
    }
}
