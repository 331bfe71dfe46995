//! Small dense simplex solver for `max c.x  s.t.  A x <= b, x >= 0` with
//! `b >= 0`, so the slack basis is feasible from the start. Bland's rule
//! keeps degenerate pivots from cycling.

const EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Returns `None` when the objective is unbounded (or the pivot limit is hit).
pub(crate) fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<LpSolution> {
    let n = c.len();
    let m = a.len();
    debug_assert!(b.iter().all(|&x| x >= 0.0));
    let width = n + m + 1;
    // rows 0..m constraints, row m objective (reduced costs, negated)
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        t[i * width..i * width + n].copy_from_slice(&a[i]);
        t[i * width + n + i] = 1.0;
        t[i * width + n + m] = b[i];
    }
    for j in 0..n {
        t[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..n + m).find(|&j| t[m * width + j] < -EPS) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let coef = t[i * width + enter];
            if coef > EPS {
                let ratio = t[i * width + n + m] / coef;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let r = leave?;
        let piv = t[r * width + enter];
        for j in 0..width {
            t[r * width + j] /= piv;
        }
        for i in 0..=m {
            if i == r {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * t[r * width + j];
                }
            }
        }
        basis[r] = enter;
    }
    if (0..n + m).any(|j| t[m * width + j] < -EPS) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (i, &v) in basis.iter().enumerate() {
        if v < n {
            x[v] = t[i * width + n + m];
        }
    }
    Some(LpSolution {
        objective: t[m * width + n + m],
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let s = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_none() {
        assert!(maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).is_none());
    }

    #[test]
    fn degenerate_origin() {
        // max d s.t. d - b0 <= 0, d - b1 <= 0, b0 + b1 <= 1
        let s = maximize(
            &[0.0, 0.0, 1.0],
            &[vec![-1.0, 0.0, 1.0], vec![0.0, -1.0, 1.0], vec![1.0, 1.0, 0.0]],
            &[0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!((s.objective - 0.5).abs() < 1e-12);
    }
}
