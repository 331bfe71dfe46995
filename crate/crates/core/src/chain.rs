//! The joint chain over `(s, y, z, a)` generated by a POMDP, an agent-state
//! machine and a fixed exploration policy, its stationary law `xi`, and the
//! agent-state model `(r_xi, P_xi)` that law induces.
//!
//! Joint states are encoded `((s * |Y| + y) * |Z| + z) * |A| + a`.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent_state::{AgentPolicy, AgentStateMachine};
use crate::error::{Error, Result};
use crate::pomdp::{Pomdp, NULL_ACTION};
use crate::rng;

/// Default limit on stored kernel entries.
pub const DEFAULT_KERNEL_CAP: usize = 50_000_000;

const PARALLEL_THRESHOLD: usize = 4096;

pub const RESTRICTED_SUPPORT: &str = "some agent-state/action pairs have zero stationary mass: analysis restricted to the recurrent support";

/// Sparse row-stochastic kernel of the joint chain, with its transpose for
/// gather-style products.
#[derive(Clone, Debug)]
pub struct JointKernel {
    pub n_s: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub n_a: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    t_ptr: Vec<usize>,
    t_col: Vec<usize>,
    t_val: Vec<f64>,
    initial: Vec<f64>,
}

impl JointKernel {
    pub fn build(p: &Pomdp, m: &AgentStateMachine, policy: &AgentPolicy) -> Result<Self> {
        Self::build_with_cap(p, m, policy, DEFAULT_KERNEL_CAP)
    }

    pub fn build_with_cap(
        p: &Pomdp,
        m: &AgentStateMachine,
        policy: &AgentPolicy,
        cap: usize,
    ) -> Result<Self> {
        m.check_compatible(p)?;
        policy.check_compatible(m)?;
        let (n_s, n_y, n_z, n_a) = (p.n_states(), p.n_obs(), m.n_z(), p.n_actions());
        let n = n_s
            .checked_mul(n_y)
            .and_then(|x| x.checked_mul(n_z))
            .and_then(|x| x.checked_mul(n_a))
            .filter(|&x| x <= cap)
            .ok_or(Error::SizeCap {
                what: "joint chain states",
                depth: 0,
                limit: cap,
            })?;
        let enc = |s: usize, y: usize, z: usize, a: usize| ((s * n_y + y) * n_z + z) * n_a + a;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for s in 0..n_s {
            for _y in 0..n_y {
                for z in 0..n_z {
                    for a in 0..n_a {
                        for (sp, &pt) in p.transition_row(s, a).iter().enumerate() {
                            if pt == 0.0 {
                                continue;
                            }
                            for (yp, &po) in p.observation_row(sp, a).iter().enumerate() {
                                if po == 0.0 {
                                    continue;
                                }
                                let zp = m.next(z, yp, a);
                                for (ap, &pa) in policy.row(zp).iter().enumerate() {
                                    if pa == 0.0 {
                                        continue;
                                    }
                                    col.push(enc(sp, yp, zp, ap));
                                    val.push(pt * po * pa);
                                }
                            }
                        }
                        if col.len() > cap {
                            return Err(Error::SizeCap {
                                what: "joint kernel entries",
                                depth: 0,
                                limit: cap,
                            });
                        }
                        row_ptr.push(col.len());
                    }
                }
            }
        }
        let mut initial = vec![0.0; n];
        for s in 0..n_s {
            let ps = p.initial_state_dist()[s];
            if ps == 0.0 {
                continue;
            }
            for (y, &po) in p.observation_row(s, NULL_ACTION).iter().enumerate() {
                if po == 0.0 {
                    continue;
                }
                let z = m.next(m.initial_z(), y, NULL_ACTION);
                for (a, &pa) in policy.row(z).iter().enumerate() {
                    initial[enc(s, y, z, a)] += ps * po * pa;
                }
            }
        }
        let (t_ptr, t_col, t_val) = transpose(n, &row_ptr, &col, &val);
        Ok(JointKernel {
            n_s,
            n_y,
            n_z,
            n_a,
            row_ptr,
            col,
            val,
            t_ptr,
            t_col,
            t_val,
            initial,
        })
    }

    pub fn n_joint(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    #[inline]
    pub fn encode(&self, s: usize, y: usize, z: usize, a: usize) -> usize {
        ((s * self.n_y + y) * self.n_z + z) * self.n_a + a
    }

    pub fn decode(&self, x: usize) -> (usize, usize, usize, usize) {
        let a = x % self.n_a;
        let r = x / self.n_a;
        let z = r % self.n_z;
        let r = r / self.n_z;
        (r / self.n_y, r % self.n_y, z, a)
    }

    /// Column indices and probabilities of row `x`.
    pub fn row(&self, x: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[x]..self.row_ptr[x + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn entry(&self, x: usize, xp: usize) -> f64 {
        let (cols, vals) = self.row(x);
        cols.iter().position(|&c| c == xp).map_or(0.0, |i| vals[i])
    }

    /// Law of `(S_1, Y_1, Z_1, A_1)`.
    pub fn initial_law(&self) -> &[f64] {
        &self.initial
    }

    /// `out = v K`, accumulated in a fixed order per output entry.
    pub fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        let gather = |xp: usize| -> f64 {
            let r = self.t_ptr[xp]..self.t_ptr[xp + 1];
            self.t_col[r.clone()]
                .iter()
                .zip(&self.t_val[r])
                .map(|(&x, &k)| v[x] * k)
                .sum()
        };
        if out.len() >= PARALLEL_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(xp, o)| *o = gather(xp));
        } else {
            out.iter_mut().enumerate().for_each(|(xp, o)| *o = gather(xp));
        }
    }

    /// `max_x |(v K)(x) - v(x)|`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        let mut w = vec![0.0; v.len()];
        self.left_multiply(v, &mut w);
        sup_diff(&w, v)
    }

    /// Recurrent classes (closed strongly connected components).
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n_joint();
        let mut g = DiGraph::<(), ()>::with_capacity(n, self.nnz());
        let idx: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for x in 0..n {
            for &c in self.row(x).0 {
                g.add_edge(idx[x], idx[c], ());
            }
        }
        let sccs = tarjan_scc(&g);
        let mut comp = vec![0usize; n];
        for (k, scc) in sccs.iter().enumerate() {
            for v in scc {
                comp[v.index()] = k;
            }
        }
        let mut classes: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(k, scc)| {
                scc.iter()
                    .all(|v| self.row(v.index()).0.iter().all(|&c| comp[c] == *k))
            })
            .map(|(_, scc)| {
                let mut members: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                members.sort_unstable();
                members
            })
            .collect();
        classes.sort();
        classes
    }

    /// Dense copy (tests and small direct solves).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_joint();
        let mut k = DMatrix::zeros(n, n);
        for x in 0..n {
            let (cols, vals) = self.row(x);
            for (&c, &v) in cols.iter().zip(vals) {
                k[(x, c)] += v;
            }
        }
        k
    }
}

fn transpose(n: usize, ptr: &[usize], col: &[usize], val: &[f64]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut counts = vec![0usize; n + 1];
    for &c in col {
        counts[c + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let t_ptr = counts.clone();
    let mut next = counts;
    let mut t_col = vec![0; col.len()];
    let mut t_val = vec![0.0; col.len()];
    for x in 0..n {
        for k in ptr[x]..ptr[x + 1] {
            let c = col[k];
            t_col[next[c]] = x;
            t_val[next[c]] = val[k];
            next[c] += 1;
        }
    }
    (t_ptr, t_col, t_val)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub positivity_threshold: f64,
    pub uniqueness_starts: usize,
    pub uniqueness_tol: f64,
    pub seed: u64,
    /// Largest recurrent class solved directly when power iteration stalls.
    pub direct_limit: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-12,
            max_iters: 1_000_000,
            positivity_threshold: 1e-12,
            uniqueness_starts: 5,
            uniqueness_tol: 1e-8,
            seed: 0,
            direct_limit: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    PowerIteration,
    DirectSolve,
}

/// Stationary law of a joint kernel and the checks run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub xi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: StationaryMethod,
    pub recurrent_classes: usize,
    /// Largest sup-distance between the main solution and the random starts.
    pub start_spread: f64,
    pub unique: bool,
    pub min_xi: f64,
    pub positivity_ok: bool,
}

/// Lazy power iteration `v <- (v + vK) / 2` until `|vK - v|_inf <= tol`.
fn power_iterate(k: &JointKernel, mut v: Vec<f64>, tol: f64, max_iters: usize) -> (Vec<f64>, f64, usize) {
    let mut w = vec![0.0; v.len()];
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        k.left_multiply(&v, &mut w);
        residual = sup_diff(&w, &v);
        if residual <= tol {
            return (v, residual, it);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = 0.5 * (*vi + wi);
        }
        if it % 64 == 63 {
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
        }
    }
    (v, residual, max_iters)
}

fn direct_solve(k: &JointKernel, class: &[usize]) -> Option<Vec<f64>> {
    let m = class.len();
    let mut pos = vec![usize::MAX; k.n_joint()];
    for (i, &x) in class.iter().enumerate() {
        pos[x] = i;
    }
    // rows of (K_CC^T - I), last row replaced by the normalisation
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &x) in class.iter().enumerate() {
        let (cols, vals) = k.row(x);
        for (&c, &v) in cols.iter().zip(vals) {
            a[(pos[c], i)] += v;
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let sol = a.lu().solve(&b)?;
    let mut xi = vec![0.0; k.n_joint()];
    for (i, &x) in class.iter().enumerate() {
        xi[x] = sol[i].max(0.0);
    }
    let s: f64 = xi.iter().sum();
    xi.iter_mut().for_each(|x| *x /= s);
    Some(xi)
}

/// Stationary law reached from the initial law, with transient states set
/// to exactly zero and uniqueness checked both structurally and from
/// random starts.
pub fn stationary_distribution(k: &JointKernel, opts: &StationaryOptions) -> Result<Stationary> {
    let n = k.n_joint();
    let classes = k.recurrent_classes();
    let mut recurrent = vec![false; n];
    for c in &classes {
        for &x in c {
            recurrent[x] = true;
        }
    }
    let (mut xi, mut residual, iterations) = power_iterate(k, k.initial_law().to_vec(), opts.tol, opts.max_iters);
    let mut method = StationaryMethod::PowerIteration;
    if residual > opts.tol {
        let reached: Vec<&Vec<usize>> = classes
            .iter()
            .filter(|c| c.iter().any(|&x| xi[x] > 0.0))
            .collect();
        match reached.as_slice() {
            [only] if only.len() <= opts.direct_limit => {
                if let Some(sol) = direct_solve(k, only) {
                    xi = sol;
                    method = StationaryMethod::DirectSolve;
                }
            }
            _ => {}
        }
    } else {
        for (x, v) in xi.iter_mut().enumerate() {
            if !recurrent[x] {
                *v = 0.0;
            }
        }
        let s: f64 = xi.iter().sum();
        xi.iter_mut().for_each(|x| *x /= s);
        if k.residual(&xi) > opts.tol {
            // recurrent classes are closed, so the zeros survive the sweeps
            xi = power_iterate(k, xi, opts.tol, opts.max_iters).0;
        }
    }
    residual = k.residual(&xi);
    if residual > opts.tol {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }

    let mut start_spread: f64 = 0.0;
    let mut rng = rng::seeded(opts.seed);
    let check_iters = opts.max_iters.min(100_000);
    for _ in 0..opts.uniqueness_starts {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        let (v, _, _) = power_iterate(k, v, opts.tol, check_iters);
        start_spread = start_spread.max(sup_diff(&v, &xi));
    }
    let unique = classes.len() == 1 && start_spread <= opts.uniqueness_tol;
    let min_xi = xi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Stationary {
        xi,
        residual,
        iterations,
        method,
        recurrent_classes: classes.len(),
        start_spread,
        unique,
        min_xi,
        positivity_ok: min_xi > opts.positivity_threshold,
    })
}

/// Stationary analysis of a (POMDP, machine, exploration policy) triple.
///
/// Agent-state pairs with `xi(z, a) = 0` are unreachable. The induced model
/// is still defined there, by conditioning on a uniform state law, so that
/// the agent-state MDP is complete; reachable entries are unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryModel {
    pub n_s: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub n_a: usize,
    pub discount: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub stationary: Stationary,
    /// `xi(z, a)` indexed `z * n_a + a`.
    pub xi_za: Vec<f64>,
    pub reachable: Vec<bool>,
    /// Agent states produced by some history of positive length.
    pub active: Vec<bool>,
    /// `xi(s | z, a)` indexed `(z * n_a + a) * n_s + s` (completed).
    pub state_cond: Vec<f64>,
    pub r_xi: Vec<f64>,
    /// `P_xi(z' | z, a)` indexed `(z * n_a + a) * n_z + z'`.
    pub p_xi: Vec<f64>,
    /// Induced next-observation predictor, indexed `(z * n_a + a) * n_y + y'`.
    pub obs_pred: Vec<f64>,
}

impl StationaryModel {
    pub fn xi(&self) -> &[f64] {
        &self.stationary.xi
    }

    pub fn positivity_ok(&self) -> bool {
        self.stationary.positivity_ok
    }

    #[inline]
    pub fn r_xi(&self, z: usize, a: usize) -> f64 {
        self.r_xi[z * self.n_a + a]
    }

    pub fn p_xi_row(&self, z: usize, a: usize) -> &[f64] {
        let i = (z * self.n_a + a) * self.n_z;
        &self.p_xi[i..i + self.n_z]
    }

    pub fn obs_pred_row(&self, z: usize, a: usize) -> &[f64] {
        let i = (z * self.n_a + a) * self.n_y;
        &self.obs_pred[i..i + self.n_y]
    }

    pub fn state_cond_row(&self, z: usize, a: usize) -> &[f64] {
        let i = (z * self.n_a + a) * self.n_s;
        &self.state_cond[i..i + self.n_s]
    }

    #[inline]
    pub fn is_reachable(&self, z: usize, a: usize) -> bool {
        self.reachable[z * self.n_a + a]
    }

    pub fn unreachable_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n_z)
            .flat_map(|z| (0..self.n_a).map(move |a| (z, a)))
            .filter(|&(z, a)| !self.is_reachable(z, a))
            .collect()
    }

    /// Marginal `xi(z)`.
    pub fn xi_z(&self) -> Vec<f64> {
        (0..self.n_z)
            .map(|z| self.xi_za[z * self.n_a..(z + 1) * self.n_a].iter().sum())
            .collect()
    }

    pub fn notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if !self.stationary.positivity_ok {
            notes.push(RESTRICTED_SUPPORT.to_string());
        }
        if !self.stationary.unique {
            notes.push(format!(
                "stationary law not unique: {} recurrent classes, random-start spread {:e}",
                self.stationary.recurrent_classes, self.stationary.start_spread
            ));
        }
        notes
    }
}

/// Computes `xi(z,a)`, `xi(s|z,a)`, `r_xi`, `P_xi` and the induced
/// observation predictor from a stationary joint law.
pub fn induced_model(stationary: Stationary, p: &Pomdp, m: &AgentStateMachine) -> Result<StationaryModel> {
    m.check_compatible(p)?;
    let (n_s, n_y, n_z, n_a) = (p.n_states(), p.n_obs(), m.n_z(), p.n_actions());
    if stationary.xi.len() != n_s * n_y * n_z * n_a {
        return Err(Error::InvalidDistribution("joint law has the wrong size".into()));
    }
    let xi = &stationary.xi;
    let mut mass_sza = vec![0.0; n_z * n_a * n_s];
    for s in 0..n_s {
        for y in 0..n_y {
            for z in 0..n_z {
                for a in 0..n_a {
                    mass_sza[(z * n_a + a) * n_s + s] += xi[((s * n_y + y) * n_z + z) * n_a + a];
                }
            }
        }
    }
    let mut xi_za = vec![0.0; n_z * n_a];
    let mut reachable = vec![false; n_z * n_a];
    let mut state_cond = vec![0.0; n_z * n_a * n_s];
    let mut r_xi = vec![0.0; n_z * n_a];
    let mut p_xi = vec![0.0; n_z * n_a * n_z];
    let mut obs_pred = vec![0.0; n_z * n_a * n_y];
    for z in 0..n_z {
        for a in 0..n_a {
            let za = z * n_a + a;
            let row = &mass_sza[za * n_s..(za + 1) * n_s];
            let mass: f64 = row.iter().sum();
            xi_za[za] = mass;
            reachable[za] = mass > 0.0;
            let cond = &mut state_cond[za * n_s..(za + 1) * n_s];
            for s in 0..n_s {
                cond[s] = if mass > 0.0 { row[s] / mass } else { 1.0 / n_s as f64 };
            }
            let mut r = 0.0;
            for s in 0..n_s {
                let w = cond[s];
                if w == 0.0 {
                    continue;
                }
                r += w * p.reward(s, a);
                for (sp, &pt) in p.transition_row(s, a).iter().enumerate() {
                    if pt == 0.0 {
                        continue;
                    }
                    for (yp, &po) in p.observation_row(sp, a).iter().enumerate() {
                        let q = w * pt * po;
                        if q == 0.0 {
                            continue;
                        }
                        obs_pred[za * n_y + yp] += q;
                        p_xi[za * n_z + m.next(z, yp, a)] += q;
                    }
                }
            }
            r_xi[za] = r.clamp(p.r_min(), p.r_max());
        }
    }
    Ok(StationaryModel {
        n_s,
        n_y,
        n_z,
        n_a,
        discount: p.discount(),
        r_min: p.r_min(),
        r_max: p.r_max(),
        stationary,
        xi_za,
        reachable,
        active: m.active_states(),
        state_cond,
        r_xi,
        p_xi,
        obs_pred,
    })
}

/// Builds the joint kernel, solves for its stationary law and derives the
/// induced agent-state model.
pub fn analyze(
    p: &Pomdp,
    m: &AgentStateMachine,
    policy: &AgentPolicy,
    opts: &StationaryOptions,
) -> Result<StationaryModel> {
    let k = JointKernel::build(p, m, policy)?;
    let st = stationary_distribution(&k, opts)?;
    induced_model(st, p, m)
}
