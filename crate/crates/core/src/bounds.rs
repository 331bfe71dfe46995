//! Approximation errors of the stationary agent-state model and the value
//! and policy bounds they imply.
//!
//! For every positive-probability history `h_t` and action `a_t`:
//!
//! * `eps_t   = max |E[r(S_t,A_t) | h_t,a_t] - r_xi(sigma_t(h_t), a_t)|`
//! * `delta_t = max d_F(P(Z_{t+1} | h_t,a_t), P_xi(. | sigma_t(h_t), a_t))`
//!
//! Aggregates are discounted tails, truncated at the profile depth and closed
//! with a worst-case tail bound, so they are always upper bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent_state::{AgentPolicy, AgentStateMachine, HistoryTree, DEFAULT_SIZE_CAP};
use crate::chain::StationaryModel;
use crate::error::{Error, Result};
use crate::ipm::{IpmKind, IpmSpec};
use crate::pomdp::Pomdp;
use crate::solvers::{solve_history_dp, HistoryValueTable, Interval, QTable};

/// Per-depth maxima, `values[t-1]` for `t = 1..=T_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub values: Vec<f64>,
    /// History (and action) attaining each maximum.
    pub argmax: Vec<String>,
}

impl Profile {
    pub fn depth(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, t: usize) -> f64 {
        self.values[t - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsDeltaProfile {
    pub epsilon: Profile,
    pub delta: Profile,
}

fn check_certifiable(spec: &IpmSpec) -> Result<()> {
    if spec.kind() == IpmKind::Mmd {
        return Err(Error::Unsupported(
            "MMD has no computable Minkowski functional; use tv or wasserstein".into(),
        ));
    }
    Ok(())
}

/// IPM on agent states induced by `kind` and the machine's metric.
pub fn agent_state_ipm(kind: IpmKind, m: &AgentStateMachine) -> Result<IpmSpec> {
    match kind {
        IpmKind::Tv => Ok(IpmSpec::tv(m.n_z())),
        IpmKind::Wasserstein => IpmSpec::wasserstein(m.metric_matrix(), m.n_z()),
        IpmKind::Mmd => Ok(IpmSpec::mmd_default(m.n_z())),
    }
}

/// Law of `Z_{t+1}` given the belief after `h_t`, the agent state
/// `sigma_t(h_t)` and `a_t`.
pub fn next_agent_state_law(p: &Pomdp, m: &AgentStateMachine, belief: &crate::Belief, z: usize, a: usize) -> Vec<f64> {
    let mut law = vec![0.0; m.n_z()];
    for (y, q) in p.observation_probs(belief, a).into_iter().enumerate() {
        if q > 0.0 {
            law[m.next(z, y, a)] += q;
        }
    }
    law
}

fn fold_max(items: impl Iterator<Item = (f64, String)>) -> (f64, String) {
    items.fold((0.0, String::new()), |best, cur| if cur.0 > best.0 { cur } else { best })
}

/// `eps_t` and `delta_t` for `t = 1..=tree.max_depth()`.
pub fn epsilon_delta_on_tree(
    p: &Pomdp,
    m: &AgentStateMachine,
    sm: &StationaryModel,
    spec: &IpmSpec,
    tree: &HistoryTree,
) -> Result<EpsDeltaProfile> {
    check_certifiable(spec)?;
    if spec.size() != m.n_z() {
        return Err(Error::InvalidMetric(format!(
            "IPM is over {} points, machine has {} agent states",
            spec.size(),
            m.n_z()
        )));
    }
    let n_a = p.n_actions();
    let mut epsilon = Profile {
        values: Vec::new(),
        argmax: Vec::new(),
    };
    let mut delta = epsilon.clone();
    for t in 1..=tree.max_depth() {
        let per_node: Vec<((f64, String), (f64, String))> = tree
            .level(t)
            .into_par_iter()
            .map(|i| {
                let node = tree.node(i);
                let z = node.agent_state;
                let mut e = (0.0, String::new());
                let mut d = (0.0, String::new());
                for a in 0..n_a {
                    let gap = (p.expected_reward(&node.belief, a) - sm.r_xi(z, a)).abs();
                    let law = next_agent_state_law(p, m, &node.belief, z, a);
                    let dist = spec.distance(&law, sm.p_xi_row(z, a))?;
                    if gap > e.0 {
                        e = (gap, format!("{} | a{a}", tree.history_string(i)));
                    }
                    if dist > d.0 {
                        d = (dist, format!("{} | a{a}", tree.history_string(i)));
                    }
                }
                Ok((e, d))
            })
            .collect::<Result<_>>()?;
        let (e, d): (Vec<_>, Vec<_>) = per_node.into_iter().unzip();
        let (ev, eh) = fold_max(e.into_iter());
        let (dv, dh) = fold_max(d.into_iter());
        epsilon.values.push(ev);
        epsilon.argmax.push(eh);
        delta.values.push(dv);
        delta.argmax.push(dh);
    }
    Ok(EpsDeltaProfile { epsilon, delta })
}

/// Enumerates histories under uniform exploration to depth `t_max` and
/// returns the profile.
pub fn epsilon_delta_profile(
    p: &Pomdp,
    m: &AgentStateMachine,
    sm: &StationaryModel,
    spec: &IpmSpec,
    t_max: usize,
) -> Result<EpsDeltaProfile> {
    let tree = HistoryTree::enumerate(p, m, None, t_max)?;
    epsilon_delta_on_tree(p, m, sm, spec, &tree)
}

/// `delta~_t`: distance between the true next-observation law and an
/// observation predictor indexed `(z * n_a + a) * n_y + y`.
pub fn delta_tilde_on_tree(p: &Pomdp, predictor: &[f64], spec: &IpmSpec, tree: &HistoryTree) -> Result<Profile> {
    let (n_y, n_a) = (p.n_obs(), p.n_actions());
    if spec.size() != n_y {
        return Err(Error::InvalidMetric(format!(
            "IPM is over {} points, there are {n_y} observations",
            spec.size()
        )));
    }
    let mut out = Profile {
        values: Vec::new(),
        argmax: Vec::new(),
    };
    for t in 1..=tree.max_depth() {
        let per_node: Vec<(f64, String)> = tree
            .level(t)
            .into_par_iter()
            .map(|i| {
                let node = tree.node(i);
                let mut best = (0.0, String::new());
                for a in 0..n_a {
                    let row = (node.agent_state * n_a + a) * n_y;
                    let truth = p.observation_probs(&node.belief, a);
                    let d = spec.distance(&truth, &predictor[row..row + n_y])?;
                    if d > best.0 {
                        best = (d, format!("{} | a{a}", tree.history_string(i)));
                    }
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        let (v, h) = fold_max(per_node.into_iter());
        out.values.push(v);
        out.argmax.push(h);
    }
    Ok(out)
}

pub fn delta_tilde_profile(
    p: &Pomdp,
    m: &AgentStateMachine,
    predictor: &[f64],
    spec: &IpmSpec,
    t_max: usize,
) -> Result<Profile> {
    if predictor.len() != m.n_z() * p.n_actions() * p.n_obs() {
        return Err(Error::InvalidDistribution("predictor table has the wrong size".into()));
    }
    let tree = HistoryTree::enumerate(p, m, None, t_max)?;
    delta_tilde_on_tree(p, predictor, spec, &tree)
}

/// Certified discounted aggregates of a profile, for `t = 1..=T_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `(1-g) sum_{tau=t}^{T_max} g^{tau-t} x_tau + g^{T_max-t+1} tail`.
    pub bar: Vec<f64>,
    /// `max(max_{t <= tau <= T_max} x_tau, tail)`.
    pub sup: Vec<f64>,
}

pub fn aggregate(profile: &[f64], gamma: f64, tail_bound: f64) -> Aggregate {
    let n = profile.len();
    let mut bar = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let (mut acc, mut run_max) = (tail_bound, tail_bound);
    // backward recursion: bar_t = (1-g) x_t + g bar_{t+1}, bar_{T+1} = tail
    for t in (0..n).rev() {
        acc = (1.0 - gamma) * profile[t] + gamma * acc;
        run_max = run_max.max(profile[t]);
        bar[t] = acc;
        sup[t] = run_max;
    }
    Aggregate { bar, sup }
}

/// Upper bound on `rho_F(V*_xi)` that does not depend on the solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RhoBound {
    Bound { value: f64, formula: String },
    Inapplicable { reason: String },
    Unsupported { reason: String },
}

impl RhoBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            RhoBound::Bound { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// `span(r) / (1 - gamma)`.
pub fn span_bound(r_min: f64, r_max: f64, gamma: f64) -> f64 {
    (r_max - r_min) / (1.0 - gamma)
}

/// Lipschitz constants `(L_r, L_P)` of the induced model over the active
/// agent states under the IPM's ground metric.
pub fn induced_lipschitz(sm: &StationaryModel, spec: &IpmSpec) -> Result<(f64, f64)> {
    let d = spec
        .matrix()
        .filter(|_| spec.kind() == IpmKind::Wasserstein)
        .ok_or_else(|| Error::Unsupported("Lipschitz constants need a Wasserstein spec".into()))?;
    let n = sm.n_z;
    let pts: Vec<usize> = (0..n).filter(|&z| sm.active[z]).collect();
    let (mut l_r, mut l_p): (f64, f64) = (0.0, 0.0);
    for (k, &z) in pts.iter().enumerate() {
        for &w in &pts[k + 1..] {
            let dzw = d[z * n + w];
            for a in 0..sm.n_a {
                l_r = l_r.max((sm.r_xi(z, a) - sm.r_xi(w, a)).abs() / dzw);
                l_p = l_p.max(spec.distance(sm.p_xi_row(z, a), sm.p_xi_row(w, a))? / dzw);
            }
        }
    }
    Ok((l_r, l_p))
}

pub fn instance_independent_rho(spec: &IpmSpec, sm: &StationaryModel) -> RhoBound {
    match spec.kind() {
        IpmKind::Tv => RhoBound::Bound {
            value: span_bound(sm.r_min, sm.r_max, sm.discount),
            formula: "span(r) / (1 - gamma)".into(),
        },
        IpmKind::Wasserstein => match induced_lipschitz(sm, spec) {
            Err(e) => RhoBound::Inapplicable { reason: e.to_string() },
            Ok((l_r, l_p)) => {
                let g = sm.discount;
                if g * l_p < 1.0 {
                    RhoBound::Bound {
                        value: l_r / (1.0 - g * l_p),
                        formula: format!("L_r / (1 - gamma L_P) with L_r = {l_r}, L_P = {l_p}"),
                    }
                } else {
                    RhoBound::Inapplicable {
                        reason: format!("gamma * L_P = {} >= 1", g * l_p),
                    }
                }
            }
        },
        IpmKind::Mmd => RhoBound::Unsupported {
            reason: "RKHS norm of V*_xi is not computed".into(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Inconclusive,
    Violated,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        })
    }
}

/// Which inequality a check refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Q,
    V,
    Policy,
}

/// One inequality at one history: the LHS is known to lie in
/// `[lhs_lo, lhs_hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryCheck {
    pub kind: CheckKind,
    pub t: usize,
    pub history: String,
    pub action: Option<usize>,
    pub lhs_lo: f64,
    pub lhs_hi: f64,
    pub rhs: f64,
    pub verdict: Verdict,
}

fn verdict(lhs_lo: f64, lhs_hi: f64, rhs: f64) -> Verdict {
    if lhs_hi <= rhs {
        Verdict::Certified
    } else if lhs_lo > rhs {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    }
}

/// Range of `|x - y|` for `x` in `a` and `y` in `b`.
fn abs_diff_range(a: Interval, b: Interval) -> (f64, f64) {
    let hi = (a.hi - b.lo).max(b.hi - a.lo);
    let lo = (a.lo - b.hi).max(b.lo - a.hi).max(0.0);
    (lo, hi)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub checked: usize,
    pub certified: usize,
    pub inconclusive: usize,
    pub violated: usize,
    /// `min(rhs - lhs_hi)` over all checks.
    pub worst_slack: f64,
    pub worst_history: String,
}

impl CheckSummary {
    fn from_checks<'a>(checks: impl Iterator<Item = &'a HistoryCheck>) -> Self {
        let mut s = CheckSummary {
            worst_slack: f64::INFINITY,
            ..Default::default()
        };
        for c in checks {
            s.checked += 1;
            match c.verdict {
                Verdict::Certified => s.certified += 1,
                Verdict::Inconclusive => s.inconclusive += 1,
                Verdict::Violated => s.violated += 1,
            }
            let slack = c.rhs - c.lhs_hi;
            if slack < s.worst_slack {
                s.worst_slack = slack;
                s.worst_history = match c.action {
                    Some(a) => format!("{} | a{a}", c.history),
                    None => c.history.clone(),
                };
            }
        }
        s
    }

    pub fn all_certified(&self) -> bool {
        self.certified == self.checked
    }
}

/// One row of the per-depth summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub t: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub eps_bar: f64,
    pub delta_bar: f64,
    pub eps_sup: f64,
    pub delta_sup: f64,
    /// `(eps_bar + gamma delta_bar rho) / (1 - gamma)`.
    pub rhs: f64,
    /// Largest upper end of the value-check LHS intervals at this depth.
    pub worst_lhs: f64,
    pub sandwich_width: f64,
    pub verdict: Verdict,
}

/// Assumptions and truncation choices under which a certificate was made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub time_origin: String,
    pub reachability: String,
    pub profile_depth: usize,
    pub t_cert: usize,
    pub t_dp: usize,
    pub eps_tail: f64,
    pub delta_tail: f64,
    pub q_xi_error: f64,
    pub dp_numerical_error: f64,
    pub notes: Vec<String>,
}

pub const TIME_ORIGIN: &str =
    "t = 1 is the first observation, taken after the null action 0; sigma_1(h_1) = f(z0, y1, 0)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub ipm: IpmKind,
    pub gamma: f64,
    pub epsilon: Profile,
    pub delta: Profile,
    pub eps_aggregate: Aggregate,
    pub delta_aggregate: Aggregate,
    /// `rho_F(V*_xi)` over the active agent states, padded by the solver error.
    pub rho_value: f64,
    pub rho_bound: RhoBound,
    pub rows: Vec<DepthRow>,
    pub q_check: CheckSummary,
    pub v_check: CheckSummary,
    pub policy_check: CheckSummary,
    /// True when some sandwich is wider than 1% of its RHS; verdicts remain
    /// interval-safe but the margin is mostly truncation.
    pub coarse_sandwich: bool,
    pub checks: Vec<HistoryCheck>,
    pub conventions: Conventions,
}

impl BoundCertificate {
    pub fn all_certified(&self) -> bool {
        self.q_check.all_certified() && self.v_check.all_certified() && self.policy_check.all_certified()
    }

    pub fn any_violated(&self) -> bool {
        self.q_check.violated + self.v_check.violated + self.policy_check.violated > 0
    }

    /// RHS at depth `t` (1-based).
    pub fn rhs(&self, t: usize) -> f64 {
        self.rows[t - 1].rhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    /// Depth to which `eps_t` / `delta_t` are computed exactly.
    pub profile_depth: usize,
    /// Policy under which histories are enumerated; `None` is uniform.
    pub exploration: Option<AgentPolicy>,
    /// Bound on `|q_xi - Q*_xi|_inf` for the table passed to [`certify`].
    pub q_xi_error: f64,
    pub tree_cap: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            profile_depth: 6,
            exploration: None,
            q_xi_error: 1e-9,
            tree_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// Checks the value, V and policy bounds at every enumerated history of
/// depth `t <= t_cert` against finite-horizon values of horizon `t_dp`.
/// `q_xi` must be (a close approximation of) `Q*_xi` for `sm`.
pub fn certify(
    p: &Pomdp,
    m: &AgentStateMachine,
    sm: &StationaryModel,
    q_xi: &QTable,
    kind: IpmKind,
    t_cert: usize,
    t_dp: usize,
    opts: &CertifyOptions,
) -> Result<BoundCertificate> {
    let spec = agent_state_ipm(kind, m)?;
    check_certifiable(&spec)?;
    if t_cert == 0 || t_dp <= t_cert {
        return Err(Error::Config(format!("need 0 < t_cert < t_dp (got {t_cert}, {t_dp})")));
    }
    if q_xi.n_z() != m.n_z() || q_xi.n_a() != p.n_actions() {
        return Err(Error::Config("Q table does not match the machine".into()));
    }
    let gamma = p.discount();
    let depth = opts.profile_depth.max(t_cert);
    let tree = HistoryTree::enumerate_with_cap(p, m, opts.exploration.as_ref(), depth, opts.tree_cap)?;
    let prof = epsilon_delta_on_tree(p, m, sm, &spec, &tree)?;
    let eps_tail = p.reward_span();
    let delta_tail = spec.diameter();
    let eps_agg = aggregate(&prof.epsilon.values, gamma, eps_tail);
    let delta_agg = aggregate(&prof.delta.values, gamma, delta_tail);

    let err = opts.q_xi_error;
    let v_xi = q_xi.greedy_values();
    let min_d = match spec.matrix() {
        Some(d) => (0..m.n_z())
            .flat_map(|i| (0..m.n_z()).filter(move |&j| j != i).map(move |j| d[i * m.n_z() + j]))
            .fold(f64::INFINITY, f64::min),
        None => 1.0,
    };
    let pad = if min_d.is_finite() { 2.0 * err / min_d } else { 0.0 };
    let rho_value = spec.rho_over(&v_xi, &sm.active)? + pad;
    let rho_bound = instance_independent_rho(&spec, sm);
    let rhs_at = |t: usize| (eps_agg.bar[t - 1] + gamma * delta_agg.bar[t - 1] * rho_value) / (1.0 - gamma);

    // finite-horizon values on the certification levels only
    let cert_tree = HistoryTree::enumerate_with_cap(p, m, opts.exploration.as_ref(), t_cert, opts.tree_cap)?;
    let policy = q_xi.greedy_policy();
    let table: HistoryValueTable = solve_history_dp(p, m, &cert_tree, t_dp, Some(&policy))?;

    let mut checks = Vec::new();
    for t in 1..=t_cert {
        let rhs = rhs_at(t);
        for i in cert_tree.level(t) {
            let node = cert_tree.node(i);
            let z = node.agent_state;
            let h = cert_tree.history_string(i);
            for a in 0..p.n_actions() {
                let target = Interval {
                    lo: q_xi.get(z, a) - err,
                    hi: q_xi.get(z, a) + err,
                };
                let (lo, hi) = abs_diff_range(table.q_interval(i, a), target);
                checks.push(HistoryCheck {
                    kind: CheckKind::Q,
                    t,
                    history: h.clone(),
                    action: Some(a),
                    lhs_lo: lo,
                    lhs_hi: hi,
                    rhs,
                    verdict: verdict(lo, hi, rhs),
                });
            }
            let target = Interval {
                lo: v_xi[z] - err,
                hi: v_xi[z] + err,
            };
            let v_int = table.v_interval(i);
            let (lo, hi) = abs_diff_range(v_int, target);
            checks.push(HistoryCheck {
                kind: CheckKind::V,
                t,
                history: h.clone(),
                action: None,
                lhs_lo: lo,
                lhs_hi: hi,
                rhs,
                verdict: verdict(lo, hi, rhs),
            });
            let pi_int = table.v_pi_interval(i).expect("policy values requested");
            let (lo, hi) = abs_diff_range(v_int, pi_int);
            checks.push(HistoryCheck {
                kind: CheckKind::Policy,
                t,
                history: h,
                action: None,
                lhs_lo: lo,
                lhs_hi: hi,
                rhs: 2.0 * rhs,
                verdict: verdict(lo, hi, 2.0 * rhs),
            });
        }
    }

    let mut coarse = false;
    let rows: Vec<DepthRow> = (1..=t_cert)
        .map(|t| {
            let width = table.slack(t);
            let rhs = rhs_at(t);
            coarse |= width > 0.01 * rhs;
            let at_t: Vec<&HistoryCheck> = checks.iter().filter(|c| c.t == t).collect();
            let worst_lhs = at_t
                .iter()
                .filter(|c| c.kind != CheckKind::Policy)
                .map(|c| c.lhs_hi)
                .fold(0.0, f64::max);
            let verdict = at_t.iter().map(|c| c.verdict).max_by_key(|v| *v as u8).unwrap_or(Verdict::Certified);
            DepthRow {
                t,
                epsilon: prof.epsilon.get(t),
                delta: prof.delta.get(t),
                eps_bar: eps_agg.bar[t - 1],
                delta_bar: delta_agg.bar[t - 1],
                eps_sup: eps_agg.sup[t - 1],
                delta_sup: delta_agg.sup[t - 1],
                rhs,
                worst_lhs,
                sandwich_width: width,
                verdict,
            }
        })
        .collect();

    let q_check = CheckSummary::from_checks(checks.iter().filter(|c| c.kind == CheckKind::Q));
    let v_check = CheckSummary::from_checks(checks.iter().filter(|c| c.kind == CheckKind::V));
    let policy_check = CheckSummary::from_checks(checks.iter().filter(|c| c.kind == CheckKind::Policy));
    let reachability = match &opts.exploration {
        None => "maxima over histories with positive probability under uniform exploration".to_string(),
        Some(_) => "maxima over histories with positive probability under the given exploration policy".to_string(),
    };
    Ok(BoundCertificate {
        ipm: kind,
        gamma,
        epsilon: prof.epsilon,
        delta: prof.delta,
        eps_aggregate: eps_agg,
        delta_aggregate: delta_agg,
        rho_value,
        rho_bound,
        rows,
        q_check,
        v_check,
        policy_check,
        coarse_sandwich: coarse,
        checks,
        conventions: Conventions {
            time_origin: TIME_ORIGIN.into(),
            reachability,
            profile_depth: depth,
            t_cert,
            t_dp,
            eps_tail,
            delta_tail,
            q_xi_error: err,
            dp_numerical_error: table.numerical_error,
            notes: sm.notes(),
        },
    })
}
