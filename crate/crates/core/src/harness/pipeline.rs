//! End-to-end jobs behind the command-line modes.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InstanceSource, Mode, ReprSpec};
use super::instances::RandomInstanceSpec;
use super::report::{join_floats, write_csv, write_json, Report};
use crate::agent_state::{AgentPolicy, AgentStateMachine, HistoryTree};
use crate::ais::{model_gap, train_rql_ais, AisRun, ModelGap};
use crate::bounds::{agent_state_ipm, certify, instance_independent_rho, BoundCertificate, CertifyOptions};
use crate::chain::{analyze, StationaryMethod, StationaryModel, StationaryOptions};
use crate::error::Result;
use crate::ipm::IpmKind;
use crate::pomdp::{Pomdp, PomdpFile};
use crate::rql::{rql_train, RqlRun};
use crate::solvers::{policy_iteration, solve_history_dp, solve_q_xi, state_value_iteration, QTable};

/// Slack for comparisons between exactly computed quantities.
pub const ARITH_TOL: f64 = 1e-9;

/// A loaded instance, its agent-state machine and exploration policy.
#[derive(Clone, Debug)]
pub struct Setup {
    pub pomdp: Pomdp,
    pub machine: AgentStateMachine,
    pub exploration: AgentPolicy,
    pub instance: String,
    pub representation: String,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let pomdp = cfg.load_instance()?;
        let machine = cfg.representation.build(&pomdp)?;
        let exploration = cfg.exploration.build(&machine)?;
        Ok(Setup {
            pomdp,
            machine,
            exploration,
            instance: cfg.instance.label(),
            representation: cfg.representation.label(),
        })
    }

    pub fn analyze(&self, opts: &StationaryOptions) -> Result<StationaryModel> {
        analyze(&self.pomdp, &self.machine, &self.exploration, opts)
    }
}

/// What a job produced and whether it met its pass condition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub instance: String,
    pub n_states: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub valid: bool,
    pub violations: Vec<String>,
}

/// Loads the instance without the constructor checks and reports every
/// violation found.
pub fn validate_instance(source: &InstanceSource) -> Result<ValidateReport> {
    let p = match source {
        InstanceSource::File { path } => {
            let file: PomdpFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            file.into_pomdp_unchecked()?
        }
        other => other.load()?,
    };
    let report = p.validate();
    Ok(ValidateReport {
        instance: source.label(),
        n_states: p.n_states(),
        n_obs: p.n_obs(),
        n_actions: p.n_actions(),
        discount: p.discount(),
        valid: report.is_ok(),
        violations: report.violations.iter().map(|v| v.to_string()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub z: usize,
    pub a: usize,
    pub xi: f64,
    pub reachable: bool,
    pub r_xi: f64,
    pub obs_pred: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub instance: String,
    pub representation: String,
    pub n_joint: usize,
    pub n_z: usize,
    pub n_a: usize,
    pub method: StationaryMethod,
    pub iterations: usize,
    pub residual: f64,
    pub recurrent_classes: usize,
    pub unique: bool,
    pub positivity_ok: bool,
    pub min_xi: f64,
    pub reachable_pairs: usize,
    pub active_states: usize,
    pub notes: Vec<String>,
    pub pairs: Vec<PairRow>,
}

pub fn analyze_report(setup: &Setup, sm: &StationaryModel) -> AnalyzeReport {
    let st = &sm.stationary;
    let pairs = (0..sm.n_z)
        .flat_map(|z| (0..sm.n_a).map(move |a| (z, a)))
        .map(|(z, a)| PairRow {
            z,
            a,
            xi: sm.xi_za[z * sm.n_a + a],
            reachable: sm.is_reachable(z, a),
            r_xi: sm.r_xi(z, a),
            obs_pred: join_floats(sm.obs_pred_row(z, a)),
        })
        .collect();
    AnalyzeReport {
        instance: setup.instance.clone(),
        representation: setup.representation.clone(),
        n_joint: st.xi.len(),
        n_z: sm.n_z,
        n_a: sm.n_a,
        method: st.method,
        iterations: st.iterations,
        residual: st.residual,
        recurrent_classes: st.recurrent_classes,
        unique: st.unique,
        positivity_ok: st.positivity_ok,
        min_xi: st.min_xi,
        reachable_pairs: sm.reachable.iter().filter(|&&r| r).count(),
        active_states: sm.active.iter().filter(|&&a| a).count(),
        notes: sm.notes(),
        pairs,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub history: String,
    pub depth: usize,
    pub agent_state: usize,
    pub action: usize,
    pub q_finite: f64,
    pub sandwich_lo: f64,
    pub sandwich_hi: f64,
    pub q_xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub instance: String,
    pub representation: String,
    pub gamma: f64,
    pub q_xi: QTable,
    pub iterations: usize,
    pub certified_error: f64,
    /// `|Q_VI - Q_PI|_inf` between the two solver routes.
    pub route_gap: f64,
    pub greedy_policy: Vec<usize>,
    pub history: Vec<HistoryRow>,
}

pub fn solve_report(setup: &Setup, sm: &StationaryModel, cfg: &ExperimentConfig) -> Result<SolveReport> {
    let p = &setup.pomdp;
    let gamma = p.discount();
    let vi = solve_q_xi(sm, gamma, cfg.solve.tol);
    let pi = policy_iteration(sm, gamma);
    let route_gap = vi.table.sup_gap(&pi);
    let mut history = Vec::new();
    if cfg.solve.horizon > 0 && cfg.solve.history_depth > 0 {
        let depth = cfg.solve.history_depth.min(cfg.solve.horizon);
        let tree = HistoryTree::enumerate(p, &setup.machine, Some(&setup.exploration), depth)?;
        let table = solve_history_dp(p, &setup.machine, &tree, cfg.solve.horizon, None)?;
        for i in 0..tree.len() {
            let node = tree.node(i);
            for a in 0..p.n_actions() {
                let iv = table.q_interval(i, a);
                history.push(HistoryRow {
                    history: tree.history_string(i),
                    depth: node.depth,
                    agent_state: node.agent_state,
                    action: a,
                    q_finite: table.q(i, a),
                    sandwich_lo: iv.lo,
                    sandwich_hi: iv.hi,
                    q_xi: pi.get(node.agent_state, a),
                });
            }
        }
    }
    Ok(SolveReport {
        instance: setup.instance.clone(),
        representation: setup.representation.clone(),
        gamma,
        greedy_policy: pi.greedy_policy(),
        q_xi: pi,
        iterations: vi.iterations,
        certified_error: vi.certified_error,
        route_gap,
        history,
    })
}

/// Certificates for every configured IPM, checked against the exact `Q*_xi`.
pub fn bounds_report(setup: &Setup, sm: &StationaryModel, cfg: &ExperimentConfig) -> Result<Vec<BoundCertificate>> {
    let p = &setup.pomdp;
    let q = policy_iteration(sm, p.discount());
    let opts = CertifyOptions {
        profile_depth: cfg.bounds.profile_depth,
        exploration: Some(setup.exploration.clone()),
        ..Default::default()
    };
    cfg.bounds
        .ipm
        .iter()
        .map(|&kind| certify(p, &setup.machine, sm, &q, kind, cfg.bounds.t_cert, cfg.bounds.t_dp, &opts))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCsvRow {
    pub ipm: IpmKind,
    pub t: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub eps_bar: f64,
    pub delta_bar: f64,
    pub eps_sup: f64,
    pub delta_sup: f64,
    pub rho: f64,
    pub rhs: f64,
    pub worst_lhs: f64,
    pub sandwich_width: f64,
    pub verdict: String,
}

fn depth_rows(certs: &[BoundCertificate]) -> Vec<DepthCsvRow> {
    certs
        .iter()
        .flat_map(|c| {
            c.rows.iter().map(move |r| DepthCsvRow {
                ipm: c.ipm,
                t: r.t,
                epsilon: r.epsilon,
                delta: r.delta,
                eps_bar: r.eps_bar,
                delta_bar: r.delta_bar,
                eps_sup: r.eps_sup,
                delta_sup: r.delta_sup,
                rho: c.rho_value,
                rhs: r.rhs,
                worst_lhs: r.worst_lhs,
                sandwich_width: r.sandwich_width,
                verdict: r.verdict.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RqlSeedReport {
    pub seed: u64,
    pub final_gap: Option<f64>,
    pub run: RqlRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RqlCsvRow {
    pub step: u64,
    pub sup_gap: Option<f64>,
    pub visited_fraction: f64,
    pub visit_tv: Option<f64>,
}

pub fn train_rql_seed(setup: &Setup, sm: &StationaryModel, cfg: &ExperimentConfig, seed: u64) -> Result<RqlSeedReport> {
    let q_xi = policy_iteration(sm, setup.pomdp.discount());
    let mut rc = cfg.rql.clone();
    rc.seed = seed;
    let run = rql_train(&setup.pomdp, &setup.machine, &setup.exploration, &rc, Some(&q_xi), Some(sm))?;
    Ok(RqlSeedReport {
        seed,
        final_gap: run.log.last().and_then(|r| r.sup_gap),
        run,
    })
}

/// Reference for episodic returns: the optimum of the underlying state MDP
/// (of the episodic closure when the instance has terminal states). It
/// bounds the POMDP optimum from above and equals it when observations
/// reveal the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnReference {
    pub state_mdp_value: f64,
    pub fully_observed: bool,
}

pub fn return_reference(p: &Pomdp) -> ReturnReference {
    let closed = p.episodic_closure();
    let value = state_value_iteration(&closed, 1e-12).initial_value(&closed);
    ReturnReference {
        state_mdp_value: value,
        fully_observed: is_fully_observed(p),
    }
}

/// Every observation row is a point mass and distinct states emit distinct
/// observations.
pub fn is_fully_observed(p: &Pomdp) -> bool {
    let mut owner = vec![None; p.n_obs()];
    for s in 0..p.n_states() {
        for a in 0..p.n_actions() {
            let row = p.observation_row(s, a);
            let Some(y) = row.iter().position(|&o| o == 1.0) else {
                return false;
            };
            match owner[y] {
                None => owner[y] = Some(s),
                Some(t) if t != s => return false,
                _ => {}
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisSeedReport {
    pub seed: u64,
    pub model_gap: ModelGap,
    pub reference: ReturnReference,
    /// Final greedy return over the state-MDP value.
    pub return_ratio: f64,
    pub run: AisRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisCsvRow {
    pub step: u64,
    pub episodes: u64,
    pub updates: u64,
    pub return_mean: f64,
    pub return_std: f64,
    pub reward_loss: f64,
    pub obs_loss: f64,
    pub mean_abs_td: f64,
    pub epsilon: f64,
    pub buffer_size: usize,
    pub delta_tilde: String,
}

pub fn train_rql_ais_seed(setup: &Setup, sm: &StationaryModel, cfg: &ExperimentConfig, seed: u64) -> Result<AisSeedReport> {
    let mut ac = cfg.rql_ais.clone();
    ac.seed = seed;
    let run = train_rql_ais(&setup.pomdp, &setup.machine, &ac)?;
    let reference = return_reference(&setup.pomdp);
    Ok(AisSeedReport {
        seed,
        model_gap: model_gap(&run.params, sm),
        return_ratio: run.final_eval.mean / reference.state_mdp_value,
        reference,
        run,
    })
}

/// One (instance, frame stack, IPM) job of the randomized suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub instance: String,
    pub n_s: usize,
    pub n_y: usize,
    pub n_a: usize,
    pub frame_stack: usize,
    pub ipm: IpmKind,
    pub n_z: usize,
    /// False when the joint chain has several recurrent classes; the row is
    /// then certified against the limit from the instance's start law.
    pub unique_stationary: bool,
    pub positivity_ok: bool,
    pub q_checked: usize,
    pub q_certified: usize,
    pub v_checked: usize,
    pub v_certified: usize,
    pub policy_checked: usize,
    pub policy_certified: usize,
    pub inconclusive: usize,
    pub violated: usize,
    pub worst_slack: f64,
    pub coarse_sandwich: bool,
    /// `rho_F(V*_xi)` over active agent states (exact policy-iteration values).
    pub rho_exact: f64,
    /// Instance-independent bound, when it applies.
    pub rho_bound: Option<f64>,
    pub dominance_ok: bool,
    /// `|Q_VI - Q_PI|_inf`.
    pub route_gap: f64,
    pub certified: bool,
    pub error: String,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.error.is_empty() && self.certified && self.dominance_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub jobs: usize,
    pub certified: usize,
    pub violated_jobs: usize,
    pub dominance_failures: usize,
    /// Rows whose joint chain has no unique stationary law.
    pub non_unique: usize,
    pub errors: usize,
    pub passed: bool,
}

struct SuiteJob {
    source: InstanceSource,
    frame_stack: usize,
}

fn suite_instance(job: &SuiteJob, gamma: Option<f64>) -> Result<Pomdp> {
    let p = job.source.load()?;
    match gamma {
        Some(g) => p.with_discount(g),
        None => Ok(p),
    }
}

fn run_suite_job(job: &SuiteJob, cfg: &ExperimentConfig) -> Vec<SuiteRow> {
    let label = job.source.label();
    let blank = |ipm: IpmKind, err: String, dims: (usize, usize, usize)| SuiteRow {
        instance: label.clone(),
        n_s: dims.0,
        n_y: dims.1,
        n_a: dims.2,
        frame_stack: job.frame_stack,
        ipm,
        n_z: 0,
        unique_stationary: false,
        positivity_ok: false,
        q_checked: 0,
        q_certified: 0,
        v_checked: 0,
        v_certified: 0,
        policy_checked: 0,
        policy_certified: 0,
        inconclusive: 0,
        violated: 0,
        worst_slack: f64::NAN,
        coarse_sandwich: false,
        rho_exact: f64::NAN,
        rho_bound: None,
        dominance_ok: false,
        route_gap: f64::NAN,
        certified: false,
        error: err,
    };
    let p = match suite_instance(job, cfg.gamma) {
        Ok(p) => p,
        Err(e) => return cfg.bounds.ipm.iter().map(|&k| blank(k, e.to_string(), (0, 0, 0))).collect(),
    };
    let dims = (p.n_states(), p.n_obs(), p.n_actions());
    let prepared = (|| -> Result<_> {
        let m = AgentStateMachine::frame_stack(job.frame_stack, &p)?;
        let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
        let sm = analyze(&p, &m, &pi, &cfg.stationary)?;
        let q = policy_iteration(&sm, p.discount());
        let vi = solve_q_xi(&sm, p.discount(), cfg.solve.tol);
        Ok((m, pi, sm, q, vi))
    })();
    let (m, pi, sm, q, vi) = match prepared {
        Ok(x) => x,
        Err(e) => return cfg.bounds.ipm.iter().map(|&k| blank(k, e.to_string(), dims)).collect(),
    };
    let route_gap = vi.table.values().iter().zip(q.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let opts = CertifyOptions {
        profile_depth: cfg.bounds.profile_depth,
        exploration: Some(pi),
        ..Default::default()
    };
    let v = q.greedy_values();
    cfg.bounds
        .ipm
        .iter()
        .map(|&kind| {
            let res = (|| -> Result<SuiteRow> {
                let spec = agent_state_ipm(kind, &m)?;
                let rho_exact = spec.rho_over(&v, &sm.active)?;
                let rho_bound = instance_independent_rho(&spec, &sm).value();
                let dominance_ok = rho_bound.is_none_or(|b| rho_exact <= b + ARITH_TOL);
                let c = certify(&p, &m, &sm, &q, kind, cfg.bounds.t_cert, cfg.bounds.t_dp, &opts)?;
                let sums = [&c.q_check, &c.v_check, &c.policy_check];
                Ok(SuiteRow {
                    n_z: m.n_z(),
                    unique_stationary: sm.stationary.unique,
                    positivity_ok: sm.positivity_ok(),
                    q_checked: c.q_check.checked,
                    q_certified: c.q_check.certified,
                    v_checked: c.v_check.checked,
                    v_certified: c.v_check.certified,
                    policy_checked: c.policy_check.checked,
                    policy_certified: c.policy_check.certified,
                    inconclusive: sums.iter().map(|s| s.inconclusive).sum(),
                    violated: sums.iter().map(|s| s.violated).sum(),
                    worst_slack: sums.iter().map(|s| s.worst_slack).fold(f64::INFINITY, f64::min),
                    coarse_sandwich: c.coarse_sandwich,
                    rho_exact,
                    rho_bound,
                    dominance_ok,
                    route_gap,
                    certified: c.all_certified(),
                    error: String::new(),
                    ..blank(kind, String::new(), dims)
                })
            })();
            res.unwrap_or_else(|e| blank(kind, e.to_string(), dims))
        })
        .collect()
}

/// Runs certification and dominance checks on `suite.instances` random
/// instances (plus `suite.extra`) for every frame stack size and IPM.
pub fn run_suite(cfg: &ExperimentConfig) -> SuiteReport {
    let s = &cfg.suite;
    let mut sources: Vec<InstanceSource> = (0..s.instances as u64)
        .map(|i| {
            InstanceSource::Random(RandomInstanceSpec {
                seed: s.base_seed + i,
                ..s.random.clone()
            })
        })
        .collect();
    sources.extend(s.extra.iter().cloned());
    let jobs: Vec<SuiteJob> = sources
        .into_iter()
        .flat_map(|source| {
            s.frame_stacks.iter().map(move |&frame_stack| SuiteJob {
                source: source.clone(),
                frame_stack,
            })
        })
        .collect();
    let rows: Vec<SuiteRow> = jobs.par_iter().flat_map_iter(|j| run_suite_job(j, cfg)).collect();
    let count = |f: &dyn Fn(&SuiteRow) -> bool| rows.iter().filter(|r| f(r)).count();
    SuiteReport {
        jobs: rows.len(),
        certified: count(&|r| r.certified),
        violated_jobs: count(&|r| r.violated > 0),
        dominance_failures: count(&|r| r.error.is_empty() && !r.dominance_ok),
        non_unique: count(&|r| r.error.is_empty() && !r.unique_stationary),
        errors: count(&|r| !r.error.is_empty()),
        passed: rows.iter().all(SuiteRow::passed),
        rows,
    }
}

fn out_file(cfg: &ExperimentConfig, name: &str) -> Option<PathBuf> {
    cfg.out.as_ref().map(|d| d.join(name))
}

fn emit_json<T: Serialize>(out: &mut Outcome, path: Option<PathBuf>, value: &T) -> Result<()> {
    if let Some(path) = path {
        write_json(&path, value)?;
        out.files.push(path);
    }
    Ok(())
}

fn emit_csv<R: Serialize>(out: &mut Outcome, path: Option<PathBuf>, rows: &[R]) -> Result<()> {
    if let Some(path) = path {
        write_csv(&path, rows)?;
        out.files.push(path);
    }
    Ok(())
}

/// The config as it applies to one seed's artifacts, so a seed re-run on its
/// own reproduces them.
fn single_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seeds: vec![seed],
        ..cfg.clone()
    }
}

/// Runs the configured mode and writes its artifacts under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Outcome::default();
    match cfg.mode {
        Mode::Validate => {
            let r = validate_instance(&cfg.instance)?;
            out.passed = r.valid;
            out.summary.push(format!(
                "{}: {} states, {} observations, {} actions, {}",
                r.instance,
                r.n_states,
                r.n_obs,
                r.n_actions,
                if r.valid { "valid" } else { "INVALID" }
            ));
            out.summary.extend(r.violations.iter().map(|v| format!("  {v}")));
            emit_json(&mut out, out_file(cfg, "validate.json"), &Report::new(cfg, r))?;
        }
        Mode::Analyze => {
            let setup = Setup::from_config(cfg)?;
            let sm = setup.analyze(&cfg.stationary)?;
            let r = analyze_report(&setup, &sm);
            out.passed = r.unique;
            out.summary.push(format!(
                "{} / {}: {} joint states, {} recurrent class(es), {}/{} reachable pairs, residual {:e}",
                r.instance,
                r.representation,
                r.n_joint,
                r.recurrent_classes,
                r.reachable_pairs,
                r.n_z * r.n_a,
                r.residual
            ));
            out.summary.extend(r.notes.iter().map(|n| format!("  note: {n}")));
            emit_csv(&mut out, out_file(cfg, "analyze.csv"), &r.pairs)?;
            let notes = r.notes.clone();
            emit_json(&mut out, out_file(cfg, "analyze.json"), &Report::new(cfg, r).with_notes(notes))?;
        }
        Mode::Solve => {
            let setup = Setup::from_config(cfg)?;
            let sm = setup.analyze(&cfg.stationary)?;
            let r = solve_report(&setup, &sm, cfg)?;
            out.passed = r.route_gap <= cfg.solve.tol;
            out.summary.push(format!(
                "Q*_xi: {} iterations, error <= {:e}, route gap {:e}, greedy policy {:?}",
                r.iterations, r.certified_error, r.route_gap, r.greedy_policy
            ));
            emit_csv(&mut out, out_file(cfg, "history_values.csv"), &r.history)?;
            emit_json(&mut out, out_file(cfg, "solve.json"), &Report::new(cfg, r).with_notes(sm.notes()))?;
        }
        Mode::Bounds => {
            let setup = Setup::from_config(cfg)?;
            let sm = setup.analyze(&cfg.stationary)?;
            let certs = bounds_report(&setup, &sm, cfg)?;
            out.passed = certs.iter().all(BoundCertificate::all_certified);
            for c in &certs {
                out.summary.push(format!(
                    "{}: rho {:.6}, rhs(1) {:.6}, Q {}/{}, V {}/{}, policy {}/{} certified{}",
                    c.ipm,
                    c.rho_value,
                    c.rhs(1),
                    c.q_check.certified,
                    c.q_check.checked,
                    c.v_check.certified,
                    c.v_check.checked,
                    c.policy_check.certified,
                    c.policy_check.checked,
                    if c.coarse_sandwich { " (coarse sandwich)" } else { "" }
                ));
            }
            emit_csv(&mut out, out_file(cfg, "bounds.csv"), &depth_rows(&certs))?;
            emit_json(&mut out, out_file(cfg, "bounds.json"), &Report::new(cfg, certs).with_notes(sm.notes()))?;
        }
        Mode::TrainRql => {
            let setup = Setup::from_config(cfg)?;
            let sm = setup.analyze(&cfg.stationary)?;
            out.passed = true;
            for &seed in &cfg.seeds {
                let r = train_rql_seed(&setup, &sm, cfg, seed)?;
                out.summary.push(format!(
                    "seed {seed}: {} steps, final sup gap {}",
                    r.run.steps,
                    r.final_gap.map_or("n/a".into(), |g| format!("{g:.6}"))
                ));
                let rows: Vec<RqlCsvRow> = r
                    .run
                    .log
                    .iter()
                    .map(|m| RqlCsvRow {
                        step: m.step,
                        sup_gap: m.sup_gap,
                        visited_fraction: m.visited_fraction,
                        visit_tv: m.visit_tv,
                    })
                    .collect();
                emit_csv(&mut out, out_file(cfg, &format!("rql_seed{seed}.csv")), &rows)?;
                emit_json(&mut out, out_file(cfg, &format!("rql_seed{seed}.json")), &Report::new(&single_seed(cfg, seed), r))?;
            }
        }
        Mode::TrainRqlAis => {
            let setup = Setup::from_config(cfg)?;
            let sm = setup.analyze(&cfg.stationary)?;
            out.passed = true;
            for &seed in &cfg.seeds {
                let r = train_rql_ais_seed(&setup, &sm, cfg, seed)?;
                out.passed &= r.run.drift_violations == 0;
                out.summary.push(format!(
                    "seed {seed}: return {:.4} ({:.3} of the state-MDP value), reward gap {:.2e}, obs TV {:.4}, drift violations {}",
                    r.run.final_eval.mean, r.return_ratio, r.model_gap.reward, r.model_gap.obs_tv, r.run.drift_violations
                ));
                let rows: Vec<AisCsvRow> = r
                    .run
                    .log
                    .iter()
                    .map(|l| AisCsvRow {
                        step: l.step,
                        episodes: l.episodes,
                        updates: l.updates,
                        return_mean: l.return_mean,
                        return_std: l.return_std,
                        reward_loss: l.reward_loss,
                        obs_loss: l.obs_loss,
                        mean_abs_td: l.mean_abs_td,
                        epsilon: l.epsilon,
                        buffer_size: l.buffer_size,
                        delta_tilde: join_floats(&l.delta_tilde),
                    })
                    .collect();
                emit_csv(&mut out, out_file(cfg, &format!("rql_ais_seed{seed}.csv")), &rows)?;
                emit_json(&mut out, out_file(cfg, &format!("rql_ais_seed{seed}.json")), &Report::new(&single_seed(cfg, seed), r))?;
            }
        }
        Mode::Suite => {
            let r = run_suite(cfg);
            out.passed = r.passed;
            out.summary.push(format!(
                "{} jobs: {} certified, {} with violations, {} dominance failures, {} without a unique stationary law, {} errors",
                r.jobs, r.certified, r.violated_jobs, r.dominance_failures, r.non_unique, r.errors
            ));
            for row in r.rows.iter().filter(|row| row.error.is_empty() && !row.unique_stationary) {
                out.summary.push(format!("  note {} fs{} {}: stationary law not unique", row.instance, row.frame_stack, row.ipm));
            }
            for row in r.rows.iter().filter(|row| !row.passed()) {
                out.summary.push(format!(
                    "  FAILED {} fs{} {}: {}",
                    row.instance,
                    row.frame_stack,
                    row.ipm,
                    if row.error.is_empty() { "not certified" } else { &row.error }
                ));
            }
            emit_csv(&mut out, out_file(cfg, "suite.csv"), &r.rows)?;
            emit_json(&mut out, out_file(cfg, "suite.json"), &Report::new(cfg, r))?;
        }
    }
    Ok(out)
}

/// Convenience for callers holding a representation spec and instance
/// source rather than a full config.
pub fn setup(instance: &InstanceSource, repr: &ReprSpec) -> Result<Setup> {
    let cfg = ExperimentConfig {
        instance: instance.clone(),
        representation: repr.clone(),
        ..Default::default()
    };
    Setup::from_config(&cfg)
}
