//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;
use serde::de::DeserializeOwned;

use rqlab::ais::{expected_simplified_obs_loss, ais_update, AisConfig, AisParameters, AisSample};
use rqlab::bounds::{agent_state_ipm, epsilon_delta_profile, span_bound};
use rqlab::chain::{analyze, StationaryOptions};
use rqlab::harness::instances::{canonical, fully_observed3, CANONICAL_NAMES};
use rqlab::harness::pipeline::{AisSeedReport, RqlSeedReport};
use rqlab::harness::report::Report;
use rqlab::harness::{run, ExperimentConfig, InstanceSource, Mode, ReprSpec, SuiteReport};
use rqlab::ipm::{IpmKind, IpmSpec};
use rqlab::rng;
use rqlab::rql::RqlConfig;
use rqlab::solvers::{policy_iteration, solve_history_dp};
use rqlab::{AgentPolicy, AgentStateMachine, HistoryTree};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Gradient entries smaller than this sit within a few thousand ulps of the
/// stencil's rounding noise, so they are compared absolutely.
const FD_FLOOR: f64 = 1e-6;
const CHECKPOINTS: [u64; 4] = [10_000, 100_000, 1_000_000, 2_000_000];

struct Verdicts(Vec<(usize, bool)>);

impl Verdicts {
    fn record(&mut self, n: usize, name: &str, pass: bool, details: &[String]) {
        println!("criterion {n} {}: {name}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("    {d}");
        }
        self.0.push((n, pass));
    }
}

fn read<T: DeserializeOwned>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn run_into(cfg: &ExperimentConfig, dir: &Path) -> (bool, f64) {
    let mut cfg = cfg.clone();
    cfg.out = Some(dir.to_path_buf());
    let start = Instant::now();
    let out = run(&cfg).expect("acceptance job runs");
    (out.passed, start.elapsed().as_secs_f64())
}

fn rql_config() -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::TrainRql,
        seeds: SEEDS.to_vec(),
        instance: InstanceSource::Canonical {
            name: "two-state-drift".into(),
        },
        representation: ReprSpec::FrameStack { n: 2 },
        rql: RqlConfig {
            steps: 2_000_000,
            checkpoints: CHECKPOINTS.to_vec(),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn suite_config() -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Suite,
        ..Default::default()
    }
}

fn ais_config(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::TrainRqlAis,
        seeds,
        instance: InstanceSource::Canonical {
            name: "sparse-corridor".into(),
        },
        representation: ReprSpec::FrameStack { n: 1 },
        ..Default::default()
    }
}

fn criterion_1(v: &mut Verdicts, dir: &Path) {
    let cfg = rql_config();
    let (_, secs) = run_into(&cfg, dir);
    let reports: Vec<Report<RqlSeedReport>> = SEEDS.iter().map(|s| read(&dir.join(format!("rql_seed{s}.json")))).collect();
    let p = canonical("two-state-drift").unwrap();
    let threshold = 0.05 * p.reward_span() / (1.0 - p.discount());
    let medians: Vec<f64> = CHECKPOINTS
        .iter()
        .map(|&c| median(reports.iter().map(|r| r.body.run.gap_at(c).expect("checkpoint logged")).collect()))
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let last = *medians.last().unwrap();
    let per_seed = secs / SEEDS.len() as f64;
    v.record(
        1,
        "online RQL reaches the induced fixed point",
        decreasing && last < threshold && per_seed < 120.0,
        &[
            format!("gamma {}, frame stack 2, harmonic rate, 2e6 steps x {} seeds", p.discount(), SEEDS.len()),
            format!("median sup gaps at {CHECKPOINTS:?}: {medians:.4?}"),
            format!("strictly decreasing: {decreasing}; final {last:.4} < {threshold:.4}"),
            format!("{per_seed:.1} s per seed"),
        ],
    );
}

fn criterion_2(v: &mut Verdicts, dir: &Path) {
    let cfg = suite_config();
    let (passed, secs) = run_into(&cfg, dir);
    let r: Report<SuiteReport> = read(&dir.join("suite.json"));
    let s = r.body;
    let instances = s.rows.iter().map(|row| row.instance.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    let checks: usize = s.rows.iter().map(|row| row.q_checked + row.v_checked + row.policy_checked).sum();
    let certified: usize = s.rows.iter().map(|row| row.q_certified + row.v_certified + row.policy_certified).sum();
    let violated: usize = s.rows.iter().map(|row| row.violated).sum();
    let all = s.certified == s.jobs && violated == 0 && s.errors == 0;
    let worst = s.rows.iter().map(|row| row.worst_slack).fold(f64::INFINITY, f64::min);
    v.record(
        2,
        "randomized certification suite",
        all && instances == 100 && secs < 600.0,
        &[
            format!(
                "{instances} instances x frame stacks {:?} x {:?}: {} jobs, {} certified, {} errors",
                cfg.suite.frame_stacks, cfg.bounds.ipm, s.jobs, s.certified, s.errors
            ),
            format!("{certified}/{checks} Q, V and policy inequalities certified, {violated} violated, minimum slack {worst:.4}"),
            format!("harness verdict {passed}, {secs:.1} s"),
        ],
    );
}

fn criterion_3(v: &mut Verdicts) {
    let p = fully_observed3();
    let m = AgentStateMachine::frame_stack(1, &p).unwrap();
    let pi = AgentPolicy::uniform(m.n_z(), p.n_actions());
    let sm = analyze(&p, &m, &pi, &StationaryOptions::default()).unwrap();
    let spec = agent_state_ipm(IpmKind::Tv, &m).unwrap();
    let prof = epsilon_delta_profile(&p, &m, &sm, &spec, 4).unwrap();
    let eps = prof.epsilon.values.iter().copied().fold(0.0, f64::max);
    let delta = prof.delta.values.iter().copied().fold(0.0, f64::max);
    let q = policy_iteration(&sm, p.discount());
    let tree = HistoryTree::enumerate(&p, &m, None, 4).unwrap();
    let dp = solve_history_dp(&p, &m, &tree, 40, None).unwrap();
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..tree.len() {
        let node = tree.node(i);
        for a in 0..p.n_actions() {
            let gap = (q.get(node.agent_state, a) - dp.q(i, a)).abs();
            worst_excess = worst_excess.max(gap - dp.slack(node.depth));
        }
    }
    v.record(
        3,
        "perfect representation gives zero error",
        eps <= 1e-9 && delta <= 1e-9 && worst_excess <= 1e-8,
        &[
            format!("max eps_t {eps:.2e}, max delta_t {delta:.2e} over t = 1..4"),
            format!(
                "{} histories: max(|Q*_xi - Q*_t,40| - sandwich width) = {worst_excess:.2e}",
                tree.len()
            ),
        ],
    );
}

fn criterion_4(v: &mut Verdicts) {
    let (t_short, t_long) = (40, 50);
    let mut pass = true;
    let mut details = Vec::new();
    for name in CANONICAL_NAMES {
        let p = canonical(name).unwrap();
        for fs in [1, 2] {
            let m = AgentStateMachine::frame_stack(fs, &p).unwrap();
            let tree = HistoryTree::enumerate(&p, &m, None, 3).unwrap();
            let short = solve_history_dp(&p, &m, &tree, t_short, None).unwrap();
            let long = solve_history_dp(&p, &m, &tree, t_long, None).unwrap();
            let slack = 1e-9 + long.numerical_error;
            let mut outside = 0;
            let mut worst: f64 = f64::INFINITY;
            for i in 0..tree.len() {
                for a in 0..p.n_actions() {
                    let iv = short.q_interval(i, a);
                    let x = long.q(i, a);
                    worst = worst.min((x - iv.lo).min(iv.hi - x));
                    if !iv.contains(x, slack) {
                        outside += 1;
                    }
                }
            }
            pass &= outside == 0;
            details.push(format!(
                "{name} fs{fs}: {} (h, a) pairs, {outside} outside, min margin {worst:.2e}, DP error {:.1e} / {:.1e}",
                tree.len() * p.n_actions(),
                short.numerical_error,
                long.numerical_error
            ));
        }
    }
    v.record(4, "longer horizons stay inside the sandwich", pass, &details);
}

fn tv_by_subsets(mu: &[f64], nu: &[f64]) -> f64 {
    let n = mu.len();
    (0u32..1 << n)
        .map(|set| {
            (0..n)
                .filter(|i| set >> i & 1 == 1)
                .map(|i| mu[i] - nu[i])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

fn w1_by_cdf(mu: &[f64], nu: &[f64]) -> f64 {
    let (mut a, mut b, mut total) = (0.0, 0.0, 0.0);
    for i in 0..mu.len() - 1 {
        a += mu[i];
        b += nu[i];
        total += (a - b).abs();
    }
    total
}

fn random_dist(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.gen::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn criterion_5(v: &mut Verdicts) {
    let mut r = rng::seeded(5);
    let (mut tv_err, mut w_err, mut mmd_min) = (0.0f64, 0.0f64, f64::INFINITY);
    let cases = 2000;
    for _ in 0..cases {
        let n = r.gen_range(1..=12);
        let (mu, nu) = (random_dist(n, &mut r), random_dist(n, &mut r));
        tv_err = tv_err.max((IpmSpec::tv(n).distance(&mu, &nu).unwrap() - tv_by_subsets(&mu, &nu)).abs());
        let w = IpmSpec::wasserstein(IpmSpec::line_metric(n), n).unwrap().distance(&mu, &nu).unwrap();
        w_err = w_err.max((w - w1_by_cdf(&mu, &nu)).abs());
        mmd_min = mmd_min.min(IpmSpec::mmd_default(n).mmd_squared(&mu, &nu));
    }
    v.record(
        5,
        "IPM closed forms",
        tv_err <= 1e-9 && w_err <= 1e-9 && mmd_min >= -1e-9,
        &[
            format!("{cases} random pairs on supports of size 1..12"),
            format!("max |TV - subset supremum| {tv_err:.2e}, max |W1 - CDF formula| {w_err:.2e}, min MMD^2 {mmd_min:.2e}"),
        ],
    );
}

fn criterion_6(v: &mut Verdicts, dir: &Path) {
    let r: Report<SuiteReport> = read(&dir.join("suite.json"));
    let rows = &r.body.rows;
    let with_bound = rows.iter().filter(|row| row.rho_bound.is_some()).count();
    let tv_rows = rows.iter().filter(|row| row.ipm == IpmKind::Tv).count();
    let tv_bounded = rows.iter().filter(|row| row.ipm == IpmKind::Tv && row.rho_bound.is_some()).count();
    let failures = rows.iter().filter(|row| !row.dominance_ok).count();
    let hundred = span_bound(0.0, 1.0, 0.99);
    v.record(
        6,
        "dominance of the instance-independent constants",
        failures == 0 && tv_bounded == tv_rows && (hundred - 100.0).abs() <= 1e-9,
        &[
            format!("{} suite rows, {with_bound} with a bound that applies ({tv_bounded}/{tv_rows} TV), {failures} failures", rows.len()),
            format!("span(r)/(1 - gamma) at r in [0, 1], gamma 0.99: {hundred}"),
        ],
    );
}

fn criterion_7(v: &mut Verdicts) {
    let mut r = rng::seeded(7);
    let mut identity_err = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..=10);
        let (m, p) = (random_dist(n, &mut r), random_dist(n, &mut r));
        let lhs = expected_simplified_obs_loss(&m, &p) + p.iter().map(|x| x * x).sum::<f64>();
        let rhs: f64 = m.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        identity_err = identity_err.max((lhs - rhs).abs());
    }

    let (n_z, n_a, n_y) = (4, 2, 5);
    let mut worst_rel = 0.0f64;
    let (mut small, mut worst_abs) = (0usize, 0.0f64);
    let mut bitwise = true;
    for case in 0..200 {
        let lambda = if case % 10 == 0 { 1.0 } else { r.gen::<f64>() };
        let mut params = AisParameters::new(n_z, n_a, n_y, 0.3, lambda).unwrap();
        params.r_hat.iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0));
        params.obs_logits.iter_mut().for_each(|x| *x = r.gen_range(-2.0..2.0));
        let batch: Vec<AisSample> = (0..64)
            .map(|_| AisSample {
                z: r.gen_range(0..n_z),
                a: r.gen_range(0..n_a),
                reward: r.gen_range(-1.0..2.0),
                next_obs: r.gen_range(0..n_y),
                weight: r.gen_range(0.1..1.0),
            })
            .collect();
        let g = params.gradient(&batch);
        let h = 1e-4;
        let fd = |i: usize, logits: bool| {
            let at = |d: f64| {
                let mut q = params.clone();
                if logits {
                    q.obs_logits[i] += d;
                } else {
                    q.r_hat[i] += d;
                }
                q.loss(&batch)
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        };
        let pairs = (0..params.r_hat.len())
            .map(|i| (g.r_hat[i], fd(i, false)))
            .chain((0..params.obs_logits.len()).map(|i| (g.obs_logits[i], fd(i, true))));
        for (an, num) in pairs {
            let scale = an.abs().max(num.abs());
            if scale >= FD_FLOOR {
                worst_rel = worst_rel.max((an - num).abs() / scale);
            } else {
                small += 1;
                worst_abs = worst_abs.max((an - num).abs());
            }
        }
        if lambda == 1.0 {
            let before = params.obs_logits.clone();
            ais_update(&mut params, &batch).unwrap();
            bitwise &= params.obs_logits == before;
        }
    }
    v.record(
        7,
        "AIS loss and gradients",
        identity_err <= 1e-12 && worst_rel < 1e-5 && worst_abs < 1e-10 && bitwise,
        &[
            format!("simplified loss identity: max error {identity_err:.2e} over 1000 pairs"),
            format!("analytic vs five-point finite differences: max relative error {worst_rel:.2e} over 200 parameter sets"),
            format!("{small} entries below {FD_FLOOR:e} compared absolutely: max error {worst_abs:.2e}"),
            format!("lambda = 1 leaves observation logits bitwise unchanged: {bitwise}"),
        ],
    );
}

fn criterion_8(v: &mut Verdicts, dir: &Path) {
    let cfg = ais_config(SEEDS.to_vec());
    let ac = &cfg.rql_ais;
    let defaults = AisConfig::default();
    let paper_defaults = ac.lambda == 0.5
        && ac.seq_len == 10
        && ac.burn_in == 50
        && ac.n_step == 5
        && ac.batch_size == 256
        && ac.target_sync == 100
        && ac.eps_start == 1.0
        && ac.eps_end == 0.05
        && ac.eps_decay == 400_000.0
        && ac.per.enabled
        && *ac == defaults;
    let (_, secs) = run_into(&cfg, dir);
    let p = canonical("sparse-corridor").unwrap();
    let span = p.reward_span();
    let mut pass = paper_defaults && secs / (SEEDS.len() as f64) < 600.0;
    let mut details = vec![format!(
        "{} steps per seed, lambda {}, L {}, burn-in {}, n {}, batch {}, target sync {}, eps {} -> {} over {}, PER alpha {}",
        ac.steps, ac.lambda, ac.seq_len, ac.burn_in, ac.n_step, ac.batch_size, ac.target_sync, ac.eps_start, ac.eps_end, ac.eps_decay, ac.per.alpha
    )];
    for s in SEEDS {
        let r: Report<AisSeedReport> = read(&dir.join(format!("rql_ais_seed{s}.json")));
        let b = &r.body;
        let max_z = b.run.per_check.iter().map(|x| x.z_score().abs()).fold(0.0, f64::max);
        let ok = b.return_ratio >= 0.9
            && b.model_gap.reward <= 0.02 * span
            && b.model_gap.obs_tv <= 0.05
            && !b.run.per_check.is_empty()
            && max_z <= 3.0
            && b.run.drift_violations == 0
            && b.run.sequences_checked > 0;
        pass &= ok;
        details.push(format!(
            "seed {s}: return {:.4} = {:.3} x optimum {:.5}; reward gap {:.2e}; obs TV {:.4}; PER max |z| {max_z:.2} over {} groups; {} replayed sequences, {} burn-in mismatches",
            b.run.final_eval.mean,
            b.return_ratio,
            b.reference.state_mdp_value,
            b.model_gap.reward,
            b.model_gap.obs_tv,
            b.run.per_check.len(),
            b.run.sequences_checked,
            b.run.drift_violations
        ));
    }
    details.push(format!("{:.1} s per seed", secs / SEEDS.len() as f64));
    v.record(8, "RQL-AIS on the sparse corridor", pass, &details);
}

fn criterion_9(v: &mut Verdicts, dirs: &[(&str, ExperimentConfig, PathBuf)]) {
    let mut pass = true;
    let mut details = Vec::new();
    for (name, cfg, first) in dirs {
        let again = tempfile::tempdir().unwrap();
        run_into(cfg, again.path());
        let a = files(first);
        let b = files(again.path());
        let same = b.iter().all(|(k, bytes)| a.get(k) == Some(bytes)) && !b.is_empty();
        pass &= same;
        details.push(format!("{name}: {} files re-generated, byte-identical: {same}", b.len()));
    }
    v.record(9, "re-runs are byte-identical", pass, &details);
}

fn main() -> ExitCode {
    let mut v = Verdicts(Vec::new());
    let rql_dir = tempfile::tempdir().unwrap();
    let suite_dir = tempfile::tempdir().unwrap();
    let ais_dir = tempfile::tempdir().unwrap();

    criterion_1(&mut v, rql_dir.path());
    criterion_2(&mut v, suite_dir.path());
    criterion_3(&mut v);
    criterion_4(&mut v);
    criterion_5(&mut v);
    criterion_6(&mut v, suite_dir.path());
    criterion_7(&mut v);
    criterion_8(&mut v, ais_dir.path());
    criterion_9(
        &mut v,
        &[
            ("online RQL, 5 seeds", rql_config(), rql_dir.path().to_path_buf()),
            ("certification suite", suite_config(), suite_dir.path().to_path_buf()),
            ("RQL-AIS, seed 0", ais_config(vec![0]), ais_dir.path().to_path_buf()),
        ],
    );

    let failed: Vec<usize> = v.0.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria PASS", v.0.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL on criteria {failed:?}");
        ExitCode::FAILURE
    }
}
