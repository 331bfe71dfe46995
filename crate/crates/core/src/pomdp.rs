//! Finite POMDP models: validation, simulation and Bayesian filtering.
//!
//! States, observations and actions are dense 0-based indices. Tensors are
//! stored flat in row-major order:
//!
//! * `transition[s][a][s']` = P(s' | s, a)
//! * `observation[s'][a][y]` = O(y | s', a)
//! * `reward[s][a]` = r(s, a)
//!
//! The first observation of an episode is drawn from `O(. | s1, a0)` with the
//! null action `a0 = NULL_ACTION`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_index, Rng};

/// Action index used as the "previous action" before the first observation.
pub const NULL_ACTION: usize = 0;

/// Tolerance on probability row sums.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
}

/// On-disk JSON layout of a POMDP instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomdpFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_states: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub observation: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_state_dist: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    /// States after which an episode ends (episodic instances only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminal_states: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    name: Option<String>,
    n_states: usize,
    n_obs: usize,
    n_actions: usize,
    discount: f64,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    labels: Option<Labels>,
    terminal: Vec<bool>,
    r_min: f64,
    r_max: f64,
}

/// One failed invariant found by [`Pomdp::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RowSum {
        tensor: String,
        index: Vec<usize>,
        sum: f64,
    },
    NegativeEntry {
        tensor: String,
        index: Vec<usize>,
        value: f64,
    },
    NonFinite {
        tensor: String,
        index: Vec<usize>,
    },
    Discount {
        value: f64,
    },
    TerminalIndex {
        index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { tensor, index, sum } => {
                write!(f, "{tensor}{index:?} sums to {sum}")
            }
            Violation::NegativeEntry {
                tensor,
                index,
                value,
            } => write!(f, "{tensor}{index:?} has negative entry {value}"),
            Violation::NonFinite { tensor, index } => {
                write!(f, "{tensor}{index:?} is not finite")
            }
            Violation::Discount { value } => write!(f, "discount {value} outside [0, 1)"),
            Violation::TerminalIndex { index } => {
                write!(f, "terminal state {index} out of range")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Result of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub observation: usize,
    pub reward: f64,
}

/// A probability vector over the hidden states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, 1e-9)?;
        Ok(Belief(probs))
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Belief(v)
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One step of a simulated trajectory: observation `y_t`, action `a_t`,
/// reward `R_t = r(s_t, a_t)` and the latent state `s_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub observation: usize,
    pub action: usize,
    pub reward: f64,
    pub state: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub steps: Vec<TrajectoryStep>,
}

pub(crate) fn check_distribution(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {x} is negative or not finite")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

fn flatten3(name: &str, t: &[Vec<Vec<f64>>], d0: usize, d1: usize, d2: usize) -> Result<Vec<f64>> {
    if t.len() != d0 {
        return Err(Error::InvalidPomdp(format!("{name}: expected {d0} rows, found {}", t.len())));
    }
    let mut out = Vec::with_capacity(d0 * d1 * d2);
    for (i, m) in t.iter().enumerate() {
        if m.len() != d1 {
            return Err(Error::InvalidPomdp(format!("{name}[{i}]: expected {d1} entries, found {}", m.len())));
        }
        for (j, row) in m.iter().enumerate() {
            if row.len() != d2 {
                return Err(Error::InvalidPomdp(format!(
                    "{name}[{i}][{j}]: expected {d2} entries, found {}",
                    row.len()
                )));
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

fn reward_range(reward: &[f64]) -> (f64, f64) {
    reward
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
}

impl PomdpFile {
    /// Converts to the flat representation, checking only shapes.
    pub fn into_pomdp_unchecked(self) -> Result<Pomdp> {
        let (ns, ny, na) = (self.n_states, self.n_obs, self.n_actions);
        if ns == 0 || ny == 0 || na == 0 {
            return Err(Error::InvalidPomdp("empty state, observation or action space".into()));
        }
        let transition = flatten3("transition", &self.transition, ns, na, ns)?;
        let observation = flatten3("observation", &self.observation, ns, na, ny)?;
        if self.reward.len() != ns || self.reward.iter().any(|r| r.len() != na) {
            return Err(Error::InvalidPomdp(format!("reward must be {ns} x {na}")));
        }
        let reward: Vec<f64> = self.reward.concat();
        if self.initial_state_dist.len() != ns {
            return Err(Error::InvalidPomdp(format!("initial_state_dist must have {ns} entries")));
        }
        let mut terminal = vec![false; ns];
        for &s in &self.terminal_states {
            if s < ns {
                terminal[s] = true;
            }
        }
        let (r_min, r_max) = reward_range(&reward);
        let bad_terminals = self.terminal_states.iter().any(|&s| s >= ns);
        let p = Pomdp {
            name: self.name,
            n_states: ns,
            n_obs: ny,
            n_actions: na,
            discount: self.discount,
            transition,
            observation,
            reward,
            initial: self.initial_state_dist,
            labels: self.labels,
            terminal,
            r_min,
            r_max,
        };
        if bad_terminals {
            return Err(Error::InvalidPomdp("terminal state index out of range".into()));
        }
        Ok(p)
    }
}

impl TryFrom<PomdpFile> for Pomdp {
    type Error = Error;

    fn try_from(file: PomdpFile) -> Result<Pomdp> {
        let p = file.into_pomdp_unchecked()?;
        let report = p.validate();
        if !report.is_ok() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidPomdp(msgs.join("; ")));
        }
        Ok(p)
    }
}

impl From<&Pomdp> for PomdpFile {
    fn from(p: &Pomdp) -> Self {
        let (ns, ny, na) = (p.n_states, p.n_obs, p.n_actions);
        PomdpFile {
            name: p.name.clone(),
            n_states: ns,
            n_obs: ny,
            n_actions: na,
            discount: p.discount,
            transition: (0..ns)
                .map(|s| (0..na).map(|a| p.transition_row(s, a).to_vec()).collect())
                .collect(),
            observation: (0..ns)
                .map(|s| (0..na).map(|a| p.observation_row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..ns).map(|s| p.reward[s * na..(s + 1) * na].to_vec()).collect(),
            initial_state_dist: p.initial.clone(),
            labels: p.labels.clone(),
            terminal_states: (0..ns).filter(|&s| p.terminal[s]).collect(),
        }
    }
}

impl Serialize for Pomdp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PomdpFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pomdp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = PomdpFile::deserialize(deserializer)?;
        Pomdp::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl Pomdp {
    /// Builds a validated POMDP from nested tables.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        observation: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_state_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let ns = transition.len();
        let na = transition.first().map_or(0, |m| m.len());
        let ny = observation.first().and_then(|m| m.first()).map_or(0, |r| r.len());
        Pomdp::try_from(PomdpFile {
            name: None,
            n_states: ns,
            n_obs: ny,
            n_actions: na,
            discount,
            transition,
            observation,
            reward,
            initial_state_dist,
            labels: None,
            terminal_states: Vec::new(),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: PomdpFile = serde_json::from_str(s)?;
        Pomdp::try_from(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PomdpFile::from(self))?)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_terminal_states(mut self, states: &[usize]) -> Result<Self> {
        for &s in states {
            if s >= self.n_states {
                return Err(Error::IndexOutOfRange {
                    what: "terminal state",
                    index: s,
                    limit: self.n_states,
                });
            }
            self.terminal[s] = true;
        }
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidPomdp(format!("discount {discount} outside [0, 1)")));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `r_MAX - r_MIN`.
    pub fn reward_span(&self) -> f64 {
        self.r_max - self.r_min
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states;
        let start = (s * self.n_actions + a) * ns;
        &self.transition[start..start + ns]
    }

    pub fn observation_row(&self, next_state: usize, a: usize) -> &[f64] {
        let ny = self.n_obs;
        let start = (next_state * self.n_actions + a) * ny;
        &self.observation[start..start + ny]
    }

    #[inline]
    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn observation_prob(&self, next: usize, a: usize, y: usize) -> f64 {
        self.observation[(next * self.n_actions + a) * self.n_obs + y]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn initial_state_dist(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn has_terminals(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    /// Checks every invariant and lists all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (ns, ny, na) = (self.n_states, self.n_obs, self.n_actions);
        if !(0.0..1.0).contains(&self.discount) || !self.discount.is_finite() {
            violations.push(Violation::Discount { value: self.discount });
        }
        let mut check_row = |tensor: &str, index: Vec<usize>, row: &[f64]| {
            let mut finite = true;
            for (k, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    finite = false;
                    let mut idx = index.clone();
                    idx.push(k);
                    violations.push(Violation::NonFinite {
                        tensor: tensor.into(),
                        index: idx,
                    });
                } else if x < 0.0 {
                    let mut idx = index.clone();
                    idx.push(k);
                    violations.push(Violation::NegativeEntry {
                        tensor: tensor.into(),
                        index: idx,
                        value: x,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if finite && (sum - 1.0).abs() > PROB_TOL {
                violations.push(Violation::RowSum {
                    tensor: tensor.into(),
                    index,
                    sum,
                });
            }
        };
        for s in 0..ns {
            for a in 0..na {
                check_row("transition", vec![s, a], self.transition_row(s, a));
            }
        }
        for s in 0..ns {
            for a in 0..na {
                check_row("observation", vec![s, a], self.observation_row(s, a));
            }
        }
        check_row("initial_state_dist", vec![], &self.initial);
        for s in 0..ns {
            for a in 0..na {
                if !self.reward(s, a).is_finite() {
                    violations.push(Violation::NonFinite {
                        tensor: "reward".into(),
                        index: vec![s, a],
                    });
                }
            }
        }
        let _ = ny;
        ValidationReport { violations }
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                limit: self.n_states,
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }

    fn check_obs(&self, y: usize) -> Result<()> {
        if y >= self.n_obs {
            return Err(Error::IndexOutOfRange {
                what: "observation",
                index: y,
                limit: self.n_obs,
            });
        }
        Ok(())
    }

    /// Samples `s' ~ P(.|s,a)`, `y' ~ O(.|s',a)` and returns `R = r(s,a)`.
    pub fn step(&self, s: usize, a: usize, rng: &mut Rng) -> Result<StepOutcome> {
        self.check_state(s)?;
        self.check_action(a)?;
        let next_state = sample_index(self.transition_row(s, a), rng);
        let observation = sample_index(self.observation_row(next_state, a), rng);
        Ok(StepOutcome {
            next_state,
            observation,
            reward: self.reward(s, a),
        })
    }

    /// Samples the initial state and the first observation (drawn with the
    /// null previous action).
    pub fn reset(&self, rng: &mut Rng) -> (usize, usize) {
        let s = sample_index(&self.initial, rng);
        let y = sample_index(self.observation_row(s, NULL_ACTION), rng);
        (s, y)
    }

    /// Law of the first observation, `P(y1) = sum_s init(s) O(y1 | s, a0)`.
    pub fn initial_observation_probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_obs];
        for s in 0..self.n_states {
            let w = self.initial[s];
            if w == 0.0 {
                continue;
            }
            for (y, o) in self.observation_row(s, NULL_ACTION).iter().enumerate() {
                out[y] += w * o;
            }
        }
        out
    }

    /// Posterior over `s1` after the first observation.
    pub fn initial_belief(&self, y: usize) -> Result<Belief> {
        self.check_obs(y)?;
        let mut b: Vec<f64> = (0..self.n_states)
            .map(|s| self.initial[s] * self.observation_prob(s, NULL_ACTION, y))
            .collect();
        let z: f64 = b.iter().sum();
        if z <= 0.0 {
            return Err(Error::UnreachableHistory {
                action: NULL_ACTION,
                observation: y,
            });
        }
        b.iter_mut().for_each(|x| *x /= z);
        Ok(Belief(b))
    }

    /// Predicted next-state law `sum_s P(s'|s,a) b(s)`.
    pub fn predict(&self, b: &Belief, a: usize) -> Vec<f64> {
        let ns = self.n_states;
        let mut out = vec![0.0; ns];
        for (s, &w) in b.0.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (sp, p) in self.transition_row(s, a).iter().enumerate() {
                out[sp] += w * p;
            }
        }
        out
    }

    /// Next-observation law `P(y' | b, a)`.
    pub fn observation_probs(&self, b: &Belief, a: usize) -> Vec<f64> {
        let pred = self.predict(b, a);
        let mut out = vec![0.0; self.n_obs];
        for (sp, &w) in pred.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (y, o) in self.observation_row(sp, a).iter().enumerate() {
                out[y] += w * o;
            }
        }
        out
    }

    /// Expected immediate reward `sum_s b(s) r(s,a)`.
    pub fn expected_reward(&self, b: &Belief, a: usize) -> f64 {
        b.0.iter()
            .enumerate()
            .map(|(s, &w)| w * self.reward(s, a))
            .sum()
    }

    /// Bayes filter: `b'(s') ∝ O(y'|s',a) sum_s P(s'|s,a) b(s)`.
    pub fn belief_update(&self, b: &Belief, a: usize, y: usize) -> Result<Belief> {
        self.check_action(a)?;
        self.check_obs(y)?;
        if b.len() != self.n_states {
            return Err(Error::InvalidDistribution(format!(
                "belief has {} entries, expected {}",
                b.len(),
                self.n_states
            )));
        }
        let pred = self.predict(b, a);
        let mut post: Vec<f64> = pred
            .iter()
            .enumerate()
            .map(|(sp, &w)| w * self.observation_prob(sp, a, y))
            .collect();
        let z: f64 = post.iter().sum();
        if z <= 0.0 {
            return Err(Error::UnreachableHistory {
                action: a,
                observation: y,
            });
        }
        post.iter_mut().for_each(|x| *x /= z);
        Ok(Belief(post))
    }

    /// Simulates `len` steps, choosing actions with `policy(t, y_t, rng)`.
    pub fn simulate<F>(&self, len: usize, seed: u64, mut policy: F) -> Result<Trajectory>
    where
        F: FnMut(usize, usize, &mut Rng) -> usize,
    {
        let mut rng = crate::rng::seeded(seed);
        let (mut s, mut y) = self.reset(&mut rng);
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let a = policy(t, y, &mut rng);
            let out = self.step(s, a, &mut rng)?;
            steps.push(TrajectoryStep {
                observation: y,
                action: a,
                reward: out.reward,
                state: s,
            });
            s = out.next_state;
            y = out.observation;
        }
        Ok(Trajectory { seed, steps })
    }

    /// Episodic version of an instance with terminal states: every terminal
    /// state leads to an absorbing zero-reward sink (emitting observation 0),
    /// so continuing-time values equal episodic returns.
    pub fn episodic_closure(&self) -> Pomdp {
        if !self.has_terminals() {
            return self.clone();
        }
        let ns = self.n_states + 1;
        let sink = self.n_states;
        let (ny, na) = (self.n_obs, self.n_actions);
        let mut transition = vec![0.0; ns * na * ns];
        let mut observation = vec![0.0; ns * na * ny];
        let mut reward = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                if s == sink || self.terminal[s] {
                    row[sink] = 1.0;
                } else {
                    row[..self.n_states].copy_from_slice(self.transition_row(s, a));
                }
                let orow = &mut observation[(s * na + a) * ny..(s * na + a + 1) * ny];
                if s == sink {
                    orow[0] = 1.0;
                } else {
                    orow.copy_from_slice(self.observation_row(s, a));
                }
                if s != sink {
                    reward[s * na + a] = self.reward(s, a);
                }
            }
        }
        let mut initial = self.initial.clone();
        initial.push(0.0);
        let (r_min, r_max) = reward_range(&reward);
        Pomdp {
            name: self.name.as_ref().map(|n| format!("{n}-episodic")),
            n_states: ns,
            n_obs: ny,
            n_actions: na,
            discount: self.discount,
            transition,
            observation,
            reward,
            initial,
            labels: None,
            terminal: vec![false; ns],
            r_min,
            r_max,
        }
    }
}
