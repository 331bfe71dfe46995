//! TOML experiment configuration.
//!
//! ```toml
//! mode = "bounds"
//! seeds = [0, 1]
//! gamma = 0.9
//!
//! [instance]
//! kind = "canonical"
//! name = "two-state-drift"
//!
//! [representation]
//! kind = "frame-stack"
//! n = 2
//!
//! [bounds]
//! ipm = ["tv", "wasserstein"]
//! t_cert = 3
//! t_dp = 40
//! ```
//!
//! Every section is optional. Relative paths are resolved against the
//! directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::instances::{self, RandomInstanceSpec};
use crate::agent_state::{AgentPolicy, AgentStateMachine};
use crate::ais::AisConfig;
use crate::chain::StationaryOptions;
use crate::error::{Error, Result};
use crate::ipm::IpmKind;
use crate::pomdp::Pomdp;
use crate::rql::RqlConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Validate,
    Analyze,
    Solve,
    TrainRql,
    TrainRqlAis,
    Bounds,
    Suite,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Validate => "validate",
            Mode::Analyze => "analyze",
            Mode::Solve => "solve",
            Mode::TrainRql => "train-rql",
            Mode::TrainRqlAis => "train-rql-ais",
            Mode::Bounds => "bounds",
            Mode::Suite => "suite",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSource {
    Canonical { name: String },
    File { path: PathBuf },
    Random(RandomInstanceSpec),
}

impl Default for InstanceSource {
    fn default() -> Self {
        InstanceSource::Canonical {
            name: "two-state-drift".into(),
        }
    }
}

impl FromStr for InstanceSource {
    type Err = Error;

    /// A canonical name, `random:<seed>`, or a path to a JSON file.
    fn from_str(s: &str) -> Result<Self> {
        if instances::CANONICAL_NAMES.contains(&s) {
            return Ok(InstanceSource::Canonical { name: s.into() });
        }
        if let Some(seed) = s.strip_prefix("random:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::Config(format!("bad seed in `{s}`")))?;
            return Ok(InstanceSource::Random(RandomInstanceSpec {
                seed,
                ..Default::default()
            }));
        }
        Ok(InstanceSource::File { path: s.into() })
    }
}

impl InstanceSource {
    pub fn load(&self) -> Result<Pomdp> {
        match self {
            InstanceSource::Canonical { name } => instances::canonical(name),
            InstanceSource::File { path } => Pomdp::from_path(path),
            InstanceSource::Random(spec) => instances::generate_instance(spec),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InstanceSource::Canonical { name } => name.clone(),
            InstanceSource::File { path } => path.display().to_string(),
            InstanceSource::Random(spec) => format!("random-{}", spec.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReprSpec {
    FrameStack { n: usize },
    Machine { path: PathBuf },
}

impl Default for ReprSpec {
    fn default() -> Self {
        ReprSpec::FrameStack { n: 1 }
    }
}

impl FromStr for ReprSpec {
    type Err = Error;

    /// `frame-stack:<n>`, `fs<n>`, or a path to a machine file.
    fn from_str(s: &str) -> Result<Self> {
        let n = s.strip_prefix("frame-stack:").or_else(|| s.strip_prefix("fs"));
        match n {
            Some(n) => n
                .parse()
                .map(|n| ReprSpec::FrameStack { n })
                .map_err(|_| Error::Config(format!("bad frame-stack size in `{s}`"))),
            None => Ok(ReprSpec::Machine { path: s.into() }),
        }
    }
}

impl ReprSpec {
    pub fn build(&self, p: &Pomdp) -> Result<AgentStateMachine> {
        let m = match self {
            ReprSpec::FrameStack { n } => AgentStateMachine::frame_stack(*n, p)?,
            ReprSpec::Machine { path } => AgentStateMachine::from_path(path)?,
        };
        m.check_compatible(p)?;
        Ok(m)
    }

    pub fn label(&self) -> String {
        match self {
            ReprSpec::FrameStack { n } => format!("frame-stack:{n}"),
            ReprSpec::Machine { path } => path.display().to_string(),
        }
    }
}

/// Exploration policy over agent states.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplorationSpec {
    #[default]
    Uniform,
    /// JSON array of per-agent-state action distributions.
    File { path: PathBuf },
}

impl ExplorationSpec {
    pub fn build(&self, m: &AgentStateMachine) -> Result<AgentPolicy> {
        let pi = match self {
            ExplorationSpec::Uniform => AgentPolicy::uniform(m.n_z(), m.n_actions()),
            ExplorationSpec::File { path } => {
                let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                AgentPolicy::from_rows(rows)?
            }
        };
        pi.check_compatible(m)?;
        Ok(pi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Target error of value iteration for `Q*_xi`.
    pub tol: f64,
    /// Finite horizon for history values (0 skips them).
    pub horizon: usize,
    /// Depth of the reported history table.
    pub history_depth: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-10,
            horizon: 40,
            history_depth: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub ipm: Vec<IpmKind>,
    pub t_cert: usize,
    pub t_dp: usize,
    pub profile_depth: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            ipm: vec![IpmKind::Tv, IpmKind::Wasserstein],
            t_cert: 3,
            t_dp: 40,
            profile_depth: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Number of random instances; instance `i` uses seed `base_seed + i`.
    pub instances: usize,
    pub base_seed: u64,
    pub random: RandomInstanceSpec,
    pub frame_stacks: Vec<usize>,
    /// Further instances run alongside the random ones.
    pub extra: Vec<InstanceSource>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            instances: 100,
            base_seed: 0,
            random: RandomInstanceSpec::default(),
            frame_stacks: vec![1, 2],
            extra: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Overrides the instance discount.
    pub gamma: Option<f64>,
    pub out: Option<PathBuf>,
    pub instance: InstanceSource,
    pub representation: ReprSpec,
    pub exploration: ExplorationSpec,
    pub stationary: StationaryOptions,
    pub solve: SolveConfig,
    pub bounds: BoundsConfig,
    pub rql: RqlConfig,
    pub rql_ais: AisConfig,
    pub suite: SuiteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Analyze,
            seeds: vec![0],
            gamma: None,
            out: None,
            instance: InstanceSource::default(),
            representation: ReprSpec::default(),
            exploration: ExplorationSpec::default(),
            stationary: StationaryOptions::default(),
            solve: SolveConfig::default(),
            bounds: BoundsConfig::default(),
            rql: RqlConfig::default(),
            rql_ais: AisConfig::default(),
            suite: SuiteConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let InstanceSource::File { path } = &mut self.instance {
            fix(path);
        }
        if let ReprSpec::Machine { path } = &mut self.representation {
            fix(path);
        }
        if let ExplorationSpec::File { path } = &mut self.exploration {
            fix(path);
        }
        for src in &mut self.suite.extra {
            if let InstanceSource::File { path } = src {
                fix(path);
            }
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("gamma {g} outside [0, 1)")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.bounds.t_cert == 0 || self.bounds.t_dp <= self.bounds.t_cert {
            return Err(Error::Config("bounds need 1 <= t_cert < t_dp".into()));
        }
        if self.bounds.ipm.contains(&IpmKind::Mmd) {
            return Err(Error::Config(
                "bounds are certified for tv and wasserstein; mmd has no computable rho".into(),
            ));
        }
        if let ReprSpec::FrameStack { n: 0 } = self.representation {
            return Err(Error::Config("frame stack size must be positive".into()));
        }
        if self.suite.frame_stacks.contains(&0) {
            return Err(Error::Config("suite frame stack sizes must be positive".into()));
        }
        self.suite.random.validate()?;
        self.rql.rate.validate()?;
        self.rql_ais.validate()?;
        Ok(())
    }

    /// The configured instance with the discount override applied.
    pub fn load_instance(&self) -> Result<Pomdp> {
        let p = self.instance.load()?;
        match self.gamma {
            Some(g) => p.with_discount(g),
            None => Ok(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.mode = Mode::Suite;
        cfg.gamma = Some(0.9);
        cfg.instance = InstanceSource::Random(RandomInstanceSpec {
            seed: 4,
            ..Default::default()
        });
        cfg.representation = ReprSpec::FrameStack { n: 2 };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            mode = "train-rql-ais"
            seeds = [3, 4]
            [instance]
            kind = "canonical"
            name = "sparse-corridor"
            [representation]
            kind = "frame-stack"
            n = 1
            [rql_ais]
            steps = 1000
            lambda = 0.25
            [bounds]
            ipm = ["was"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::TrainRqlAis);
        assert_eq!(cfg.rql_ais.steps, 1000);
        assert_eq!(cfg.rql_ais.lambda, 0.25);
        assert_eq!(cfg.rql_ais.seq_len, 10);
        assert_eq!(cfg.bounds.ipm, vec![IpmKind::Wasserstein]);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("gamma = 1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("[rql_ais]\nlambda = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("mode = \"dance\"").is_err());
        assert!(ExperimentConfig::from_toml_str("[bounds]\nipm = [\"mmd\"]").is_err());
    }

    #[test]
    fn cli_shorthands() {
        assert_eq!("fs2".parse::<ReprSpec>().unwrap(), ReprSpec::FrameStack { n: 2 });
        assert_eq!(
            "random:7".parse::<InstanceSource>().unwrap(),
            InstanceSource::Random(RandomInstanceSpec {
                seed: 7,
                ..Default::default()
            })
        );
        assert!(matches!(
            "sparse-corridor".parse::<InstanceSource>().unwrap(),
            InstanceSource::Canonical { .. }
        ));
    }
}
