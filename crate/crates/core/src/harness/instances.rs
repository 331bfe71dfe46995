//! Canonical instances shipped with the crate and a seeded generator of
//! small random POMDPs.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::Pomdp;
use crate::rng;

const TWO_STATE_DRIFT: &str = include_str!("../../fixtures/two_state_drift.json");
const FULLY_OBSERVED3: &str = include_str!("../../fixtures/fully_observed3.json");
const SPARSE_CORRIDOR: &str = include_str!("../../fixtures/sparse_corridor.json");

/// Names accepted by [`canonical`].
pub const CANONICAL_NAMES: [&str; 3] = ["two-state-drift", "fully-observed-3", "sparse-corridor"];

/// Two hidden states with a noisy sensor; `wait` tends to stay put,
/// `toggle` tends to switch.
pub fn two_state_drift() -> Pomdp {
    Pomdp::from_json_str(TWO_STATE_DRIFT).expect("fixture is valid")
}

/// Two-state drift with a different sensor noise level.
pub fn two_state_drift_with_noise(noise: f64) -> Result<Pomdp> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config(format!("noise {noise} outside [0, 1]")));
    }
    let mut file: crate::pomdp::PomdpFile = serde_json::from_str(TWO_STATE_DRIFT)?;
    for s in 0..2 {
        for a in 0..2 {
            for y in 0..2 {
                file.observation[s][a][y] = if y == s { 1.0 - noise } else { noise };
            }
        }
    }
    Pomdp::try_from(file)
}

/// Three states observed exactly.
pub fn fully_observed3() -> Pomdp {
    Pomdp::from_json_str(FULLY_OBSERVED3).expect("fixture is valid")
}

/// Five-cell corridor with a unit reward in the terminal goal cell.
pub fn sparse_corridor() -> Pomdp {
    Pomdp::from_json_str(SPARSE_CORRIDOR).expect("fixture is valid")
}

pub fn canonical(name: &str) -> Result<Pomdp> {
    match name {
        "two-state-drift" => Ok(two_state_drift()),
        "fully-observed-3" => Ok(fully_observed3()),
        "sparse-corridor" => Ok(sparse_corridor()),
        other => Err(Error::Config(format!(
            "unknown instance `{other}` (expected one of {})",
            CANONICAL_NAMES.join(", ")
        ))),
    }
}

/// Parameters of the random instance generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomInstanceSpec {
    pub min_states: usize,
    pub max_states: usize,
    pub min_obs: usize,
    pub max_obs: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// Probability that a row entry is forced to zero (one entry always survives).
    pub sparsity: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    /// Symmetric Dirichlet concentration of every stochastic row.
    pub concentration: f64,
    pub discount: f64,
    pub seed: u64,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        RandomInstanceSpec {
            min_states: 2,
            max_states: 4,
            min_obs: 2,
            max_obs: 3,
            min_actions: 2,
            max_actions: 2,
            sparsity: 0.0,
            reward_min: 0.0,
            reward_max: 1.0,
            concentration: 1.0,
            discount: 0.9,
            seed: 0,
        }
    }
}

impl RandomInstanceSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            (self.min_states, self.max_states, "states"),
            (self.min_obs, self.max_obs, "observations"),
            (self.min_actions, self.max_actions, "actions"),
        ];
        for (lo, hi, what) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("invalid size range for {what}: {lo}..={hi}")));
            }
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Config("sparsity must lie in [0, 1)".into()));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Config("concentration must be positive".into()));
        }
        if !(self.reward_min <= self.reward_max) {
            return Err(Error::Config("reward range is empty".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config("discount must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

fn dirichlet_row(n: usize, concentration: f64, sparsity: f64, r: &mut rng::Rng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive shape");
    let keep = r.gen_range(0..n);
    let mut row: Vec<f64> = (0..n)
        .map(|i| {
            let zeroed = i != keep && sparsity > 0.0 && r.gen::<f64>() < sparsity;
            if zeroed {
                0.0
            } else {
                gamma.sample(r).max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

/// Samples a POMDP: sizes uniform in their ranges, every stochastic row from
/// a symmetric Dirichlet, rewards uniform in the reward range.
pub fn generate_instance(spec: &RandomInstanceSpec) -> Result<Pomdp> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let ns = r.gen_range(spec.min_states..=spec.max_states);
    let ny = r.gen_range(spec.min_obs..=spec.max_obs);
    let na = r.gen_range(spec.min_actions..=spec.max_actions);
    let (c, sp) = (spec.concentration, spec.sparsity);
    let transition: Vec<Vec<Vec<f64>>> = (0..ns)
        .map(|_| (0..na).map(|_| dirichlet_row(ns, c, sp, &mut r)).collect())
        .collect();
    let observation: Vec<Vec<Vec<f64>>> = (0..ns)
        .map(|_| (0..na).map(|_| dirichlet_row(ny, c, sp, &mut r)).collect())
        .collect();
    let reward: Vec<Vec<f64>> = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| spec.reward_min + (spec.reward_max - spec.reward_min) * r.gen::<f64>())
                .collect()
        })
        .collect();
    let initial = dirichlet_row(ns, c, 0.0, &mut r);
    Ok(Pomdp::new(transition, observation, reward, initial, spec.discount)?.with_name(format!("random-{}", spec.seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_fixtures_load() {
        for name in CANONICAL_NAMES {
            let p = canonical(name).unwrap();
            assert!(p.validate().is_ok());
            assert_eq!(p.name(), Some(name));
        }
        assert!(sparse_corridor().is_terminal(4));
    }

    #[test]
    fn generated_instances_are_reproducible_and_valid() {
        let spec = RandomInstanceSpec {
            seed: 17,
            ..Default::default()
        };
        assert_eq!(generate_instance(&spec).unwrap(), generate_instance(&spec).unwrap());
        for seed in 0..100 {
            let p = generate_instance(&RandomInstanceSpec {
                seed,
                sparsity: 0.3,
                ..Default::default()
            })
            .unwrap();
            assert!(p.validate().is_ok());
            assert!(p.n_states() <= 4 && p.n_obs() <= 3 && p.n_actions() <= 2);
        }
    }

    #[test]
    fn large_concentration_gives_near_uniform_rows() {
        let p = generate_instance(&RandomInstanceSpec {
            concentration: 1e6,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let u = 1.0 / p.n_states() as f64;
        for s in 0..p.n_states() {
            for &x in p.transition_row(s, 0) {
                assert!((x - u).abs() < 0.01);
            }
        }
    }
}
