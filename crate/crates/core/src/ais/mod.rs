//! Episodic recurrent Q-learning with tabular AIS predictors.
//!
//! Data is collected with an epsilon-greedy policy over a fixed agent-state
//! machine and stored as non-overlapping sequences with burn-in prefixes.
//! Each update samples a batch of sequences, fits the reward and observation
//! predictors on the simplified MMD loss, and moves the Q table toward
//! n-step double-Q targets. The agent-state update itself is not learned,
//! so replayed agent states are reconstructed exactly.

mod model;
mod nstep;
mod replay;
mod trainer;

pub use model::{
    ais_update, expected_simplified_obs_loss, simplified_obs_loss, softmax, AisGrad, AisParameters, AisSample,
    AisStats,
};
pub use nstep::{nstep_q_update, nstep_target, Segment, TdStats};
pub use replay::{burn_in_unroll, FrequencyBin, PerConfig, ReplayBuffer, ReplaySequence, SampledBatch, SequenceCollector, Step, SumTree};
pub use trainer::{
    evaluate_greedy, model_gap, train_rql_ais, AisConfig, PER_CHECK_DRAWS, PER_CHECK_GROUPS, AisLogRecord, AisRun, EvalResult, ModelGap,
};

/// `eps_end + (eps_start - eps_end) exp(-t / decay)`.
pub fn epsilon_at(t: u64, start: f64, end: f64, decay: f64) -> f64 {
    end + (start - end) * (-(t as f64) / decay).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule() {
        assert_eq!(epsilon_at(0, 1.0, 0.05, 4e5), 1.0);
        assert!((epsilon_at(400_000, 1.0, 0.05, 4e5) - (0.05 + 0.95 / std::f64::consts::E)).abs() < 1e-15);
        assert!((epsilon_at(u64::MAX / 2, 1.0, 0.05, 4e5) - 0.05).abs() < 1e-15);
    }
}
