//! Candidates → rollouts → ranking → sub-segment dataset → fitted task vector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gait::{rollout, RolloutConfig, Trajectory};
use crate::prefs::{
    expand_subsegments, fit, order_to_pairs, validate_permutation, FitConfig, FitResult,
    DEFAULT_COMPARISON_CAP, DEFAULT_SEGMENT_LEN,
};
use crate::reward::project_for_deployment;
use crate::task::{Ranges, RewardWeights, TaskVector};

/// Everything downstream of candidate generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub rollout: RolloutConfig,
    pub segment_len: usize,
    pub comparison_cap: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub weights: RewardWeights,
    pub ranges: Ranges,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        LearnConfig {
            rollout: RolloutConfig::default(),
            segment_len: DEFAULT_SEGMENT_LEN,
            comparison_cap: DEFAULT_COMPARISON_CAP,
            learning_rate: fit.learning_rate,
            iterations: fit.iterations,
            weights: RewardWeights::default(),
            ranges: Ranges::default(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.rollout.validate()?;
        if self.segment_len == 0 || self.segment_len >= self.rollout.steps {
            return Err(Error::SegmentTooLong {
                k: self.segment_len,
                t: self.rollout.steps,
            });
        }
        if self.comparison_cap == 0 {
            return Err(Error::InvalidArgument("comparison cap must be >= 1".into()));
        }
        self.fit_config(TaskVector::new(0.0, 0.0, [0.0; 3]), 0)
            .validate()
    }

    pub fn fit_config(&self, init: TaskVector, seed: u64) -> FitConfig {
        FitConfig {
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            init,
            comparison_cap: self.comparison_cap,
            seed,
            ranges: self.ranges,
        }
    }
}

/// Stable 64-bit seed derived from a parent seed and a label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Projects and rolls out every candidate; candidate `i` uses seed `derive_seed(seed, "rollout/i")`.
pub fn rollout_candidates(
    candidates: &[TaskVector],
    config: &LearnConfig,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let deployed = project_for_deployment(c, &config.ranges);
            rollout(
                &deployed,
                &config.rollout,
                derive_seed(seed, &format!("rollout/{i}")),
            )
        })
        .collect()
}

/// Fits ω from a best-first `ranking` of candidate indices. Any number of
/// candidates is accepted; interactive callers bound it themselves.
///
/// Initializes at the clamped mean of the raw candidates.
pub fn learn_from_ranking(
    candidates: &[TaskVector],
    trajectories: &[Trajectory],
    ranking: &[usize],
    config: &LearnConfig,
    seed: u64,
) -> Result<FitResult> {
    if candidates.len() != trajectories.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} trajectories",
            candidates.len(),
            trajectories.len()
        )));
    }
    validate_permutation(ranking, candidates.len())?;
    let ordered: Vec<String> = ranking
        .iter()
        .map(|&i| trajectories[i].id.clone())
        .collect();
    let pairs = order_to_pairs(&ordered)?;
    let dataset = expand_subsegments(
        &pairs,
        trajectories,
        config.segment_len,
        Some(config.comparison_cap),
        derive_seed(seed, "expand"),
    )?;
    let init = TaskVector::mean(candidates).clamped(&config.ranges);
    fit(&dataset, &config.weights, &config.fit_config(init, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Gait;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn validation() {
        assert!(LearnConfig::default().validate().is_ok());
        let c = LearnConfig {
            segment_len: 100,
            ..LearnConfig::default()
        };
        assert!(c.validate().is_err());
        let c = LearnConfig {
            learning_rate: -1.0,
            ..LearnConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn ranking_must_match_candidates() {
        let cfg = LearnConfig::default();
        let cands = vec![
            TaskVector::with_gait(1.0, 0.0, Gait::Trot),
            TaskVector::with_gait(0.5, 0.0, Gait::Pace),
        ];
        let trajs = rollout_candidates(&cands, &cfg, 0).unwrap();
        assert_ne!(trajs[0].id, trajs[1].id);
        assert!(learn_from_ranking(&cands, &trajs, &[0, 0], &cfg, 0).is_err());
        assert!(learn_from_ranking(&cands, &trajs[..1], &[0], &cfg, 0).is_err());
        let fit = learn_from_ranking(&cands, &trajs, &[1, 0], &cfg, 0).unwrap();
        assert!(fit.loss <= fit.trace[0]);
    }
}
