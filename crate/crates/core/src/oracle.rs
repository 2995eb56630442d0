//! Simulated user that ranks behaviors by their return under a hidden target.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::Trajectory;
use crate::prefs::{bt_probability, Label};
use crate::reward::trajectory_return;
use crate::task::{Ranges, RewardWeights, TaskVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTask {
    pub name: String,
    pub omega_star: TaskVector,
}

impl GroundTruthTask {
    pub fn new(name: impl Into<String>, omega_star: [f64; 5]) -> Result<Self> {
        let task = GroundTruthTask {
            name: name.into(),
            omega_star: TaskVector::from_array(omega_star),
        };
        task.validate(&Ranges::default())?;
        Ok(task)
    }

    pub fn validate(&self, ranges: &Ranges) -> Result<()> {
        if self.omega_star.one_hot_gait().is_none() || !self.omega_star.in_ranges(ranges) {
            return Err(Error::InvalidArgument(format!(
                "ground truth `{}` must be in range with a one-hot gait, got {}",
                self.name, self.omega_star
            )));
        }
        Ok(())
    }

    /// Language instruction handed to a model for this task.
    pub fn instruction(&self) -> String {
        format!("Walk in a way that looks {}.", self.name)
    }
}

/// Fixture targets for the five emotive tasks. These are configuration values
/// chosen for this project.
pub fn default_tasks() -> Vec<GroundTruthTask> {
    [
        ("happy", [1.2, 0.2, 1.0, 0.0, 0.0]),
        ("sad", [0.3, -0.25, 0.0, 1.0, 0.0]),
        ("scared", [0.9, -0.3, 0.0, 0.0, 1.0]),
        ("angry", [1.3, -0.1, 1.0, 0.0, 0.0]),
        ("excited", [1.4, 0.3, 0.0, 0.0, 1.0]),
    ]
    .into_iter()
    .map(|(name, w)| GroundTruthTask::new(name, w).expect("fixture tasks are valid"))
    .collect()
}

/// Reads `[{name, omega_star: [5]}]`.
pub fn load_tasks(path: &Path) -> Result<Vec<GroundTruthTask>> {
    let tasks: Vec<GroundTruthTask> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for t in &tasks {
        t.validate(&Ranges::default())?;
    }
    Ok(tasks)
}

/// Indices of `trajectories` sorted by descending return under the target,
/// ties kept in input order.
pub fn oracle_rank(
    trajectories: &[Trajectory],
    truth: &GroundTruthTask,
    weights: &RewardWeights,
) -> Result<Vec<usize>> {
    if trajectories.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs at least 2 trajectories, got {}",
            trajectories.len()
        )));
    }
    let returns = trajectories
        .iter()
        .map(|t| trajectory_return(&t.steps, &truth.omega_star, weights))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]));
    Ok(order)
}

/// Samples a Bradley-Terry label: first preferred with probability
/// `bt_probability(return_a, return_b)`.
pub fn stochastic_label(return_a: f64, return_b: f64, seed: u64) -> Label {
    let p = bt_probability(return_a, return_b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.random::<f64>() < p {
        Label::First
    } else {
        Label::Second
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{rollout, RolloutConfig};
    use crate::task::Gait;

    #[test]
    fn target_rollout_ranks_first() {
        let truth = &default_tasks()[0];
        let cfg = RolloutConfig::default().noiseless();
        let wrong = TaskVector::with_gait(1.2, 0.2, Gait::Pace);
        let trajs = vec![
            rollout(&wrong, &cfg, 0).unwrap(),
            rollout(&truth.omega_star, &cfg, 0).unwrap(),
        ];
        let w = RewardWeights::default();
        let r_wrong = trajectory_return(&trajs[0].steps, &truth.omega_star, &w).unwrap();
        let r_star = trajectory_return(&trajs[1].steps, &truth.omega_star, &w).unwrap();
        assert!(r_star > r_wrong);
        assert_eq!(oracle_rank(&trajs, truth, &w).unwrap(), vec![1, 0]);
    }

    #[test]
    fn ties_keep_input_order() {
        let truth = &default_tasks()[1];
        let cfg = RolloutConfig::default().noiseless();
        let t = rollout(&truth.omega_star, &cfg, 5).unwrap();
        let trajs = vec![t.clone(), t.clone(), t];
        assert_eq!(
            oracle_rank(&trajs, truth, &RewardWeights::default()).unwrap(),
            vec![0, 1, 2]
        );
        assert!(oracle_rank(&trajs[..1], truth, &RewardWeights::default()).is_err());
    }

    #[test]
    fn label_sampling() {
        let ones = (0..10_000u64)
            .filter(|&s| stochastic_label(2.0, 2.0, s) == Label::First)
            .count();
        let f = ones as f64 / 10_000.0;
        // binomial sd at p = 0.5, n = 10^4 is 0.005; [0.49, 0.51] is ±2 sd
        assert!((0.49..=0.51).contains(&f), "{f}");
        assert!((0..1000u64).all(|s| stochastic_label(20.0, 0.0, s) == Label::First));
        assert_eq!(
            stochastic_label(0.3, 0.1, 77),
            stochastic_label(0.3, 0.1, 77)
        );
    }

    #[test]
    fn fixture_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.json");
        std::fs::write(&path, serde_json::to_string(&default_tasks()).unwrap()).unwrap();
        assert_eq!(load_tasks(&path).unwrap(), default_tasks());
        std::fs::write(&path, r#"[{"name":"bad","omega_star":[1,0,0.5,0.5,0]}]"#).unwrap();
        assert!(load_tasks(&path).is_err());
    }
}
