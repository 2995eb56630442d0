//! Few-shot preference learning of quadruped gait commands.
//!
//! Candidate task vectors (from a language model, a uniform prior, or a perturbed
//! prior) are rolled out through an analytic gait generator, ranked, expanded into
//! sub-segment comparisons, and used to fit the task vector under a Bradley-Terry
//! model of the ranking.

pub mod candidates;
pub mod error;
pub mod experiment;
pub mod gait;
pub mod oracle;
pub mod pipeline;
pub mod prefs;
pub mod reward;
pub mod task;

pub use error::{Error, Result};
pub use gait::{rollout, RolloutConfig, Trajectory};
pub use prefs::{FitConfig, FitResult, PreferenceDataset};
pub use reward::{project_for_deployment, step_reward, trajectory_return, TimeStep};
pub use task::{Gait, Ranges, RewardWeights, TaskVector};
