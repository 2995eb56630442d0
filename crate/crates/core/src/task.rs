//! Task parameterization of the gait reward.
//!
//! A [`TaskVector`] is the five-slot command `[velocity, pitch, trot, pace, bound]`.
//! Its JSON form is a bare array of five numbers in exactly that order, which is
//! both what the language model is asked to emit and what the service returns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of components in a task vector.
pub const OMEGA_DIM: usize = 5;

/// Gait primitives, in the order their weights appear in a [`TaskVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Trot,
    Pace,
    Bound,
}

impl Gait {
    pub const ALL: [Gait; 3] = [Gait::Trot, Gait::Pace, Gait::Bound];

    pub fn index(self) -> usize {
        match self {
            Gait::Trot => 0,
            Gait::Pace => 1,
            Gait::Bound => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Gait> {
        Gait::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Gait::Trot => "trot",
            Gait::Pace => "pace",
            Gait::Bound => "bound",
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trot" => Ok(Gait::Trot),
            "pace" => Ok(Gait::Pace),
            "bound" => Ok(Gait::Bound),
            other => Err(Error::UnknownGait(other.to_string())),
        }
    }
}

/// Valid command ranges. Configuration, not physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub velocity: (f64, f64),
    pub pitch: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Ranges {
            velocity: (0.0, 1.5),
            pitch: (-0.4, 0.4),
        }
    }
}

/// The five-dimensional task parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct TaskVector {
    /// Target base velocity, m/s.
    pub velocity: f64,
    /// Target body pitch, rad.
    pub pitch: f64,
    /// Weights for (trot, pace, bound).
    pub gait_weights: [f64; 3],
}

impl TaskVector {
    pub fn new(velocity: f64, pitch: f64, gait_weights: [f64; 3]) -> Self {
        TaskVector {
            velocity,
            pitch,
            gait_weights,
        }
    }

    /// A deployable vector with a one-hot gait.
    pub fn with_gait(velocity: f64, pitch: f64, gait: Gait) -> Self {
        let mut gait_weights = [0.0; 3];
        gait_weights[gait.index()] = 1.0;
        TaskVector::new(velocity, pitch, gait_weights)
    }

    pub fn from_array(a: [f64; OMEGA_DIM]) -> Self {
        TaskVector::new(a[0], a[1], [a[2], a[3], a[4]])
    }

    pub fn to_array(&self) -> [f64; OMEGA_DIM] {
        [
            self.velocity,
            self.pitch,
            self.gait_weights[0],
            self.gait_weights[1],
            self.gait_weights[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Clamps every component into its valid range; gait weights go to `[0, 1]`.
    pub fn clamped(&self, ranges: &Ranges) -> TaskVector {
        TaskVector {
            velocity: self.velocity.clamp(ranges.velocity.0, ranges.velocity.1),
            pitch: self.pitch.clamp(ranges.pitch.0, ranges.pitch.1),
            gait_weights: self.gait_weights.map(|w| w.clamp(0.0, 1.0)),
        }
    }

    pub fn in_ranges(&self, ranges: &Ranges) -> bool {
        (ranges.velocity.0..=ranges.velocity.1).contains(&self.velocity)
            && (ranges.pitch.0..=ranges.pitch.1).contains(&self.pitch)
            && self.gait_weights.iter().all(|w| (0.0..=1.0).contains(w))
    }

    /// Index of the largest gait weight, lowest index on ties.
    pub fn dominant_gait(&self) -> Gait {
        let mut best = 0;
        for i in 1..3 {
            if self.gait_weights[i] > self.gait_weights[best] {
                best = i;
            }
        }
        Gait::ALL[best]
    }

    /// Returns the gait if the weights are exactly one-hot.
    pub fn one_hot_gait(&self) -> Option<Gait> {
        let ones = self.gait_weights.iter().filter(|&&w| w == 1.0).count();
        let zeros = self.gait_weights.iter().filter(|&&w| w == 0.0).count();
        (ones == 1 && zeros == 2).then(|| self.dominant_gait())
    }

    /// Component-wise mean. Panics on an empty slice.
    pub fn mean(vectors: &[TaskVector]) -> TaskVector {
        assert!(!vectors.is_empty(), "mean of no task vectors");
        let mut acc = [0.0; OMEGA_DIM];
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v.to_array()) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        TaskVector::from_array(acc.map(|a| a / n))
    }
}

impl From<[f64; 5]> for TaskVector {
    fn from(a: [f64; 5]) -> Self {
        TaskVector::from_array(a)
    }
}

impl From<TaskVector> for [f64; 5] {
    fn from(v: TaskVector) -> Self {
        v.to_array()
    }
}

impl fmt::Display for TaskVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(
            f,
            "[{:.3}, {:.3}, {:.3}, {:.3}, {:.3}]",
            a[0], a[1], a[2], a[3], a[4]
        )
    }
}

/// Positive per-factor weights of the reward: (velocity, pitch, trot, pace, bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct RewardWeights {
    alphas: [f64; OMEGA_DIM],
}

impl RewardWeights {
    pub fn new(alphas: [f64; OMEGA_DIM]) -> Result<Self, Error> {
        if alphas.iter().all(|a| a.is_finite() && *a > 0.0) {
            Ok(RewardWeights { alphas })
        } else {
            Err(Error::InvalidWeights(alphas))
        }
    }

    pub fn alphas(&self) -> &[f64; OMEGA_DIM] {
        &self.alphas
    }

    pub fn velocity(&self) -> f64 {
        self.alphas[0]
    }

    pub fn pitch(&self) -> f64 {
        self.alphas[1]
    }

    pub fn gait(&self, g: Gait) -> f64 {
        self.alphas[2 + g.index()]
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, Error> {
        RewardWeights::new(self.alphas.map(|a| a * c))
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alphas: [1.0, 1.0, 0.5, 0.5, 0.5],
        }
    }
}

impl TryFrom<[f64; 5]> for RewardWeights {
    type Error = Error;

    fn try_from(a: [f64; 5]) -> Result<Self, Self::Error> {
        RewardWeights::new(a)
    }
}

impl From<RewardWeights> for [f64; 5] {
    fn from(w: RewardWeights) -> Self {
        w.alphas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout_is_five_numbers() {
        let v = TaskVector::new(0.5, -0.1, [1.0, 0.0, 0.25]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[0.5,-0.1,1.0,0.0,0.25]");
        let back: TaskVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<TaskVector>("[1,2,3]").is_err());
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(RewardWeights::new([1.0, 1.0, 0.0, 0.5, 0.5]).is_err());
        assert!(RewardWeights::new([1.0, -1.0, 0.5, 0.5, 0.5]).is_err());
        assert!(serde_json::from_str::<RewardWeights>("[1,1,1,1,-1]").is_err());
        assert_eq!(
            RewardWeights::default().alphas(),
            &[1.0, 1.0, 0.5, 0.5, 0.5]
        );
    }

    #[test]
    fn gait_names() {
        assert_eq!("Pace".parse::<Gait>().unwrap(), Gait::Pace);
        assert!(matches!(
            "gallop".parse::<Gait>(),
            Err(Error::UnknownGait(_))
        ));
    }

    #[test]
    fn mean_and_one_hot() {
        let a = TaskVector::with_gait(1.0, 0.2, Gait::Trot);
        let b = TaskVector::with_gait(0.0, 0.0, Gait::Bound);
        let m = TaskVector::mean(&[a, b]);
        assert_eq!(m.to_array(), [0.5, 0.1, 0.5, 0.0, 0.5]);
        assert_eq!(a.one_hot_gait(), Some(Gait::Trot));
        assert_eq!(m.one_hot_gait(), None);
        assert_eq!(m.dominant_gait(), Gait::Trot);
    }
}
