//! Factored reward `r_ω(s) = Σⱼ αⱼ φⱼ(s, ωⱼ)` and its gradient with respect to ω.
//!
//! The five factors are velocity tracking, pitch tracking, and one gait term per
//! primitive. Tracking factors are negated squared errors so larger is better and
//! all weights stay positive. Gait terms are `ω_gait[i] · mᵢ(s)` where `mᵢ` is the
//! fraction of feet whose contact flag agrees with primitive `i` at the step's phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{contact_pattern, DEFAULT_DUTY};
use crate::task::{Gait, Ranges, RewardWeights, TaskVector, OMEGA_DIM};

/// One state of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStep {
    /// Base velocity, m/s.
    pub v: f64,
    /// Body pitch, rad.
    pub rho: f64,
    /// Stance flags in (FL, FR, RL, RR) order.
    pub contacts: [bool; 4],
    /// Gait cycle phase in `[0, 1)`.
    pub phase: f64,
}

/// Fraction of the four feet agreeing with `gait`'s pattern at this step's phase.
pub fn gait_match(step: &TimeStep, gait: Gait) -> f64 {
    let expected = contact_pattern(gait, step.phase, DEFAULT_DUTY);
    let agree = expected
        .iter()
        .zip(step.contacts.iter())
        .filter(|(a, b)| a == b)
        .count();
    agree as f64 / 4.0
}

/// Match fractions for (trot, pace, bound).
pub fn gait_matches(step: &TimeStep) -> [f64; 3] {
    Gait::ALL.map(|g| gait_match(step, g))
}

pub fn step_reward(step: &TimeStep, omega: &TaskVector, weights: &RewardWeights) -> f64 {
    let ev = omega.velocity - step.v;
    let ep = omega.pitch - step.rho;
    let m = gait_matches(step);
    let mut r = -weights.velocity() * ev * ev - weights.pitch() * ep * ep;
    for g in Gait::ALL {
        r += weights.gait(g) * omega.gait_weights[g.index()] * m[g.index()];
    }
    r
}

/// Exact partials of [`step_reward`] with respect to the five components of ω.
pub fn step_reward_grad(
    step: &TimeStep,
    omega: &TaskVector,
    weights: &RewardWeights,
) -> [f64; OMEGA_DIM] {
    let m = gait_matches(step);
    [
        -2.0 * weights.velocity() * (omega.velocity - step.v),
        -2.0 * weights.pitch() * (omega.pitch - step.rho),
        weights.gait(Gait::Trot) * m[0],
        weights.gait(Gait::Pace) * m[1],
        weights.gait(Gait::Bound) * m[2],
    ]
}

/// Sum of step rewards. Works on any sub-slice of a trajectory.
pub fn trajectory_return(
    steps: &[TimeStep],
    omega: &TaskVector,
    weights: &RewardWeights,
) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(steps.iter().map(|s| step_reward(s, omega, weights)).sum())
}

/// Gradient of [`trajectory_return`] with respect to ω.
pub fn trajectory_return_grad(
    steps: &[TimeStep],
    omega: &TaskVector,
    weights: &RewardWeights,
) -> Result<[f64; OMEGA_DIM]> {
    if steps.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut g = [0.0; OMEGA_DIM];
    for s in steps {
        for (acc, x) in g.iter_mut().zip(step_reward_grad(s, omega, weights)) {
            *acc += x;
        }
    }
    Ok(g)
}

/// Clamps velocity and pitch and replaces the gait weights by a one-hot at the
/// argmax (lowest index wins ties).
pub fn project_for_deployment(omega: &TaskVector, ranges: &Ranges) -> TaskVector {
    let clamped = omega.clamped(ranges);
    TaskVector::with_gait(clamped.velocity, clamped.pitch, omega.dominant_gait())
}
