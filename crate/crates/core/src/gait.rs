//! Analytic stand-in for the task-conditioned locomotion policy.
//!
//! Given a deployed command, [`rollout`] produces a trajectory whose velocity and
//! pitch relax toward the targets with a first-order lag, and whose foot contacts
//! follow the commanded gait's two-pair alternation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::reward::TimeStep;
use crate::task::{Gait, TaskVector};

/// Foot order used everywhere, wire formats included.
pub const FOOT_NAMES: [&str; 4] = ["FL", "FR", "RL", "RR"];

const FL: usize = 0;
const FR: usize = 1;
const RL: usize = 2;
const RR: usize = 3;

pub const DEFAULT_FREQ_HZ: f64 = 2.0;
pub const DEFAULT_DUTY: f64 = 0.5;
pub const DEFAULT_LAG_S: f64 = 0.2;

/// Periodic contact schedule of a gait primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitPattern {
    pub gait: Gait,
    pub freq: f64,
    pub duty: f64,
}

impl GaitPattern {
    pub fn new(gait: Gait, freq: f64, duty: f64) -> Result<Self> {
        if !(freq > 0.0 && freq.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gait frequency must be > 0, got {freq}"
            )));
        }
        if !(duty > 0.0 && duty < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "duty must be in (0, 1), got {duty}"
            )));
        }
        Ok(GaitPattern { gait, freq, duty })
    }

    pub fn contacts(&self, phase: f64) -> [bool; 4] {
        contact_pattern(self.gait, phase, self.duty)
    }
}

/// The two alternating foot pairs (A, B) of a gait.
fn foot_pairs(gait: Gait) -> ([usize; 2], [usize; 2]) {
    match gait {
        // diagonal
        Gait::Trot => ([FL, RR], [FR, RL]),
        // lateral
        Gait::Pace => ([FL, RL], [FR, RR]),
        // front/rear
        Gait::Bound => ([FL, FR], [RL, RR]),
    }
}

/// Stance flags in (FL, FR, RL, RR) order.
///
/// Pair A is in stance for `phase ∈ [0, duty)`, pair B for `phase ∈ [0.5, 0.5 + duty)`
/// taken mod 1. With `duty = 0.5` pair A covers the first half-cycle and pair B the
/// second; for `duty ≤ 0.5` the pairs are never down together.
pub fn contact_pattern(gait: Gait, phase: f64, duty: f64) -> [bool; 4] {
    let phase = phase.rem_euclid(1.0);
    let a_down = phase < duty;
    let b_down = (phase - 0.5).rem_euclid(1.0) < duty;
    let (a, b) = foot_pairs(gait);
    let mut contacts = [false; 4];
    for foot in a {
        contacts[foot] = a_down;
    }
    for foot in b {
        contacts[foot] = b_down;
    }
    contacts
}

/// Gait cycle phase after `t` steps from phase 0.
pub fn phase_at(t: usize, freq: f64, dt: f64) -> f64 {
    let x = t as f64 * freq * dt;
    // snap values within rounding of an integer cycle count back to 0
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        0.0
    } else {
        x - x.floor()
    }
}

/// A rolled-out behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub dt: f64,
    pub source_omega: TaskVector,
    pub steps: Vec<TimeStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps.len() as f64
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            id: self.id.clone(),
            dt: self.dt,
            source_omega: self.source_omega,
            steps: self
                .steps
                .iter()
                .map(|s| StepRecord {
                    v: s.v,
                    rho: s.rho,
                    contacts: s.contacts.map(u8::from),
                    phase: s.phase,
                })
                .collect(),
        }
    }

    pub fn from_record(record: TrajectoryRecord) -> Result<Self> {
        if record.dt.is_nan() || record.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                record.dt
            )));
        }
        let steps = record
            .steps
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if s.contacts.iter().any(|&c| c > 1) {
                    return Err(Error::InvalidArgument(format!(
                        "step {i}: contacts must be 0/1, got {:?}",
                        s.contacts
                    )));
                }
                if !(0.0..1.0).contains(&s.phase) {
                    return Err(Error::InvalidArgument(format!(
                        "step {i}: phase must be in [0, 1), got {}",
                        s.phase
                    )));
                }
                Ok(TimeStep {
                    v: s.v,
                    rho: s.rho,
                    contacts: s.contacts.map(|c| c == 1),
                    phase: s.phase,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            id: record.id,
            dt: record.dt,
            source_omega: record.source_omega,
            steps,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Trajectory::from_record(serde_json::from_str(s)?)
    }
}

/// Wire form of a trajectory:
/// `{id, dt, source_omega: [5], steps: [{v, rho, contacts: [4 × 0/1], phase}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub dt: f64,
    pub source_omega: TaskVector,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub v: f64,
    pub rho: f64,
    pub contacts: [u8; 4],
    pub phase: f64,
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let record = TrajectoryRecord::deserialize(deserializer)?;
        Trajectory::from_record(record).map_err(serde::de::Error::custom)
    }
}

/// Surrogate policy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Number of steps T.
    pub steps: usize,
    pub dt: f64,
    pub noise_sigma: f64,
    pub freq: f64,
    pub duty: f64,
    /// Time constant of the velocity/pitch lag, seconds.
    pub lag: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            steps: 100,
            dt: 0.02,
            noise_sigma: 0.02,
            freq: DEFAULT_FREQ_HZ,
            duty: DEFAULT_DUTY,
            lag: DEFAULT_LAG_S,
        }
    }
}

impl RolloutConfig {
    pub fn noiseless(self) -> Self {
        RolloutConfig {
            noise_sigma: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("rollout needs T >= 1".into()));
        }
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.lag.is_nan() || self.lag <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lag must be > 0, got {}",
                self.lag
            )));
        }
        GaitPattern::new(Gait::Trot, self.freq, self.duty).map(|_| ())
    }
}

fn trajectory_id(omega: &TaskVector, config: &RolloutConfig, seed: u64) -> String {
    let mut h = Sha256::new();
    for x in omega.to_array() {
        h.update(x.to_bits().to_le_bytes());
    }
    for x in [
        config.dt,
        config.noise_sigma,
        config.freq,
        config.duty,
        config.lag,
    ] {
        h.update(x.to_bits().to_le_bytes());
    }
    h.update((config.steps as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    format!("traj-{}", hex::encode(&digest[..8]))
}

/// Rolls out a deployed (one-hot) command.
pub fn rollout(omega: &TaskVector, config: &RolloutConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let gait = omega
        .one_hot_gait()
        .ok_or_else(|| Error::NotOneHot(omega.to_array()))?;
    let pattern = GaitPattern::new(gait, config.freq, config.duty)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;

    let steps = (0..config.steps)
        .map(|t| {
            let decay = (-(t as f64) * config.dt / config.lag).exp();
            // initial velocity and pitch are both 0
            let v_clean = omega.velocity * (1.0 - decay);
            let rho_clean = omega.pitch * (1.0 - decay);
            let (nv, nr) = if config.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let phase = phase_at(t, config.freq, config.dt);
            TimeStep {
                v: v_clean + nv,
                rho: rho_clean + nr,
                contacts: pattern.contacts(phase),
                phase,
            }
        })
        .collect();

    Ok(Trajectory {
        id: trajectory_id(omega, config, seed),
        dt: config.dt,
        source_omega: *omega,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: [u8; 4]) -> [bool; 4] {
        x.map(|c| c == 1)
    }

    #[test]
    fn pattern_table() {
        assert_eq!(contact_pattern(Gait::Trot, 0.25, 0.5), b([1, 0, 0, 1]));
        assert_eq!(contact_pattern(Gait::Bound, 0.75, 0.5), b([0, 0, 1, 1]));
        assert_eq!(contact_pattern(Gait::Pace, 0.0, 0.5), b([1, 0, 1, 0]));
        assert_eq!(contact_pattern(Gait::Trot, 0.5, 0.5), b([0, 1, 1, 0]));
        assert_eq!(contact_pattern(Gait::Pace, 0.99, 0.5), b([0, 1, 0, 1]));
    }

    #[test]
    fn pairs_in_antiphase_for_short_duty() {
        for gait in Gait::ALL {
            let (a, bb) = foot_pairs(gait);
            for duty in [0.1, 0.3, 0.5] {
                for i in 0..200 {
                    let c = contact_pattern(gait, i as f64 / 200.0, duty);
                    assert!(!(c[a[0]] && c[bb[0]]), "{gait} duty {duty} phase {i}");
                }
            }
        }
    }

    #[test]
    fn unknown_gait_id_is_an_error() {
        assert!("canter".parse::<Gait>().is_err());
    }

    #[test]
    fn phase_snaps_at_cycle_boundaries() {
        for t in [0usize, 25, 50, 75, 100] {
            assert_eq!(phase_at(t, 2.0, 0.02), 0.0);
        }
        assert!((phase_at(1, 2.0, 0.02) - 0.04).abs() < 1e-12);
        assert!((phase_at(13, 2.0, 0.02) - 0.52).abs() < 1e-12);
    }

    #[test]
    fn rollout_converges() {
        let omega = TaskVector::new(1.0, 0.2, [1.0, 0.0, 0.0]);
        let cfg = RolloutConfig::default().noiseless();
        let traj = rollout(&omega, &cfg, 0).unwrap();
        assert_eq!(traj.len(), 100);
        assert_eq!(traj.steps[0].v, 0.0);
        for s in &traj.steps[50..] {
            assert!((s.v - 1.0).abs() < 0.01);
            assert!((s.rho - 0.2).abs() < 0.002);
        }
    }

    #[test]
    fn rollout_requires_projection() {
        let soft = TaskVector::new(1.0, 0.2, [0.6, 0.4, 0.0]);
        assert!(matches!(
            rollout(&soft, &RolloutConfig::default(), 0),
            Err(Error::NotOneHot(_))
        ));
        let cfg = RolloutConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(rollout(&TaskVector::with_gait(1.0, 0.0, Gait::Trot), &cfg, 0).is_err());
    }

    #[test]
    fn wire_format_shape() {
        let traj = rollout(
            &TaskVector::with_gait(0.5, 0.0, Gait::Pace),
            &RolloutConfig::default(),
            3,
        )
        .unwrap();
        let value: serde_json::Value = serde_json::to_value(&traj).unwrap();
        assert_eq!(value["steps"].as_array().unwrap().len(), 100);
        assert_eq!(
            value["source_omega"],
            serde_json::json!([0.5, 0.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(
            value["steps"][0]["contacts"],
            serde_json::json!([1, 0, 1, 0])
        );
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 4);

        let back = Trajectory::from_json(&traj.to_json().unwrap()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn malformed_records_rejected() {
        let bad = r#"{"id":"x","dt":0.02,"source_omega":[1,0,1,0,0],"steps":[{"v":0,"rho":0,"contacts":[2,0,0,0],"phase":0}]}"#;
        assert!(Trajectory::from_json(bad).is_err());
        let bad_phase = r#"{"id":"x","dt":0.02,"source_omega":[1,0,1,0,0],"steps":[{"v":0,"rho":0,"contacts":[1,0,0,1],"phase":1.0}]}"#;
        assert!(Trajectory::from_json(bad_phase).is_err());
        let bad_arity = r#"{"id":"x","dt":0.02,"source_omega":[1,0,1,0,0],"steps":[{"v":0,"rho":0,"contacts":[1,0,0],"phase":0}]}"#;
        assert!(Trajectory::from_json(bad_arity).is_err());
    }
}
