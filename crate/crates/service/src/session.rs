//! Session state machine. Everything here is synchronous; the HTTP layer runs it
//! on the blocking pool.

use std::time::{SystemTime, UNIX_EPOCH};

use gaitpref::candidates::chat::{ChatMessage, ChatProvider};
use gaitpref::candidates::prompt::CandidateRequest;
use gaitpref::candidates::{llm_candidates, llm_refine, sample_perturbed, sample_uniform};
use gaitpref::pipeline::{learn_from_ranking, rollout_candidates, LearnConfig};
use gaitpref::prefs::MAX_RANKED;
use gaitpref::{project_for_deployment, rollout, TaskVector, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Llm,
    Uniform,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingRanking,
    Fitted,
    Error,
}

/// Service-wide knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub learn: LearnConfig,
    /// Seed for the rollout of the learned command.
    pub refined_seed: u64,
    pub perturb_sigma: f64,
    pub max_retries: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            learn: LearnConfig::default(),
            refined_seed: 7,
            perturb_sigma: 0.1,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub instruction: String,
    pub n: usize,
    pub source: Source,
    /// Centre of the `perturbed` source.
    #[serde(default)]
    pub prior: Option<TaskVector>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl CreateSession {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.instruction.trim().is_empty() {
            return Err(ServiceError::Validation(
                "instruction must not be empty".into(),
            ));
        }
        if !(2..=MAX_RANKED).contains(&self.n) {
            return Err(ServiceError::Validation(format!(
                "n must be between 2 and {MAX_RANKED}, got {}",
                self.n
            )));
        }
        match (self.source, &self.prior) {
            (Source::Perturbed, None) => Err(ServiceError::Validation(
                "the perturbed source needs a `prior` task vector".into(),
            )),
            (Source::Perturbed, Some(p)) if !p.is_finite() => {
                Err(ServiceError::Validation("prior must be finite".into()))
            }
            _ => match self.sigma {
                Some(s) if !(s >= 0.0 && s.is_finite()) => Err(ServiceError::Validation(format!(
                    "sigma must be >= 0, got {s}"
                ))),
                _ => Ok(()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learned {
    pub raw: TaskVector,
    pub projected: TaskVector,
    pub trajectory: Trajectory,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryEntry {
    Ranking { ranking: Vec<usize>, at: f64 },
    Feedback { text: String, at: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub instruction: String,
    pub source: Source,
    pub n: usize,
    pub seed: u64,
    pub state: SessionState,
    pub candidates: Vec<TaskVector>,
    pub trajectories: Vec<Trajectory>,
    pub learned: Option<Learned>,
    pub history: Vec<HistoryEntry>,
    pub error: Option<String>,
    /// Model conversation behind the current candidates.
    pub conversation: Vec<ChatMessage>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl Session {
    /// Draws and rolls out candidates. A failing model call yields a session in
    /// the error state rather than an `Err`.
    pub fn create(
        id: String,
        req: &CreateSession,
        config: &ServiceConfig,
        llm: Option<&dyn ChatProvider>,
    ) -> Result<Session, ServiceError> {
        req.validate()?;
        let mut session = Session {
            id,
            instruction: req.instruction.clone(),
            source: req.source,
            n: req.n,
            seed: req.seed,
            state: SessionState::AwaitingRanking,
            candidates: Vec::new(),
            trajectories: Vec::new(),
            learned: None,
            history: Vec::new(),
            error: None,
            conversation: Vec::new(),
        };
        let ranges = config.learn.ranges;
        let drawn = match req.source {
            Source::Uniform => sample_uniform(req.n, &ranges, req.seed)?,
            Source::Perturbed => sample_perturbed(
                req.prior.as_ref().expect("validated above"),
                req.sigma.unwrap_or(config.perturb_sigma),
                req.n,
                &ranges,
                req.seed,
            )?,
            Source::Llm => {
                let Some(provider) = llm else {
                    session.fail("no language model endpoint is configured".into());
                    return Ok(session);
                };
                let mut request = CandidateRequest::new(req.instruction.clone(), req.n);
                request.ranges = ranges;
                match llm_candidates(&request, provider, config.max_retries) {
                    Ok(reply) => {
                        session.conversation = reply.conversation;
                        reply.value
                    }
                    Err(e) => {
                        session.fail(e.to_string());
                        return Ok(session);
                    }
                }
            }
        };
        session.set_candidates(drawn, config)?;
        Ok(session)
    }

    fn fail(&mut self, message: String) {
        self.state = SessionState::Error;
        self.error = Some(message);
        self.learned = None;
    }

    fn set_candidates(
        &mut self,
        candidates: Vec<TaskVector>,
        config: &ServiceConfig,
    ) -> Result<(), ServiceError> {
        self.trajectories = rollout_candidates(&candidates, &config.learn, self.seed)?;
        self.candidates = candidates;
        Ok(())
    }

    fn require_awaiting(&self) -> Result<(), ServiceError> {
        match self.state {
            SessionState::AwaitingRanking => Ok(()),
            SessionState::Fitted => Err(ServiceError::Conflict(format!(
                "session {} is already fitted",
                self.id
            ))),
            SessionState::Error => Err(ServiceError::Conflict(format!(
                "session {} is in the error state: {}",
                self.id,
                self.error.as_deref().unwrap_or("unknown error")
            ))),
        }
    }

    /// Fits from a best-first ranking of candidate indices.
    pub fn rank(&mut self, ranking: &[usize], config: &ServiceConfig) -> Result<(), ServiceError> {
        self.require_awaiting()?;
        gaitpref::prefs::validate_permutation(ranking, self.candidates.len())?;
        let fit = match learn_from_ranking(
            &self.candidates,
            &self.trajectories,
            ranking,
            &config.learn,
            self.seed,
        ) {
            Ok(fit) => fit,
            Err(e @ gaitpref::Error::Diverged { .. }) => {
                self.fail(e.to_string());
                return Err(ServiceError::Internal(e.to_string()));
            }
            Err(e) => return Err(e.into()),
        };
        let projected = project_for_deployment(&fit.omega, &config.learn.ranges);
        let trajectory = rollout(&projected, &config.learn.rollout, config.refined_seed)?;
        self.learned = Some(Learned {
            raw: fit.omega,
            projected,
            trajectory,
            loss: fit.loss,
        });
        self.state = SessionState::Fitted;
        self.history.push(HistoryEntry::Ranking {
            ranking: ranking.to_vec(),
            at: now(),
        });
        Ok(())
    }

    /// Re-prompts the model with the feedback and replaces the candidates.
    pub fn feedback(
        &mut self,
        text: &str,
        config: &ServiceConfig,
        llm: Option<&dyn ChatProvider>,
    ) -> Result<(), ServiceError> {
        if self.source != Source::Llm {
            return Err(ServiceError::Unsupported(format!(
                "feedback needs an llm session; session {} uses {:?} candidates",
                self.id, self.source
            )));
        }
        self.require_awaiting()?;
        if text.trim().is_empty() {
            return Err(ServiceError::Validation(
                "feedback must not be empty".into(),
            ));
        }
        let provider = llm.ok_or_else(|| {
            ServiceError::Unsupported("no language model endpoint is configured".into())
        })?;
        let reply = match llm_refine(
            &self.conversation,
            text,
            self.n,
            &config.learn.ranges,
            provider,
            config.max_retries,
        ) {
            Ok(r) => r,
            Err(e) => {
                self.fail(e.to_string());
                return Ok(());
            }
        };
        self.conversation = reply.conversation;
        self.set_candidates(reply.value, config)?;
        self.history.push(HistoryEntry::Feedback {
            text: text.to_string(),
            at: now(),
        });
        Ok(())
    }
}

/// Response body for session reads.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView<'a> {
    pub id: &'a str,
    pub instruction: &'a str,
    pub source: Source,
    pub state: SessionState,
    pub candidates: &'a [TaskVector],
    pub trajectories: &'a [Trajectory],
    pub learned_omega: Option<TaskVector>,
    pub projected_omega: Option<TaskVector>,
    pub history: &'a [HistoryEntry],
    pub error: Option<&'a str>,
}

impl<'a> From<&'a Session> for SessionView<'a> {
    fn from(s: &'a Session) -> Self {
        SessionView {
            id: &s.id,
            instruction: &s.instruction,
            source: s.source,
            state: s.state,
            candidates: &s.candidates,
            trajectories: &s.trajectories,
            learned_omega: s.learned.as_ref().map(|l| l.raw),
            projected_omega: s.learned.as_ref().map(|l| l.projected),
            history: &s.history,
            error: s.error.as_deref(),
        }
    }
}

/// Response body for the fitted result.
#[derive(Debug, Clone, Serialize)]
pub struct ResultView<'a> {
    pub id: &'a str,
    pub learned_omega: TaskVector,
    pub projected_omega: TaskVector,
    pub trajectory: &'a Trajectory,
    pub loss: f64,
}

impl<'a> ResultView<'a> {
    pub fn of(s: &'a Session) -> Result<Self, ServiceError> {
        let learned = s.learned.as_ref().ok_or_else(|| {
            ServiceError::Conflict(format!("session {} has no fitted result yet", s.id))
        })?;
        Ok(ResultView {
            id: &s.id,
            learned_omega: learned.raw,
            projected_omega: learned.projected,
            trajectory: &learned.trajectory,
            loss: learned.loss,
        })
    }
}
