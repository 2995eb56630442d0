//! Candidate task vectors: uniform prior, perturbed prior, and language-model sources.

pub mod chat;
pub mod parse;
pub mod prompt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::reward::project_for_deployment;
use crate::task::{Gait, Ranges, TaskVector};

use chat::{ChatMessage, ChatProvider};
use parse::{parse_candidates, parse_ranking};
use prompt::{
    build_correction, build_feedback_prompt, build_prompt, build_rerank_prompt, CandidateRequest,
    SYSTEM_PROMPT,
};

/// Uniform draws over the command space with a one-hot gait.
pub fn sample_uniform(n: usize, ranges: &Ranges, seed: u64) -> Result<Vec<TaskVector>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 candidates, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let v = rng.random_range(ranges.velocity.0..=ranges.velocity.1);
            let p = rng.random_range(ranges.pitch.0..=ranges.pitch.1);
            let g = Gait::ALL[rng.random_range(0..3)];
            TaskVector::with_gait(v, p, g)
        })
        .collect())
}

/// Candidates scattered around a known target, standing in for a well-informed prior.
///
/// Velocity and pitch receive N(0, σ²) noise and are clamped. The gait is
/// resampled uniformly with probability `min(1, 2σ)` and otherwise kept at the
/// target's dominant gait.
pub fn sample_perturbed(
    omega_star: &TaskVector,
    sigma: f64,
    n: usize,
    ranges: &Ranges,
    seed: u64,
) -> Result<Vec<TaskVector>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let base = project_for_deployment(omega_star, ranges);
    if sigma == 0.0 {
        return Ok(vec![base; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma checked above");
    let resample = (2.0 * sigma).min(1.0);
    Ok((0..n)
        .map(|_| {
            let v = base.velocity + noise.sample(&mut rng);
            let p = base.pitch + noise.sample(&mut rng);
            let g = if rng.random::<f64>() < resample {
                Gait::ALL[rng.random_range(0..3)]
            } else {
                base.dominant_gait()
            };
            TaskVector::with_gait(v, p, g).clamped(ranges)
        })
        .collect())
}

/// Outcome of a model call: the parsed value and the conversation that produced it,
/// ending with the accepted assistant reply.
#[derive(Debug, Clone)]
pub struct LlmReply<T> {
    pub value: T,
    pub conversation: Vec<ChatMessage>,
    pub attempts: usize,
}

/// Sends `messages`, parsing the reply with `parse`; on a parse failure the reply
/// and a corrective turn are appended and the call is retried, up to `max_retries`
/// times. Transport failures are returned immediately.
fn converse<T>(
    mut messages: Vec<ChatMessage>,
    provider: &dyn ChatProvider,
    max_retries: u32,
    expected: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<LlmReply<T>> {
    let mut last = String::new();
    let attempts = max_retries as usize + 1;
    for attempt in 1..=attempts {
        let reply = provider.complete(&messages)?;
        match parse(&reply) {
            Ok(value) => {
                messages.push(ChatMessage::assistant(reply));
                return Ok(LlmReply {
                    value,
                    conversation: messages,
                    attempts: attempt,
                });
            }
            Err(Error::Parse { reason, .. }) => {
                messages.push(ChatMessage::assistant(reply.clone()));
                messages.push(ChatMessage::user(build_correction(&reason, expected)));
                last = reply;
            }
            Err(other) => return Err(other),
        }
    }
    Err(Error::RetriesExhausted {
        attempts,
        last_response: last,
    })
}

fn candidates_expected(n: usize) -> String {
    format!("a JSON array of {n} arrays of 5 numbers")
}

/// Asks the model for `request.n` candidates.
pub fn llm_candidates(
    request: &CandidateRequest,
    provider: &dyn ChatProvider,
    max_retries: u32,
) -> Result<LlmReply<Vec<TaskVector>>> {
    request.validate()?;
    let messages = vec![
        ChatMessage::system(SYSTEM_PROMPT),
        ChatMessage::user(build_prompt(request)),
    ];
    let (n, ranges) = (request.n, request.ranges);
    converse(
        messages,
        provider,
        max_retries,
        &candidates_expected(n),
        |text| parse_candidates(text, n, &ranges),
    )
}

/// Continues an earlier candidate conversation with user feedback and asks for a
/// revised set of `n` candidates.
pub fn llm_refine(
    conversation: &[ChatMessage],
    feedback: &str,
    n: usize,
    ranges: &Ranges,
    provider: &dyn ChatProvider,
    max_retries: u32,
) -> Result<LlmReply<Vec<TaskVector>>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 candidates, got {n}"
        )));
    }
    let mut messages = conversation.to_vec();
    messages.push(ChatMessage::user(build_feedback_prompt(feedback, n)));
    let ranges = *ranges;
    converse(
        messages,
        provider,
        max_retries,
        &candidates_expected(n),
        |text| parse_candidates(text, n, &ranges),
    )
}

/// Asks the model to order `candidates` best-first for `instruction`.
pub fn llm_rerank(
    instruction: &str,
    candidates: &[TaskVector],
    ranges: &Ranges,
    provider: &dyn ChatProvider,
    max_retries: u32,
) -> Result<Vec<usize>> {
    let n = candidates.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 candidates, got {n}"
        )));
    }
    let messages = vec![
        ChatMessage::system(SYSTEM_PROMPT),
        ChatMessage::user(build_rerank_prompt(instruction, candidates, ranges)),
    ];
    let expected = format!("a JSON array containing each index 0..{} once", n - 1);
    converse(messages, provider, max_retries, &expected, |text| {
        parse_ranking(text, n)
    })
    .map(|r| r.value)
}
