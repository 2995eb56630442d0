//! Prompt construction for candidate generation and re-ranking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Ranges, TaskVector};

/// A language description paired with the task vector an expert chose for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InContextExample {
    pub description: String,
    pub omega: TaskVector,
}

impl InContextExample {
    pub fn new(description: impl Into<String>, omega: [f64; 5], ranges: &Ranges) -> Result<Self> {
        let ex = InContextExample {
            description: description.into(),
            omega: TaskVector::from_array(omega),
        };
        ex.validate(ranges)?;
        Ok(ex)
    }

    pub fn validate(&self, ranges: &Ranges) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::InvalidArgument(
                "example description is empty".into(),
            ));
        }
        if !self.omega.in_ranges(ranges) {
            return Err(Error::InvalidArgument(format!(
                "example `{}` is out of range: {}",
                self.description, self.omega
            )));
        }
        Ok(())
    }
}

/// The six shipped description → ω examples.
pub fn default_examples() -> Vec<InContextExample> {
    let r = Ranges::default();
    [
        ("slow cautious walk", [0.3, -0.1, 1.0, 0.0, 0.0]),
        ("brisk confident trot", [1.0, 0.1, 1.0, 0.0, 0.0]),
        (
            "relaxed ambling stroll, swaying side to side",
            [0.5, 0.0, 0.0, 1.0, 0.0],
        ),
        (
            "tired shuffle with the head hanging low",
            [0.2, -0.3, 0.0, 1.0, 0.0],
        ),
        ("playful bouncing hops", [1.2, 0.2, 0.0, 0.0, 1.0]),
        ("eager sprint forward", [1.5, 0.15, 0.0, 0.0, 1.0]),
    ]
    .into_iter()
    .map(|(d, w)| InContextExample::new(d, w, &r).expect("shipped examples are valid"))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRequest {
    /// The user's description of the desired behavior.
    pub instruction: String,
    pub n: usize,
    pub examples: Vec<InContextExample>,
    pub diversity_note: String,
    pub ranges: Ranges,
}

pub const DEFAULT_DIVERSITY_NOTE: &str = "The candidates should explore a range of plausible \
interpretations of the request: vary the gait across trot, pace and bound where it makes sense, \
and spread the velocities and pitches instead of repeating one guess.";

impl CandidateRequest {
    pub fn new(instruction: impl Into<String>, n: usize) -> Self {
        CandidateRequest {
            instruction: instruction.into(),
            n,
            examples: default_examples(),
            diversity_note: DEFAULT_DIVERSITY_NOTE.into(),
            ranges: Ranges::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 candidates, got {}",
                self.n
            )));
        }
        for ex in &self.examples {
            ex.validate(&self.ranges)?;
        }
        Ok(())
    }
}

pub const SYSTEM_PROMPT: &str = "You control the gait of a small quadruped robot by writing \
task vectors. You answer with careful reasoning followed by a JSON answer on the final line.";

fn format_contract(out: &mut String, ranges: &Ranges) {
    let _ = writeln!(
        out,
        "A behavior is a task vector of exactly 5 numbers: [velocity, pitch, trot, pace, bound]."
    );
    let _ = writeln!(
        out,
        "- velocity: forward speed in m/s, between {} and {}.",
        ranges.velocity.0, ranges.velocity.1
    );
    let _ = writeln!(
        out,
        "- pitch: body pitch in radians, between {} and {} (positive lifts the head).",
        ranges.pitch.0, ranges.pitch.1
    );
    let _ = writeln!(
        out,
        "- trot, pace, bound: gait weights between 0 and 1. Trot moves diagonal legs together, \
pace moves the legs of one side together, bound moves the front pair then the rear pair. \
The robot executes the gait with the largest weight."
    );
}

pub fn format_vector(v: &TaskVector) -> String {
    serde_json::to_string(v).expect("finite task vector serializes")
}

/// One prompt asking for `n` diverse candidate task vectors.
pub fn build_prompt(request: &CandidateRequest) -> String {
    let mut out = String::new();
    format_contract(&mut out, &request.ranges);
    out.push('\n');
    if !request.examples.is_empty() {
        out.push_str("Examples of descriptions and the task vectors that produce them:\n");
        for ex in &request.examples {
            let _ = writeln!(
                out,
                "- \"{}\" -> {}",
                ex.description,
                format_vector(&ex.omega)
            );
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Desired behavior: \"{}\"", request.instruction);
    out.push('\n');
    let _ = writeln!(
        out,
        "Propose exactly {n} different candidate task vectors for this behavior. {note}",
        n = request.n,
        note = request.diversity_note
    );
    out.push('\n');
    out.push_str(
        "Think step by step first: describe what the behavior looks like, which gaits could \
express it, and what speed and pitch fit it. Then give your answer.\n",
    );
    let _ = writeln!(
        out,
        "The final line of your reply must be a JSON array of {n} arrays of 5 numbers, \
e.g. [[v, pitch, trot, pace, bound], ...], with nothing after it.",
        n = request.n
    );
    out
}

/// Follow-up turn asking the model to revise its candidates after user feedback.
pub fn build_feedback_prompt(feedback: &str, n: usize) -> String {
    format!(
        "The user watched the behaviors from those candidates and says: \"{feedback}\"\n\n\
Revise your proposal to better match what the user wants. Think step by step, then end \
with a final line containing a JSON array of exactly {n} arrays of 5 numbers \
[velocity, pitch, trot, pace, bound]."
    )
}

/// Corrective turn appended after an unparseable reply.
pub fn build_correction(reason: &str, expected: &str) -> String {
    format!(
        "Your previous reply could not be used: {reason}. Reply again and make the final \
line exactly {expected}, with nothing after it."
    )
}

/// Prompt asking the model to order its own candidates best-first.
pub fn build_rerank_prompt(
    instruction: &str,
    candidates: &[TaskVector],
    ranges: &Ranges,
) -> String {
    let mut out = String::new();
    format_contract(&mut out, ranges);
    out.push('\n');
    let _ = writeln!(out, "Desired behavior: \"{instruction}\"");
    out.push('\n');
    out.push_str("Candidate task vectors:\n");
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(out, "{i}: {}", format_vector(c));
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "Rank all {n} candidates from the one that best matches the desired behavior to the \
one that matches it least. Think step by step, then end with a final line containing a JSON \
array of the {n} candidate indices (each of 0..{last} exactly once), best first.",
        n = candidates.len(),
        last = candidates.len().saturating_sub(1)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_carries_contract_examples_and_count() {
        let req = CandidateRequest::new("walk like a happy puppy", 4);
        let p = build_prompt(&req);
        for ex in &req.examples {
            assert!(p.contains(&ex.description), "missing {}", ex.description);
        }
        assert!(p.contains("[velocity, pitch, trot, pace, bound]"));
        assert!(p.contains("exactly 4 different candidate"));
        assert!(p.contains("JSON array of 4 arrays of 5 numbers"));
        assert!(p.contains("walk like a happy puppy"));
        assert!(p.contains("Think step by step"));
        assert!(p.contains("between 0 and 1.5"));
    }

    #[test]
    fn prompt_asks_for_diversity() {
        let p = build_prompt(&CandidateRequest::new("x", 3));
        assert!(p.contains("explore a range"));
        assert!(p.contains("vary the gait"));
        assert!(p.contains("spread the velocities"));
    }

    #[test]
    fn example_validation() {
        let r = Ranges::default();
        assert!(InContextExample::new("", [0.5, 0.0, 1.0, 0.0, 0.0], &r).is_err());
        assert!(InContextExample::new("fast", [3.0, 0.0, 1.0, 0.0, 0.0], &r).is_err());
        assert_eq!(default_examples().len(), 6);
        assert!(CandidateRequest::new("x", 1).validate().is_err());
    }

    #[test]
    fn rerank_prompt_lists_candidates() {
        let c = vec![
            TaskVector::from_array([0.5, 0.1, 1.0, 0.0, 0.0]),
            TaskVector::from_array([1.0, 0.0, 0.0, 1.0, 0.0]),
        ];
        let p = build_rerank_prompt("be calm", &c, &Ranges::default());
        assert!(p.contains("0: [0.5,0.1,1.0,0.0,0.0]"));
        assert!(p.contains("1: [1.0,0.0,0.0,1.0,0.0]"));
        assert!(p.contains("0..1"));
    }
}
