//! Extraction of JSON answers from free-form model output.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::prefs::validate_permutation;
use crate::task::{Ranges, TaskVector, OMEGA_DIM};

fn parse_error(reason: impl Into<String>, text: &str) -> Error {
    Error::Parse {
        reason: reason.into(),
        text: text.to_string(),
    }
}

/// The last complete JSON array in `text`.
///
/// Scans closing brackets from the end and, for each, walks back to its matching
/// opening bracket; the first slice that parses as a JSON array wins.
pub fn last_json_array(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    for close in (0..bytes.len()).rev().filter(|&i| bytes[i] == b']') {
        let mut depth = 0i32;
        for open in (0..=close).rev() {
            match bytes[open] {
                b']' => depth += 1,
                b'[' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(v @ Value::Array(_)) = serde_json::from_str(&text[open..=close]) {
                            return Some(v);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

/// Parses `n` task vectors from the last JSON array of a completion.
///
/// Values are clamped to `ranges`; soft gait weights are kept as-is.
pub fn parse_candidates(text: &str, n: usize, ranges: &Ranges) -> Result<Vec<TaskVector>> {
    let value = last_json_array(text).ok_or_else(|| parse_error("no JSON array found", text))?;
    let rows = value.as_array().expect("last_json_array returns arrays");
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let nums = row
            .as_array()
            .ok_or_else(|| parse_error(format!("candidate {i} is not an array"), text))?;
        if nums.len() != OMEGA_DIM {
            return Err(parse_error(
                format!(
                    "candidate {i} has {} numbers, expected {OMEGA_DIM}",
                    nums.len()
                ),
                text,
            ));
        }
        let mut a = [0.0; OMEGA_DIM];
        for (slot, x) in a.iter_mut().zip(nums) {
            *slot = x.as_f64().filter(|f| f.is_finite()).ok_or_else(|| {
                parse_error(format!("candidate {i} has a non-finite entry {x}"), text)
            })?;
        }
        out.push(TaskVector::from_array(a).clamped(ranges));
    }
    if out.len() != n {
        return Err(parse_error(
            format!("expected {n} candidates, found {}", out.len()),
            text,
        ));
    }
    Ok(out)
}

/// Parses a best-first ranking of `n` candidates.
pub fn parse_ranking(text: &str, n: usize) -> Result<Vec<usize>> {
    let value = last_json_array(text).ok_or_else(|| parse_error("no JSON array found", text))?;
    let ranking = value
        .as_array()
        .expect("last_json_array returns arrays")
        .iter()
        .map(|x| x.as_u64().map(|u| u as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| parse_error("ranking must contain non-negative integers", text))?;
    validate_permutation(&ranking, n).map_err(|e| parse_error(e.to_string(), text))?;
    Ok(ranking)
}
