//! Per-assertion forensic watermarks.
//!
//! A watermark is the first four bytes (eight lowercase hex characters) of
//! SHA-256 over `assertion_id|STATUS|workspace_id`, with the status written
//! as its ledger constant. Any edit to one of the three inputs changes the
//! watermark with overwhelming probability.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::ControlAssertion;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WatermarkError {
    #[error("watermark input `{0}` is empty")]
    EmptyField(&'static str),
}

pub fn canonical_string(assertion_id: &str, status: &str, workspace_id: &str) -> String {
    format!("{assertion_id}|{status}|{workspace_id}")
}

pub fn compute_watermark(
    assertion_id: &str,
    status: &str,
    workspace_id: &str,
) -> Result<String, WatermarkError> {
    if assertion_id.is_empty() {
        return Err(WatermarkError::EmptyField("assertion_id"));
    }
    if status.is_empty() {
        return Err(WatermarkError::EmptyField("status"));
    }
    if workspace_id.is_empty() {
        return Err(WatermarkError::EmptyField("workspace_id"));
    }
    let digest = Sha256::digest(canonical_string(assertion_id, status, workspace_id).as_bytes());
    Ok(hex::encode(&digest[..4]))
}

/// Recomputes the watermark from an assertion's own fields.
pub fn watermark_of(assertion: &ControlAssertion) -> Result<String, WatermarkError> {
    compute_watermark(
        &assertion.assertion_id,
        assertion.status.as_str(),
        assertion.workspace_id.as_str(),
    )
}

pub fn verify_assertion(assertion: &ControlAssertion) -> bool {
    watermark_of(assertion).is_ok_and(|w| w == assertion.watermark)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden values produced with Python's hashlib:
    //   hashlib.sha256(b"ea_x|PASS|ws_y").hexdigest()[:8]
    #[test]
    fn golden_values_match_independent_sha256() {
        assert_eq!(compute_watermark("ea_x", "PASS", "ws_y").unwrap(), "d5b7303f");
        assert_eq!(compute_watermark("ea_x", "FAIL", "ws_y").unwrap(), "0c67a96a");
        assert_eq!(
            compute_watermark("ea_7f3a91c", "PARTIAL_PASS", "ws_acme_fin_8821").unwrap(),
            "36655990"
        );
    }

    #[test]
    fn deterministic() {
        let a = compute_watermark("ea_x", "PASS", "ws_y").unwrap();
        let b = compute_watermark("ea_x", "PASS", "ws_y").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert_eq!(
            compute_watermark("", "PASS", "ws"),
            Err(WatermarkError::EmptyField("assertion_id"))
        );
        assert_eq!(
            compute_watermark("ea_1", "", "ws"),
            Err(WatermarkError::EmptyField("status"))
        );
        assert_eq!(
            compute_watermark("ea_1", "PASS", ""),
            Err(WatermarkError::EmptyField("workspace_id"))
        );
    }
}
