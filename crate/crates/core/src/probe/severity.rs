//! Per-check severity matrix, shipped as a data file so it can be audited.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Severity;

const DEFAULT_MATRIX: &str = include_str!("../../data/severity_matrix.json");

#[derive(Debug, Error)]
pub enum SeverityMatrixError {
    #[error("cannot read severity matrix: {0}")]
    Io(#[from] std::io::Error),
    #[error("severity matrix does not parse: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityRule {
    pub severity: Severity,
    pub remediation_ref: String,
    pub remediation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeverityMatrix(BTreeMap<String, SeverityRule>);

impl Default for SeverityMatrix {
    fn default() -> Self {
        Self::from_json(DEFAULT_MATRIX).expect("shipped severity matrix parses")
    }
}

impl SeverityMatrix {
    pub fn from_json(text: &str) -> Result<Self, SeverityMatrixError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SeverityMatrixError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn rule(&self, check_id: &str) -> Option<&SeverityRule> {
        self.0.get(check_id)
    }

    pub fn check_ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}
