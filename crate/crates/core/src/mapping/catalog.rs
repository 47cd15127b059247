//! Framework catalog: requirements, canonical controls and the many-to-many
//! mappings between them.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Framework, FrameworkRef, ProbeKind, Role};

const DEFAULT_CATALOG: &str = include_str!("../../data/default_catalog.json");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid catalog: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkRequirement {
    pub requirement_id: String,
    pub framework: Framework,
    pub clause: String,
    pub title: String,
}

impl FrameworkRequirement {
    /// Export label, e.g. `SOC2 CC6.7`.
    pub fn label(&self) -> String {
        format!("{} {}", self.framework.code(), self.clause)
    }

    pub fn framework_ref(&self) -> FrameworkRef {
        FrameworkRef {
            framework: self.framework,
            clause: self.clause.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub control_id: String,
    pub name: String,
    pub risk_weight: f64,
    /// Probe that produces evidence for this control, if any.
    #[serde(default)]
    pub probe_kind: Option<ProbeKind>,
    /// Claim stated when the control passes.
    pub evidence_claim: String,
    /// Role that owns action items for this control; Administrator if absent.
    #[serde(default)]
    pub owner_role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlMapping {
    pub mapping_id: String,
    pub control_id: String,
    pub requirement_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub catalog_version: String,
    pub requirements: Vec<FrameworkRequirement>,
    pub controls: Vec<Control>,
    pub mappings: Vec<ControlMapping>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let c: Catalog = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let bad = |m: String| Err(CatalogError::Invalid(m));
        if self.catalog_version.trim().is_empty() {
            return bad("catalog_version is empty".into());
        }
        let mut req_ids = HashSet::new();
        let mut clauses = HashSet::new();
        for r in &self.requirements {
            if !req_ids.insert(r.requirement_id.as_str()) {
                return bad(format!("duplicate requirement id {}", r.requirement_id));
            }
            if !clauses.insert((r.framework, r.clause.as_str())) {
                return bad(format!("duplicate clause {}", r.label()));
            }
        }
        let mut control_ids = HashSet::new();
        let mut probes = HashSet::new();
        for c in &self.controls {
            if !control_ids.insert(c.control_id.as_str()) {
                return bad(format!("duplicate control id {}", c.control_id));
            }
            if !(c.risk_weight > 0.0 && c.risk_weight.is_finite()) {
                return bad(format!("control {} has non-positive risk weight", c.control_id));
            }
            if let Some(k) = c.probe_kind {
                if !probes.insert(k) {
                    return bad(format!("probe kind {k:?} backs more than one control"));
                }
            }
        }
        let mut pairs = HashSet::new();
        for m in &self.mappings {
            if !control_ids.contains(m.control_id.as_str()) {
                return bad(format!("mapping {} references unknown control {}", m.mapping_id, m.control_id));
            }
            if !req_ids.contains(m.requirement_id.as_str()) {
                return bad(format!(
                    "mapping {} references unknown requirement {}",
                    m.mapping_id, m.requirement_id
                ));
            }
            if !pairs.insert((m.control_id.as_str(), m.requirement_id.as_str())) {
                return bad(format!("mapping {} duplicates an existing pair", m.mapping_id));
            }
        }
        Ok(())
    }

    pub fn control(&self, control_id: &str) -> Option<&Control> {
        self.controls.iter().find(|c| c.control_id == control_id)
    }

    pub fn control_for_probe(&self, kind: ProbeKind) -> Option<&Control> {
        self.controls.iter().find(|c| c.probe_kind == Some(kind))
    }

    pub fn requirement(&self, requirement_id: &str) -> Option<&FrameworkRequirement> {
        self.requirements.iter().find(|r| r.requirement_id == requirement_id)
    }

    /// Requirements mapped to a control, in mapping order.
    pub fn requirements_for(&self, control_id: &str) -> Vec<&FrameworkRequirement> {
        self.mappings
            .iter()
            .filter(|m| m.control_id == control_id)
            .filter_map(|m| self.requirement(&m.requirement_id))
            .collect()
    }

    /// Mapped requirements restricted to the given frameworks.
    pub fn active_requirements_for(
        &self,
        control_id: &str,
        active: &BTreeSet<Framework>,
    ) -> Vec<&FrameworkRequirement> {
        self.requirements_for(control_id)
            .into_iter()
            .filter(|r| active.contains(&r.framework))
            .collect()
    }

    /// Controls mapped to a requirement.
    pub fn controls_for(&self, requirement_id: &str) -> Vec<&Control> {
        self.mappings
            .iter()
            .filter(|m| m.requirement_id == requirement_id)
            .filter_map(|m| self.control(&m.control_id))
            .collect()
    }

    pub fn requirements_in(&self, framework: Framework) -> Vec<&FrameworkRequirement> {
        self.requirements.iter().filter(|r| r.framework == framework).collect()
    }

    pub fn frameworks(&self) -> BTreeSet<Framework> {
        self.requirements.iter().map(|r| r.framework).collect()
    }
}
