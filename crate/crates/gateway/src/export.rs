//! Auditor CSV bundle with a watermark on every row, and its verifier.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;
use trustos_core::mapping::Catalog;
use trustos_core::model::{ControlAssertion, Framework, Role, WorkspaceId};
use trustos_core::store::{Store, StoreError};
use trustos_core::watermark::compute_watermark;

pub const HEADER: [&str; 5] = ["ASSERTION_ID", "CONTROL", "INTEGRATION", "STATUS", "WATERMARK"];
const SEPARATOR: &str = ", ";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("role {0:?} may not export evidence")]
    Forbidden(Role),
    #[error("cell `{0}` cannot be written to the bundle")]
    UnwritableCell(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Tampered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowCheck {
    /// 1-based position among data rows.
    pub row: usize,
    pub assertion_id: String,
    pub verdict: Verdict,
}

/// Rows of a verified bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleReport {
    pub rows: Vec<RowCheck>,
}

impl BundleReport {
    pub fn tampered(&self) -> Vec<&RowCheck> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Tampered).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.tampered().is_empty()
    }
}

/// Label of the first framework requirement the assertion's control maps
/// to within the workspace's active frameworks.
fn control_label(catalog: &Catalog, active: &BTreeSet<Framework>, a: &ControlAssertion) -> String {
    catalog
        .active_requirements_for(&a.control_id, active)
        .first()
        .map(|r| r.label())
        .unwrap_or_else(|| a.control_id.clone())
}

fn cell(s: &str) -> Result<&str, ExportError> {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        return Err(ExportError::UnwritableCell(s.to_string()));
    }
    Ok(s)
}

/// One row per latest assertion, ordered by assertion id, with each
/// watermark recomputed from the ledger fields at export time.
pub fn export_auditor_bundle(
    store: &Store,
    catalog: &Catalog,
    ws: &WorkspaceId,
    role: Role,
) -> Result<String, ExportError> {
    if !role.can_export() {
        return Err(ExportError::Forbidden(role));
    }
    let workspace = store.workspace(ws)?;
    let mut latest = store.latest_assertions(ws)?;
    latest.sort_by(|a, b| a.assertion_id.cmp(&b.assertion_id));
    let mut out = HEADER.join(SEPARATOR);
    out.push('\n');
    for a in &latest {
        let watermark = compute_watermark(&a.assertion_id, a.status.as_str(), ws.as_str())
            .map_err(|e| ExportError::UnwritableCell(e.to_string()))?;
        let label = control_label(catalog, &workspace.active_frameworks, a);
        let row = [
            cell(&a.assertion_id)?,
            cell(&label)?,
            cell(a.integration.ledger_name())?,
            cell(a.status.as_str())?,
            cell(&watermark)?,
        ];
        out.push_str(&row.join(SEPARATOR));
        out.push('\n');
    }
    tracing::info!(workspace = %ws, rows = latest.len(), "auditor bundle exported");
    Ok(out)
}

/// Recomputes each row's watermark from its id and status cells. Accepts
/// comma or comma-space separators and any row order.
pub fn verify_bundle(csv_text: &str, ws: &str) -> Result<BundleReport, BundleError> {
    if ws.is_empty() {
        return Err(BundleError::MalformedBundle("workspace id is empty".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| BundleError::MalformedBundle("missing header".into()))?
        .map_err(|e| BundleError::MalformedBundle(e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(BundleError::MalformedBundle(format!(
            "header must be `{}`",
            HEADER.join(SEPARATOR)
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| BundleError::MalformedBundle(e.to_string()))?;
        let (id, status, mark) = (&rec[0], &rec[3], &rec[4]);
        let ok = compute_watermark(id, status, ws).is_ok_and(|w| w == mark);
        rows.push(RowCheck {
            row: i + 1,
            assertion_id: id.to_string(),
            verdict: if ok { Verdict::Ok } else { Verdict::Tampered },
        });
    }
    Ok(BundleReport { rows })
}
