//! Compliance document synthesis.
//!
//! Evidence lines are built from assertion metadata only, turned into a
//! fixed prompt, and handed to a [`DocumentGenerator`] that sees nothing but
//! the prompt text. The default [`TemplateGenerator`] is deterministic.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::new_id;
use crate::intelligence::{compute_posture, IntelligenceError, PostureConfig};
use crate::mapping::{coverage_matrix, Catalog, CoverageMatrix};
use crate::model::*;
use crate::store::{Store, StoreError};

pub const ROLE_LINE: &str = "Act as an elite compliance auditor.";
pub const CONSTRAINT_LINE: &str = "Base it only on the following verified evidence:";

static STATUS_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<who>.+): (?P<status>FAIL|WARN|PARTIAL_PASS) \((?P<n>\d+) (?P<sev>critical|high|medium)\)$").unwrap()
});
static TOP_FINDING_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?P<who>.+) top finding: (?P<what>.+)$").unwrap());
static TASK_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Write an? (?P<doc>.+) for (?P<company>.+)\.$").unwrap());

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("workspace `{0}` has no evidence to synthesize from")]
    NoEvidence(String),
    #[error("unknown document type `{0}`")]
    UnknownDocType(String),
    #[error("document generator failed: {0}")]
    GeneratorFailure(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Intelligence(#[from] IntelligenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DocType {
    Soc2SystemDescription,
    Iso42001Narrative,
    EuAiActConformitySummary,
    ExecutiveTrustReport,
    ControlPolicyDraft,
}

impl DocType {
    pub const ALL: [DocType; 5] = [
        DocType::Soc2SystemDescription,
        DocType::Iso42001Narrative,
        DocType::EuAiActConformitySummary,
        DocType::ExecutiveTrustReport,
        DocType::ControlPolicyDraft,
    ];

    /// Wording used in the prompt's task line.
    pub fn title(self) -> &'static str {
        match self {
            DocType::Soc2SystemDescription => "SOC 2 system description",
            DocType::Iso42001Narrative => "ISO 42001 AI management system narrative",
            DocType::EuAiActConformitySummary => "EU AI Act conformity assessment summary",
            DocType::ExecutiveTrustReport => "executive trust report",
            DocType::ControlPolicyDraft => "control policy draft",
        }
    }

    /// Short CLI name.
    pub fn slug(self) -> &'static str {
        match self {
            DocType::Soc2SystemDescription => "soc2",
            DocType::Iso42001Narrative => "iso42001",
            DocType::EuAiActConformitySummary => "euaiact",
            DocType::ExecutiveTrustReport => "executive",
            DocType::ControlPolicyDraft => "policy",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Soc2SystemDescription => "SOC2_SYSTEM_DESCRIPTION",
            DocType::Iso42001Narrative => "ISO42001_NARRATIVE",
            DocType::EuAiActConformitySummary => "EU_AI_ACT_CONFORMITY_SUMMARY",
            DocType::ExecutiveTrustReport => "EXECUTIVE_TRUST_REPORT",
            DocType::ControlPolicyDraft => "CONTROL_POLICY_DRAFT",
        }
    }

    /// Accepts the slug or the ledger spelling, case-insensitively.
    pub fn parse(s: &str) -> Result<DocType, SynthesisError> {
        DocType::ALL
            .into_iter()
            .find(|d| d.slug().eq_ignore_ascii_case(s) || d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SynthesisError::UnknownDocType(s.to_string()))
    }

    pub fn from_title(title: &str) -> Option<DocType> {
        DocType::ALL.into_iter().find(|d| d.title() == title)
    }

    /// Whether failed assertions contribute status lines.
    pub fn includes_failures(self) -> bool {
        self == DocType::ExecutiveTrustReport
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceString {
    pub lines: Vec<String>,
    /// Assertions the lines were derived from.
    pub source_assertions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRequest {
    pub workspace_id: WorkspaceId,
    pub doc_type: DocType,
    pub company_name: String,
}

/// Claim stated for a passing assertion.
pub fn evidence_claim(catalog: &Catalog, a: &ControlAssertion) -> String {
    match catalog.control(&a.control_id) {
        Some(c) if !c.evidence_claim.is_empty() => c.evidence_claim.clone(),
        Some(c) => format!("{} verified on {}", c.name, a.integration.display_name()),
        None => format!("{} control {} verified", a.integration.display_name(), a.control_id),
    }
}

fn worst(a: &ControlAssertion) -> Option<(Severity, u32)> {
    let c = a.counts();
    [
        (Severity::Critical, c.critical),
        (Severity::High, c.high),
        (Severity::Medium, c.medium),
    ]
    .into_iter()
    .find(|(_, n)| *n > 0)
}

/// Failing assertions ordered by risk: worst severity, then penalty, then
/// the control's risk weight.
pub fn ranked_risks<'a>(
    catalog: &Catalog,
    posture: &PostureConfig,
    latest: &'a [ControlAssertion],
) -> Vec<&'a ControlAssertion> {
    let mut failing: Vec<&ControlAssertion> = latest
        .iter()
        .filter(|a| a.status.is_failing() && !a.findings.is_empty())
        .collect();
    let weight = |a: &ControlAssertion| {
        catalog
            .control(&a.control_id)
            .map(|c| (c.risk_weight * 1000.0) as i64)
            .unwrap_or(0)
    };
    failing.sort_by_key(|a| {
        let top = a.findings.iter().map(|f| f.severity).max();
        (
            Reverse(top),
            Reverse(posture.penalty_quarter_points(a.counts())),
            Reverse(weight(a)),
        )
    });
    failing
}

/// Top finding of an assertion: the first finding at its worst severity.
pub fn top_finding(a: &ControlAssertion) -> Option<&Finding> {
    let worst = a.findings.iter().map(|f| f.severity).max()?;
    a.findings.iter().find(|f| f.severity == worst)
}

/// Evidence lines for a document type. Trust-facing documents use passing
/// assertions only; the executive report adds a status line and the top
/// finding's fixed description for each failing assertion, riskiest first.
pub fn build_evidence_string(
    store: &Store,
    catalog: &Catalog,
    posture: &PostureConfig,
    ws: &WorkspaceId,
    doc_type: DocType,
) -> Result<EvidenceString, SynthesisError> {
    let latest = store.latest_assertions(ws)?;
    if latest.is_empty() {
        return Err(SynthesisError::NoEvidence(ws.to_string()));
    }
    let mut ev = EvidenceString {
        lines: Vec::new(),
        source_assertions: Vec::new(),
    };
    for a in latest.iter().filter(|a| a.status == AssertionStatus::Pass) {
        ev.lines.push(evidence_claim(catalog, a));
        ev.source_assertions.push(a.assertion_id.clone());
    }
    if doc_type.includes_failures() {
        for a in ranked_risks(catalog, posture, &latest) {
            let who = a.integration.display_name();
            if let Some((sev, n)) = worst(a) {
                ev.lines.push(format!("{who}: {} ({n} {})", a.status, sev.as_str()));
            }
            if let Some(f) = top_finding(a) {
                ev.lines.push(format!("{who} top finding: {}", f.description));
            }
            ev.source_assertions.push(a.assertion_id.clone());
        }
    }
    if ev.lines.is_empty() {
        return Err(SynthesisError::NoEvidence(ws.to_string()));
    }
    Ok(ev)
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some(c) if "AEIOUaeiou".contains(c) => "an",
        _ => "a",
    }
}

/// Prompt text: role line, task line, constraint line, one evidence line
/// per row. Deterministic for identical inputs.
pub fn build_prompt(request: &DocumentRequest, evidence: &EvidenceString) -> String {
    let title = request.doc_type.title();
    let mut p = String::new();
    p.push_str(ROLE_LINE);
    p.push('\n');
    p.push_str(&format!("Write {} {title} for {}.\n", article(title), request.company_name));
    p.push_str(CONSTRAINT_LINE);
    p.push('\n');
    for line in &evidence.lines {
        p.push_str("- ");
        p.push_str(line);
        p.push('\n');
    }
    p
}

/// Turns a prompt into markdown. Implementations receive nothing but the
/// prompt text.
pub trait DocumentGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str) -> Result<String, SynthesisError>;
}

/// Deterministic offline generator that lays the prompt's evidence out as
/// a structured markdown document.
#[derive(Debug, Default, Clone, Copy)]
pub struct TemplateGenerator;

struct ParsedPrompt<'a> {
    doc_type: Option<DocType>,
    doc_title: &'a str,
    company: &'a str,
    passed: Vec<&'a str>,
    statuses: Vec<&'a str>,
    top: Vec<(&'a str, &'a str)>,
}

fn parse_prompt(prompt: &str) -> Result<ParsedPrompt<'_>, SynthesisError> {
    let bad = |m: &str| SynthesisError::GeneratorFailure(format!("prompt does not follow the template: {m}"));
    let mut lines = prompt.lines();
    if lines.next() != Some(ROLE_LINE) {
        return Err(bad("missing role line"));
    }
    let task = lines.next().ok_or_else(|| bad("missing task line"))?;
    let caps = TASK_LINE.captures(task).ok_or_else(|| bad("malformed task line"))?;
    if lines.next() != Some(CONSTRAINT_LINE) {
        return Err(bad("missing constraint line"));
    }
    let doc_title = caps.name("doc").map_or("", |m| m.as_str());
    let mut parsed = ParsedPrompt {
        doc_type: DocType::from_title(doc_title),
        doc_title,
        company: caps.name("company").map_or("", |m| m.as_str()),
        passed: Vec::new(),
        statuses: Vec::new(),
        top: Vec::new(),
    };
    for l in lines {
        let Some(item) = l.strip_prefix("- ") else { continue };
        if STATUS_LINE.is_match(item) {
            parsed.statuses.push(item);
        } else if let Some(c) = TOP_FINDING_LINE.captures(item) {
            parsed
                .top
                .push((c.name("who").map_or("", |m| m.as_str()), c.name("what").map_or("", |m| m.as_str())));
        } else {
            parsed.passed.push(item);
        }
    }
    Ok(parsed)
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

impl DocumentGenerator for TemplateGenerator {
    fn name(&self) -> &str {
        "template"
    }

    fn generate(&self, prompt: &str) -> Result<String, SynthesisError> {
        let p = parse_prompt(prompt)?;
        let mut md = String::new();
        md.push_str(&format!("# {}: {}\n\n", capitalise(p.doc_title), p.company));
        let intro = match p.doc_type {
            Some(DocType::Soc2SystemDescription) => format!(
                "This system description covers the controls {} operates and the evidence collected by continuous read-only probes.",
                p.company
            ),
            Some(DocType::Iso42001Narrative) => format!(
                "This narrative describes how {} governs its AI management system, based on continuously verified controls.",
                p.company
            ),
            Some(DocType::EuAiActConformitySummary) => format!(
                "This summary sets out the conformity evidence {} holds for its AI systems.",
                p.company
            ),
            Some(DocType::ExecutiveTrustReport) => format!(
                "This report summarises the governance posture of {} for the board.",
                p.company
            ),
            Some(DocType::ControlPolicyDraft) | None => format!(
                "This draft policy states the controls {} commits to, as evidenced below.",
                p.company
            ),
        };
        md.push_str(&intro);
        md.push_str("\n\n");

        if !p.top.is_empty() {
            md.push_str("## Top risk areas\n\n");
            for (i, (who, what)) in p.top.iter().take(2).enumerate() {
                md.push_str(&format!("{}. **{who}**: {what}\n", i + 1));
            }
            md.push('\n');
        }

        md.push_str("## Verified controls\n\n");
        if p.passed.is_empty() {
            md.push_str("No controls are currently verified as passing.\n");
        } else {
            for l in &p.passed {
                md.push_str(&format!("- {l}\n"));
            }
        }
        md.push('\n');

        if !p.statuses.is_empty() {
            md.push_str("## Open control gaps\n\n");
            for l in &p.statuses {
                md.push_str(&format!("- {l}\n"));
            }
            if p.top.len() > 2 {
                md.push_str("\nFurther findings:\n\n");
                for (who, what) in p.top.iter().skip(2) {
                    md.push_str(&format!("- {who}: {what}\n"));
                }
            }
            md.push('\n');
        }

        md.push_str(&format!(
            "_Derived from {} verified evidence statement(s)._\n",
            p.passed.len() + p.statuses.len()
        ));
        Ok(md)
    }
}

/// Builds the prompt, runs the generator and appends a new document
/// version. Nothing is persisted if the generator fails.
pub fn generate_document(
    store: &Store,
    catalog: &Catalog,
    posture: &PostureConfig,
    generator: &dyn DocumentGenerator,
    ws: &WorkspaceId,
    doc_type: DocType,
    at: DateTime<Utc>,
) -> Result<PolicyDocument, SynthesisError> {
    let workspace = store.workspace(ws)?;
    let evidence = build_evidence_string(store, catalog, posture, ws, doc_type)?;
    let request = DocumentRequest {
        workspace_id: ws.clone(),
        doc_type,
        company_name: workspace.name.clone(),
    };
    let prompt = build_prompt(&request, &evidence);
    let content = generator.generate(&prompt)?;
    let doc = store.insert_computed(ws, |existing: &[&PolicyDocument]| {
        let version = existing
            .iter()
            .filter(|d| d.doc_type == doc_type.as_str())
            .map(|d| d.version)
            .max()
            .unwrap_or(0)
            + 1;
        PolicyDocument {
            document_id: new_id("doc"),
            workspace_id: ws.clone(),
            doc_type: doc_type.as_str().to_string(),
            version,
            content,
            source_assertions: evidence.source_assertions.clone(),
            generated_at: at,
        }
    })?;
    store.record_event(
        ws,
        generator.name(),
        "document.generated",
        EntityRef::new(EntityKind::PolicyDocument, &doc.document_id),
        at,
    )?;
    tracing::info!(workspace = %ws, doc_type = doc_type.as_str(), version = doc.version, "document generated");
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskArea {
    pub integration: ProviderKind,
    pub control_id: String,
    pub status: AssertionStatus,
    pub counts: SeverityCounts,
    pub top_finding: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemediationProgress {
    pub open: usize,
    pub closed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutiveReport {
    pub workspace_id: WorkspaceId,
    pub company_name: String,
    pub generated_at: DateTime<Utc>,
    pub posture: PostureSnapshot,
    pub projected_score_after_criticals: u8,
    pub top_risks: Vec<RiskArea>,
    pub coverage: CoverageMatrix,
    pub recent_scans: Vec<ProbeRun>,
    pub remediation: RemediationProgress,
}

/// Board-level summary: posture, ranked risk areas, coverage, recent scan
/// activity and remediation progress.
pub fn executive_report(
    store: &Store,
    catalog: &Catalog,
    posture: &PostureConfig,
    ws: &WorkspaceId,
    at: DateTime<Utc>,
) -> Result<ExecutiveReport, SynthesisError> {
    let workspace = store.workspace(ws)?;
    let snap = compute_posture(store, posture, ws, at).map_err(|e| match e {
        IntelligenceError::NoEvidence(w) => SynthesisError::NoEvidence(w),
        other => other.into(),
    })?;
    let latest = store.latest_assertions(ws)?;
    let top_risks = ranked_risks(catalog, posture, &latest)
        .into_iter()
        .map(|a| RiskArea {
            integration: a.integration,
            control_id: a.control_id.clone(),
            status: a.status,
            counts: a.counts(),
            top_finding: top_finding(a).map(|f| f.description.clone()).unwrap_or_default(),
        })
        .collect();
    let mut runs: Vec<ProbeRun> = store.all(ws)?;
    runs.sort_by_key(|r| Reverse(r.started_at));
    runs.truncate(10);
    let items: Vec<ActionItem> = store.all(ws)?;
    let open = items.iter().filter(|i| i.state == ActionState::Open).count();
    Ok(ExecutiveReport {
        workspace_id: ws.clone(),
        company_name: workspace.name,
        generated_at: at,
        projected_score_after_criticals: snap.projected_score,
        posture: snap,
        top_risks,
        coverage: coverage_matrix(store, catalog, ws)?,
        recent_scans: runs,
        remediation: RemediationProgress {
            open,
            closed: items.len() - open,
        },
    })
}

impl ExecutiveReport {
    pub fn to_markdown(&self) -> String {
        let p = &self.posture;
        let mut md = format!("# Executive report: {}\n\n", self.company_name);
        md.push_str(&format!(
            "Posture **{}/100** ({}), {} Critical, {} High, {} Medium. Remediating all critical findings projects **{}/100**.\n\n",
            p.score,
            p.classification.label(),
            p.counts.critical,
            p.counts.high,
            p.counts.medium,
            self.projected_score_after_criticals
        ));
        md.push_str("## Top risk areas\n\n");
        for (i, r) in self.top_risks.iter().enumerate() {
            md.push_str(&format!(
                "{}. {} ({}): {}\n",
                i + 1,
                r.integration.display_name(),
                r.status,
                r.top_finding
            ));
        }
        md.push_str("\n## Framework coverage\n\n| Framework | Met | Failed | Untested |\n|---|---|---|---|\n");
        let mut by_fw: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
        for (fw, c) in &self.coverage.frameworks {
            by_fw.insert(fw.display_name(), (c.met.len(), c.failed.len(), c.untested.len()));
        }
        for (fw, (m, f, u)) in by_fw {
            md.push_str(&format!("| {fw} | {m} | {f} | {u} |\n"));
        }
        md.push_str(&format!(
            "\n## Remediation progress\n\n{} open, {} closed action items.\n\n## Recent scans\n\n",
            self.remediation.open, self.remediation.closed
        ));
        for r in &self.recent_scans {
            md.push_str(&format!(
                "- {} {:?} {:?} ({} ms)\n",
                r.started_at.format("%Y-%m-%dT%H:%M:%SZ"),
                r.probe_kind,
                r.outcome,
                r.duration_ms
            ));
        }
        md
    }
}
