//! Domain data model.
//!
//! Every persisted entity carries exactly one [`WorkspaceId`]; the store
//! refuses to persist or return anything without checking it. Enum variants
//! serialise with the ledger spellings (`PARTIAL_PASS`, `AWS_IAM`, ...) so
//! that exported rows and watermarks use one canonical vocabulary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Tenant partition key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkspaceId(String);

impl WorkspaceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for WorkspaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for WorkspaceId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "SOC2")]
    Soc2,
    #[serde(rename = "ISO27001")]
    Iso27001,
    #[serde(rename = "ISO42001")]
    Iso42001,
    #[serde(rename = "EU_AI_ACT")]
    EuAiAct,
    #[serde(rename = "HIPAA")]
    Hipaa,
    #[serde(rename = "GDPR")]
    Gdpr,
}

impl Framework {
    pub const ALL: [Framework; 6] = [
        Framework::Soc2,
        Framework::Iso27001,
        Framework::Iso42001,
        Framework::EuAiAct,
        Framework::Hipaa,
        Framework::Gdpr,
    ];

    /// Compact identifier used in export rows (`SOC2`, `ISO42001`, ...).
    pub fn code(self) -> &'static str {
        match self {
            Framework::Soc2 => "SOC2",
            Framework::Iso27001 => "ISO27001",
            Framework::Iso42001 => "ISO42001",
            Framework::EuAiAct => "EUAIAct",
            Framework::Hipaa => "HIPAA",
            Framework::Gdpr => "GDPR",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Framework::Soc2 => "SOC 2",
            Framework::Iso27001 => "ISO 27001",
            Framework::Iso42001 => "ISO 42001",
            Framework::EuAiAct => "EU AI Act",
            Framework::Hipaa => "HIPAA",
            Framework::Gdpr => "GDPR",
        }
    }

    /// Accepts the serde spelling, the compact code, or the display name
    /// (case-insensitive, ignoring spaces and underscores).
    pub fn parse(s: &str) -> Option<Framework> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect::<String>()
            .to_ascii_uppercase();
        Framework::ALL.into_iter().find(|f| {
            let code = f.code().to_ascii_uppercase();
            let disp: String = f
                .display_name()
                .chars()
                .filter(|c| *c != ' ')
                .collect::<String>()
                .to_ascii_uppercase();
            norm == code || norm == disp
        })
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Founder,
    Administrator,
    Auditor,
    ReadOnly,
}

impl Role {
    pub fn can_mutate(self) -> bool {
        matches!(self, Role::Founder | Role::Administrator)
    }

    pub fn can_export(self) -> bool {
        matches!(self, Role::Founder | Role::Administrator | Role::Auditor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProviderKind {
    #[serde(rename = "AWS_IAM")]
    AwsIam,
    #[serde(rename = "AWS_S3")]
    AwsS3,
    #[serde(rename = "GITHUB")]
    GitHub,
    #[serde(rename = "OKTA")]
    Okta,
    #[serde(rename = "STRIPE")]
    Stripe,
    #[serde(rename = "VERCEL")]
    Vercel,
    #[serde(rename = "LANGSMITH")]
    TraceStore,
    #[serde(rename = "BEDROCK")]
    ModelInventory,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 8] = [
        ProviderKind::AwsIam,
        ProviderKind::AwsS3,
        ProviderKind::GitHub,
        ProviderKind::Okta,
        ProviderKind::Stripe,
        ProviderKind::Vercel,
        ProviderKind::TraceStore,
        ProviderKind::ModelInventory,
    ];

    /// Spelling used in the ledger and auditor exports.
    pub fn ledger_name(self) -> &'static str {
        match self {
            ProviderKind::AwsIam => "AWS_IAM",
            ProviderKind::AwsS3 => "AWS_S3",
            ProviderKind::GitHub => "GITHUB",
            ProviderKind::Okta => "OKTA",
            ProviderKind::Stripe => "STRIPE",
            ProviderKind::Vercel => "VERCEL",
            ProviderKind::TraceStore => "LANGSMITH",
            ProviderKind::ModelInventory => "BEDROCK",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ProviderKind::AwsIam => "AWS IAM",
            ProviderKind::AwsS3 => "AWS S3",
            ProviderKind::GitHub => "GitHub",
            ProviderKind::Okta => "Okta",
            ProviderKind::Stripe => "Stripe",
            ProviderKind::Vercel => "Vercel",
            ProviderKind::TraceStore => "LangSmith",
            ProviderKind::ModelInventory => "AWS Bedrock",
        }
    }

    /// AWS-hosted integrations go through cross-account role assumption;
    /// everything else uses a scoped read-only token.
    pub fn credential_method(self) -> CredentialMethod {
        match self {
            ProviderKind::AwsIam | ProviderKind::AwsS3 | ProviderKind::ModelInventory => {
                CredentialMethod::StsAssumeRoleReadOnly
            }
            _ => CredentialMethod::ScopedApiToken,
        }
    }

    pub fn audit_probe(self) -> ProbeKind {
        match self {
            ProviderKind::AwsIam => ProbeKind::IamAudit,
            ProviderKind::AwsS3 => ProbeKind::S3Audit,
            ProviderKind::GitHub => ProbeKind::GitHubAudit,
            ProviderKind::Okta => ProbeKind::OktaAudit,
            ProviderKind::Stripe => ProbeKind::StripeAudit,
            ProviderKind::Vercel => ProbeKind::VercelAudit,
            ProviderKind::TraceStore => ProbeKind::TracePiiAudit,
            ProviderKind::ModelInventory => ProbeKind::ModelInventoryAudit,
        }
    }

    pub fn is_observability(self) -> bool {
        matches!(self, ProviderKind::TraceStore | ProviderKind::ModelInventory)
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ledger_name())
    }
}

/// Read-only by construction: there is no writable variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CredentialMethod {
    #[serde(rename = "STS_AssumeRole_ReadOnly")]
    StsAssumeRoleReadOnly,
    #[serde(rename = "Scoped_API_Token_ReadOnly")]
    ScopedApiToken,
}

impl CredentialMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CredentialMethod::StsAssumeRoleReadOnly => "STS_AssumeRole_ReadOnly",
            CredentialMethod::ScopedApiToken => "Scoped_API_Token_ReadOnly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeKind {
    IamAudit,
    S3Audit,
    #[serde(rename = "GITHUB_AUDIT")]
    GitHubAudit,
    OktaAudit,
    StripeAudit,
    VercelAudit,
    TracePiiAudit,
    ModelInventoryAudit,
    DiscoveryCycle,
}

impl ProbeKind {
    /// Advisory probes never escalate beyond WARN.
    pub fn is_advisory(self) -> bool {
        matches!(self, ProbeKind::ModelInventoryAudit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Critical => "critical",
            Severity::High => "high",
            Severity::Medium => "medium",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssertionStatus {
    Pass,
    Fail,
    Warn,
    PartialPass,
    Untested,
}

impl AssertionStatus {
    pub const ALL: [AssertionStatus; 5] = [
        AssertionStatus::Pass,
        AssertionStatus::Fail,
        AssertionStatus::Warn,
        AssertionStatus::PartialPass,
        AssertionStatus::Untested,
    ];

    /// Ledger constant used in watermarks and exports.
    pub fn as_str(self) -> &'static str {
        match self {
            AssertionStatus::Pass => "PASS",
            AssertionStatus::Fail => "FAIL",
            AssertionStatus::Warn => "WARN",
            AssertionStatus::PartialPass => "PARTIAL_PASS",
            AssertionStatus::Untested => "UNTESTED",
        }
    }

    pub fn parse(s: &str) -> Option<AssertionStatus> {
        AssertionStatus::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn is_failing(self) -> bool {
        matches!(
            self,
            AssertionStatus::Fail | AssertionStatus::Warn | AssertionStatus::PartialPass
        )
    }
}

impl fmt::Display for AssertionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameworkRef {
    pub framework: Framework,
    pub clause: String,
}

impl fmt::Display for FrameworkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.framework.code(), self.clause)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub check_id: String,
    pub severity: Severity,
    pub description: String,
    pub framework_refs: Vec<FrameworkRef>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub critical: u32,
    pub high: u32,
    pub medium: u32,
}

impl SeverityCounts {
    pub fn of(findings: &[Finding]) -> Self {
        let mut c = SeverityCounts::default();
        for f in findings {
            c.add(f.severity);
        }
        c
    }

    pub fn add(&mut self, severity: Severity) {
        match severity {
            Severity::Critical => self.critical += 1,
            Severity::High => self.high += 1,
            Severity::Medium => self.medium += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.critical + self.high + self.medium
    }
}

impl std::ops::AddAssign for SeverityCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.critical += rhs.critical;
        self.high += rhs.high;
        self.medium += rhs.medium;
    }
}

/// Aggregate value in a probe's metadata summary: counts and flags only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Flag(bool),
    Count(i64),
    Counts(Vec<i64>),
}

pub type MetadataSummary = BTreeMap<String, MetaValue>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub workspace_id: WorkspaceId,
    pub name: String,
    pub active_frameworks: BTreeSet<Framework>,
    /// Peer-benchmark cohort (company stage / size band).
    pub cohort_key: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub workspace_id: WorkspaceId,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConnection {
    pub connection_id: String,
    pub workspace_id: WorkspaceId,
    pub provider_kind: ProviderKind,
    pub credential_ref: String,
    pub credential_method: CredentialMethod,
    /// Present iff the credential method is STS role assumption.
    pub external_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeRunOutcome {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub probe_run_id: String,
    pub workspace_id: WorkspaceId,
    pub connection_id: String,
    pub probe_kind: ProbeKind,
    pub started_at: DateTime<Utc>,
    pub duration_ms: u64,
    pub outcome: ProbeRunOutcome,
    pub systems_discovered: u32,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAssertion {
    pub assertion_id: String,
    pub workspace_id: WorkspaceId,
    pub control_id: String,
    pub integration: ProviderKind,
    pub connection_id: String,
    pub probe_run_id: String,
    pub status: AssertionStatus,
    pub executed_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub credential_method: CredentialMethod,
    pub watermark: String,
    pub findings: Vec<Finding>,
    pub remediation_ref: Option<String>,
    pub metadata_summary: MetadataSummary,
}

impl ControlAssertion {
    pub fn counts(&self) -> SeverityCounts {
        SeverityCounts::of(&self.findings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Workspace,
    UserAccount,
    ProviderConnection,
    EncryptedCredential,
    ProbeRun,
    ControlAssertion,
    ActivityEvent,
    AiSystem,
    IncidentRecord,
    DataFlowRecord,
    LegalAgreement,
    ProcessAttestation,
    PolicyDocument,
    ActionItem,
    DriftEvent,
    PostureSnapshot,
    CoverageObservation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        Self { kind, id: id.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub event_id: String,
    pub workspace_id: WorkspaceId,
    /// Position in the workspace's total order of events, starting at 1.
    pub seq: u64,
    pub actor: String,
    pub verb: String,
    pub subject: EntityRef,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelType {
    Foundation,
    FineTuned,
    Pipeline,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RiskTier {
    Unacceptable,
    High,
    Limited,
    Minimal,
    Unclassified,
}

impl RiskTier {
    pub fn parse(s: &str) -> Option<RiskTier> {
        match s.to_ascii_uppercase().as_str() {
            "UNACCEPTABLE" => Some(RiskTier::Unacceptable),
            "HIGH" => Some(RiskTier::High),
            "LIMITED" => Some(RiskTier::Limited),
            "MINIMAL" => Some(RiskTier::Minimal),
            "UNCLASSIFIED" => Some(RiskTier::Unclassified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiscoverySource {
    Declared,
    ObservabilityAutoDiscovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewStatus {
    Active,
    PendingReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AiSystem {
    pub system_id: String,
    pub workspace_id: WorkspaceId,
    pub name: String,
    pub model_type: ModelType,
    pub deployment_env: String,
    pub risk_tier: RiskTier,
    pub owner: Option<String>,
    pub discovery_source: DiscoverySource,
    pub review_status: ReviewStatus,
    pub linked_controls: BTreeSet<String>,
    pub incident_history: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackVector {
    PromptInjection,
    Jailbreak,
    IndirectInjection,
    DataExfiltration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IncidentOutcome {
    Blocked,
    Succeeded,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub incident_id: String,
    pub workspace_id: WorkspaceId,
    pub system_id: String,
    pub vector: AttackVector,
    pub outcome: IncidentOutcome,
    pub at: DateTime<Utc>,
}

/// One RoPA row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlowRecord {
    pub flow_id: String,
    pub workspace_id: WorkspaceId,
    pub source_system: String,
    pub processor: String,
    pub destination: String,
    pub pii_class: String,
    pub lawful_basis: String,
    pub jurisdiction: String,
    pub transfer_mechanism: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgreementKind {
    Baa,
    Dpa,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalAgreement {
    pub agreement_id: String,
    pub workspace_id: WorkspaceId,
    pub kind: AgreementKind,
    pub counterparty: String,
    pub effective_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessAttestation {
    pub attestation_id: String,
    pub workspace_id: WorkspaceId,
    pub process_name: String,
    pub attested_by: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub document_id: String,
    pub workspace_id: WorkspaceId,
    pub doc_type: String,
    pub version: u32,
    pub content: String,
    pub source_assertions: Vec<String>,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionState {
    Open,
    Closed,
}

/// What caused an action item to be opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionSource {
    Assertion(String),
    Discovery(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    pub action_item_id: String,
    pub workspace_id: WorkspaceId,
    pub source: ActionSource,
    pub control_id: String,
    pub requirement_id: String,
    pub owner: Option<String>,
    pub severity: Severity,
    pub remediation_description: String,
    pub recheck_probe_kind: ProbeKind,
    pub recheck_connection_id: String,
    pub state: ActionState,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
    pub closed_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub drift_id: String,
    pub workspace_id: WorkspaceId,
    pub control_id: String,
    pub integration: ProviderKind,
    pub from_assertion: String,
    pub to_assertion: String,
    pub from_status: AssertionStatus,
    pub to_status: AssertionStatus,
    pub detected_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    Compliant,
    SubstantiallyCompliant,
    PartiallyCompliant,
    NonCompliant,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::Compliant => "Compliant",
            Classification::SubstantiallyCompliant => "Substantially Compliant",
            Classification::PartiallyCompliant => "Partially Compliant",
            Classification::NonCompliant => "Non-Compliant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostureSnapshot {
    pub snapshot_id: String,
    pub workspace_id: WorkspaceId,
    pub at: DateTime<Utc>,
    pub score: u8,
    pub classification: Classification,
    pub counts: SeverityCounts,
    pub projected_score: u8,
    pub integrations_scanned: u32,
    /// Identifies the weight calibration that produced the score.
    pub scoring_model: String,
}

/// Fraction of a framework's clauses met at one point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageObservation {
    pub observation_id: String,
    pub workspace_id: WorkspaceId,
    pub framework: Framework,
    pub at: DateTime<Utc>,
    pub met_pct: f64,
}

/// Encrypted provider credential as persisted. The plaintext never appears
/// here; `blob` is `key_id ‖ nonce ‖ ciphertext+tag`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedCredential {
    pub credential_ref: String,
    pub workspace_id: WorkspaceId,
    pub provider_kind: ProviderKind,
    #[serde(with = "hex_bytes")]
    pub blob: Vec<u8>,
}

impl fmt::Debug for EncryptedCredential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncryptedCredential")
            .field("credential_ref", &self.credential_ref)
            .field("workspace_id", &self.workspace_id)
            .field("provider_kind", &self.provider_kind)
            .field("blob_len", &self.blob.len())
            .finish()
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_ledger_spelling_round_trips() {
        for st in AssertionStatus::ALL {
            assert_eq!(AssertionStatus::parse(st.as_str()), Some(st));
            let json = serde_json::to_string(&st).unwrap();
            assert_eq!(json, format!("\"{}\"", st.as_str()));
        }
        assert_eq!(AssertionStatus::parse("partial_pass"), None);
    }

    #[test]
    fn severity_orders_critical_highest() {
        assert!(Severity::Critical > Severity::High);
        assert!(Severity::High > Severity::Medium);
    }

    #[test]
    fn only_founders_and_admins_mutate() {
        assert!(Role::Founder.can_mutate());
        assert!(Role::Administrator.can_mutate());
        assert!(!Role::Auditor.can_mutate());
        assert!(!Role::ReadOnly.can_mutate());
        assert!(Role::Auditor.can_export());
        assert!(!Role::ReadOnly.can_export());
    }

    #[test]
    fn aws_integrations_use_role_assumption() {
        assert_eq!(
            ProviderKind::AwsS3.credential_method(),
            CredentialMethod::StsAssumeRoleReadOnly
        );
        assert_eq!(
            ProviderKind::ModelInventory.credential_method(),
            CredentialMethod::StsAssumeRoleReadOnly
        );
        assert_eq!(
            ProviderKind::Okta.credential_method(),
            CredentialMethod::ScopedApiToken
        );
    }

    #[test]
    fn framework_parse_accepts_common_spellings() {
        assert_eq!(Framework::parse("soc2"), Some(Framework::Soc2));
        assert_eq!(Framework::parse("EU AI Act"), Some(Framework::EuAiAct));
        assert_eq!(Framework::parse("EUAIAct"), Some(Framework::EuAiAct));
        assert_eq!(Framework::parse("iso_42001"), Some(Framework::Iso42001));
        assert_eq!(Framework::parse("nist"), None);
    }

    #[test]
    fn encrypted_credential_debug_hides_blob() {
        let c = EncryptedCredential {
            credential_ref: "cred_1".into(),
            workspace_id: "ws".into(),
            provider_kind: ProviderKind::Okta,
            blob: vec![1, 2, 3],
        };
        let dbg = format!("{c:?}");
        assert!(dbg.contains("blob_len"));
        assert!(!dbg.contains("[1, 2, 3]"));
    }
}
