//! Deterministic builder for the shipped scenario fixtures.
//!
//! The Acme trace corpus is generated here rather than written by hand so
//! that the number of planted PII patterns is known exactly. Generation is
//! index-driven (no randomness), so the output is byte-stable.

use std::collections::BTreeMap;

use crate::model::{Framework, ModelType, ProviderKind, RiskTier, Role};

use super::fixture::*;

/// Marker planted in trace text. It must never appear outside the fleet.
pub const TRACE_SENTINEL: &str = "SENTINEL-TRACE-TEXT-0001";

/// Number of PII patterns deliberately planted in unscrubbed projects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlantedPii {
    pub emails: u32,
    pub tfns: u32,
    pub phones: u32,
    pub names: u32,
}

const FIRST_NAMES: [&str; 16] = [
    "Olivia", "Liam", "Charlotte", "Noah", "Amelia", "Jack", "Isla", "William", "Mia", "Henry",
    "Grace", "Thomas", "Chloe", "Lucas", "Zoe", "Oscar",
];
const LAST_NAMES: [&str; 14] = [
    "Nguyen", "Smith", "Wilson", "Taylor", "Brown", "Walker", "Harris", "Martin", "Kelly",
    "Clarke", "Singh", "Baker", "Turner", "Cooper",
];

const BENIGN_UNSCRUBBED: [&str; 6] = [
    "Answered a question about card limits.",
    "Explained the fee schedule for savings accounts.",
    "Retrieved 3 passages from the lending handbook.",
    "Summarised the product disclosure statement for the user.",
    "Clarified how interest is calculated on the offset account.",
    "Provided the branch opening hours and a link to the help centre.",
];

const BENIGN_SCRUBBED: [&str; 4] = [
    "Search results ranked for [REDACTED] with 5 matching documents.",
    "Weekly operations digest drafted from ticket titles.",
    "Indexed policy pages for the internal knowledge base.",
    "Contact details for [REDACTED_EMAIL] were masked before logging.",
];

#[derive(Clone, Copy)]
enum Pii {
    Email,
    Tfn,
    Phone,
    Name,
}

fn tfn(k: u32) -> String {
    const W: [u32; 9] = [1, 4, 3, 7, 5, 8, 6, 9, 10];
    let mut seed = 31_415_926u32.wrapping_add(k.wrapping_mul(7_654_321)) % 100_000_000;
    loop {
        let digits: Vec<u32> = format!("{seed:08}").bytes().map(|b| (b - b'0') as u32).collect();
        let s: u32 = digits.iter().zip(W).map(|(d, w)| d * w).sum();
        // 10·d ≡ −d (mod 11), so the check digit is s mod 11.
        let check = s % 11;
        if check <= 9 {
            let all = format!("{seed:08}{check}");
            return if k.is_multiple_of(2) {
                all
            } else {
                format!("{} {} {}", &all[..3], &all[3..6], &all[6..])
            };
        }
        seed = (seed + 1) % 100_000_000;
    }
}

fn phone(k: u32) -> String {
    if k.is_multiple_of(2) {
        format!("04{:02} {:03} {:03}", 10 + k, 100 + 7 * k, 200 + 3 * k)
    } else {
        format!("+61 2 9{:03} {:04}", 100 + 11 * k, 1000 + 37 * k)
    }
}

fn email(k: u32) -> String {
    let first = FIRST_NAMES[(k as usize) % FIRST_NAMES.len()].to_ascii_lowercase();
    let domains = ["example.com.au", "mail.example.org", "example.net"];
    format!("{first}{}@{}", 10 + k, domains[(k as usize) % domains.len()])
}

fn full_name(k: u32) -> (String, String) {
    let first = FIRST_NAMES[(k as usize) % FIRST_NAMES.len()];
    let last = LAST_NAMES[((k as usize) * 5 + k as usize / 16) % LAST_NAMES.len()];
    (first.to_string(), last.to_string())
}

fn pii_text(kind: Pii, k: u32) -> String {
    match kind {
        Pii::Email => {
            let t = [
                "Please forward the dispute form to {} today.",
                "Reply copied to {} as requested.",
                "The user shared contact address {} in the chat.",
            ];
            t[(k as usize) % t.len()].replace("{}", &email(k))
        }
        Pii::Tfn => {
            let t = [
                "The user pasted tax file number {} into the form.",
                "Caller read out TFN {} for verification.",
            ];
            t[(k as usize) % t.len()].replace("{}", &tfn(k))
        }
        Pii::Phone => {
            let t = [
                "Call back requested on {} after lunch.",
                "The user asked us to ring {} about the loan.",
            ];
            t[(k as usize) % t.len()].replace("{}", &phone(k))
        }
        Pii::Name => {
            let (f, l) = full_name(k);
            let t = [
                "The loan application for {} was summarised.",
                "The assistant greeted {} and answered a fee question.",
                "Summarised the complaint lodged by {} yesterday.",
                "Escalated the hardship request from {} to a specialist.",
            ];
            t[(k as usize) % t.len()].replace("{}", &format!("{f} {l}"))
        }
    }
}

/// Interleaves the planted items so each kind is spread across the corpus.
fn pii_schedule(planted: PlantedPii) -> Vec<(Pii, u32)> {
    let mut queues = [
        (Pii::Email, planted.emails),
        (Pii::Tfn, planted.tfns),
        (Pii::Phone, planted.phones),
        (Pii::Name, planted.names),
    ];
    let total: u32 = queues.iter().map(|q| q.1).sum();
    let mut out = Vec::with_capacity(total as usize);
    let mut used = [0u32; 4];
    while out.len() < total as usize {
        for (i, (kind, n)) in queues.iter_mut().enumerate() {
            // Emit proportionally: kinds with more items get more turns.
            let turns = (*n as usize).div_ceil(20).max(1);
            for _ in 0..turns {
                if used[i] < *n {
                    out.push((*kind, used[i]));
                    used[i] += 1;
                }
            }
        }
    }
    out
}

struct ProjectSpec {
    name: &'static str,
    count: u32,
    scrubbed: bool,
    evals: bool,
    model_refs: &'static [&'static str],
}

fn build_traces(projects: &[ProjectSpec], planted: PlantedPii) -> Vec<TraceRecord> {
    let schedule = pii_schedule(planted);
    let unscrubbed_total: u32 = projects.iter().filter(|p| !p.scrubbed).map(|p| p.count).sum();
    let stride = if schedule.is_empty() {
        u32::MAX
    } else {
        (unscrubbed_total / schedule.len() as u32).max(1)
    };
    let mut traces = Vec::new();
    let mut unscrubbed_idx = 0u32;
    let mut sentinel_unscrubbed = false;
    let mut sentinel_scrubbed = false;
    for p in projects {
        let abbrev: String = p.name.split('-').filter_map(|w| w.chars().next()).collect();
        for i in 0..p.count {
            let logged_text = if p.scrubbed {
                if !sentinel_scrubbed && i == p.count / 2 {
                    sentinel_scrubbed = true;
                    format!("Debug marker {TRACE_SENTINEL} recorded for this session.")
                } else {
                    BENIGN_SCRUBBED[(i as usize) % BENIGN_SCRUBBED.len()].to_string()
                }
            } else {
                let slot = unscrubbed_idx;
                unscrubbed_idx += 1;
                if slot.is_multiple_of(stride) && ((slot / stride) as usize) < schedule.len() {
                    let (kind, k) = schedule[(slot / stride) as usize];
                    pii_text(kind, k)
                } else if !sentinel_unscrubbed && slot % stride == stride / 2 {
                    sentinel_unscrubbed = true;
                    format!("Debug marker {TRACE_SENTINEL} recorded for this session.")
                } else {
                    BENIGN_UNSCRUBBED[(i as usize) % BENIGN_UNSCRUBBED.len()].to_string()
                }
            };
            traces.push(TraceRecord {
                trace_id: format!("tr_{abbrev}_{i:05}"),
                source_system_id: p.name.to_string(),
                project: p.name.to_string(),
                tracing_enabled: true,
                pii_scrubbing_in_logs: p.scrubbed,
                evals_configured: p.evals,
                model_ref: p.model_refs[(i as usize) % p.model_refs.len()].to_string(),
                logged_text,
            });
        }
    }
    traces
}

fn users(prefix: &str) -> Vec<FixtureUser> {
    [
        ("founder", Role::Founder),
        ("admin", Role::Administrator),
        ("auditor", Role::Auditor),
        ("viewer", Role::ReadOnly),
    ]
    .into_iter()
    .map(|(n, role)| FixtureUser {
        user_id: format!("u_{prefix}_{n}"),
        role,
    })
    .collect()
}

fn declared(name: &str, model_type: ModelType, risk_tier: RiskTier) -> DeclaredSystem {
    DeclaredSystem {
        name: name.to_string(),
        model_type,
        risk_tier,
        deployment_env: "production".to_string(),
    }
}

fn iam_user(name: &str, mfa: bool, keys: &[u32]) -> IamUser {
    IamUser {
        name: name.to_string(),
        mfa_enabled: mfa,
        access_keys: keys.iter().map(|&age_days| AccessKey { age_days }).collect(),
    }
}

pub const ACME_PII: PlantedPii = PlantedPii {
    emails: 43,
    tfns: 7,
    phones: 19,
    names: 112,
};

const ACME_PROJECTS: [ProjectSpec; 4] = [
    ProjectSpec {
        name: "customer-support-bot",
        count: 1204,
        scrubbed: false,
        evals: true,
        model_refs: &["gpt-4o-latest", "gpt-4o-mini-2024-07-18", "gpt-4o-mini-2024-07-18"],
    },
    ProjectSpec {
        name: "document-qa",
        count: 873,
        scrubbed: false,
        evals: false,
        model_refs: &["anthropic.claude-3-5-sonnet-20240620-v1:0"],
    },
    ProjectSpec {
        name: "internal-search",
        count: 512,
        scrubbed: true,
        evals: true,
        model_refs: &["gpt-4o-mini-2024-07-18"],
    },
    ProjectSpec {
        name: "ops-summarizer",
        count: 258,
        scrubbed: true,
        evals: true,
        model_refs: &["amazon.titan-text-premier-v1:0"],
    },
];

/// The Acme Financial Services evidence run.
pub fn acme_financial() -> ScenarioFixture {
    let pinned: BTreeMap<ProviderKind, String> = [
        (ProviderKind::AwsIam, "ea_7f3a91c"),
        (ProviderKind::AwsS3, "ea_2b9d44f"),
        (ProviderKind::GitHub, "ea_5c1e77a"),
        (ProviderKind::Okta, "ea_9a4b21d"),
        (ProviderKind::Stripe, "ea_6a2c11f"),
        (ProviderKind::Vercel, "ea_8b3d90c"),
        (ProviderKind::TraceStore, "ea_3d7f82b"),
        (ProviderKind::ModelInventory, "ea_1c8a34e"),
    ]
    .into_iter()
    .map(|(k, id)| (k, id.to_string()))
    .collect();

    ScenarioFixture {
        scenario_id: "acme_financial".into(),
        workspace_id: "ws_acme_fin_8821".into(),
        company_name: "Acme Financial Services".into(),
        active_frameworks: vec![
            Framework::Soc2,
            Framework::Iso27001,
            Framework::Iso42001,
            Framework::EuAiAct,
            Framework::Hipaa,
        ],
        cohort_key: Some("series-a-fintech".into()),
        users: users("acme"),
        providers: Providers {
            iam: Some(IamState {
                users: vec![
                    iam_user("svc-deploy", false, &[203]),
                    iam_user("svc-data-export", false, &[127]),
                    iam_user("legacy-reporting", false, &[41]),
                    iam_user("platform-admin", true, &[12]),
                    iam_user("security-lead", true, &[]),
                    iam_user("ml-engineer", true, &[58]),
                    iam_user("finance-analyst", true, &[]),
                ],
                root_mfa: true,
                password_policy_compliant: false,
            }),
            s3: Some(vec![
                BucketState {
                    bucket: "acme-dev-scratch".into(),
                    public: true,
                    encrypted: false,
                },
                BucketState {
                    bucket: "acme-legacy-export".into(),
                    public: false,
                    encrypted: false,
                },
                BucketState {
                    bucket: "acme-prod-statements".into(),
                    public: false,
                    encrypted: true,
                },
                BucketState {
                    bucket: "acme-ml-training-data".into(),
                    public: false,
                    encrypted: true,
                },
            ]),
            github: Some(GitHubState {
                branch_protection: true,
                signed_commits: false,
            }),
            okta: Some(OktaState {
                default_policy: OktaPolicy {
                    mfa_required: false,
                    session_lifetime_unlimited: true,
                    pct_users_without_mfa: 91,
                },
            }),
            stripe: Some(StripeState { webhook_signing: true }),
            vercel: Some(VercelState { https_only: true }),
            traces: Some(build_traces(&ACME_PROJECTS, ACME_PII)),
            model_inventory: Some(ModelInventoryState {
                region: "ap-southeast-2".into(),
                foundation_models_available: 31,
                active_models: vec![
                    ActiveModel {
                        name: "anthropic.claude-3-5-sonnet-20240620-v1:0".into(),
                        fine_tuned: false,
                    },
                    ActiveModel {
                        name: "amazon.titan-embed-text-v2:0".into(),
                        fine_tuned: false,
                    },
                    ActiveModel {
                        name: "meta.llama3-1-70b-instruct-v1:0".into(),
                        fine_tuned: false,
                    },
                    ActiveModel {
                        name: "acme-custom-classifier-v1".into(),
                        fine_tuned: true,
                    },
                ],
            }),
        },
        declared_registry: vec![
            declared("customer-support-bot", ModelType::Pipeline, RiskTier::Limited),
            declared("document-qa", ModelType::Pipeline, RiskTier::Limited),
            declared("internal-search", ModelType::Pipeline, RiskTier::Minimal),
            declared("ops-summarizer", ModelType::Agent, RiskTier::Minimal),
            declared(
                "anthropic.claude-3-5-sonnet-20240620-v1:0",
                ModelType::Foundation,
                RiskTier::Limited,
            ),
            declared("amazon.titan-embed-text-v2:0", ModelType::Foundation, RiskTier::Minimal),
        ],
        simulated_latency_ms: BTreeMap::new(),
        pinned_assertion_ids: pinned,
    }
}

/// The Acme run after its S3 buckets were made private and encrypted. Same
/// workspace, so it can replace the live fixture before a re-check.
pub fn acme_s3_remediated() -> ScenarioFixture {
    let mut fx = acme_financial();
    for b in fx.providers.s3.iter_mut().flatten() {
        b.public = false;
        b.encrypted = true;
    }
    fx
}

/// A workspace in which every control passes.
pub fn clean_workspace() -> ScenarioFixture {
    const PROJECTS: [ProjectSpec; 2] = [
        ProjectSpec {
            name: "faq-assistant",
            count: 24,
            scrubbed: true,
            evals: true,
            model_refs: &["gpt-4o-mini-2024-07-18"],
        },
        ProjectSpec {
            name: "invoice-extractor",
            count: 16,
            scrubbed: true,
            evals: true,
            model_refs: &["anthropic.claude-3-5-haiku-20241022-v1:0"],
        },
    ];
    ScenarioFixture {
        scenario_id: "clean_workspace".into(),
        workspace_id: "ws_clean_demo".into(),
        company_name: "Clean Demo Pty Ltd".into(),
        active_frameworks: vec![
            Framework::Soc2,
            Framework::Iso27001,
            Framework::Iso42001,
            Framework::EuAiAct,
            Framework::Hipaa,
        ],
        cohort_key: Some("series-a-fintech".into()),
        users: users("clean"),
        providers: Providers {
            iam: Some(IamState {
                users: vec![
                    iam_user("platform-admin", true, &[20]),
                    iam_user("ci-runner", true, &[30]),
                ],
                root_mfa: true,
                password_policy_compliant: true,
            }),
            s3: Some(vec![BucketState {
                bucket: "clean-prod-data".into(),
                public: false,
                encrypted: true,
            }]),
            github: Some(GitHubState {
                branch_protection: true,
                signed_commits: true,
            }),
            okta: Some(OktaState {
                default_policy: OktaPolicy {
                    mfa_required: true,
                    session_lifetime_unlimited: false,
                    pct_users_without_mfa: 0,
                },
            }),
            stripe: Some(StripeState { webhook_signing: true }),
            vercel: Some(VercelState { https_only: true }),
            traces: Some(build_traces(&PROJECTS, PlantedPii::default())),
            model_inventory: Some(ModelInventoryState {
                region: "ap-southeast-2".into(),
                foundation_models_available: 31,
                active_models: vec![
                    ActiveModel {
                        name: "anthropic.claude-3-5-haiku-20241022-v1:0".into(),
                        fine_tuned: false,
                    },
                    ActiveModel {
                        name: "amazon.titan-embed-text-v2:0".into(),
                        fine_tuned: false,
                    },
                ],
            }),
        },
        declared_registry: vec![
            declared("faq-assistant", ModelType::Pipeline, RiskTier::Minimal),
            declared("invoice-extractor", ModelType::Pipeline, RiskTier::Limited),
            declared(
                "anthropic.claude-3-5-haiku-20241022-v1:0",
                ModelType::Foundation,
                RiskTier::Limited,
            ),
            declared("amazon.titan-embed-text-v2:0", ModelType::Foundation, RiskTier::Minimal),
        ],
        simulated_latency_ms: BTreeMap::new(),
        pinned_assertion_ids: BTreeMap::new(),
    }
}

/// Shipped fixtures as (file name, fixture).
pub fn shipped_fixtures() -> Vec<(&'static str, ScenarioFixture)> {
    vec![
        ("acme_financial.json", acme_financial()),
        ("acme_s3_remediated.json", acme_s3_remediated()),
        ("clean_workspace.json", clean_workspace()),
    ]
}
