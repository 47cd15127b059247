//! `trustos` command line.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 tampered rows
//! found by `verify`.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;
use trustos_core::clock::{Clock, ManualClock, SystemClock};
use trustos_core::discovery::{discovery_cycle, ObservationWindow};
use trustos_core::engine::{Engine, PostureLine};
use trustos_core::intelligence::PostureConfig;
use trustos_core::mapping::Catalog;
use trustos_core::model::{Role, WorkspaceId};
use trustos_core::probe::checks::summary_line;
use trustos_core::probe::executor::{Execution, ProbeError, Trigger};
use trustos_core::probe::queue::{workers_from_env, ProbeQueue};
use trustos_core::probe::severity::SeverityMatrix;
use trustos_core::sim::builder::shipped_fixtures;
use trustos_core::sim::{load_scenario, ScenarioFixture};
use trustos_core::store::Store;
use trustos_core::synthesis::{executive_report, generate_document, DocType};
use trustos_core::vault::{MasterKey, VAULT_KEY_ENV};

use crate::auth::{tokens_for_fixture, TokenTable, TOKENS_FILE_ENV};
use crate::export::{export_auditor_bundle, verify_bundle};
use crate::generator::generator_from_env;
use crate::http::{discovery_interval_from_env, serve, spawn_discovery_timer, AppState, BIND_ADDR_ENV, DEFAULT_BIND_ADDR};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_TAMPERED: u8 = 2;

const LEDGER_FILE: &str = "ledger.jsonl";
const TOKENS_FILE: &str = "tokens.json";
const KEY_FILE: &str = "vault.key";
const FIXTURES_DIR: &str = "fixtures";

#[derive(Debug, Parser)]
#[command(name = "trustos", version, about = "Continuous AI governance: scan, map, score, export.")]
pub struct Cli {
    /// Directory holding the ledger journal, tokens, vault key and fixtures.
    #[arg(long, global = true, env = "TRUSTOS_DATA_DIR", default_value = "trustos-data")]
    pub data_dir: PathBuf,
    /// Pin the clock to an RFC 3339 instant for reproducible runs.
    #[arg(long, global = true)]
    pub at: Option<DateTime<Utc>>,
    /// Control catalog JSON replacing the built-in catalog.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Severity matrix JSON replacing the built-in matrix.
    #[arg(long, global = true)]
    pub severity_matrix: Option<PathBuf>,
    /// Posture weights and bands JSON replacing the built-in config.
    #[arg(long, global = true)]
    pub posture_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a fixture into a fresh in-memory workspace, scan it and print posture.
    RunScenario {
        fixture: PathBuf,
        /// Workspace id to use instead of the fixture's own.
        #[arg(long)]
        workspace: Option<String>,
    },
    /// Provision a fixture into the data directory and mint API tokens.
    Init { fixture: PathBuf },
    /// Scan every connection of a persisted workspace.
    Scan {
        #[arg(long)]
        workspace: Option<String>,
    },
    /// Run one shadow-AI discovery cycle.
    Discover {
        #[arg(long)]
        workspace: Option<String>,
    },
    /// Write the watermarked auditor CSV bundle.
    Export {
        #[arg(long)]
        workspace: Option<String>,
        /// Role the export is performed as.
        #[arg(long, value_enum, default_value_t = CliRole::Auditor)]
        role: CliRole,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every row watermark of an exported bundle.
    Verify {
        csv: PathBuf,
        #[arg(long)]
        workspace: String,
    },
    /// Print a report.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[arg(long)]
        workspace: Option<String>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
    },
    /// Generate and persist a compliance document (soc2, iso42001, euaiact, executive, policy).
    Doc {
        doc_type: String,
        #[arg(long)]
        workspace: Option<String>,
        /// Also write the markdown to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP gateway over the data directory.
    Serve {
        #[arg(long, env = BIND_ADDR_ENV, default_value = DEFAULT_BIND_ADDR)]
        bind: SocketAddr,
        #[arg(long, env = TOKENS_FILE_ENV)]
        tokens: Option<PathBuf>,
        /// Built dashboard served under /app.
        #[arg(long, env = "TRUSTOS_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Write the shipped scenario fixtures as JSON.
    BuildFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliRole {
    Founder,
    Administrator,
    Auditor,
    ReadOnly,
}

impl From<CliRole> for Role {
    fn from(r: CliRole) -> Self {
        match r {
            CliRole::Founder => Role::Founder,
            CliRole::Administrator => Role::Administrator,
            CliRole::Auditor => Role::Auditor,
            CliRole::ReadOnly => Role::ReadOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Executive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Json,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct CliError(String);

impl CliError {
    fn new(msg: impl std::fmt::Display) -> Self {
        Self(msg.to_string())
    }
}

macro_rules! impl_cli_error {
    ($($t:ty),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self(e.to_string())
            }
        }
    )*};
}

impl_cli_error!(
    std::io::Error,
    serde_json::Error,
    trustos_core::store::StoreError,
    trustos_core::engine::EngineError,
    trustos_core::sim::FixtureError,
    trustos_core::vault::VaultError,
    trustos_core::discovery::DiscoveryError,
    trustos_core::synthesis::SynthesisError,
    trustos_core::mapping::catalog::CatalogError,
    trustos_core::probe::severity::SeverityMatrixError,
    trustos_core::intelligence::IntelligenceError,
    crate::export::ExportError,
    crate::export::BundleError,
    crate::auth::TokenError,
    crate::generator::GeneratorConfigError,
);

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn clock(cli: &Cli) -> Arc<dyn Clock> {
    match cli.at {
        Some(at) => Arc::new(ManualClock::new(at)),
        None => Arc::new(SystemClock),
    }
}

fn configure(cli: &Cli, mut engine: Engine) -> Result<Engine, CliError> {
    if let Some(p) = &cli.catalog {
        engine = engine.with_catalog(Catalog::load(p)?);
    }
    if let Some(p) = &cli.severity_matrix {
        engine = engine.with_matrix(SeverityMatrix::load(p)?);
    }
    if let Some(p) = &cli.posture_config {
        engine = engine.with_posture_config(PostureConfig::load(p)?);
    }
    Ok(engine)
}

/// Key from `TRUSTOS_VAULT_KEY`, else `<data-dir>/vault.key`, created on
/// first use with owner-only permissions.
fn master_key(data_dir: &Path, create: bool) -> Result<MasterKey, CliError> {
    if std::env::var(VAULT_KEY_ENV).is_ok_and(|v| !v.trim().is_empty()) {
        return Ok(MasterKey::from_env()?);
    }
    let path = data_dir.join(KEY_FILE);
    if path.exists() {
        return Ok(MasterKey::from_hex(&std::fs::read_to_string(&path)?)?);
    }
    if !create {
        return Err(CliError::new(format!(
            "no vault key: set {VAULT_KEY_ENV} or run `trustos init` to create {}",
            path.display()
        )));
    }
    let bytes: [u8; 32] = rand::random();
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    write_private(&path, hex.as_bytes())?;
    Ok(MasterKey::from_bytes(bytes))
}

fn write_private(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    opts.open(path)?.write_all(contents)
}

/// Engine over the data directory with every stored fixture re-attached.
pub fn open_engine(cli: &Cli, create: bool) -> Result<Arc<Engine>, CliError> {
    let dir = &cli.data_dir;
    if !create && !dir.join(LEDGER_FILE).exists() {
        return Err(CliError::new(format!(
            "no ledger in {}; run `trustos init <fixture>` first",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir.join(FIXTURES_DIR))?;
    let key = master_key(dir, create)?;
    let store = Arc::new(Store::open(dir.join(LEDGER_FILE))?);
    let engine = configure(cli, Engine::new(store, Some(key), clock(cli)))?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join(FIXTURES_DIR))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        engine.provision(&load_scenario(&p)?)?;
    }
    Ok(Arc::new(engine))
}

fn resolve_workspace(engine: &Engine, requested: Option<&str>) -> Result<WorkspaceId, CliError> {
    if let Some(ws) = requested {
        let ws = WorkspaceId::new(ws);
        engine.store().workspace(&ws)?;
        return Ok(ws);
    }
    let mut all = engine.attached_workspaces();
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(CliError::new("no workspaces; run `trustos init <fixture>` first")),
        _ => Err(CliError::new(format!(
            "several workspaces exist ({}); pass --workspace",
            all.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn print_scan(
    out: &mut dyn Write,
    results: &[Result<Execution, ProbeError>],
    summary: &trustos_core::engine::BatchSummary,
) -> Result<u8, CliError> {
    let mut failures = 0;
    for r in results {
        match r {
            Ok(x) => writeln!(out, "{}", summary_line(&x.assertion))?,
            Err(e) => {
                failures += 1;
                writeln!(out, "probe failed: {e}")?;
            }
        }
    }
    for d in &summary.drift {
        writeln!(out, "drift: {} on {} went {} -> {}", d.control_id, d.integration.display_name(), d.from_status.as_str(), d.to_status.as_str())?;
    }
    match &summary.snapshot {
        Some(s) => writeln!(out, "{}", PostureLine::from(s))?,
        None => writeln!(out, "no evidence recorded")?,
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_ERROR })
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match &cli.command {
        Command::RunScenario { fixture, workspace } => {
            let mut fx = load_scenario(fixture)?;
            if let Some(ws) = workspace {
                fx.workspace_id = ws.clone();
            }
            let key = match MasterKey::from_env() {
                Ok(k) => k,
                Err(_) => MasterKey::generate(),
            };
            let engine = configure(cli, Engine::new(Arc::new(Store::in_memory()), Some(key), clock(cli)))?;
            let ws = engine.provision(&fx)?;
            let (results, summary) = engine.scan_now(&ws, Trigger::Manual)?;
            print_scan(out, &results, &summary)
        }
        Command::Init { fixture } => {
            let fx = load_scenario(fixture)?;
            let engine = open_engine(cli, true)?;
            let ws = WorkspaceId::new(&fx.workspace_id);
            if engine.store().workspace_exists(&ws) {
                return Err(CliError::new(format!("workspace `{ws}` already exists in {}", cli.data_dir.display())));
            }
            engine.provision(&fx)?;
            std::fs::write(
                cli.data_dir.join(FIXTURES_DIR).join(format!("{}.json", fx.workspace_id)),
                fx.to_json_pretty(),
            )?;
            let tokens_path = cli.data_dir.join(TOKENS_FILE);
            let mut table = if tokens_path.exists() {
                TokenTable::load(&tokens_path)?
            } else {
                TokenTable::default()
            };
            let minted = tokens_for_fixture(&fx);
            table.extend(minted.clone())?;
            write_private(&tokens_path, table.to_json_pretty().as_bytes())?;
            writeln!(out, "workspace {ws} provisioned in {}", cli.data_dir.display())?;
            for t in &minted {
                writeln!(out, "{:<14} {:<24} {}", format!("{:?}", t.role), t.user_id, t.token)?;
            }
            Ok(EXIT_OK)
        }
        Command::Scan { workspace } => {
            let engine = open_engine(cli, false)?;
            let ws = resolve_workspace(&engine, workspace.as_deref())?;
            let (results, summary) = engine.scan_now(&ws, Trigger::Manual)?;
            print_scan(out, &results, &summary)
        }
        Command::Discover { workspace } => {
            let engine = open_engine(cli, false)?;
            let ws = resolve_workspace(&engine, workspace.as_deref())?;
            let report = discovery_cycle(&engine, &ws, ObservationWindow::FullHistory)?;
            writeln!(out, "{} registry gap(s)", report.registry_gaps.len())?;
            for g in &report.registry_gaps {
                writeln!(out, "unregistered: {} ({:?})", g.name, g.origin)?;
            }
            Ok(EXIT_OK)
        }
        Command::Export { workspace, role, out: path } => {
            let engine = open_engine(cli, false)?;
            let ws = resolve_workspace(&engine, workspace.as_deref())?;
            let csv = export_auditor_bundle(engine.store(), engine.catalog(), &ws, (*role).into())?;
            match path {
                Some(p) => std::fs::write(p, &csv)?,
                None => out.write_all(csv.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Verify { csv, workspace } => {
            let text = std::fs::read_to_string(csv)?;
            let report = verify_bundle(&text, workspace)?;
            let tampered = report.tampered();
            if tampered.is_empty() {
                writeln!(out, "OK: {} row(s) verified", report.rows.len())?;
                return Ok(EXIT_OK);
            }
            for r in &tampered {
                writeln!(out, "TAMPERED row {}: {}", r.row, r.assertion_id)?;
            }
            writeln!(out, "{} of {} row(s) tampered", tampered.len(), report.rows.len())?;
            Ok(EXIT_TAMPERED)
        }
        Command::Report { kind: ReportKind::Executive, workspace, format } => {
            let engine = open_engine(cli, false)?;
            let ws = resolve_workspace(&engine, workspace.as_deref())?;
            let report = executive_report(engine.store(), engine.catalog(), engine.posture_config(), &ws, engine.now())?;
            match format {
                ReportFormat::Markdown => out.write_all(report.to_markdown().as_bytes())?,
                ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
            }
            Ok(EXIT_OK)
        }
        Command::Doc { doc_type, workspace, out: path } => {
            let doc_type = DocType::parse(doc_type)?;
            let generator = generator_from_env()?;
            let engine = open_engine(cli, false)?;
            let ws = resolve_workspace(&engine, workspace.as_deref())?;
            let doc = generate_document(
                engine.store(),
                engine.catalog(),
                engine.posture_config(),
                generator.as_ref(),
                &ws,
                doc_type,
                engine.now(),
            )?;
            if let Some(p) = path {
                std::fs::write(p, &doc.content)?;
            }
            out.write_all(doc.content.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Serve { bind, tokens, static_dir } => {
            let engine = open_engine(cli, false)?;
            let tokens_path = tokens.clone().unwrap_or_else(|| cli.data_dir.join(TOKENS_FILE));
            let tokens = Arc::new(TokenTable::load(&tokens_path)?);
            let generator = generator_from_env()?;
            let interval = discovery_interval_from_env().map_err(CliError::new)?;
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(async move {
                let queue = ProbeQueue::start(engine, workers_from_env());
                if let Some(every) = interval {
                    spawn_discovery_timer(queue.clone(), every);
                }
                let state = AppState {
                    queue,
                    tokens,
                    generator,
                    static_dir: static_dir.clone(),
                };
                serve(state, *bind).await
            })?;
            Ok(EXIT_OK)
        }
        Command::BuildFixtures { out: dir } => {
            std::fs::create_dir_all(dir)?;
            for (name, fx) in shipped_fixtures() {
                let path = dir.join(name);
                std::fs::write(&path, fx.to_json_pretty())?;
                writeln!(out, "wrote {}", path.display())?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Fixture by file name from the shipped set, for tests and tooling.
pub fn shipped_fixture(name: &str) -> Option<ScenarioFixture> {
    shipped_fixtures().into_iter().find(|(n, _)| *n == name).map(|(_, f)| f)
}
