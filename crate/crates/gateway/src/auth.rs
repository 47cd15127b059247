//! Static bearer tokens loaded from a JSON file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustos_core::model::{Role, WorkspaceId};
use trustos_core::sim::ScenarioFixture;

pub const TOKENS_FILE_ENV: &str = "TRUSTOS_TOKENS_FILE";

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("cannot read token file: {0}")]
    Io(#[from] std::io::Error),
    #[error("token file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("token entry {0} is empty")]
    EmptyToken(usize),
    #[error("token entry {0} repeats an earlier token")]
    DuplicateToken(usize),
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiToken {
    pub token: String,
    pub user_id: String,
    pub workspace_id: WorkspaceId,
    pub role: Role,
}

impl std::fmt::Debug for ApiToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApiToken")
            .field("user_id", &self.user_id)
            .field("workspace_id", &self.workspace_id)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

/// Token lookup. Each token resolves to exactly one (workspace, role).
#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    entries: Vec<ApiToken>,
    by_token: HashMap<String, usize>,
}

impl TokenTable {
    pub fn new(entries: Vec<ApiToken>) -> Result<Self, TokenError> {
        let mut by_token = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.token.trim().is_empty() {
                return Err(TokenError::EmptyToken(i));
            }
            if by_token.insert(e.token.clone(), i).is_some() {
                return Err(TokenError::DuplicateToken(i));
            }
        }
        Ok(Self { entries, by_token })
    }

    pub fn from_json(text: &str) -> Result<Self, TokenError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self, token: &str) -> Option<&ApiToken> {
        self.by_token.get(token).map(|i| &self.entries[*i])
    }

    pub fn entries(&self) -> &[ApiToken] {
        &self.entries
    }

    /// Appends entries, keeping the table's uniqueness guarantee.
    pub fn extend(&mut self, more: Vec<ApiToken>) -> Result<(), TokenError> {
        let mut all = std::mem::take(&mut self.entries);
        all.extend(more);
        *self = Self::new(all)?;
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("tokens serialize")
    }
}

/// Fresh random token for one user.
pub fn mint_token() -> String {
    let bytes: [u8; 24] = rand::random();
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    format!("tos_{hex}")
}

/// One fresh token per fixture user.
pub fn tokens_for_fixture(fixture: &ScenarioFixture) -> Vec<ApiToken> {
    fixture
        .users
        .iter()
        .map(|u| ApiToken {
            token: mint_token(),
            user_id: u.user_id.clone(),
            workspace_id: WorkspaceId::new(&fixture.workspace_id),
            role: u.role,
        })
        .collect()
}
