//! Document generator selection, including an HTTP-backed external model.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustos_core::synthesis::{DocumentGenerator, SynthesisError, TemplateGenerator};

pub const GENERATOR_ENV: &str = "TRUSTOS_DOC_GENERATOR";
pub const GENERATOR_URL_ENV: &str = "TRUSTOS_DOC_GENERATOR_URL";
pub const GENERATOR_KEY_ENV: &str = "TRUSTOS_DOC_GENERATOR_KEY";

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum GeneratorConfigError {
    #[error("{GENERATOR_ENV} must be `template` or `external`, got `{0}`")]
    UnknownGenerator(String),
    #[error("{GENERATOR_URL_ENV} is required for the external generator")]
    MissingUrl,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    markdown: String,
}

/// Posts `{"prompt": ...}` to an endpoint and expects `{"markdown": ...}`.
/// Only the prompt text leaves the process.
pub struct ExternalGenerator {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for ExternalGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalGenerator")
            .field("url", &self.url)
            .finish_non_exhaustive()
    }
}

impl ExternalGenerator {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.into(),
            api_key,
            agent,
        }
    }
}

impl DocumentGenerator for ExternalGenerator {
    fn name(&self) -> &str {
        "external"
    }

    fn generate(&self, prompt: &str) -> Result<String, SynthesisError> {
        let body = serde_json::to_string(&GenerateRequest { prompt })
            .map_err(|e| SynthesisError::GeneratorFailure(e.to_string()))?;
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| SynthesisError::GeneratorFailure(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SynthesisError::GeneratorFailure(e.to_string()))?;
        let parsed: GenerateResponse = serde_json::from_str(&text)
            .map_err(|e| SynthesisError::GeneratorFailure(format!("bad generator response: {e}")))?;
        if parsed.markdown.trim().is_empty() {
            return Err(SynthesisError::GeneratorFailure("generator returned an empty document".into()));
        }
        Ok(parsed.markdown)
    }
}

/// Picks the generator from `TRUSTOS_DOC_GENERATOR` (default `template`).
pub fn generator_from_env() -> Result<Arc<dyn DocumentGenerator>, GeneratorConfigError> {
    let choice = std::env::var(GENERATOR_ENV).unwrap_or_default();
    generator_from(
        &choice,
        std::env::var(GENERATOR_URL_ENV).ok(),
        std::env::var(GENERATOR_KEY_ENV).ok(),
    )
}

pub fn generator_from(
    choice: &str,
    url: Option<String>,
    key: Option<String>,
) -> Result<Arc<dyn DocumentGenerator>, GeneratorConfigError> {
    match choice.trim().to_ascii_lowercase().as_str() {
        "" | "template" => Ok(Arc::new(TemplateGenerator)),
        "external" => {
            let url = url.filter(|u| !u.trim().is_empty()).ok_or(GeneratorConfigError::MissingUrl)?;
            Ok(Arc::new(ExternalGenerator::new(url, key, DEFAULT_TIMEOUT)))
        }
        other => Err(GeneratorConfigError::UnknownGenerator(other.to_string())),
    }
}
