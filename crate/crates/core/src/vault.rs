//! AES-256-GCM credential vault with scope-bound plaintext.
//!
//! Stored blob layout: `key_id (4 bytes) ‖ nonce (12 bytes) ‖ ciphertext+tag`.
//! The workspace id and credential reference are bound as associated data,
//! so a blob moved to another credential fails authentication.

use std::fmt;
use std::sync::Arc;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use crate::clock::{new_id, Clock};
use crate::model::{EncryptedCredential, EntityKind, EntityRef, ProviderKind, WorkspaceId};
use crate::store::{Store, StoreError};

pub const VAULT_KEY_ENV: &str = "TRUSTOS_VAULT_KEY";

const KEY_ID_LEN: usize = 4;
const NONCE_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("vault master key is not configured (set {VAULT_KEY_ENV} to 64 hex characters)")]
    VaultKeyMissing,
    #[error("vault master key is malformed: {0}")]
    BadKey(&'static str),
    #[error("unknown credential `{0}`")]
    UnknownCredential(String),
    #[error("credential `{0}` failed authenticated decryption")]
    DecryptFailure(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// 32-byte master key, wiped on drop.
pub struct MasterKey {
    key: Zeroizing<[u8; 32]>,
    key_id: [u8; KEY_ID_LEN],
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterKey(key_id={})", hex::encode(self.key_id))
    }
}

impl MasterKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        let key = Zeroizing::new(bytes);
        let digest = Sha256::digest(key.as_slice());
        let mut key_id = [0u8; KEY_ID_LEN];
        key_id.copy_from_slice(&digest[..KEY_ID_LEN]);
        Self { key, key_id }
    }

    pub fn from_hex(hex_key: &str) -> Result<Self, VaultError> {
        let decoded = Zeroizing::new(
            hex::decode(hex_key.trim()).map_err(|_| VaultError::BadKey("not hex"))?,
        );
        let bytes: [u8; 32] = decoded
            .as_slice()
            .try_into()
            .map_err(|_| VaultError::BadKey("expected 32 bytes"))?;
        Ok(Self::from_bytes(bytes))
    }

    pub fn from_env() -> Result<Self, VaultError> {
        match std::env::var(VAULT_KEY_ENV) {
            Ok(v) if !v.trim().is_empty() => Self::from_hex(&v),
            _ => Err(VaultError::VaultKeyMissing),
        }
    }

    pub fn generate() -> Self {
        Self::from_bytes(rand::random())
    }

    pub fn key_id(&self) -> [u8; KEY_ID_LEN] {
        self.key_id
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new_from_slice(self.key.as_slice()).expect("32-byte key")
    }
}

/// Decrypted credential material. It cannot be cloned, serialised or
/// printed, and it is overwritten with zeros when wiped or dropped.
pub struct EphemeralSecret {
    plaintext: Zeroizing<Vec<u8>>,
    issued_at: DateTime<Utc>,
}

impl EphemeralSecret {
    pub fn expose(&self) -> &[u8] {
        &self.plaintext
    }

    pub fn issued_at(&self) -> DateTime<Utc> {
        self.issued_at
    }

    /// Overwrites the buffer in place without releasing it.
    fn wipe(&mut self) {
        let len = self.plaintext.len();
        self.plaintext.as_mut_slice().zeroize();
        debug_assert_eq!(self.plaintext.len(), len);
    }

    fn is_wiped(&self) -> bool {
        self.plaintext.iter().all(|b| *b == 0)
    }
}

impl fmt::Debug for EphemeralSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EphemeralSecret(<{} bytes redacted>)", self.plaintext.len())
    }
}

pub struct Vault {
    store: Arc<Store>,
    key: Option<MasterKey>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Vault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vault").field("key", &self.key).finish()
    }
}

fn aad(ws: &WorkspaceId, credential_ref: &str) -> Vec<u8> {
    format!("{ws}|{credential_ref}").into_bytes()
}

impl Vault {
    pub fn new(store: Arc<Store>, key: Option<MasterKey>, clock: Arc<dyn Clock>) -> Self {
        Self { store, key, clock }
    }

    fn key(&self) -> Result<&MasterKey, VaultError> {
        self.key.as_ref().ok_or(VaultError::VaultKeyMissing)
    }

    /// Encrypts and persists a credential. The caller's plaintext buffer is
    /// zeroed before this returns, whether or not storage succeeded.
    pub fn vault_store(
        &self,
        ws: &WorkspaceId,
        provider_kind: ProviderKind,
        plaintext: &mut [u8],
    ) -> Result<String, VaultError> {
        let result = self.encrypt_and_store(ws, provider_kind, plaintext);
        plaintext.zeroize();
        result
    }

    fn encrypt_and_store(
        &self,
        ws: &WorkspaceId,
        provider_kind: ProviderKind,
        plaintext: &[u8],
    ) -> Result<String, VaultError> {
        let key = self.key()?;
        let credential_ref = new_id("cred");
        let nonce_bytes: [u8; NONCE_LEN] = rand::random();
        let ciphertext = key
            .cipher()
            .encrypt(
                Nonce::from_slice(&nonce_bytes),
                Payload {
                    msg: plaintext,
                    aad: &aad(ws, &credential_ref),
                },
            )
            .expect("AES-GCM encryption of in-memory buffer");
        let mut blob = Vec::with_capacity(KEY_ID_LEN + NONCE_LEN + ciphertext.len());
        blob.extend_from_slice(&key.key_id());
        blob.extend_from_slice(&nonce_bytes);
        blob.extend_from_slice(&ciphertext);
        self.store.insert(EncryptedCredential {
            credential_ref: credential_ref.clone(),
            workspace_id: ws.clone(),
            provider_kind,
            blob,
        })?;
        tracing::debug!(workspace = %ws, credential_ref = %credential_ref, provider = %provider_kind, "credential stored");
        Ok(credential_ref)
    }

    fn decrypt(&self, cred: &EncryptedCredential) -> Result<EphemeralSecret, VaultError> {
        let key = self.key()?;
        let fail = || VaultError::DecryptFailure(cred.credential_ref.clone());
        if cred.blob.len() < KEY_ID_LEN + NONCE_LEN + 16 || cred.blob[..KEY_ID_LEN] != key.key_id() {
            return Err(fail());
        }
        let nonce = &cred.blob[KEY_ID_LEN..KEY_ID_LEN + NONCE_LEN];
        let ciphertext = &cred.blob[KEY_ID_LEN + NONCE_LEN..];
        let plaintext = key
            .cipher()
            .decrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: ciphertext,
                    aad: &aad(&cred.workspace_id, &cred.credential_ref),
                },
            )
            .map_err(|_| fail())?;
        Ok(EphemeralSecret {
            plaintext: Zeroizing::new(plaintext),
            issued_at: self.clock.now(),
        })
    }

    /// Decrypts a credential, lends it to `scope`, then overwrites it with
    /// zeros. The wipe happens on every exit path: normal return, an error
    /// returned by `scope`, or a panic (via the buffer's drop).
    ///
    /// Decryption and zeroisation are recorded as activity events.
    pub fn with_ephemeral<T>(
        &self,
        ws: &WorkspaceId,
        credential_ref: &str,
        scope: impl FnOnce(&EphemeralSecret) -> T,
    ) -> Result<T, VaultError> {
        self.with_ephemeral_inspect(ws, credential_ref, scope, |_| {})
    }

    fn with_ephemeral_inspect<T>(
        &self,
        ws: &WorkspaceId,
        credential_ref: &str,
        scope: impl FnOnce(&EphemeralSecret) -> T,
        after_wipe: impl FnOnce(&[u8]),
    ) -> Result<T, VaultError> {
        let cred: EncryptedCredential = self.store.get(ws, credential_ref).map_err(|e| match e {
            StoreError::NotFound { .. } => VaultError::UnknownCredential(credential_ref.to_string()),
            other => VaultError::Store(other),
        })?;
        let mut secret = self.decrypt(&cred)?;
        let subject = EntityRef::new(EntityKind::EncryptedCredential, credential_ref);
        self.store
            .record_event(ws, "probe-worker", "credential.decrypted", subject.clone(), secret.issued_at)?;

        let out = scope(&secret);

        secret.wipe();
        let wiped = secret.is_wiped();
        after_wipe(secret.expose());
        drop(secret);
        if wiped {
            self.store
                .record_event(ws, "probe-worker", "credential.zeroized", subject, self.clock.now())?;
        }
        Ok(out)
    }
}
