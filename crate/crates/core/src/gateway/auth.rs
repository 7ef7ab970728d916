use std::collections::HashMap;
use std::sync::Mutex;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use rand::RngCore;

use crate::clock::SharedClock;
use crate::error::{Error, Result};

pub const MIN_PASSWORD_LEN: usize = 8;

pub fn validate_username(username: &str) -> Result<()> {
    let ok = (3..=32).contains(&username.len())
        && username.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("username must be 3-32 characters of a-z, 0-9 or _"))
    }
}

pub fn validate_password(password: &str) -> Result<()> {
    if password.chars().count() >= MIN_PASSWORD_LEN {
        Ok(())
    } else {
        Err(Error::invalid(format!("password must have at least {MIN_PASSWORD_LEN} characters")))
    }
}

pub fn hash_password(password: &str) -> Result<String> {
    let mut raw = [0u8; 16];
    rand::rng().fill_bytes(&mut raw);
    let salt = SaltString::encode_b64(&raw).map_err(|e| Error::Unavailable(format!("salt encoding failed: {e}")))?;
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| Error::Unavailable(format!("password hashing failed: {e}")))
}

pub fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash).is_ok_and(|parsed| Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok())
}

/// Random 32-byte hex identifier.
pub fn random_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Random 16-byte hex identifier for records.
pub fn random_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

#[derive(Debug, Clone)]
pub struct IssuedToken {
    pub token: String,
    pub expires_at_ms: u64,
}

/// In-memory bearer tokens. Restarting the gateway logs everyone out.
#[derive(Debug)]
pub struct TokenStore {
    ttl_ms: u64,
    clock: SharedClock,
    tokens: Mutex<HashMap<String, (String, u64)>>,
}

impl TokenStore {
    pub fn new(ttl_ms: u64, clock: SharedClock) -> Self {
        Self { ttl_ms, clock, tokens: Mutex::new(HashMap::new()) }
    }

    pub fn issue(&self, user_id: &str) -> IssuedToken {
        let token = random_token();
        let expires_at_ms = self.clock.now_ms().saturating_add(self.ttl_ms);
        let mut tokens = self.tokens.lock().unwrap_or_else(|e| e.into_inner());
        let now = self.clock.now_ms();
        tokens.retain(|_, (_, exp)| *exp > now);
        tokens.insert(token.clone(), (user_id.to_string(), expires_at_ms));
        IssuedToken { token, expires_at_ms }
    }

    /// The user id behind a live token.
    pub fn resolve(&self, token: &str) -> Result<String> {
        let tokens = self.tokens.lock().unwrap_or_else(|e| e.into_inner());
        match tokens.get(token) {
            Some((user, exp)) if *exp > self.clock.now_ms() => Ok(user.clone()),
            _ => Err(Error::Unauthorized),
        }
    }
}
