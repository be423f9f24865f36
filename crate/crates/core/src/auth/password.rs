use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Role;

/// Work factor used unless configured otherwise.
pub const DEFAULT_BCRYPT_COST: u32 = 12;

pub fn hash_password(password: &str, cost: u32) -> Result<String, bcrypt::BcryptError> {
    bcrypt::hash(password, cost)
}

pub fn verify_password(password: &str, hash: &str) -> bool {
    bcrypt::verify(password, hash).unwrap_or(false)
}

/// Stored account. Never sent over the wire; see [`UserInfo`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub password_hash: String,
    pub roles: BTreeSet<Role>,
    pub created_at: DateTime<Utc>,
}

impl UserRecord {
    pub fn info(&self) -> UserInfo {
        UserInfo {
            username: self.username.clone(),
            roles: self.roles.clone(),
            created_at: self.created_at,
        }
    }

    pub fn is_admin(&self) -> bool {
        self.roles.contains(&Role::Admin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserInfo {
    pub username: String,
    pub roles: BTreeSet<Role>,
    pub created_at: DateTime<Utc>,
}

/// Usernames double as file names, so they are restricted to
/// `[A-Za-z0-9_.-]`, at most 64 characters, not starting with a dot.
pub fn validate_username(username: &str) -> Result<(), String> {
    if username.is_empty() {
        return Err("username must not be empty".into());
    }
    if username.len() > 64 {
        return Err("username must be at most 64 characters".into());
    }
    if username.starts_with('.') {
        return Err("username must not start with '.'".into());
    }
    if let Some(c) = username
        .chars()
        .find(|c| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')))
    {
        return Err(format!("username contains invalid character {c:?}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_password_gets_distinct_salts() {
        let a = hash_password("hunter2", 4).unwrap();
        let b = hash_password("hunter2", 4).unwrap();
        assert_ne!(a, b);
        assert!(verify_password("hunter2", &a));
        assert!(verify_password("hunter2", &b));
        assert!(!verify_password("hunter3", &a));
        assert!(!a.contains("hunter2"));
    }

    #[test]
    fn default_cost_is_encoded() {
        assert!(hash_password("x", DEFAULT_BCRYPT_COST).unwrap().starts_with("$2b$12$"));
    }

    #[test]
    fn garbage_hash_never_verifies() {
        assert!(!verify_password("x", "not a hash"));
    }

    #[test]
    fn usernames() {
        assert!(validate_username("alice_01.x-y").is_ok());
        for bad in ["", ".hidden", "a/b", "a b", "../x", &"x".repeat(65)] {
            assert!(validate_username(bad).is_err(), "{bad:?}");
        }
    }
}
