use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use tupli_core::auth::{ServerAccessConfig, DEFAULT_BCRYPT_COST};

pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

/// Startup configuration, read once from the environment.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub access: ServerAccessConfig,
    /// HMAC key for tokens. Random per process when unset, which invalidates
    /// tokens on restart.
    pub api_secret: Option<String>,
    pub admin_username: Option<String>,
    pub admin_password: Option<String>,
    pub storage_root: PathBuf,
    pub listen_addr: SocketAddr,
    pub max_body_bytes: usize,
    pub bcrypt_cost: u32,
}

impl ServerConfig {
    /// Defaults for a store at `storage_root`: closed modes, ephemeral secret,
    /// no bootstrap admin.
    pub fn new(storage_root: impl Into<PathBuf>) -> Self {
        Self {
            access: ServerAccessConfig::default(),
            api_secret: None,
            admin_username: None,
            admin_password: None,
            storage_root: storage_root.into(),
            listen_addr: DEFAULT_LISTEN_ADDR.parse().unwrap(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            bcrypt_cost: DEFAULT_BCRYPT_COST,
        }
    }

    pub fn from_env() -> anyhow::Result<Self> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let flag = |key: &str| -> anyhow::Result<bool> {
            match get(key) {
                None => Ok(false),
                Some(v) => parse_bool(&v).with_context(|| format!("{key}={v:?} is not a boolean")),
            }
        };
        let storage_root = get("STORAGE_ROOT").unwrap_or_else(|| "./tupli-data".into());
        let mut config = Self::new(storage_root);
        config.access = ServerAccessConfig {
            open_access_mode: flag("OPEN_ACCESS_MODE")?,
            open_signup_mode: flag("OPEN_SIGNUP_MODE")?,
        };
        config.api_secret = get("API_SECRET").filter(|s| !s.is_empty());
        config.admin_username = get("ADMIN_USERNAME").filter(|s| !s.is_empty());
        config.admin_password = get("ADMIN_PASSWORD").filter(|s| !s.is_empty());
        if let Some(addr) = get("LISTEN_ADDR") {
            config.listen_addr = addr.parse().with_context(|| format!("LISTEN_ADDR={addr:?}"))?;
        }
        if let Some(max) = get("MAX_BODY_BYTES") {
            config.max_body_bytes = max.parse().with_context(|| format!("MAX_BODY_BYTES={max:?}"))?;
        }
        if let Some(cost) = get("BCRYPT_COST") {
            config.bcrypt_cost = cost.parse().with_context(|| format!("BCRYPT_COST={cost:?}"))?;
            if !(4..=31).contains(&config.bcrypt_cost) {
                bail!("BCRYPT_COST must be within 4..=31");
            }
        }
        if config.admin_username.is_some() != config.admin_password.is_some() {
            bail!("ADMIN_USERNAME and ADMIN_PASSWORD must be set together");
        }
        Ok(config)
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" | "" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn lookup(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> =
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = ServerConfig::from_lookup(lookup(&[])).unwrap();
        assert_eq!(c.access, ServerAccessConfig::default());
        assert_eq!(c.max_body_bytes, 64 * 1024 * 1024);
        assert_eq!(c.bcrypt_cost, 12);
        assert!(c.api_secret.is_none());
    }

    #[test]
    fn parses_modes_and_limits() {
        let c = ServerConfig::from_lookup(lookup(&[
            ("OPEN_ACCESS_MODE", "True"),
            ("OPEN_SIGNUP_MODE", "0"),
            ("LISTEN_ADDR", "0.0.0.0:9000"),
            ("MAX_BODY_BYTES", "1024"),
            ("ADMIN_USERNAME", "root"),
            ("ADMIN_PASSWORD", "pw"),
        ]))
        .unwrap();
        assert!(c.access.open_access_mode);
        assert!(!c.access.open_signup_mode);
        assert_eq!(c.listen_addr.port(), 9000);
        assert_eq!(c.max_body_bytes, 1024);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServerConfig::from_lookup(lookup(&[("OPEN_ACCESS_MODE", "maybe")])).is_err());
        assert!(ServerConfig::from_lookup(lookup(&[("BCRYPT_COST", "2")])).is_err());
        assert!(ServerConfig::from_lookup(lookup(&[("ADMIN_USERNAME", "root")])).is_err());
    }
}
