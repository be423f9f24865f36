//! HMAC-SHA256 signed bearer tokens (JWT wire form).

use std::collections::HashSet;
use std::sync::Arc;

use chrono::Duration;
use jsonwebtoken::{decode, encode, Algorithm, DecodingKey, EncodingKey, Header, Validation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Role;
use crate::clock::Clock;

pub const ACCESS_TOKEN_TTL: Duration = Duration::minutes(60);
pub const REFRESH_TOKEN_TTL: Duration = Duration::days(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Access,
    Refresh,
}

impl TokenKind {
    pub fn ttl(self) -> Duration {
        match self {
            Self::Access => ACCESS_TOKEN_TTL,
            Self::Refresh => REFRESH_TOKEN_TTL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: String,
    pub kind: TokenKind,
    pub roles: Vec<Role>,
    /// Seconds since the Unix epoch.
    pub iat: i64,
    pub exp: i64,
    pub jti: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("token is malformed or its signature is invalid")]
    Invalid,
    #[error("token has expired")]
    Expired,
    #[error("expected a {expected:?} token")]
    WrongKind { expected: TokenKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPair {
    pub access_token: String,
    pub refresh_token: String,
    pub token_type: String,
}

/// Issues and verifies tokens against one server secret.
#[derive(Clone)]
pub struct TokenIssuer {
    encoding: EncodingKey,
    decoding: DecodingKey,
    clock: Arc<dyn Clock>,
}

impl TokenIssuer {
    pub fn new(secret: &[u8], clock: Arc<dyn Clock>) -> Self {
        Self {
            encoding: EncodingKey::from_secret(secret),
            decoding: DecodingKey::from_secret(secret),
            clock,
        }
    }

    pub fn issue(&self, kind: TokenKind, subject: &str, roles: &[Role]) -> String {
        let now = self.clock.now();
        let claims = Claims {
            sub: subject.to_string(),
            kind,
            roles: roles.to_vec(),
            iat: now.timestamp(),
            exp: (now + kind.ttl()).timestamp(),
            jti: uuid::Uuid::new_v4().to_string(),
        };
        encode(&Header::new(Algorithm::HS256), &claims, &self.encoding)
            .expect("HS256 encoding of plain claims cannot fail")
    }

    pub fn issue_pair(&self, subject: &str, roles: &[Role]) -> TokenPair {
        TokenPair {
            access_token: self.issue(TokenKind::Access, subject, roles),
            refresh_token: self.issue(TokenKind::Refresh, subject, roles),
            token_type: "bearer".into(),
        }
    }

    /// Checks signature, kind and expiry against the injected clock.
    pub fn verify(&self, token: &str, expected: TokenKind) -> Result<Claims, TokenError> {
        let mut validation = Validation::new(Algorithm::HS256);
        validation.validate_exp = false;
        validation.required_spec_claims = HashSet::new();
        let claims = decode::<Claims>(token, &self.decoding, &validation)
            .map_err(|_| TokenError::Invalid)?
            .claims;
        if claims.kind != expected {
            return Err(TokenError::WrongKind { expected });
        }
        if self.clock.now().timestamp() >= claims.exp {
            return Err(TokenError::Expired);
        }
        Ok(claims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use chrono::{TimeZone, Utc};

    fn setup() -> (Arc<ManualClock>, TokenIssuer) {
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap()));
        let issuer = TokenIssuer::new(b"test-secret", clock.clone());
        (clock, issuer)
    }

    #[test]
    fn access_token_expires_after_sixty_minutes() {
        let (clock, issuer) = setup();
        let t = issuer.issue(TokenKind::Access, "alice", &[Role::StandardUser]);
        clock.advance(Duration::minutes(59) + Duration::seconds(59));
        assert_eq!(issuer.verify(&t, TokenKind::Access).unwrap().sub, "alice");
        clock.advance(Duration::seconds(2));
        assert_eq!(issuer.verify(&t, TokenKind::Access), Err(TokenError::Expired));
    }

    #[test]
    fn refresh_token_expires_after_thirty_days() {
        let (clock, issuer) = setup();
        let t = issuer.issue(TokenKind::Refresh, "alice", &[]);
        clock.advance(Duration::days(29));
        assert!(issuer.verify(&t, TokenKind::Refresh).is_ok());
        clock.advance(Duration::days(2));
        assert_eq!(issuer.verify(&t, TokenKind::Refresh), Err(TokenError::Expired));
    }

    #[test]
    fn kinds_are_not_interchangeable() {
        let (_, issuer) = setup();
        let pair = issuer.issue_pair("alice", &[Role::Admin]);
        assert_eq!(
            issuer.verify(&pair.access_token, TokenKind::Refresh),
            Err(TokenError::WrongKind { expected: TokenKind::Refresh })
        );
        assert_eq!(
            issuer.verify(&pair.refresh_token, TokenKind::Access),
            Err(TokenError::WrongKind { expected: TokenKind::Access })
        );
    }

    #[test]
    fn wire_form_has_three_parts_and_other_secrets_fail() {
        let (clock, issuer) = setup();
        let t = issuer.issue(TokenKind::Access, "alice", &[]);
        assert_eq!(t.split('.').count(), 3);
        let other = TokenIssuer::new(b"other", clock);
        assert_eq!(other.verify(&t, TokenKind::Access), Err(TokenError::Invalid));
    }

    #[test]
    fn any_flipped_byte_invalidates() {
        let (_, issuer) = setup();
        let t = issuer.issue(TokenKind::Access, "alice", &[Role::StandardUser]);
        let bytes = t.as_bytes();
        for i in 0..bytes.len() {
            let mut tampered = bytes.to_vec();
            tampered[i] ^= 0x01;
            let tampered = String::from_utf8_lossy(&tampered).into_owned();
            assert!(
                issuer.verify(&tampered, TokenKind::Access).is_err(),
                "flip at byte {i} was accepted"
            );
        }
    }

    #[test]
    fn two_issues_differ() {
        let (_, issuer) = setup();
        let a = issuer.issue_pair("alice", &[]);
        let b = issuer.issue_pair("alice", &[]);
        assert_ne!(a.access_token, b.access_token);
        assert!(issuer.verify(&a.access_token, TokenKind::Access).is_ok());
        assert!(issuer.verify(&b.access_token, TokenKind::Access).is_ok());
    }
}
