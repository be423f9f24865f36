use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::password::{hash_password, validate_username, verify_password, UserInfo, UserRecord};
use super::token::{TokenError, TokenIssuer, TokenKind, TokenPair};
use super::{authorize, Action, Requester, Role, RolePermissions, Target};
use crate::clock::Clock;
use crate::storage::{StorageBackend, StoreError};

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("invalid username or password")]
    InvalidCredentials,
    #[error("authentication required")]
    Unauthenticated,
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("{0}")]
    Forbidden(String),
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("user `{0}` not found")]
    UnknownUser(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("cannot remove the last admin account")]
    LastAdmin,
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for AuthError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateUser(u) => AuthError::DuplicateUser(u),
            StoreError::Validation(m) => AuthError::InvalidInput(m),
            other => AuthError::Store(other),
        }
    }
}

pub type AuthResult<T> = Result<T, AuthError>;

/// Fresh access token handed out by a refresh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub access_token: String,
    pub token_type: String,
}

/// Account lifecycle and token handling on top of a storage backend.
pub struct Accounts {
    store: Arc<dyn StorageBackend>,
    tokens: TokenIssuer,
    clock: Arc<dyn Clock>,
    bcrypt_cost: u32,
    // verified against for unknown users so both failures cost the same
    dummy_hash: String,
}

impl Accounts {
    pub fn new(
        store: Arc<dyn StorageBackend>,
        secret: &[u8],
        clock: Arc<dyn Clock>,
        bcrypt_cost: u32,
    ) -> AuthResult<Self> {
        let dummy_hash = hash_password("not-a-real-password", bcrypt_cost)
            .map_err(|e| AuthError::InvalidInput(e.to_string()))?;
        Ok(Self {
            store,
            tokens: TokenIssuer::new(secret, clock.clone()),
            clock,
            bcrypt_cost,
            dummy_hash,
        })
    }

    pub fn tokens(&self) -> &TokenIssuer {
        &self.tokens
    }

    /// Creates the admin account if no user of that name exists yet.
    /// Returns whether an account was created.
    pub fn bootstrap_admin(&self, username: &str, password: &str) -> AuthResult<bool> {
        if self.store.get_user(username)?.is_some() {
            return Ok(false);
        }
        self.insert_user(username, password, BTreeSet::from([Role::Admin]))?;
        tracing::info!(username, "created bootstrap admin account");
        Ok(true)
    }

    /// Creates an account. Full user managers choose the roles (only admins
    /// may grant `admin`); anyone else may only self-sign-up as a standard
    /// user, and only in open signup mode.
    pub fn signup(
        &self,
        username: &str,
        password: &str,
        roles: Option<BTreeSet<Role>>,
        requester: &Requester,
    ) -> AuthResult<UserInfo> {
        let standard = BTreeSet::from([Role::StandardUser]);
        let roles = if requester.manages_all_users() {
            let roles = roles.unwrap_or(standard);
            self.check_grantable(&roles, requester)?;
            roles
        } else if self.store.access_config().open_signup_mode {
            match roles {
                Some(r) if r != standard => {
                    return Err(AuthError::Forbidden(
                        "self-signup only grants the standard_user role".into(),
                    ))
                }
                _ => standard,
            }
        } else if matches!(requester, Requester::Anonymous) {
            return Err(AuthError::Unauthenticated);
        } else {
            return Err(AuthError::Forbidden("signup is closed; ask a user admin".into()));
        };
        self.insert_user(username, password, roles)
    }

    pub fn login(&self, username: &str, password: &str) -> AuthResult<TokenPair> {
        match self.store.get_user(username)? {
            Some(user) if verify_password(password, &user.password_hash) => {
                let roles: Vec<Role> = user.roles.iter().copied().collect();
                Ok(self.tokens.issue_pair(&user.username, &roles))
            }
            Some(_) => Err(AuthError::InvalidCredentials),
            None => {
                let _ = verify_password(password, &self.dummy_hash);
                Err(AuthError::InvalidCredentials)
            }
        }
    }

    pub fn refresh(&self, refresh_token: &str) -> AuthResult<AccessToken> {
        let claims = self.tokens.verify(refresh_token, TokenKind::Refresh)?;
        let user = self
            .store
            .get_user(&claims.sub)?
            .ok_or(AuthError::Token(TokenError::Invalid))?;
        let roles: Vec<Role> = user.roles.iter().copied().collect();
        Ok(AccessToken {
            access_token: self.tokens.issue(TokenKind::Access, &user.username, &roles),
            token_type: "bearer".into(),
        })
    }

    /// Resolves an access token to the requester it speaks for, using the
    /// account's current roles.
    pub fn authenticate(&self, access_token: &str) -> AuthResult<Requester> {
        let claims = self.tokens.verify(access_token, TokenKind::Access)?;
        let user = self
            .store
            .get_user(&claims.sub)?
            .ok_or(AuthError::Token(TokenError::Invalid))?;
        Ok(Requester::user(user.username, user.roles))
    }

    pub fn change_password(&self, target: &str, new_password: &str, requester: &Requester) -> AuthResult<()> {
        self.require_user_management(target, requester)?;
        if new_password.is_empty() {
            return Err(AuthError::InvalidInput("password must not be empty".into()));
        }
        let mut user = self.existing(target)?;
        user.password_hash = self.hash(new_password)?;
        self.store.update_user(user)?;
        Ok(())
    }

    pub fn change_roles(&self, target: &str, roles: BTreeSet<Role>, requester: &Requester) -> AuthResult<UserInfo> {
        self.require_full_user_management(requester)?;
        if roles.is_empty() {
            return Err(AuthError::InvalidInput("a user needs at least one role".into()));
        }
        let mut user = self.existing(target)?;
        if user.is_admin() != roles.contains(&Role::Admin) {
            self.check_grantable(&BTreeSet::from([Role::Admin]), requester)?;
        }
        if user.is_admin() && !roles.contains(&Role::Admin) {
            self.ensure_not_last_admin(target)?;
        }
        user.roles = roles;
        self.store.update_user(user.clone())?;
        Ok(user.info())
    }

    pub fn delete_user(&self, target: &str, requester: &Requester) -> AuthResult<()> {
        self.require_full_user_management(requester)?;
        let user = self.existing(target)?;
        if user.is_admin() {
            self.check_grantable(&BTreeSet::from([Role::Admin]), requester)?;
            self.ensure_not_last_admin(target)?;
        }
        self.store.delete_user(target)?;
        Ok(())
    }

    pub fn list_users(&self, requester: &Requester) -> AuthResult<Vec<UserInfo>> {
        self.require_full_user_management(requester)?;
        Ok(self.store.list_users()?.iter().map(UserRecord::info).collect())
    }

    pub fn list_roles() -> Vec<RolePermissions> {
        Role::ALL.into_iter().map(Role::permissions).collect()
    }

    fn insert_user(&self, username: &str, password: &str, roles: BTreeSet<Role>) -> AuthResult<UserInfo> {
        validate_username(username).map_err(AuthError::InvalidInput)?;
        if password.is_empty() {
            return Err(AuthError::InvalidInput("password must not be empty".into()));
        }
        if roles.is_empty() {
            return Err(AuthError::InvalidInput("a user needs at least one role".into()));
        }
        if self.store.get_user(username)?.is_some() {
            return Err(AuthError::DuplicateUser(username.into()));
        }
        let record = UserRecord {
            username: username.to_string(),
            password_hash: self.hash(password)?,
            roles,
            created_at: self.clock.now(),
        };
        let info = record.info();
        self.store.create_user(record)?;
        Ok(info)
    }

    fn hash(&self, password: &str) -> AuthResult<String> {
        hash_password(password, self.bcrypt_cost).map_err(|e| AuthError::InvalidInput(e.to_string()))
    }

    fn existing(&self, username: &str) -> AuthResult<UserRecord> {
        self.store
            .get_user(username)?
            .ok_or_else(|| AuthError::UnknownUser(username.into()))
    }

    fn require_user_management(&self, target: &str, requester: &Requester) -> AuthResult<()> {
        if matches!(requester, Requester::Anonymous) {
            return Err(AuthError::Unauthenticated);
        }
        let config = self.store.access_config();
        if authorize(Action::UserManagement, Target::account(target), requester, &config).is_allowed() {
            Ok(())
        } else {
            Err(AuthError::Forbidden("non-admin users can only change their own password".into()))
        }
    }

    fn require_full_user_management(&self, requester: &Requester) -> AuthResult<()> {
        match requester {
            Requester::Anonymous => Err(AuthError::Unauthenticated),
            r if r.manages_all_users() => Ok(()),
            _ => Err(AuthError::Forbidden("user management permission required".into())),
        }
    }

    fn check_grantable(&self, roles: &BTreeSet<Role>, requester: &Requester) -> AuthResult<()> {
        if roles.contains(&Role::Admin) && !requester.roles().any(|r| r == Role::Admin) {
            return Err(AuthError::Forbidden("only admins can grant or revoke the admin role".into()));
        }
        Ok(())
    }

    fn ensure_not_last_admin(&self, target: &str) -> AuthResult<()> {
        let others = self
            .store
            .list_users()?
            .iter()
            .filter(|u| u.is_admin() && u.username != target)
            .count();
        if others == 0 {
            Err(AuthError::LastAdmin)
        } else {
            Ok(())
        }
    }
}
