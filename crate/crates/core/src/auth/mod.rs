//! Accounts, tokens and role-based access decisions.

mod accounts;
mod password;
mod permissions;
mod token;

pub use accounts::{AccessToken, Accounts, AuthError, AuthResult};
pub use password::{
    hash_password, validate_username, verify_password, UserInfo, UserRecord, DEFAULT_BCRYPT_COST,
};
pub use permissions::{
    authorize, Action, Decision, Identity, Requester, Role, RolePermissions, Scope,
    ServerAccessConfig, Target,
};
pub use token::{
    Claims, TokenError, TokenIssuer, TokenKind, TokenPair, ACCESS_TOKEN_TTL, REFRESH_TOKEN_TTL,
};
