//! Roles, the role/permission matrix and the authorization decision.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    UserAdmin,
    ContentAdmin,
    StandardUser,
}

impl Role {
    pub const ALL: [Role; 4] = [Self::Admin, Self::UserAdmin, Self::ContentAdmin, Self::StandardUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Admin => "admin",
            Self::UserAdmin => "user_admin",
            Self::ContentAdmin => "content_admin",
            Self::StandardUser => "standard_user",
        }
    }

    /// The scope this role grants for `action`.
    pub fn scope(self, action: Action) -> Scope {
        use Action::*;
        use Scope::*;
        match (self, action) {
            (Self::Admin, _) => All,
            (Self::UserAdmin, Read) => AllPublic,
            (Self::UserAdmin, Write) => OwnPublic,
            (Self::UserAdmin, Delete) => OwnPrivate,
            (Self::UserAdmin, UserManagement) => All,
            (Self::ContentAdmin, UserManagement) => OwnPrivate,
            (Self::ContentAdmin, _) => All,
            (Self::StandardUser, Read) => AllPublic,
            (Self::StandardUser, Write) => OwnPublic,
            (Self::StandardUser, Delete | UserManagement) => OwnPrivate,
        }
    }

    pub fn permissions(self) -> RolePermissions {
        RolePermissions {
            role: self,
            read: self.scope(Action::Read),
            write: self.scope(Action::Write),
            delete: self.scope(Action::Delete),
            user_management: self.scope(Action::UserManagement),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Read,
    Write,
    Delete,
    UserManagement,
}

impl Action {
    pub const ALL: [Action; 4] = [Self::Read, Self::Write, Self::Delete, Self::UserManagement];
}

/// Which objects a permission reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    AllPublic,
    OwnPublic,
    OwnPrivate,
}

impl Scope {
    /// `own`: the requester owns the object. For user management the object
    /// is an account and `public` is ignored.
    pub fn reaches(self, action: Action, own: bool, public: bool) -> bool {
        match self {
            Scope::All => true,
            // own private objects are always reachable
            Scope::AllPublic => public || own,
            // create objects, publish and edit own ones
            Scope::OwnPublic => own,
            Scope::OwnPrivate if action == Action::UserManagement => own,
            Scope::OwnPrivate => own && !public,
        }
    }
}

/// One row of the permission matrix, as served by the role listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePermissions {
    pub role: Role,
    pub read: Scope,
    pub write: Scope,
    pub delete: Scope,
    pub user_management: Scope,
}

/// Server-wide access switches, read once at startup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerAccessConfig {
    /// Anonymous clients may read public objects.
    pub open_access_mode: bool,
    /// Anonymous clients may create standard accounts.
    pub open_signup_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub username: String,
    pub roles: BTreeSet<Role>,
}

/// Who is asking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requester {
    Anonymous,
    User(Identity),
}

impl Requester {
    pub fn user(username: impl Into<String>, roles: impl IntoIterator<Item = Role>) -> Self {
        Self::User(Identity {
            username: username.into(),
            roles: roles.into_iter().collect(),
        })
    }

    pub fn username(&self) -> Option<&str> {
        match self {
            Self::Anonymous => None,
            Self::User(id) => Some(&id.username),
        }
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        let roles = match self {
            Self::Anonymous => None,
            Self::User(id) => Some(id.roles.iter().copied()),
        };
        roles.into_iter().flatten()
    }

    /// Broadest scope any of the requester's roles grants for `action`.
    pub fn has_scope(&self, action: Action, scope: Scope) -> bool {
        self.roles().any(|r| r.scope(action) == scope)
    }

    pub fn manages_all_users(&self) -> bool {
        self.has_scope(Action::UserManagement, Scope::All)
    }

    pub fn owns(&self, owner: &str) -> bool {
        self.username() == Some(owner)
    }
}

/// The object an action is aimed at: owner and visibility.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub owner: &'a str,
    pub is_public: bool,
}

impl<'a> Target<'a> {
    pub fn new(owner: &'a str, is_public: bool) -> Self {
        Self { owner, is_public }
    }

    /// An account, for user-management decisions.
    pub fn account(username: &'a str) -> Self {
        Self { owner: username, is_public: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allowed(self) -> bool {
        self == Decision::Allow
    }
}

impl From<bool> for Decision {
    fn from(allowed: bool) -> Self {
        if allowed {
            Decision::Allow
        } else {
            Decision::Deny
        }
    }
}

/// Pure permission decision. Multiple roles grant the union of their scopes.
pub fn authorize(
    action: Action,
    target: Target<'_>,
    requester: &Requester,
    config: &ServerAccessConfig,
) -> Decision {
    match requester {
        Requester::Anonymous => {
            (action == Action::Read && target.is_public && config.open_access_mode).into()
        }
        Requester::User(id) => {
            let own = id.username == target.owner;
            id.roles
                .iter()
                .any(|r| r.scope(action).reaches(action, own, target.is_public))
                .into()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOSED: ServerAccessConfig = ServerAccessConfig {
        open_access_mode: false,
        open_signup_mode: false,
    };

    #[test]
    fn examples() {
        let alice = Requester::user("alice", [Role::StandardUser]);
        assert!(authorize(Action::Read, Target::new("bob", true), &alice, &CLOSED).is_allowed());
        assert!(!authorize(Action::Read, Target::new("bob", false), &alice, &CLOSED).is_allowed());
        assert!(!authorize(Action::Delete, Target::new("bob", false), &alice, &CLOSED).is_allowed());
        assert!(authorize(Action::Delete, Target::new("alice", false), &alice, &CLOSED).is_allowed());
        assert!(!authorize(Action::Delete, Target::new("alice", true), &alice, &CLOSED).is_allowed());
    }

    #[test]
    fn anonymous_reads_public_only_in_open_access_mode() {
        let open = ServerAccessConfig { open_access_mode: true, ..CLOSED };
        let anon = Requester::Anonymous;
        assert!(authorize(Action::Read, Target::new("bob", true), &anon, &open).is_allowed());
        assert!(!authorize(Action::Read, Target::new("bob", true), &anon, &CLOSED).is_allowed());
        assert!(!authorize(Action::Read, Target::new("bob", false), &anon, &open).is_allowed());
        for action in [Action::Write, Action::Delete, Action::UserManagement] {
            assert!(!authorize(action, Target::new("bob", true), &anon, &open).is_allowed());
        }
    }

    #[test]
    fn roles_union() {
        let both = Requester::user("carol", [Role::StandardUser, Role::UserAdmin]);
        assert!(authorize(Action::UserManagement, Target::account("dave"), &both, &CLOSED).is_allowed());
        let plain = Requester::user("carol", [Role::StandardUser]);
        assert!(!authorize(Action::UserManagement, Target::account("dave"), &plain, &CLOSED).is_allowed());
        assert!(authorize(Action::UserManagement, Target::account("carol"), &plain, &CLOSED).is_allowed());
    }

    #[test]
    fn role_names_round_trip() {
        for r in Role::ALL {
            assert_eq!(r.as_str().parse::<Role>().unwrap(), r);
            assert_eq!(serde_json::to_value(r).unwrap(), serde_json::json!(r.as_str()));
        }
        assert!("root".parse::<Role>().is_err());
    }
}
