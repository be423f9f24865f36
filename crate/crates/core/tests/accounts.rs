use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use tempfile::TempDir;
use tupli_core::auth::{
    verify_password, Accounts, AuthError, Requester, Role, ServerAccessConfig, TokenError,
};
use tupli_core::clock::ManualClock;
use tupli_core::{OnDiskStore, StorageBackend};

struct Fixture {
    _dir: TempDir,
    store: Arc<OnDiskStore>,
    clock: Arc<ManualClock>,
    accounts: Accounts,
}

fn fixture(open_signup_mode: bool) -> Fixture {
    let dir = TempDir::new().unwrap();
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 7, 1, 12, 0, 0).unwrap()));
    let access = ServerAccessConfig {
        open_access_mode: false,
        open_signup_mode,
    };
    let store = Arc::new(OnDiskStore::open_with_clock(dir.path(), access, clock.clone()).unwrap());
    let accounts = Accounts::new(store.clone(), b"test-secret", clock.clone(), 4).unwrap();
    accounts.bootstrap_admin("root", "rootpw").unwrap();
    Fixture {
        _dir: dir,
        store,
        clock,
        accounts,
    }
}

fn roles(r: &[Role]) -> BTreeSet<Role> {
    r.iter().copied().collect()
}

fn root() -> Requester {
    Requester::user("root", [Role::Admin])
}

#[test]
fn bootstrap_is_idempotent() {
    let f = fixture(false);
    assert!(!f.accounts.bootstrap_admin("root", "other").unwrap());
    assert!(f.accounts.login("root", "rootpw").is_ok());
}

#[test]
fn signup_modes() {
    let closed = fixture(false);
    assert!(matches!(
        closed.accounts.signup("alice", "pw", None, &Requester::Anonymous),
        Err(AuthError::Unauthenticated)
    ));
    let std_user = Requester::user("bob", [Role::StandardUser]);
    assert!(matches!(closed.accounts.signup("alice", "pw", None, &std_user), Err(AuthError::Forbidden(_))));
    let info = closed.accounts.signup("alice", "pw", None, &root()).unwrap();
    assert_eq!(info.roles, roles(&[Role::StandardUser]));

    let open = fixture(true);
    open.accounts.signup("alice", "pw", None, &Requester::Anonymous).unwrap();
    assert!(matches!(
        open.accounts.signup("mallory", "pw", Some(roles(&[Role::Admin])), &Requester::Anonymous),
        Err(AuthError::Forbidden(_))
    ));
    assert!(matches!(
        open.accounts.signup("alice", "pw", None, &Requester::Anonymous),
        Err(AuthError::DuplicateUser(_))
    ));
    assert!(matches!(
        open.accounts.signup("../evil", "pw", None, &Requester::Anonymous),
        Err(AuthError::InvalidInput(_))
    ));
}

#[test]
fn only_admins_grant_admin() {
    let f = fixture(false);
    let ua = Requester::user("ua", [Role::UserAdmin]);
    f.accounts.signup("ua", "pw", Some(roles(&[Role::UserAdmin])), &root()).unwrap();
    assert!(matches!(
        f.accounts.signup("x", "pw", Some(roles(&[Role::Admin])), &ua),
        Err(AuthError::Forbidden(_))
    ));
    f.accounts.signup("x", "pw", Some(roles(&[Role::ContentAdmin])), &ua).unwrap();
    assert!(matches!(
        f.accounts.change_roles("x", roles(&[Role::Admin]), &ua),
        Err(AuthError::Forbidden(_))
    ));
    let info = f.accounts.change_roles("x", roles(&[Role::Admin, Role::StandardUser]), &root()).unwrap();
    assert!(info.roles.contains(&Role::Admin));
}

#[test]
fn last_admin_cannot_be_removed() {
    let f = fixture(false);
    assert!(matches!(
        f.accounts.change_roles("root", roles(&[Role::StandardUser]), &root()),
        Err(AuthError::LastAdmin)
    ));
    assert!(matches!(f.accounts.delete_user("root", &root()), Err(AuthError::LastAdmin)));
    f.accounts.signup("root2", "pw", Some(roles(&[Role::Admin])), &root()).unwrap();
    f.accounts.delete_user("root", &root()).unwrap();
}

#[test]
fn login_failures_are_indistinguishable() {
    let f = fixture(false);
    let wrong = f.accounts.login("root", "nope").unwrap_err();
    let unknown = f.accounts.login("ghost", "nope").unwrap_err();
    assert_eq!(wrong.to_string(), unknown.to_string());
    assert!(matches!(wrong, AuthError::InvalidCredentials));
    assert!(matches!(unknown, AuthError::InvalidCredentials));
}

#[test]
fn tokens_expire_and_refresh() {
    let f = fixture(false);
    let pair = f.accounts.login("root", "rootpw").unwrap();
    assert_eq!(f.accounts.authenticate(&pair.access_token).unwrap(), root());
    assert!(matches!(
        f.accounts.authenticate(&pair.refresh_token),
        Err(AuthError::Token(TokenError::WrongKind { .. }))
    ));
    f.clock.advance(Duration::minutes(61));
    assert!(matches!(
        f.accounts.authenticate(&pair.access_token),
        Err(AuthError::Token(TokenError::Expired))
    ));
    let fresh = f.accounts.refresh(&pair.refresh_token).unwrap();
    assert!(f.accounts.authenticate(&fresh.access_token).is_ok());
    assert!(f.accounts.refresh(&pair.access_token).is_err());
    f.clock.advance(Duration::days(31));
    assert!(matches!(
        f.accounts.refresh(&pair.refresh_token),
        Err(AuthError::Token(TokenError::Expired))
    ));
}

#[test]
fn role_changes_apply_to_outstanding_tokens() {
    let f = fixture(false);
    f.accounts.signup("alice", "pw", None, &root()).unwrap();
    let pair = f.accounts.login("alice", "pw").unwrap();
    f.accounts.change_roles("alice", roles(&[Role::ContentAdmin]), &root()).unwrap();
    let who = f.accounts.authenticate(&pair.access_token).unwrap();
    assert_eq!(who.roles().collect::<Vec<_>>(), vec![Role::ContentAdmin]);
    f.accounts.delete_user("alice", &root()).unwrap();
    assert!(f.accounts.authenticate(&pair.access_token).is_err());
}

#[test]
fn password_changes() {
    let f = fixture(false);
    f.accounts.signup("alice", "pw", None, &root()).unwrap();
    f.accounts.signup("bob", "pw", None, &root()).unwrap();
    let alice = Requester::user("alice", [Role::StandardUser]);
    f.accounts.change_password("alice", "new", &alice).unwrap();
    assert!(f.accounts.login("alice", "pw").is_err());
    assert!(f.accounts.login("alice", "new").is_ok());
    assert!(matches!(f.accounts.change_password("bob", "x", &alice), Err(AuthError::Forbidden(_))));
    let ua = Requester::user("ua", [Role::UserAdmin]);
    f.accounts.change_password("bob", "reset", &ua).unwrap();
    assert!(f.accounts.login("bob", "reset").is_ok());
}

#[test]
fn stored_hashes_are_salted() {
    let f = fixture(false);
    f.accounts.signup("a", "same", None, &root()).unwrap();
    f.accounts.signup("b", "same", None, &root()).unwrap();
    let ha = f.store.get_user("a").unwrap().unwrap().password_hash;
    let hb = f.store.get_user("b").unwrap().unwrap().password_hash;
    assert_ne!(ha, hb);
    assert!(!ha.contains("same"));
    assert!(verify_password("same", &ha) && verify_password("same", &hb));
}

#[test]
fn user_listing_requires_full_management() {
    let f = fixture(false);
    let names: Vec<String> = f.accounts.list_users(&root()).unwrap().into_iter().map(|u| u.username).collect();
    assert_eq!(names, ["root"]);
    let ca = Requester::user("ca", [Role::ContentAdmin]);
    assert!(matches!(f.accounts.list_users(&ca), Err(AuthError::Forbidden(_))));
    assert!(matches!(f.accounts.list_users(&Requester::Anonymous), Err(AuthError::Unauthenticated)));
    assert_eq!(Accounts::list_roles().len(), 4);
}
