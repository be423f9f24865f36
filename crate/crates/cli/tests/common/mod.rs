#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value;
use tempfile::TempDir;
use tupli_core::auth::ServerAccessConfig;
use tupli_core::clock::Clock;
use tupli_server::{BackgroundServer, ServerConfig};

pub const ROOT: &str = "root";
pub const ROOT_PW: &str = "rootpw";

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stdout: {}\nstderr: {}", self.stdout, self.stderr);
        self
    }

    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

/// A live server plus a scratch directory for token caches and files.
pub struct Env {
    pub dir: TempDir,
    pub server: BackgroundServer,
}

pub fn config(dir: &Path, access: ServerAccessConfig) -> ServerConfig {
    let mut config = ServerConfig::new(dir.join("store"));
    config.access = access;
    config.api_secret = Some("cli-test-secret".into());
    config.admin_username = Some(ROOT.into());
    config.admin_password = Some(ROOT_PW.into());
    config.bcrypt_cost = 4;
    config
}

impl Env {
    pub fn start() -> Self {
        Self::start_with(ServerAccessConfig::default())
    }

    pub fn start_with(access: ServerAccessConfig) -> Self {
        let dir = TempDir::new().unwrap();
        let server = BackgroundServer::start(config(dir.path(), access)).unwrap();
        Self { dir, server }
    }

    pub fn start_with_clock(clock: Arc<dyn Clock>) -> Self {
        let dir = TempDir::new().unwrap();
        let server =
            BackgroundServer::start_with_clock(config(dir.path(), ServerAccessConfig::default()), clock).unwrap();
        Self { dir, server }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn cache(&self, who: &str) -> PathBuf {
        self.path(&format!("cache-{who}.json"))
    }

    /// Runs `tupli` in-process with `who`'s token cache.
    pub fn tupli(&self, who: &str, args: &[&str]) -> Outcome {
        let url = self.server.url();
        let cache = self.cache(who);
        let mut argv: Vec<String> = vec![
            "tupli".into(),
            "--url".into(),
            url,
            "--token-cache".into(),
            cache.to_string_lossy().into_owned(),
        ];
        argv.extend(args.iter().map(|s| s.to_string()));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = tupli_cli::run(argv, &mut out, &mut err);
        Outcome {
            code,
            stdout: String::from_utf8(out).unwrap(),
            stderr: String::from_utf8(err).unwrap(),
        }
    }

    pub fn login(&self, who: &str, password: &str) {
        self.tupli(who, &["login", "--username", who, "--password", password]).ok();
    }

    /// Root creates `name` with `roles` (password "pw") and `name` logs in.
    pub fn user(&self, name: &str, roles: &[&str]) {
        if !self.cache(ROOT).exists() {
            self.login(ROOT, ROOT_PW);
        }
        let mut args = vec!["user", "signup", "--username", name, "--password", "pw"];
        for r in roles {
            args.extend(["--role", r]);
        }
        self.tupli(ROOT, &args).ok();
        self.login(name, "pw");
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, contents).unwrap();
        path
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
