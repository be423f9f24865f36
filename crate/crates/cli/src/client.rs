//! Blocking HTTP client for the tupli API.

use std::collections::BTreeSet;
use std::fmt;

use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tupli_core::auth::{RolePermissions, Role, TokenPair, UserInfo};
use tupli_core::dataset::BoxError;
use tupli_core::storage::ObjectKind;
use tupli_core::{
    Artifact, Benchmark, BenchmarkHeader, BenchmarkQuery, Episode, EpisodeHeader, EpisodeRecord,
    EpisodeSource, FilterNode, Metadata,
};

use crate::cache::{Session, TokenCache};

/// Error body returned by the server for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub status: u16,
    pub code: String,
    pub detail: String,
}

impl fmt::Display for ApiErrorBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.status, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{0}")]
    Api(ApiErrorBody),
    #[error("cannot reach {url}: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("token cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api(e) => Some(&e.code),
            _ => None,
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

/// Acknowledgement of a delete or password change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub id: String,
    pub detail: String,
}

pub struct ApiClient {
    base: String,
    http: Client,
    session: Option<Session>,
    cache: Option<TokenCache>,
}

impl ApiClient {
    /// Anonymous client.
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: Client::new(),
            session: None,
            cache: None,
        }
    }

    /// Client that picks up and persists tokens in `cache`. A cached session
    /// for a different server is ignored.
    pub fn with_cache(base_url: &str, cache: TokenCache) -> Self {
        let mut client = Self::new(base_url);
        client.session = cache.load().filter(|s| s.url == client.base);
        client.cache = Some(cache);
        client
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn send(&self, build: &dyn Fn(&Client) -> RequestBuilder, token: Option<&str>) -> ClientResult<Response> {
        let req = build(&self.http);
        let req = match token {
            Some(t) => req.bearer_auth(t),
            None => req,
        };
        req.send().map_err(|source| ClientError::Transport {
            url: self.base.clone(),
            source,
        })
    }

    /// Sends with the cached access token, refreshing it once on 401.
    fn call(&mut self, build: &dyn Fn(&Client) -> RequestBuilder) -> ClientResult<Response> {
        let token = self.session.as_ref().map(|s| s.access_token.clone());
        let resp = self.send(build, token.as_deref())?;
        if resp.status() != StatusCode::UNAUTHORIZED || self.session.is_none() {
            return Ok(resp);
        }
        match self.refresh() {
            Ok(()) => {
                let token = self.session.as_ref().map(|s| s.access_token.clone());
                self.send(build, token.as_deref())
            }
            Err(_) => Ok(resp),
        }
    }

    fn refresh(&mut self) -> ClientResult<()> {
        let Some(session) = self.session.clone() else {
            return Err(ClientError::Decode("not logged in".into()));
        };
        let url = self.url("/access/refresh-token");
        let body = json!({"refresh_token": session.refresh_token});
        let resp = self.send(&|c| c.post(&url).json(&body), None)?;
        let fresh: Value = decode(resp)?;
        let access = fresh["access_token"]
            .as_str()
            .ok_or_else(|| ClientError::Decode("refresh response lacks access_token".into()))?;
        let updated = Session {
            access_token: access.to_string(),
            ..session
        };
        if let Some(cache) = &self.cache {
            cache.store(&updated)?;
        }
        self.session = Some(updated);
        Ok(())
    }

    fn json<T: DeserializeOwned>(&mut self, method: Method, path: &str, body: Option<&Value>, query: &[(&str, String)]) -> ClientResult<T> {
        let url = self.url(path);
        let resp = self.call(&|c| {
            let mut r = c.request(method.clone(), &url).query(query);
            if let Some(b) = body {
                r = r.json(b);
            }
            r
        })?;
        decode(resp)
    }

    // ---- access ----

    pub fn login(&mut self, username: &str, password: &str) -> ClientResult<TokenPair> {
        let url = self.url("/access/token");
        let body = json!({"username": username, "password": password});
        let pair: TokenPair = decode(self.send(&|c| c.post(&url).json(&body), None)?)?;
        let session = Session {
            url: self.base.clone(),
            username: username.to_string(),
            access_token: pair.access_token.clone(),
            refresh_token: pair.refresh_token.clone(),
        };
        if let Some(cache) = &self.cache {
            cache.store(&session)?;
        }
        self.session = Some(session);
        Ok(pair)
    }

    pub fn logout(&mut self) -> ClientResult<()> {
        self.session = None;
        if let Some(cache) = &self.cache {
            cache.clear()?;
        }
        Ok(())
    }

    pub fn signup(&mut self, username: &str, password: &str, roles: Option<&BTreeSet<Role>>) -> ClientResult<UserInfo> {
        let mut body = json!({"username": username, "password": password});
        if let Some(r) = roles {
            body["roles"] = json!(r);
        }
        self.json(Method::POST, "/access/signup", Some(&body), &[])
    }

    pub fn list_users(&mut self) -> ClientResult<Vec<UserInfo>> {
        self.json(Method::GET, "/access/list-users", None, &[])
    }

    pub fn list_roles(&mut self) -> ClientResult<Vec<RolePermissions>> {
        self.json(Method::GET, "/access/list-roles", None, &[])
    }

    pub fn change_password(&mut self, username: Option<&str>, password: &str) -> ClientResult<Ack> {
        let mut body = json!({"password": password});
        if let Some(u) = username {
            body["username"] = json!(u);
        }
        self.json(Method::PUT, "/access/change-password", Some(&body), &[])
    }

    pub fn change_roles(&mut self, username: &str, roles: &BTreeSet<Role>) -> ClientResult<UserInfo> {
        let body = json!({"username": username, "roles": roles});
        self.json(Method::PUT, "/access/change-roles", Some(&body), &[])
    }

    pub fn delete_user(&mut self, username: &str) -> ClientResult<Ack> {
        self.json(Method::DELETE, "/access/delete-user", None, &[("username", username.to_string())])
    }

    // ---- benchmarks ----

    pub fn create_benchmark(&mut self, query: &BenchmarkQuery) -> ClientResult<BenchmarkHeader> {
        let body = serde_json::to_value(query).map_err(|e| ClientError::Decode(e.to_string()))?;
        self.json(Method::POST, "/benchmarks/create", Some(&body), &[])
    }

    pub fn list_benchmarks(&mut self, filter: Option<&FilterNode>) -> ClientResult<Vec<BenchmarkHeader>> {
        self.json(Method::GET, "/benchmarks/list", None, &filter_query("filter", filter))
    }

    pub fn load_benchmark(&mut self, id: &str, owner: Option<&str>) -> ClientResult<Benchmark> {
        self.json(Method::GET, "/benchmarks/load", None, &id_query(id, owner))
    }

    /// Publishes and returns the updated object header as JSON.
    pub fn publish(&mut self, kind: ObjectKind, id: &str, owner: Option<&str>) -> ClientResult<Value> {
        let path = format!("/{}s/publish", kind.as_str());
        self.json(Method::PUT, &path, None, &id_query(id, owner))
    }

    pub fn delete(&mut self, kind: ObjectKind, id: &str, owner: Option<&str>) -> ClientResult<Ack> {
        let path = format!("/{}s/delete", kind.as_str());
        self.json(Method::DELETE, &path, None, &id_query(id, owner))
    }

    // ---- artifacts ----

    /// Returns the stored artifact and whether this call created it.
    pub fn upload_artifact(&mut self, content: &[u8], metadata: &Metadata) -> ClientResult<(Artifact, bool)> {
        let url = self.url("/artifacts/upload");
        let meta = serde_json::to_string(metadata).map_err(|e| ClientError::Decode(e.to_string()))?;
        let resp = self.call(&|c| {
            let form = multipart::Form::new()
                .text("metadata", meta.clone())
                .part("file", multipart::Part::bytes(content.to_vec()).file_name("artifact.bin"));
            c.post(&url).multipart(form)
        })?;
        let created = resp.status() == StatusCode::CREATED;
        Ok((decode(resp)?, created))
    }

    pub fn list_artifacts(&mut self, filter: Option<&FilterNode>) -> ClientResult<Vec<Artifact>> {
        self.json(Method::GET, "/artifacts/list", None, &filter_query("filter", filter))
    }

    pub fn download_artifact(&mut self, id: &str) -> ClientResult<Vec<u8>> {
        let url = self.url("/artifacts/download");
        let query = id_query(id, None);
        let resp = self.call(&|c| c.get(&url).query(&query))?;
        if !resp.status().is_success() {
            return Err(api_error(resp));
        }
        resp.bytes()
            .map(|b| b.to_vec())
            .map_err(|e| ClientError::Decode(e.to_string()))
    }

    // ---- episodes ----

    pub fn record_episode(&mut self, record: &EpisodeRecord) -> ClientResult<EpisodeHeader> {
        let body = serde_json::to_value(record).map_err(|e| ClientError::Decode(e.to_string()))?;
        self.json(Method::POST, "/episodes/record", Some(&body), &[])
    }

    pub fn list_episode_headers(
        &mut self,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> ClientResult<Vec<EpisodeHeader>> {
        let q = episode_query(benchmark_filter, episode_filter, false);
        self.json(Method::GET, "/episodes/list", None, &q)
    }

    pub fn list_episodes(
        &mut self,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> ClientResult<Vec<Episode>> {
        let q = episode_query(benchmark_filter, episode_filter, true);
        self.json(Method::GET, "/episodes/list", None, &q)
    }
}

fn filter_query(name: &'static str, filter: Option<&FilterNode>) -> Vec<(&'static str, String)> {
    filter.map(|f| (name, f.to_json())).into_iter().collect()
}

fn id_query(id: &str, owner: Option<&str>) -> Vec<(&'static str, String)> {
    let mut q = vec![("id", id.to_string())];
    if let Some(o) = owner {
        q.push(("owner", o.to_string()));
    }
    q
}

fn episode_query(bf: Option<&FilterNode>, ef: Option<&FilterNode>, tuples: bool) -> Vec<(&'static str, String)> {
    let mut q = filter_query("benchmark_filter", bf);
    q.extend(filter_query("episode_filter", ef));
    q.push(("include_tuples", tuples.to_string()));
    q
}

fn api_error(resp: Response) -> ClientError {
    let status = resp.status();
    let text = resp.text().unwrap_or_default();
    ClientError::Api(serde_json::from_str(&text).unwrap_or_else(|_| ApiErrorBody {
        status: status.as_u16(),
        code: format!("HTTP_{}", status.as_u16()),
        detail: text,
    }))
}

fn decode<T: DeserializeOwned>(resp: Response) -> ClientResult<T> {
    if !resp.status().is_success() {
        return Err(api_error(resp));
    }
    let text = resp.text().map_err(|e| ClientError::Decode(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e}: {text}")))
}

/// Episodes fetched over HTTP, filtered server-side.
pub struct RemoteSource<'a> {
    client: std::cell::RefCell<&'a mut ApiClient>,
}

impl<'a> RemoteSource<'a> {
    pub fn new(client: &'a mut ApiClient) -> Self {
        Self {
            client: std::cell::RefCell::new(client),
        }
    }
}

impl EpisodeSource for RemoteSource<'_> {
    fn fetch_episodes(
        &self,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> Result<Vec<Episode>, BoxError> {
        Ok(self
            .client
            .borrow_mut()
            .list_episodes(benchmark_filter, episode_filter)?)
    }
}
