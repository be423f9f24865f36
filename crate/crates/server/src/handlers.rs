//! Request handlers. Storage and password hashing block, so every handler
//! moves its work onto the blocking pool.

use std::collections::BTreeSet;

use axum::body::Bytes;
use axum::extract::{Multipart, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use tupli_core::auth::{Accounts, Role};
use tupli_core::{BenchmarkQuery, EpisodeRecord, Locator, Metadata, ObjectKind};

use crate::error::{ApiError, ApiResult};
use crate::extract::{filter_param, ApiJson, ApiQuery, Auth, Reader, User};
use crate::state::AppState;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Acknowledgement for mutations that return no object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub id: String,
    pub detail: String,
}

impl Ack {
    fn new(id: impl Into<String>, detail: impl Into<String>) -> Json<Self> {
        Json(Self {
            id: id.into(),
            detail: detail.into(),
        })
    }
}

#[derive(Debug, Deserialize)]
pub struct SignupRequest {
    pub username: String,
    pub password: String,
    #[serde(default)]
    pub roles: Option<BTreeSet<Role>>,
}

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Deserialize)]
pub struct RefreshRequest {
    pub refresh_token: String,
}

#[derive(Debug, Deserialize)]
pub struct ChangePasswordRequest {
    /// Defaults to the requester.
    #[serde(default)]
    pub username: Option<String>,
    pub password: String,
}

#[derive(Debug, Deserialize)]
pub struct ChangeRolesRequest {
    pub username: String,
    pub roles: BTreeSet<Role>,
}

#[derive(Debug, Deserialize)]
pub struct UserQuery {
    pub username: String,
}

#[derive(Debug, Deserialize)]
pub struct IdQuery {
    pub id: String,
    /// Selects one copy of a benchmark hash held by several users.
    #[serde(default)]
    pub owner: Option<String>,
}

impl IdQuery {
    fn locator(self) -> Locator {
        Locator {
            id: self.id,
            owner: self.owner,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct FilterQuery {
    #[serde(default)]
    pub filter: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct EpisodeListQuery {
    #[serde(default)]
    pub benchmark_filter: Option<String>,
    #[serde(default)]
    pub episode_filter: Option<String>,
    /// Alias of `episode_filter`.
    #[serde(default)]
    pub filter: Option<String>,
    #[serde(default)]
    pub include_tuples: bool,
}

// ---- access ----

pub async fn signup(
    State(st): State<AppState>,
    auth: Auth,
    ApiJson(req): ApiJson<SignupRequest>,
) -> ApiResult<impl IntoResponse> {
    let info = blocking(move || {
        Ok(st.accounts.signup(&req.username, &req.password, req.roles, &auth.0)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)))
}

pub async fn token(State(st): State<AppState>, ApiJson(req): ApiJson<LoginRequest>) -> ApiResult<impl IntoResponse> {
    let pair = blocking(move || Ok(st.accounts.login(&req.username, &req.password)?)).await?;
    Ok(Json(pair))
}

pub async fn refresh_token(
    State(st): State<AppState>,
    ApiJson(req): ApiJson<RefreshRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.accounts.refresh(&req.refresh_token)?))
}

pub async fn list_users(State(st): State<AppState>, auth: Auth) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.accounts.list_users(&auth.0)?))
}

pub async fn list_roles(_: Reader) -> ApiResult<impl IntoResponse> {
    Ok(Json(Accounts::list_roles()))
}

pub async fn change_password(
    State(st): State<AppState>,
    User { requester, username }: User,
    ApiJson(req): ApiJson<ChangePasswordRequest>,
) -> ApiResult<impl IntoResponse> {
    let target = req.username.unwrap_or(username);
    blocking(move || {
        st.accounts.change_password(&target, &req.password, &requester)?;
        Ok(Ack::new(target, "password updated"))
    })
    .await
}

pub async fn change_roles(
    State(st): State<AppState>,
    User { requester, .. }: User,
    ApiJson(req): ApiJson<ChangeRolesRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.accounts.change_roles(&req.username, req.roles, &requester)?))
}

pub async fn delete_user(
    State(st): State<AppState>,
    User { requester, .. }: User,
    ApiQuery(q): ApiQuery<UserQuery>,
) -> ApiResult<impl IntoResponse> {
    blocking(move || {
        st.accounts.delete_user(&q.username, &requester)?;
        Ok(Ack::new(q.username, "user and private data deleted"))
    })
    .await
}

// ---- benchmarks ----

pub async fn create_benchmark(
    State(st): State<AppState>,
    User { username: owner, .. }: User,
    ApiJson(query): ApiJson<BenchmarkQuery>,
) -> ApiResult<impl IntoResponse> {
    let b = blocking(move || Ok(st.store.put_benchmark(query, &owner)?)).await?;
    Ok((StatusCode::CREATED, Json(b.header())))
}

pub async fn list_benchmarks(
    State(st): State<AppState>,
    Reader(requester): Reader,
    ApiQuery(q): ApiQuery<FilterQuery>,
) -> ApiResult<impl IntoResponse> {
    let filter = filter_param(q.filter.as_deref())?;
    blocking(move || {
        let list = st.store.list_benchmarks(&requester, filter.as_ref())?;
        Ok(Json(list.iter().map(|b| b.header()).collect::<Vec<_>>()))
    })
    .await
}

pub async fn load_benchmark(
    State(st): State<AppState>,
    Reader(requester): Reader,
    ApiQuery(q): ApiQuery<IdQuery>,
) -> ApiResult<impl IntoResponse> {
    blocking(move || Ok(Json(st.store.load_benchmark(&q.locator(), &requester)?))).await
}

async fn publish(st: AppState, User { requester, .. }: User, kind: ObjectKind, q: IdQuery) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.store.publish(kind, &q.locator(), &requester)?).into_response())).await
}

async fn delete(st: AppState, User { requester, .. }: User, kind: ObjectKind, q: IdQuery) -> ApiResult<Response> {
    blocking(move || {
        let id = q.id.clone();
        st.store.delete(kind, &q.locator(), &requester)?;
        Ok(Ack::new(id, format!("{} deleted", kind.as_str())).into_response())
    })
    .await
}

pub async fn publish_benchmark(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    publish(st, user, ObjectKind::Benchmark, q).await
}

pub async fn delete_benchmark(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    delete(st, user, ObjectKind::Benchmark, q).await
}

// ---- artifacts ----

/// Multipart parts: `file` (required, raw bytes) and `metadata` (optional
/// JSON object).
pub async fn upload_artifact(
    State(st): State<AppState>,
    User { username: owner, .. }: User,
    mut form: Multipart,
) -> ApiResult<impl IntoResponse> {
    let mut metadata = Metadata::new();
    let mut content: Option<Bytes> = None;
    while let Some(field) = form.next_field().await? {
        match field.name() {
            Some("metadata") => {
                let text = field.text().await?;
                if !text.trim().is_empty() {
                    metadata = serde_json::from_str(&text)
                        .map_err(|e| ApiError::validation(format!("metadata must be a JSON object: {e}")))?;
                }
            }
            Some("file") => content = Some(field.bytes().await?),
            other => {
                return Err(ApiError::validation(format!(
                    "unexpected multipart field {:?}",
                    other.unwrap_or("")
                )))
            }
        }
    }
    let content = content.ok_or_else(|| ApiError::validation("multipart field `file` is required"))?;
    let put = blocking(move || Ok(st.store.put_artifact(&content, metadata, &owner)?)).await?;
    let status = if put.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(put.artifact)))
}

pub async fn list_artifacts(
    State(st): State<AppState>,
    Reader(requester): Reader,
    ApiQuery(q): ApiQuery<FilterQuery>,
) -> ApiResult<impl IntoResponse> {
    let filter = filter_param(q.filter.as_deref())?;
    blocking(move || Ok(Json(st.store.list_artifacts(&requester, filter.as_ref())?))).await
}

pub async fn download_artifact(
    State(st): State<AppState>,
    Reader(requester): Reader,
    ApiQuery(q): ApiQuery<IdQuery>,
) -> ApiResult<impl IntoResponse> {
    let (artifact, bytes) = blocking(move || Ok(st.store.read_artifact(&q.id, &requester)?)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{}.bin\"", artifact.id),
            ),
        ],
        bytes,
    ))
}

pub async fn publish_artifact(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    publish(st, user, ObjectKind::Artifact, q).await
}

pub async fn delete_artifact(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    delete(st, user, ObjectKind::Artifact, q).await
}

// ---- episodes ----

pub async fn record_episode(
    State(st): State<AppState>,
    User { username: owner, .. }: User,
    ApiJson(record): ApiJson<EpisodeRecord>,
) -> ApiResult<impl IntoResponse> {
    let e = blocking(move || Ok(st.store.put_episode(record, &owner)?)).await?;
    Ok((StatusCode::CREATED, Json(e.header())))
}

pub async fn list_episodes(
    State(st): State<AppState>,
    Reader(requester): Reader,
    ApiQuery(q): ApiQuery<EpisodeListQuery>,
) -> ApiResult<Response> {
    if q.filter.is_some() && q.episode_filter.is_some() {
        return Err(ApiError::validation("pass either `filter` or `episode_filter`, not both"));
    }
    let benchmark_filter = filter_param(q.benchmark_filter.as_deref())?;
    let episode_filter = filter_param(q.episode_filter.as_deref().or(q.filter.as_deref()))?;
    blocking(move || {
        let episodes = st
            .store
            .list_episodes(&requester, benchmark_filter.as_ref(), episode_filter.as_ref())?;
        Ok(if q.include_tuples {
            Json(episodes).into_response()
        } else {
            Json(episodes.iter().map(|e| e.header()).collect::<Vec<_>>()).into_response()
        })
    })
    .await
}

pub async fn publish_episode(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    publish(st, user, ObjectKind::Episode, q).await
}

pub async fn delete_episode(State(st): State<AppState>, user: User, ApiQuery(q): ApiQuery<IdQuery>) -> ApiResult<Response> {
    delete(st, user, ObjectKind::Episode, q).await
}
