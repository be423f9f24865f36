use axum::extract::{FromRequest, FromRequestParts, Query, Request};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::Json;
use serde::de::DeserializeOwned;
use tupli_core::auth::Requester;
use tupli_core::FilterNode;

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

/// Requester behind the `Authorization: Bearer` header; anonymous when the
/// header is absent. A present but invalid token is always rejected.
pub struct Auth(pub Requester);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let Some(value) = parts.headers.get(AUTHORIZATION) else {
            return Ok(Auth(Requester::Anonymous));
        };
        let value = value
            .to_str()
            .map_err(|_| ApiError::unauthorized("malformed Authorization header"))?;
        let token = value
            .split_once(' ')
            .filter(|(scheme, _)| scheme.eq_ignore_ascii_case("bearer"))
            .map(|(_, t)| t.trim())
            .ok_or_else(|| ApiError::unauthorized("expected a Bearer token"))?;
        Ok(Auth(state.accounts.authenticate(token)?))
    }
}

/// An authenticated user. Rejects before any body is parsed, so anonymous
/// calls get 401 rather than a validation error.
pub struct User {
    pub requester: Requester,
    pub username: String,
}

impl FromRequestParts<AppState> for User {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let Auth(requester) = Auth::from_request_parts(parts, state).await?;
        match requester.username().map(str::to_string) {
            Some(username) => Ok(User { requester, username }),
            None => Err(ApiError::unauthorized("authentication required")),
        }
    }
}

/// An authenticated user, or anyone when open access mode is on.
pub struct Reader(pub Requester);

impl FromRequestParts<AppState> for Reader {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        match Auth::from_request_parts(parts, state).await? {
            Auth(Requester::Anonymous) if !state.access.open_access_mode => {
                Err(ApiError::unauthorized("authentication required"))
            }
            Auth(r) => Ok(Reader(r)),
        }
    }
}

/// `Json` with rejections rendered as [`ApiError`].
pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Ok(ApiJson(Json::<T>::from_request(req, state).await?.0))
    }
}

/// `Query` with rejections rendered as [`ApiError`].
pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Ok(ApiQuery(Query::<T>::from_request_parts(parts, state).await?.0))
    }
}

/// Parses a URL-decoded filter parameter.
pub fn filter_param(raw: Option<&str>) -> ApiResult<Option<FilterNode>> {
    raw.filter(|s| !s.trim().is_empty())
        .map(FilterNode::from_json)
        .transpose()
        .map_err(ApiError::from)
}
