use axum::extract::{DefaultBodyLimit, Request};
use axum::http::header::CONTENT_LENGTH;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{on, MethodFilter, MethodRouter};
use axum::Router;
use serde::Serialize;

use crate::error::ApiError;
use crate::handlers as h;
use crate::state::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub summary: &'static str,
}

const fn route(method: &'static str, path: &'static str, summary: &'static str) -> RouteSpec {
    RouteSpec { method, path, summary }
}

/// Every served route. The router is built from this list.
pub const ROUTES: [RouteSpec; 22] = [
    route("POST", "/access/signup", "Create new user account"),
    route("POST", "/access/token", "User login, returns JWT tokens"),
    route("POST", "/access/refresh-token", "Refresh access token"),
    route("GET", "/access/list-users", "List all registered users"),
    route("GET", "/access/list-roles", "List all available roles and permissions"),
    route("PUT", "/access/change-password", "Update the password of a user"),
    route("PUT", "/access/change-roles", "Update the assigned roles of a user"),
    route("DELETE", "/access/delete-user", "Delete user account and associated private data"),
    route("POST", "/benchmarks/create", "Create new benchmark definition"),
    route("GET", "/benchmarks/list", "List all accessible benchmarks"),
    route("GET", "/benchmarks/load", "Retrieve specific benchmark by id"),
    route("PUT", "/benchmarks/publish", "Make a benchmark public"),
    route("DELETE", "/benchmarks/delete", "Delete a specific benchmark"),
    route("POST", "/artifacts/upload", "Upload artifact file with metadata"),
    route("GET", "/artifacts/list", "List all accessible artifacts"),
    route("GET", "/artifacts/download", "Download specific artifact by id"),
    route("PUT", "/artifacts/publish", "Make an artifact public"),
    route("DELETE", "/artifacts/delete", "Delete a specific artifact"),
    route("POST", "/episodes/record", "Create new episode record linked to benchmark"),
    route("GET", "/episodes/list", "List all accessible episodes"),
    route("PUT", "/episodes/publish", "Make an episode public"),
    route("DELETE", "/episodes/delete", "Delete a specific episode"),
];

pub fn route_table() -> &'static [RouteSpec] {
    &ROUTES
}

fn method_filter(method: &str) -> MethodFilter {
    match method {
        "GET" => MethodFilter::GET,
        "POST" => MethodFilter::POST,
        "PUT" => MethodFilter::PUT,
        "DELETE" => MethodFilter::DELETE,
        other => panic!("unsupported method {other} in route table"),
    }
}

fn handler(spec: &RouteSpec) -> MethodRouter<AppState> {
    let f = method_filter(spec.method);
    match spec.path {
        "/access/signup" => on(f, h::signup),
        "/access/token" => on(f, h::token),
        "/access/refresh-token" => on(f, h::refresh_token),
        "/access/list-users" => on(f, h::list_users),
        "/access/list-roles" => on(f, h::list_roles),
        "/access/change-password" => on(f, h::change_password),
        "/access/change-roles" => on(f, h::change_roles),
        "/access/delete-user" => on(f, h::delete_user),
        "/benchmarks/create" => on(f, h::create_benchmark),
        "/benchmarks/list" => on(f, h::list_benchmarks),
        "/benchmarks/load" => on(f, h::load_benchmark),
        "/benchmarks/publish" => on(f, h::publish_benchmark),
        "/benchmarks/delete" => on(f, h::delete_benchmark),
        "/artifacts/upload" => on(f, h::upload_artifact),
        "/artifacts/list" => on(f, h::list_artifacts),
        "/artifacts/download" => on(f, h::download_artifact),
        "/artifacts/publish" => on(f, h::publish_artifact),
        "/artifacts/delete" => on(f, h::delete_artifact),
        "/episodes/record" => on(f, h::record_episode),
        "/episodes/list" => on(f, h::list_episodes),
        "/episodes/publish" => on(f, h::publish_episode),
        "/episodes/delete" => on(f, h::delete_episode),
        other => panic!("no handler for {other}"),
    }
}

pub fn router(state: AppState, max_body_bytes: usize) -> Router {
    ROUTES
        .iter()
        .fold(Router::new(), |r, spec| r.route(spec.path, handler(spec)))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "ROUTE_NOT_FOUND", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "METHOD_NOT_ALLOWED", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .layer(middleware::from_fn(move |req: Request, next: Next| {
            reject_declared_oversize(req, next, max_body_bytes)
        }))
        .with_state(state)
}

/// Oversized bodies up to this size are read and discarded before the 413
/// goes out, so the client is not reset mid-upload.
const LINGER_BYTES: u64 = 4 * 1024 * 1024;

/// Refuses bodies whose declared length exceeds the limit without handing
/// them to a handler. Streamed bodies are still cut off by `DefaultBodyLimit`.
async fn reject_declared_oversize(req: Request, next: Next, limit: usize) -> Response {
    let declared = req
        .headers()
        .get(CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    match declared {
        Some(n) if n > limit as u64 => {
            if n <= LINGER_BYTES {
                let _ = axum::body::to_bytes(req.into_body(), LINGER_BYTES as usize).await;
            }
            ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "PAYLOAD_TOO_LARGE",
                format!("request body of {n} bytes exceeds the {limit} byte limit"),
            )
            .into_response()
        }
        _ => next.run(req).await,
    }
}
