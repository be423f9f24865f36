//! HTTP service for tupli: the 22 JSON endpoints over a storage backend.
//!
//! Conventions:
//! - `Authorization: Bearer <access token>`; a missing header is anonymous.
//! - ids, filters (URL-encoded JSON) and flags travel as query parameters on
//!   GET, PUT and DELETE; creation bodies are JSON, artifact upload is
//!   multipart with parts `metadata` and `file`.
//! - every non-2xx response body is one [`ApiError`].

mod config;
mod error;
mod extract;
pub mod handlers;
mod routes;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use anyhow::Context;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tupli_core::auth::Accounts;
use tupli_core::clock::{Clock, SystemClock};
use tupli_core::OnDiskStore;

pub use config::{ServerConfig, DEFAULT_LISTEN_ADDR, DEFAULT_MAX_BODY_BYTES};
pub use error::{ApiError, ApiResult};
pub use routes::{route_table, RouteSpec, ROUTES};
pub use state::AppState;

/// Opens the store, bootstraps the admin account and assembles the state.
pub fn build(config: &ServerConfig, clock: Arc<dyn Clock>) -> anyhow::Result<(Arc<OnDiskStore>, AppState)> {
    let store = Arc::new(
        OnDiskStore::open_with_clock(&config.storage_root, config.access, clock.clone())
            .with_context(|| format!("opening store at {}", config.storage_root.display()))?,
    );
    let secret: Vec<u8> = match &config.api_secret {
        Some(s) => s.as_bytes().to_vec(),
        None => {
            tracing::warn!("API_SECRET not set; using a random secret, tokens will not survive a restart");
            rand::random::<[u8; 32]>().to_vec()
        }
    };
    let accounts = Accounts::new(store.clone(), &secret, clock, config.bcrypt_cost)?;
    if let (Some(user), Some(pw)) = (&config.admin_username, &config.admin_password) {
        accounts.bootstrap_admin(user, pw)?;
    }
    Ok((store.clone(), AppState::new(store, accounts)))
}

pub fn app(state: AppState, config: &ServerConfig) -> Router {
    routes::router(state, config.max_body_bytes)
}

/// Serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let (_, state) = build(&config, Arc::new(SystemClock))?;
    let listener = TcpListener::bind(config.listen_addr)
        .await
        .with_context(|| format!("binding {}", config.listen_addr))?;
    tracing::info!(
        addr = %listener.local_addr()?,
        open_access = config.access.open_access_mode,
        open_signup = config.access.open_signup_mode,
        "listening"
    );
    axum::serve(listener, app(state, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A server on its own thread and runtime, bound to an ephemeral port.
/// Shuts down when dropped. Meant for tests and embedding.
pub struct BackgroundServer {
    addr: SocketAddr,
    store: Arc<OnDiskStore>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(config: ServerConfig) -> anyhow::Result<Self> {
        Self::start_with_clock(config, Arc::new(SystemClock))
    }

    pub fn start_with_clock(mut config: ServerConfig, clock: Arc<dyn Clock>) -> anyhow::Result<Self> {
        config.listen_addr = SocketAddr::from(([127, 0, 0, 1], 0));
        let (store, state) = build(&config, clock)?;
        let std_listener = std::net::TcpListener::bind(config.listen_addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let router = app(state, &config);
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name(format!("tupli-server-{}", addr.port()))
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()
                    .expect("building server runtime");
                rt.block_on(async move {
                    let listener = TcpListener::from_std(std_listener).expect("adopting listener");
                    let _ = axum::serve(listener, router)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await;
                });
            })?;
        Ok(Self {
            addr,
            store,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Direct handle on the backing store.
    pub fn store(&self) -> &Arc<OnDiskStore> {
        &self.store
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
