use std::sync::Arc;

use tupli_core::auth::{Accounts, ServerAccessConfig};
use tupli_core::StorageBackend;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<dyn StorageBackend>,
    pub accounts: Arc<Accounts>,
    pub access: ServerAccessConfig,
}

impl AppState {
    pub fn new(store: Arc<dyn StorageBackend>, accounts: Accounts) -> Self {
        Self {
            access: store.access_config(),
            store,
            accounts: Arc::new(accounts),
        }
    }
}
