//! HTTP JSON API over a cached dataset, its label CSV and an optional
//! trained model.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | GET | `/api/health` | liveness and what is loaded |
//! | GET | `/api/dataset/info` | counts, class names, label statistics |
//! | GET | `/api/sequence?clip=&start=&len=` | raw frames of one window |
//! | GET | `/api/labels?clip=` | stored label records |
//! | POST | `/api/label` | store a manual label |
//! | POST | `/api/generate` | conditional generation |
//!
//! Every response body is a JSON object carrying `schema_version`.

mod api;
mod config;
mod state;

use std::sync::Arc;

use effort_core::{Error, Result};
use tokio::net::TcpListener;

pub use api::{router, SCHEMA_VERSION};
pub use config::{ServiceConfig, ENV_PREFIX};
pub use state::{LabelWriter, LoadedDataset, LoadedModel, SessionState};

/// Serves `state` on an already bound listener until the task is dropped.
pub async fn serve_on(listener: TcpListener, state: SessionState) -> Result<()> {
    let app = router(Arc::new(state));
    axum::serve(listener, app)
        .await
        .map_err(|e| Error::Io {
            path: "<http listener>".into(),
            source: e,
        })
}

/// Loads `config` and serves it on `host:port`.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = SessionState::open(config)?;
    let listener = TcpListener::bind(&addr).await.map_err(|e| Error::io(addr.as_str(), e))?;
    serve_on(listener, state).await
}
