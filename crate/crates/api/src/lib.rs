//! HTTP/JSON service over a [`har_core::platform::Platform`].
//!
//! Every non-2xx response carries an [`ApiError`] body. Imports and training
//! runs return `202 Accepted` with a resource to poll.

mod error;
mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use har_core::platform::{Platform, PlatformConfig, PlatformError};
use thiserror::Error;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use routes::{router, AppState};

/// Environment variable holding the optional shared bearer token.
pub const TOKEN_ENV: &str = "HAR_API_TOKEN";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub store: PathBuf,
    pub bind: String,
    pub dictionary: Option<PathBuf>,
    pub token: Option<String>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the store and binds the listener. The returned server is not yet
/// accepting connections; call [`Server::run`].
pub async fn bind(config: ServerConfig) -> Result<Server, ServeError> {
    let platform_config = PlatformConfig {
        root: config.store.clone(),
        dictionary: config.dictionary.clone(),
    };
    let platform = tokio::task::spawn_blocking(move || Platform::open(platform_config))
        .await
        .expect("open task panicked")?;
    let listener = TcpListener::bind(&config.bind).await.map_err(|source| ServeError::Bind {
        addr: config.bind.clone(),
        source,
    })?;
    Ok(Server {
        listener,
        state: AppState::new(Arc::new(platform), config.token),
    })
}

pub struct Server {
    listener: TcpListener,
    state: AppState,
}

impl Server {
    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then drains in-flight requests.
    pub async fn run(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

/// Binds, prints the listening address and serves until Ctrl-C or SIGTERM.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let server = bind(config).await?;
    println!("listening on http://{}", server.local_addr()?);
    server.run(shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
