use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use lsvt_service::{router, AppState, ServiceConfig, DEFAULT_SYNC_LIMIT};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "lsvt-service", version, about = "HTTP session service for landslide scar tracking")]
struct Args {
    #[arg(long, env = "LSVT_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "LSVT_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "LSVT_DATA_DIR", default_value = "lsvt-data")]
    data_dir: PathBuf,
    /// Base URL of an external segmentation backend (native tracker if unset).
    #[arg(long, env = "LSVT_BACKEND_URL")]
    backend_url: Option<String>,
    /// Sequences longer than this propagate in the background.
    #[arg(long, default_value_t = DEFAULT_SYNC_LIMIT)]
    sync_limit: usize,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = ServiceConfig {
        data_dir: args.data_dir,
        backend_url: args.backend_url.filter(|u| !u.is_empty()),
        sync_limit: args.sync_limit,
    };
    let state = match tokio::task::spawn_blocking(move || AppState::open(config)).await.expect("startup task") {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(3);
        }
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: binding {addr}: {e}");
            std::process::exit(3);
        }
    };
    tracing::info!(%addr, backend = %state.backend.name(), "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
