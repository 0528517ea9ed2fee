use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use prefsearch::McmcConfig;
use prefsearch_gateway::{router, AppState, GatewayConfig};
use tracing_subscriber::EnvFilter;

/// Serves elicitation sessions over HTTP.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, env = "PREFSEARCH_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory of session snapshots; sessions are kept in memory only when unset.
    #[arg(long, env = "PREFSEARCH_SNAPSHOT_DIR")]
    snapshot_dir: Option<PathBuf>,
    /// CORS origin of the UI, `*` for any.
    #[arg(long, env = "PREFSEARCH_ALLOW_ORIGIN", default_value = "*")]
    allow_origin: String,
    #[arg(long, env = "PREFSEARCH_MCMC_CHAINS", default_value_t = 4)]
    mcmc_chains: usize,
    #[arg(long, env = "PREFSEARCH_MCMC_BURN_IN", default_value_t = 1000)]
    mcmc_burn_in: usize,
    #[arg(long, env = "PREFSEARCH_MCMC_KEEP", default_value_t = 1000)]
    mcmc_keep: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = GatewayConfig {
        snapshot_dir: args.snapshot_dir,
        mcmc: McmcConfig {
            chains: args.mcmc_chains,
            burn_in: args.mcmc_burn_in,
            keep: args.mcmc_keep,
            ..McmcConfig::default()
        },
        allow_origin: Some(args.allow_origin),
    };
    let state = AppState::open(&config)?;
    let app = router(state, config.allow_origin.as_deref());
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
