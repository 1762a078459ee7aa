use std::path::PathBuf;

use clap::Parser;
use rlfd_session::{router, AppState, ServiceConfig};

/// Serves reward-teaching sessions over HTTP.
#[derive(Parser)]
#[command(name = "rlfd-session", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long, env = "RLFD_CONFIG")]
    config: Option<PathBuf>,
    /// Most verbose log level to print.
    #[arg(long, env = "RLFD_LOG", default_value = "info")]
    log_level: tracing::Level,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    let args = Args::parse();
    tracing_subscriber::fmt().with_max_level(args.log_level).init();
    match run(args).await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            std::process::ExitCode::FAILURE
        }
    }
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let config = ServiceConfig::load(args.config.as_deref())?;
    let bind = config.bind;
    let storage = config.storage_dir.clone();
    let state = AppState::open(config).await?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(address = %listener.local_addr()?, storage = %storage.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
