use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use har_api::{serve, ServerConfig, TOKEN_ENV};

/// Serves a platform store over HTTP.
#[derive(Parser)]
#[command(name = "har-server", version)]
struct Args {
    /// Store directory; created if missing.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Canonical label dictionary (TOML) used to seed a new store.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long, env = TOKEN_ENV, hide_env_values = true)]
    token: Option<String>,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let config = ServerConfig {
        store: args.store,
        bind: args.bind,
        dictionary: args.dictionary,
        token: args.token,
    };
    match serve(config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("har-server: {e}");
            ExitCode::FAILURE
        }
    }
}
