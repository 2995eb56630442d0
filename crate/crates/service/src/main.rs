use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::http::HeaderValue;
use clap::Parser;
use gaitpref::candidates::chat::{
    ChatEndpointConfig, ChatProvider, HttpChatProvider, MockChatProvider, MockFixture,
};
use gaitpref_service::{router, AppState, ServiceConfig};

/// Serve interactive ranking sessions.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,

    #[arg(long, default_value = "127.0.0.1")]
    host: String,

    /// Answer model calls from this fixture instead of a live endpoint.
    #[arg(long, value_name = "FIXTURE")]
    mock_llm: Option<PathBuf>,

    /// JSON chat endpoint config (base_url, model_name, api_key_env_var, ...).
    #[arg(long, value_name = "FILE", conflicts_with = "mock_llm")]
    llm_config: Option<PathBuf>,

    /// Write each session here as JSON after every change, and reload on start.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,

    /// JSON service config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Allowed CORS origin; any origin when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn provider(args: &Args) -> anyhow::Result<Option<Arc<dyn ChatProvider>>> {
    if let Some(path) = &args.mock_llm {
        let fixture = MockFixture::load(path)?;
        return Ok(Some(Arc::new(MockChatProvider::new(Arc::new(fixture)))));
    }
    if let Some(path) = &args.llm_config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let endpoint: ChatEndpointConfig = serde_json::from_str(&text)?;
        return Ok(Some(Arc::new(HttpChatProvider::new(&endpoint)?)));
    }
    Ok(None)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();

    let config = match &args.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => ServiceConfig::default(),
    };
    config.learn.validate()?;
    let llm = provider(&args)?;
    if llm.is_none() {
        tracing::warn!("no model endpoint configured; llm sessions will fail");
    }
    let cors = args
        .cors_origin
        .as_deref()
        .map(HeaderValue::from_str)
        .transpose()
        .context("invalid --cors-origin")?;

    let state = Arc::new(AppState::new(config, llm, args.snapshot_dir.clone()));
    let restored = state.restore()?;
    if restored > 0 {
        tracing::info!(restored, "reloaded session snapshots");
    }

    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state, cors)).await?;
    Ok(())
}
