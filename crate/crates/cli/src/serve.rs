use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use stepnav_core::clock::SystemClock;
use stepnav_core::nav::{TriggerMode, DEFAULT_ARM_WINDOW_MS};
use stepnav_core::relay::{RelayConfig, RelayStore, DEFAULT_DEDUPE_WINDOW_MS, DEFAULT_POLL_INTERVAL_MS};
use stepnav_server::{
    relay_router, serve, session_router, spawn_retention, Router, DetectionSource, HttpRelaySource, Pump, PumpConfig,
    SessionDefaults, SessionHub,
};

use crate::error::{read, CliError};

const PURGE_EVERY: Duration = Duration::from_secs(5);

#[derive(Debug, Args)]
pub struct RelayArgs {
    #[arg(long, env = "STEPNAV_LISTEN", default_value = "127.0.0.1:7070")]
    listen: String,
    #[arg(long, env = "STEPNAV_DEDUPE_MS", default_value_t = DEFAULT_DEDUPE_WINDOW_MS)]
    dedupe_ms: u64,
    /// Delivered detections older than this are dropped.
    #[arg(long, env = "STEPNAV_RETENTION_MS", default_value_t = 600_000)]
    retention_ms: u64,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long, env = "STEPNAV_LISTEN", default_value = "127.0.0.1:7071")]
    listen: String,
    /// Remote relay to poll. Without it the relay endpoints are served here too.
    #[arg(long, env = "STEPNAV_RELAY_ADDR")]
    relay_addr: Option<String>,
    #[arg(long, env = "STEPNAV_POLL_MS", default_value_t = DEFAULT_POLL_INTERVAL_MS)]
    poll_ms: u64,
    /// Dedupe window of the embedded relay.
    #[arg(long, env = "STEPNAV_DEDUPE_MS", default_value_t = DEFAULT_DEDUPE_WINDOW_MS)]
    dedupe_ms: u64,
    #[arg(long, env = "STEPNAV_RETENTION_MS", default_value_t = 600_000)]
    retention_ms: u64,
    /// Default for sessions created without one.
    #[arg(long, env = "STEPNAV_TRIGGER_MODE", default_value = "voice_armed")]
    trigger_mode: TriggerMode,
    #[arg(long, env = "STEPNAV_ARM_WINDOW_MS", default_value_t = DEFAULT_ARM_WINDOW_MS)]
    arm_window_ms: u64,
    /// Documents to register at startup, each under its file stem.
    #[arg(long, env = "STEPNAV_DOC", value_delimiter = ',')]
    doc: Vec<PathBuf>,
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(CliError::domain)
}

fn init_tracing() {
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
}

async fn bind(addr: &str) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Domain(format!("cannot listen on {addr}: {e}")))
}

async fn serve_until_interrupted(listener: tokio::net::TcpListener, router: Router) -> Result<(), CliError> {
    serve(listener, router, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(CliError::domain)
}

pub fn relay(args: RelayArgs) -> Result<(), CliError> {
    init_tracing();
    runtime()?.block_on(async {
        let store = Arc::new(RelayStore::new(
            RelayConfig { dedupe_window_ms: args.dedupe_ms },
            Arc::new(SystemClock),
        ));
        spawn_retention(store.clone(), args.retention_ms, PURGE_EVERY);
        let listener = bind(&args.listen).await?;
        eprintln!("relay listening on {}", listener.local_addr().map_err(CliError::domain)?);
        serve_until_interrupted(listener, relay_router(store)).await
    })
}

pub fn session(args: SessionArgs) -> Result<(), CliError> {
    init_tracing();
    if args.poll_ms == 0 {
        return Err(CliError::Usage("--poll-ms must be positive".into()));
    }
    let defaults = SessionDefaults { trigger_mode: args.trigger_mode, arm_window_ms: args.arm_window_ms };
    let hub = Arc::new(SessionHub::with_defaults(Arc::new(SystemClock), defaults));
    for path in &args.doc {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        let id = hub
            .register_document_text(id, &read(path)?)
            .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        eprintln!("registered {} as {id}", path.display());
    }
    runtime()?.block_on(async {
        let mut router = session_router(hub.clone());
        let source: Arc<dyn DetectionSource> = match &args.relay_addr {
            Some(addr) => Arc::new(HttpRelaySource::new(addr)),
            None => {
                let store = Arc::new(RelayStore::new(
                    RelayConfig { dedupe_window_ms: args.dedupe_ms },
                    Arc::new(SystemClock),
                ));
                spawn_retention(store.clone(), args.retention_ms, PURGE_EVERY);
                router = router.merge(relay_router(store.clone()));
                store
            }
        };
        let config = PumpConfig { poll_interval: Duration::from_millis(args.poll_ms), ..PumpConfig::default() };
        Pump::new(hub, source, config).spawn();
        let listener = bind(&args.listen).await?;
        eprintln!("session service listening on {}", listener.local_addr().map_err(CliError::domain)?);
        serve_until_interrupted(listener, router).await
    })
}
