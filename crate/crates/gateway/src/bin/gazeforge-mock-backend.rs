use std::sync::Arc;

use clap::Parser;
use gazeforge_gateway::mock::{server, MockBackend};

/// Standalone mock generation backend.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8090)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Answer the first N requests with 503.
    #[arg(long, default_value_t = 0)]
    fail_first: u64,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    eprintln!("mock backend listening on http://{}", listener.local_addr()?);
    server::serve(listener, Arc::new(MockBackend::failing_first(args.fail_first))).await
}
