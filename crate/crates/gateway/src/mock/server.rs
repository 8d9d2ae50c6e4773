//! HTTP front for [`MockBackend`], used by the standalone binary and by
//! integration tests that exercise the real transport.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;

use super::MockBackend;

pub fn router(backend: Arc<MockBackend>) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/embed", post(embed))
        .with_state(backend)
}

async fn generate(State(b): State<Arc<MockBackend>>, body: Bytes) -> Response {
    respond(&b, "/generate", &body)
}

async fn embed(State(b): State<Arc<MockBackend>>, body: Bytes) -> Response {
    respond(&b, "/embed", &body)
}

fn respond(backend: &MockBackend, path: &str, body: &[u8]) -> Response {
    let reply = backend.handle(path, body);
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], reply.body).into_response()
}

pub async fn serve(listener: tokio::net::TcpListener, backend: Arc<MockBackend>) -> std::io::Result<()> {
    axum::serve(listener, router(backend)).await
}

/// A mock server on a background thread, stopped on drop.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `127.0.0.1:0` and serves until the handle is dropped.
pub fn spawn(backend: Arc<MockBackend>) -> std::io::Result<RunningServer> {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener into tokio");
            let _ = axum::serve(listener, router(backend))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
