// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, HeaderValue, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pasco::sss::wire::{AuthHeaders, HDR_FINGERPRINT, HDR_NONCE, HDR_SERVER_SIGNATURE, HDR_SIGNATURE, HDR_TIMESTAMP};
use pasco::sss::{Method, Request, Response, SssService};
use pasco::{Error, Result};
use tokio::sync::oneshot;

/// Routes every request through [`SssService::handle`].
pub fn router(service: Arc<SssService>) -> Router {
    Router::new().fallback(handle).with_state(service)
}

fn method(m: &HttpMethod) -> Option<Method> {
    Method::parse(m.as_str()).ok()
}

async fn handle(
    State(service): State<Arc<SssService>>,
    http_method: HttpMethod,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResponse {
    let Some(method) = method(&http_method) else {
        return StatusCode::METHOD_NOT_ALLOWED.into_response();
    };
    let any_auth = [HDR_FINGERPRINT, HDR_NONCE, HDR_TIMESTAMP, HDR_SIGNATURE]
        .iter()
        .any(|h| headers.contains_key(*h));
    let auth = if any_auth {
        match AuthHeaders::from_lookup(|name| headers.get(name).and_then(|v| v.to_str().ok())) {
            Ok(a) => Some(a),
            Err(e) => return to_http(Response::error(&e)),
        }
    } else {
        None
    };
    let path = uri.path_and_query().map(|p| p.as_str()).unwrap_or("/").to_string();
    let request = Request {
        method,
        path,
        auth,
        body: body.to_vec(),
    };
    // Handling may persist a snapshot, so keep it off the async workers.
    match tokio::task::spawn_blocking(move || service.handle(&request)).await {
        Ok(resp) => to_http(resp),
        Err(e) => {
            log::error!("request handler failed: {e}");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

fn to_http(resp: Response) -> HttpResponse {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = (status, resp.body).into_response();
    let headers = out.headers_mut();
    headers.insert("content-type", HeaderValue::from_static("application/json"));
    if let Some(sig) = resp.signature {
        if let Ok(v) = HeaderValue::from_str(&STANDARD.encode(sig)) {
            headers.insert(HDR_SERVER_SIGNATURE, v);
        }
    }
    out
}

/// A server running on its own thread. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `addr` and serves `service` until [`ServerHandle::stop`].
    pub fn spawn(service: Arc<SssService>, addr: SocketAddr) -> Result<ServerHandle> {
        let io = |e: std::io::Error| Error::Transport(format!("cannot serve on {addr}: {e}"));
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(io)?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr)).map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name(format!("sss-{addr}"))
            .spawn(move || {
                runtime.block_on(async move {
                    let server = axum::serve(listener, router(service)).with_graceful_shutdown(async {
                        let _ = rx.await;
                    });
                    if let Err(e) = server.await {
                        log::error!("server on {addr} failed: {e}");
                    }
                });
                runtime.shutdown_background();
            })
            .map_err(io)?;
        log::info!("serving on http://{addr}");
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
