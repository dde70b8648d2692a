use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Json};
use axum::routing::any;
use axum::Router;
use tower_http::services::ServeDir;

use crate::Service;

/// Every API path pattern; anything else falls through to the static UI.
pub const ROUTES: &[&str] = &[
    "/health",
    "/schema",
    "/session",
    "/corpus/load",
    "/summary",
    "/cohort",
    "/cohort/filter",
    "/cohort/channels",
    "/projection",
    "/patient/{id}/timeline",
    "/patient/{id}/timeline/{lane}/{index}",
    "/select/lasso",
    "/select/clear",
    "/features",
    "/sampling",
    "/model/train",
    "/model/{round}/status",
    "/model/{round}/view",
    "/model/{round}/shap",
    "/logs",
    "/logs/{id}",
];

/// Corpus uploads can be large.
const BODY_LIMIT: usize = 1 << 30;

async fn handle(State(service): State<Arc<Service>>, method: Method, uri: Uri, body: Bytes) -> impl IntoResponse {
    let path = uri.path().to_string();
    let result = tokio::task::spawn_blocking(move || service.dispatch(method.as_str(), &path, &body)).await;
    match result {
        Ok(r) => (StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), Json(r.body)),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(serde_json::json!({ "error": { "code": "Internal", "message": e.to_string() } })),
        ),
    }
}

pub fn router(service: Arc<Service>) -> Router {
    let ui_dir = service.config().ui_dir.clone();
    let mut app = Router::new();
    for route in ROUTES {
        app = app.route(route, any(handle));
    }
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(handle),
    };
    app.layer(DefaultBodyLimit::max(BODY_LIMIT)).with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(service: Arc<Service>) -> std::io::Result<()> {
    let addr: SocketAddr = format!("{}:{}", service.config().host, service.config().port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
