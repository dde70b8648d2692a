//! HTTP service binding the cohortloop engines into one analyst session.
//!
//! [`Service::dispatch`] holds all routing and is usable without a socket;
//! [`server`] wraps it in axum and serves the web UI.

pub mod clock;
pub mod config;
pub mod error;
pub mod lasso;
pub mod server;
mod service;

use serde_json::Value;

pub use clock::{Clock, FixedClock, SystemClock};
pub use config::ServiceConfig;
pub use error::ApiError;
pub use service::{ProjectionState, Response, Service};

const API_DOC: &str = include_str!("../../../docs/api.md");
const SCHEMA_BEGIN: &str = "<!-- schema:begin -->";

/// Response schema published in `docs/api.md`: the JSON block following
/// the `schema:begin` marker.
pub fn api_schema() -> Value {
    let rest = &API_DOC[API_DOC.find(SCHEMA_BEGIN).expect("schema marker in api.md") + SCHEMA_BEGIN.len()..];
    let start = rest.find("```json").expect("json fence") + "```json".len();
    let end = start + rest[start..].find("```").expect("closing fence");
    serde_json::from_str(&rest[start..end]).expect("api.md schema is valid JSON")
}
