//! HTTP front of the session manager.
//!
//! POST /sessions, GET /sessions, GET /sessions/{id},
//! GET /sessions/{id}/events (server-sent events, resumable),
//! POST /sessions/{id}/respond.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use rca_core::service::{Response, ServiceError, SessionEvent, SessionManager, SessionRequest};
use serde::Deserialize;
use serde_json::json;

type Shared = Arc<SessionManager>;

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(get_one))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/respond", post(respond))
        .with_state(manager)
}

pub async fn serve(listener: tokio::net::TcpListener, manager: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(manager)).await
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> HttpResponse {
        let (status, body) = match &self.0 {
            ServiceError::UnknownSession(_) | ServiceError::UnknownIncident(_) => {
                (StatusCode::NOT_FOUND, json!({ "error": self.0.to_string() }))
            }
            ServiceError::StateMismatch { state, .. } => {
                (StatusCode::CONFLICT, json!({ "error": self.0.to_string(), "state": state }))
            }
            ServiceError::Invalid(_) => (StatusCode::BAD_REQUEST, json!({ "error": self.0.to_string() })),
            ServiceError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": self.0.to_string() })),
        };
        (status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

async fn create(State(m): State<Shared>, Json(req): Json<SessionRequest>) -> Result<impl IntoResponse, ApiError> {
    let id = m.create(req)?;
    Ok((StatusCode::CREATED, Json(m.get(&id)?)))
}

async fn list(State(m): State<Shared>) -> impl IntoResponse {
    Json(m.list())
}

async fn get_one(State(m): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.get(&id)?))
}

async fn respond(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Json(action): Json<Response>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.respond(&id, action)?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    /// false: send what exists and close
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

fn to_sse(e: &SessionEvent) -> Event {
    let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    Event::default().id(e.seq.to_string()).event(kind).json_data(e).expect("event serializes")
}

struct Cursor {
    manager: Shared,
    id: String,
    after: u64,
    queue: VecDeque<SessionEvent>,
    done: bool,
    follow: bool,
}

async fn events(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    // a reconnecting EventSource sends the last id it saw
    let after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(q.after);
    let first = m.events_after(&id, after)?;
    let cursor = Cursor {
        manager: m,
        id,
        after,
        queue: first.events.into(),
        done: first.done || !q.follow,
        follow: q.follow,
    };
    let s = stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(e) = c.queue.pop_front() {
                c.after = e.seq;
                let ev = to_sse(&e);
                return Some((Ok(ev), c));
            }
            if c.done || !c.follow {
                return None;
            }
            let (m, id, after) = (c.manager.clone(), c.id.clone(), c.after);
            let batch = tokio::task::spawn_blocking(move || m.wait_events(&id, after, Duration::from_secs(15))).await;
            match batch {
                Ok(Ok(b)) => {
                    c.done = b.done;
                    c.queue.extend(b.events);
                }
                _ => return None,
            }
        }
    });
    Ok(Sse::new(s).keep_alive(KeepAlive::default()))
}
