// SPDX-License-Identifier: Apache-2.0

//! HTTP+JSON front end. Every session lives in its own task; handlers talk
//! to it through an ordered message queue.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio::sync::oneshot;
use tokio::time::MissedTickBehavior;

use super::session::{Command, CreateSession, FrameView, RunState, ServiceError, Session};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::SessionUnknown(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionFinished => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        (
            status,
            Json(json!({"error": self.code(), "message": self.to_string()})),
        )
            .into_response()
    }
}

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

enum Msg {
    Control(Command, Reply<serde_json::Value>),
    Advise(i64, Reply<u32>),
    Latest(oneshot::Sender<FrameView>),
    Subscribe(oneshot::Sender<UnboundedReceiver<FrameView>>),
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, UnboundedSender<Msg>>>>,
}

impl AppState {
    fn handle(&self, id: &str) -> Result<UnboundedSender<Msg>, ServiceError> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionUnknown(id.to_owned()))
    }

    async fn ask<T>(
        &self,
        id: &str,
        make: impl FnOnce(oneshot::Sender<T>) -> Msg,
    ) -> Result<T, ServiceError> {
        let tx = self.handle(id)?;
        let (reply, rx) = oneshot::channel();
        tx.send(make(reply))
            .map_err(|_| ServiceError::SessionUnknown(id.to_owned()))?;
        rx.await
            .map_err(|_| ServiceError::SessionUnknown(id.to_owned()))
    }
}

fn ack(s: &Session, command: Command) -> serde_json::Value {
    let f = s.latest();
    json!({"command": command, "run_state": s.run_state(), "episode": f.episode, "step": f.step})
}

async fn session_loop(mut session: Session, mut inbox: UnboundedReceiver<Msg>) {
    let period = Duration::from_millis(session.step_period_ms());
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        let running = session.run_state() == RunState::Running;
        tokio::select! {
            biased;
            msg = inbox.recv() => match msg {
                None => return,
                Some(Msg::Control(cmd, reply)) => {
                    let was_running = running;
                    let r = session.control(cmd).map(|()| ack(&session, cmd));
                    if !was_running && session.run_state() == RunState::Running {
                        ticker.reset();
                    }
                    let _ = reply.send(r);
                }
                Some(Msg::Advise(action, reply)) => {
                    let _ = reply.send(session.advise(action));
                }
                Some(Msg::Latest(reply)) => {
                    let _ = reply.send(session.latest());
                }
                Some(Msg::Subscribe(reply)) => {
                    let _ = reply.send(session.subscribe());
                }
            },
            _ = ticker.tick(), if running => {
                // a failing step leaves the session paused rather than spinning
                if session.step().is_err() && session.run_state() == RunState::Running {
                    let _ = session.control(Command::Pause);
                }
            }
        }
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn create(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ServiceError> {
    let raw: serde_json::Value = parse(&body)?;
    // an unknown environment is reported as such even when other fields are off
    match raw.get("environment").and_then(|v| v.as_str()) {
        Some(env) if crate::config::EnvironmentId::parse(env).is_none() => {
            return Err(ServiceError::EnvUnknown(env.to_owned()));
        }
        _ => {}
    }
    let req: CreateSession =
        serde_json::from_value(raw).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = tokio::task::spawn_blocking({
        let id = id.clone();
        move || Session::new(id, &req)
    })
    .await
    .map_err(|e| ServiceError::BadRequest(e.to_string()))??;
    let (tx, rx) = unbounded_channel();
    tokio::spawn(session_loop(session, rx));
    app.sessions
        .lock()
        .expect("session table poisoned")
        .insert(id.clone(), tx);
    Ok(Json(json!({"session_id": id})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlBody {
    command: Command,
}

async fn control(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ServiceError> {
    app.handle(&id)?;
    let ControlBody { command } = parse(&body)?;
    app.ask(&id, |r| Msg::Control(command, r)).await?.map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdviceBody {
    action: i64,
}

async fn advise(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ServiceError> {
    app.handle(&id)?;
    let AdviceBody { action } = parse(&body)?;
    let step = app.ask(&id, |r| Msg::Advise(action, r)).await??;
    Ok(Json(json!({"applied_at_step": step})))
}

async fn latest(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<FrameView>, ServiceError> {
    app.ask(&id, Msg::Latest).await.map(Json)
}

async fn frames(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    let rx = app.ask(&id, Msg::Subscribe).await?;
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let frame = rx.recv().await?;
        let mut line = serde_json::to_vec(&frame).expect("frames serialize");
        line.push(b'\n');
        Some((Ok::<_, std::convert::Infallible>(Bytes::from(line)), rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(latest))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/advice", post(advise))
        .route("/sessions/{id}/frames", get(frames))
        .with_state(app)
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::default()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
