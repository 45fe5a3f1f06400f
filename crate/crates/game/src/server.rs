//! HTTP front end: `/` serves the client page, `/ws` hosts game sessions.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use hrc_sim::EpisodeConfig;
use tokio::net::TcpListener;
use tokio::time::MissedTickBehavior;

use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::{session_config, Session};

const INDEX_HTML: &str = include_str!("../static/index.html");

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Where finished session logs are written; `None` keeps them in memory only.
    pub log_dir: Option<PathBuf>,
    /// Directory whose `index.html` replaces the built-in page at `/`.
    pub static_dir: Option<PathBuf>,
    /// Settings every session starts from before the client's choices apply.
    pub base: EpisodeConfig,
}

struct AppState {
    cfg: ServerConfig,
    next_id: AtomicU64,
}

pub fn router(cfg: ServerConfig) -> Router {
    let state = Arc::new(AppState { cfg, next_id: AtomicU64::new(1) });
    Router::new().route("/", get(index)).route("/ws", get(upgrade)).with_state(state)
}

pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg)).await
}

async fn index(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    if let Some(dir) = &app.cfg.static_dir {
        if let Ok(page) = std::fs::read_to_string(dir.join("index.html")) {
            return Html(page);
        }
    }
    Html(INDEX_HTML.to_string())
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, app))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

/// Close out a session: persist its log and tell the client how it went.
async fn end(socket: &mut WebSocket, session: Session, app: &AppState) -> bool {
    match session.finish(app.cfg.log_dir.as_deref()) {
        Ok((metrics, _, path)) => {
            if let Some(p) = path {
                tracing::info!(log = %p.display(), "session log written");
            }
            send(socket, &ServerMessage::End { metrics: metrics.to_end() }).await
        }
        Err(e) => send(socket, &ServerMessage::error(e)).await,
    }
}

/// The connection task owns its session and is the only code that ticks it.
async fn connection(mut socket: WebSocket, app: Arc<AppState>) {
    let mut session: Option<Session> = None;
    let mut clock = tokio::time::interval(Duration::from_millis(100));
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if !send(&mut socket, &ServerMessage::error("binary frames are not supported")).await {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match ClientMessage::parse(text.as_str()) {
                    Err(e) => Some(ServerMessage::error(e)),
                    Ok(ClientMessage::Start { .. }) if session.is_some() => {
                        Some(ServerMessage::error("a session is already running"))
                    }
                    Ok(ClientMessage::Start { robot, duration_s, seed }) => {
                        let id = app.next_id.fetch_add(1, Ordering::Relaxed);
                        let cfg = session_config(&app.cfg.base, robot, duration_s, seed);
                        match Session::new(format!("{id:04}-{}-seed{seed}", robot.kind().as_str()), cfg) {
                            Ok(s) => {
                                tracing::info!(id = s.id(), "session started");
                                session = Some(s);
                                clock.reset();
                                None
                            }
                            Err(e) => Some(ServerMessage::error(e)),
                        }
                    }
                    Ok(ClientMessage::Input { x, y, t_ms }) => match session.as_mut() {
                        Some(s) => {
                            s.receive_input(x, y, t_ms);
                            None
                        }
                        None => Some(ServerMessage::error("no session is running")),
                    },
                    Ok(ClientMessage::Abort) => match session.take() {
                        Some(s) => {
                            if !end(&mut socket, s, &app).await {
                                break;
                            }
                            None
                        }
                        None => Some(ServerMessage::error("no session is running")),
                    },
                };
                if let Some(msg) = reply {
                    if !send(&mut socket, &msg).await {
                        break;
                    }
                }
            }
            _ = clock.tick(), if session.is_some() => {
                let Some(s) = session.as_mut() else { continue };
                let started = Instant::now();
                let msg = match s.tick() {
                    Ok(m) => m,
                    Err(e) => {
                        let _ = send(&mut socket, &ServerMessage::error(&e)).await;
                        session = None;
                        continue;
                    }
                };
                let took = started.elapsed();
                if took > Duration::from_millis(100) {
                    tracing::warn!(id = s.id(), ?took, "tick overran its period");
                }
                if !send(&mut socket, &msg).await {
                    break;
                }
                if s.is_done() {
                    let done = session.take().expect("session present");
                    if !end(&mut socket, done, &app).await {
                        break;
                    }
                }
            }
        }
    }
    if let Some(s) = session {
        let id = s.id().to_string();
        if let Err(e) = s.finish(app.cfg.log_dir.as_deref()) {
            tracing::warn!(id, error = %e, "could not persist abandoned session");
        }
    }
}
