//! Websocket bridge for the teleoperation console.
//!
//! `GET /ws` streams HPS1 `Snapshot` frames and accepts `TeleopCmd` frames,
//! one binary message per frame. `POST /episodes` saves an uploaded
//! recording into the dataset. `GET /status` reports loop timing.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::broadcast;

use evswitch::data::DataError;
use evswitch::sim::CameraConfig;
use evswitch::teleop::{decode_cmd, encode_snapshot, run_teleop_loop, save_upload, EpisodeUpload, TeleopCmd, TeleopSession, TeleopSnapshot};
use evswitch::transport::payload::encode_error;
use evswitch::transport::{decode_frame, encode_frame, Frame, FrameType, DEFAULT_MAX_PAYLOAD};
use evswitch::{Instruction, SceneConfig};

const PERIOD_WINDOW: usize = 50;
const MAX_UPLOAD: usize = 512 << 20;

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub instruction: Instruction,
    pub seed: u64,
    /// Where `POST /episodes` writes.
    pub dataset: PathBuf,
    pub realtime: bool,
}

#[derive(Debug, Clone)]
enum Outgoing {
    Snapshot(Box<TeleopSnapshot>),
    Error(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Status {
    pub ticks: u64,
    /// Mean of the most recent tick periods.
    pub mean_period_ms: f64,
    pub clients: u64,
    pub rejected_frames: u64,
}

#[derive(Default)]
struct Stats {
    ticks: u64,
    last: Option<Instant>,
    periods: VecDeque<Duration>,
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<TeleopCmd>,
    out: broadcast::Sender<Outgoing>,
    stats: Arc<Mutex<Stats>>,
    clients: Arc<AtomicU64>,
    rejected: Arc<AtomicU64>,
    dataset: Arc<PathBuf>,
    hand: Arc<evswitch::types::HandModel>,
}

impl AppState {
    fn status(&self) -> Status {
        let s = self.stats.lock().unwrap();
        let mean = if s.periods.is_empty() {
            0.0
        } else {
            s.periods.iter().map(|d| d.as_secs_f64()).sum::<f64>() / s.periods.len() as f64 * 1e3
        };
        Status {
            ticks: s.ticks,
            mean_period_ms: mean,
            clients: self.clients.load(Ordering::SeqCst),
            rejected_frames: self.rejected.load(Ordering::SeqCst),
        }
    }
}

/// A running teleop session and the routes that expose it.
pub struct Bridge {
    state: AppState,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Bridge {
    /// Starts the session loop on its own thread.
    pub fn start(cfg: BridgeConfig) -> Result<Self, evswitch::teleop::TeleopError> {
        let mut session = TeleopSession::new(&cfg.scene, cfg.camera, cfg.instruction, cfg.seed)?;
        let (tx, rx) = mpsc::channel();
        let (out, _) = broadcast::channel(64);
        let stop = Arc::new(AtomicBool::new(false));
        let state = AppState {
            commands: tx,
            out: out.clone(),
            stats: Arc::default(),
            clients: Arc::default(),
            rejected: Arc::default(),
            dataset: Arc::new(cfg.dataset),
            hand: Arc::new(cfg.scene.sim.hand.clone()),
        };
        let stats = state.stats.clone();
        let flag = stop.clone();
        let realtime = cfg.realtime;
        let thread = std::thread::spawn(move || {
            let errors = out.clone();
            run_teleop_loop(
                &mut session,
                &rx,
                &flag,
                realtime,
                |snap| {
                    let now = Instant::now();
                    {
                        let mut s = stats.lock().unwrap();
                        s.ticks += 1;
                        if let Some(prev) = s.last.replace(now) {
                            s.periods.push_back(now - prev);
                            if s.periods.len() > PERIOD_WINDOW {
                                s.periods.pop_front();
                            }
                        }
                    }
                    let _ = out.send(Outgoing::Snapshot(Box::new(snap)));
                },
                |e| {
                    let _ = errors.send(Outgoing::Error(e.to_string()));
                },
            );
        });
        Ok(Self { state, stop, thread: Some(thread) })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(ws_handler))
            .route("/episodes", post(save_episode))
            .route("/status", get(status))
            .layer(DefaultBodyLimit::max(MAX_UPLOAD))
            .with_state(self.state.clone())
    }

    pub fn status(&self) -> Status {
        self.state.status()
    }

    /// Queues a command as if a console had sent it.
    pub fn send(&self, cmd: TeleopCmd) {
        let _ = self.state.commands.send(cmd);
    }

    pub fn shutdown(mut self) {
        self.stop_loop();
    }

    fn stop_loop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.stop_loop();
    }
}

/// Serves the bridge on `listener` until ctrl-c.
pub async fn serve(cfg: BridgeConfig, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let bridge = Bridge::start(cfg).map_err(std::io::Error::other)?;
    axum::serve(listener, bridge.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    tokio::task::spawn_blocking(move || bridge.shutdown()).await.map_err(std::io::Error::other)
}

async fn status(State(s): State<AppState>) -> Json<Status> {
    Json(s.status())
}

async fn ws_handler(ws: WebSocketUpgrade, State(s): State<AppState>) -> Response {
    ws.max_message_size(DEFAULT_MAX_PAYLOAD as usize + 64).on_upgrade(move |socket| client(socket, s))
}

async fn client(socket: WebSocket, s: AppState) {
    s.clients.fetch_add(1, Ordering::SeqCst);
    let (mut sink, mut stream) = socket.split();
    let mut rx = s.out.subscribe();
    let (reject_tx, mut reject_rx) = tokio::sync::mpsc::unbounded_channel::<String>();

    let send = async {
        let mut seq: u32 = 0;
        loop {
            let frame = tokio::select! {
                m = rx.recv() => match m {
                    Ok(Outgoing::Snapshot(snap)) => encode_snapshot(seq, &snap),
                    Ok(Outgoing::Error(msg)) => Frame::new(FrameType::Error, seq, encode_error("command", &msg)),
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                Some(msg) = reject_rx.recv() => Frame::new(FrameType::Error, seq, encode_error("frame", &msg)),
            };
            seq = seq.wrapping_add(1);
            if sink.send(Message::Binary(encode_frame(&frame).into())).await.is_err() {
                break;
            }
        }
    };
    let recv = async {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Binary(bytes) => {
                    let cmd = decode_frame(&bytes, DEFAULT_MAX_PAYLOAD)
                        .map_err(|e| e.to_string())
                        .and_then(|(f, _)| decode_cmd(&f).map_err(|e| e.to_string()));
                    match cmd {
                        Ok(cmd) => {
                            if s.commands.send(cmd).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            s.rejected.fetch_add(1, Ordering::SeqCst);
                            let _ = reject_tx.send(e);
                        }
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    };
    tokio::select! {
        _ = send => {}
        _ = recv => {}
    }
    s.clients.fetch_sub(1, Ordering::SeqCst);
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

async fn save_episode(State(s): State<AppState>, Json(upload): Json<EpisodeUpload>) -> Response {
    let (dataset, hand) = (s.dataset.clone(), s.hand.clone());
    let result = tokio::task::spawn_blocking(move || save_upload(&dataset, &upload, &hand)).await;
    match result {
        Ok(Ok(saved)) => (StatusCode::CREATED, Json(saved)).into_response(),
        Ok(Err(e)) => {
            let code = match e {
                DataError::IncompleteMarkers(_) | DataError::MissingMarkers(_) | DataError::Upload(_) | DataError::Image { .. } => {
                    StatusCode::UNPROCESSABLE_ENTITY
                }
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            };
            (code, Json(ErrorBody { error: e.to_string() })).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(ErrorBody { error: e.to_string() })).into_response(),
    }
}
