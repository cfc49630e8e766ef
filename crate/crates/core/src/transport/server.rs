use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::frame::{read_frame, write_frame, Frame, FrameType, DEFAULT_MAX_PAYLOAD};
use super::payload::{encode_error, ActPayload, ObsPayload};
use crate::instruction::Instruction;
use crate::policy::{Policy, PolicyInput};
use crate::types::{ArmPose, HandState, Observation};

/// Builds a fresh policy for each accepted session (argument: session number).
pub type PolicyFactory = Arc<dyn Fn(u64) -> Box<dyn Policy> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Artificial delay before every reply.
    pub latency: Duration,
    pub max_payload: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { latency: Duration::ZERO, max_payload: DEFAULT_MAX_PAYLOAD }
    }
}

/// Serves one client session at a time on a background thread.
pub struct PolicyServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    active: Arc<Mutex<Option<TcpStream>>>,
    handle: Option<JoinHandle<()>>,
}

impl PolicyServer {
    pub fn spawn(bind: impl ToSocketAddrs, factory: PolicyFactory, cfg: ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let active = Arc::new(Mutex::new(None));
        let handle = {
            let (stop, active) = (Arc::clone(&stop), Arc::clone(&active));
            std::thread::spawn(move || accept_loop(listener, factory, cfg, stop, active))
        };
        Ok(Self { addr, stop, active, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server thread exits.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(s) = self.active.lock().expect("session lock").as_ref() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for PolicyServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn accept_loop(
    listener: TcpListener,
    factory: PolicyFactory,
    cfg: ServerConfig,
    stop: Arc<AtomicBool>,
    active: Arc<Mutex<Option<TcpStream>>>,
) {
    let mut session = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let _ = stream.set_nodelay(true);
                if let Ok(clone) = stream.try_clone() {
                    *active.lock().expect("session lock") = Some(clone);
                }
                let mut policy = factory(session);
                serve_session(stream, policy.as_mut(), &cfg);
                *active.lock().expect("session lock") = None;
                session += 1;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(2)),
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn reject(stream: &mut TcpStream, seq: u32, code: &str, message: &str) {
    let _ = write_frame(stream, &Frame::new(FrameType::Error, seq, encode_error(code, message)));
    let _ = stream.shutdown(std::net::Shutdown::Both);
}

/// Handles requests until the client disconnects or breaks the protocol.
pub fn serve_session(mut stream: TcpStream, policy: &mut dyn Policy, cfg: &ServerConfig) {
    let mut prev_seq: Option<u32> = None;
    loop {
        let frame = match read_frame(&mut stream, cfg.max_payload) {
            Ok(f) => f,
            Err(super::FrameError::Io(_)) => return,
            Err(e) => return reject(&mut stream, 0, "frame", &e.to_string()),
        };
        let started = Instant::now();
        if frame.kind != FrameType::ObsRequest {
            return reject(&mut stream, frame.seq, "type", "expected an observation request");
        }
        if let Some(p) = prev_seq {
            if frame.seq != p.wrapping_add(1) {
                let msg = format!("expected seq {}, got {}", p.wrapping_add(1), frame.seq);
                return reject(&mut stream, frame.seq, "seq", &msg);
            }
        }
        prev_seq = Some(frame.seq);
        let obs = match ObsPayload::decode(&frame.payload) {
            Ok(o) => o,
            Err(e) => return reject(&mut stream, frame.seq, "payload", &e.to_string()),
        };
        let (cam1, cam2) = match (obs.cam1.load(), obs.cam2.load()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return reject(&mut stream, frame.seq, "image", "cannot load image"),
        };
        let observation = Observation {
            cam1,
            cam2,
            arm: ArmPose::from_array(obs.arm),
            hand: HandState { joints: obs.hand, synergy: obs.synergy },
            instruction: Instruction { raw_text: obs.instruction.clone(), object: obs.object, plate: obs.plate },
            tick: obs.tick,
        };
        let action = match policy.act(&PolicyInput { obs: &observation, phase: obs.phase, truth: &obs.truth }) {
            Ok(a) => a,
            Err(e) => return reject(&mut stream, frame.seq, "policy", &e.to_string()),
        };
        let compute_time_ms = started.elapsed().as_secs_f64() * 1000.0;
        if !cfg.latency.is_zero() {
            std::thread::sleep(cfg.latency);
        }
        let reply = ActPayload { action, compute_time_ms }.encode();
        if write_frame(&mut stream, &Frame::new(FrameType::ActReply, frame.seq, reply)).is_err() {
            return;
        }
    }
}
