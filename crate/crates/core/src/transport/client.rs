use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use super::frame::{read_frame, write_frame, Frame, FrameError, FrameType, DEFAULT_MAX_PAYLOAD};
use super::payload::{ActPayload, ImageField, ObsPayload};
use crate::image::Image;
use crate::policy::{Policy, PolicyError, PolicyInput};
use crate::types::{Action, HandCommand};

#[derive(Debug, Clone, PartialEq)]
pub enum ImageMode {
    Inline,
    /// Write frames as PPM files under this directory and send their paths.
    ByPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub deadline: Duration,
    /// Consecutive missed replies that trigger a safety stop.
    pub max_misses: u32,
    pub max_payload: u32,
    pub images: ImageMode,
    pub session: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            deadline: Duration::from_millis(180),
            max_misses: 5,
            max_payload: DEFAULT_MAX_PAYLOAD,
            images: ImageMode::Inline,
            session: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallStats {
    pub replies: u64,
    pub timeouts: u64,
    pub disconnects: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Miss {
    Timeout,
    Disconnected,
    Malformed,
}

/// A policy served by another process. Each call waits at most the
/// deadline; a missed reply yields a hold-still fallback, and too many in a
/// row raise a safety stop.
pub struct RemotePolicy {
    stream: TcpStream,
    replies: Receiver<Result<Frame, FrameError>>,
    cfg: ClientConfig,
    seq: u32,
    misses: u32,
    last_sigma: f64,
    connected: bool,
    stats: CallStats,
}

impl RemotePolicy {
    pub fn connect(addr: impl ToSocketAddrs, cfg: ClientConfig) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        let max = cfg.max_payload;
        std::thread::spawn(move || loop {
            let r = read_frame(&mut reader, max);
            let stop = r.is_err();
            if tx.send(r).is_err() || stop {
                break;
            }
        });
        Ok(Self { stream, replies: rx, cfg, seq: 0, misses: 0, last_sigma: 0.0, connected: true, stats: CallStats::default() })
    }

    pub fn stats(&self) -> CallStats {
        self.stats
    }

    fn image(&self, img: &Image, tick: u64, name: &str) -> io::Result<ImageField> {
        match &self.cfg.images {
            ImageMode::Inline => Ok(ImageField::Inline(img.clone())),
            ImageMode::ByPath(dir) => {
                let path = dir.join(format!("s{}_t{tick}_{name}.ppm", self.cfg.session));
                img.save_ppm(&path)?;
                Ok(ImageField::Path { width: img.width(), height: img.height(), path: path.display().to_string() })
            }
        }
    }

    fn request(&mut self, input: &PolicyInput<'_>) -> Result<Action, Miss> {
        if !self.connected {
            return Err(Miss::Disconnected);
        }
        let obs = input.obs;
        let started = Instant::now();
        let payload = ObsPayload {
            session: self.cfg.session,
            tick: obs.tick,
            instruction: obs.instruction.raw_text.clone(),
            object: obs.instruction.object,
            plate: obs.instruction.plate,
            phase: input.phase,
            arm: obs.arm.to_array(),
            hand: obs.hand.joints,
            synergy: obs.hand.synergy,
            cam1: self.image(&obs.cam1, obs.tick, "cam1").map_err(|_| Miss::Malformed)?,
            cam2: self.image(&obs.cam2, obs.tick, "cam2").map_err(|_| Miss::Malformed)?,
            truth: input.truth.clone(),
        };
        self.seq = self.seq.wrapping_add(1);
        let frame = Frame::new(FrameType::ObsRequest, self.seq, payload.encode());
        if write_frame(&mut self.stream, &frame).is_err() {
            self.connected = false;
            return Err(Miss::Disconnected);
        }
        let deadline = started + self.cfg.deadline;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(Miss::Timeout);
            }
            match self.replies.recv_timeout(remaining) {
                // replies to earlier, timed-out requests are dropped
                Ok(Ok(f)) if f.seq != self.seq => continue,
                Ok(Ok(f)) if f.kind == FrameType::ActReply => {
                    return ActPayload::decode(&f.payload).map(|p| p.action).map_err(|_| Miss::Malformed);
                }
                Ok(Ok(_)) => return Err(Miss::Malformed),
                Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => {
                    self.connected = false;
                    return Err(Miss::Disconnected);
                }
                Err(RecvTimeoutError::Timeout) => return Err(Miss::Timeout),
            }
        }
    }
}

impl Policy for RemotePolicy {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        match self.request(input) {
            Ok(a) => {
                self.misses = 0;
                self.last_sigma = a.sigma;
                self.stats.replies += 1;
                Ok(a)
            }
            Err(miss) => {
                match miss {
                    Miss::Timeout => self.stats.timeouts += 1,
                    Miss::Disconnected => self.stats.disconnects += 1,
                    Miss::Malformed => self.stats.malformed += 1,
                }
                self.misses += 1;
                if self.misses >= self.cfg.max_misses {
                    return Err(PolicyError::SafetyStop(self.misses));
                }
                Ok(Action::hold(HandCommand::JointTargets(input.obs.hand.joints), self.last_sigma))
            }
        }
    }
}

impl Drop for RemotePolicy {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}
