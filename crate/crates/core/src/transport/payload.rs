//! Canonical `key=value` payloads, one field per line in a fixed order.
//!
//! Observation request:
//!
//! ```text
//! session=<u64>
//! tick=<u64>
//! instruction=<text>
//! object=<kind>
//! plate=<color>
//! phase=<phase>
//! arm=<6 numbers>
//! hand=<13 numbers>
//! synergy=<number>
//! cam1=<w> <h> b64:<base64 RGB> | <w> <h> path:<file>
//! cam2=...
//! objects=<n>
//! object=<kind> <x> <y> <z> <width> <depth> <height> <attached 0|1> <fallen 0|1>   (n lines)
//! plates=<m>
//! plate=<color> <cx> <cy> <radius>                                                (m lines)
//! ```
//!
//! Action reply:
//!
//! ```text
//! arm_delta=<6 numbers>
//! hand=grip <s> | joints <13 numbers>
//! sigma=<number>
//! compute_time_ms=<number>
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, so payloads round-trip bit-exactly.

use std::path::Path;

use base64::Engine as _;

use crate::image::Image;
use crate::orchestrator::TaskPhase;
use crate::sim::{ObjectTruth, PlateTruth, WorldTruth};
use crate::types::{Action, HandCommand, ObjectKind, PlateColor, HAND_JOINTS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PayloadError {
    #[error("payload is not UTF-8")]
    Utf8,
    #[error("expected field `{expected}`, found `{found}`")]
    Field { expected: &'static str, found: String },
    #[error("bad value for `{key}`: {detail}")]
    Value { key: &'static str, detail: String },
    #[error("trailing data after the last field")]
    Trailing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageField {
    Inline(Image),
    Path { width: u32, height: u32, path: String },
}

impl ImageField {
    pub fn load(&self) -> Result<Image, crate::image::ImageError> {
        match self {
            ImageField::Inline(img) => Ok(img.clone()),
            ImageField::Path { path, .. } => Image::load_ppm(Path::new(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsPayload {
    pub session: u64,
    pub tick: u64,
    pub instruction: String,
    pub object: ObjectKind,
    pub plate: PlateColor,
    pub phase: TaskPhase,
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    pub synergy: f64,
    pub cam1: ImageField,
    pub cam2: ImageField,
    pub truth: WorldTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActPayload {
    pub action: Action,
    pub compute_time_ms: f64,
}

fn nums(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn image_field(f: &ImageField) -> String {
    match f {
        ImageField::Inline(img) => format!(
            "{} {} b64:{}",
            img.width(),
            img.height(),
            base64::engine::general_purpose::STANDARD.encode(img.pixels())
        ),
        ImageField::Path { width, height, path } => format!("{width} {height} path:{}", single_line(path)),
    }
}

impl ObsPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut s = String::new();
        let mut field = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        field("session", self.session.to_string());
        field("tick", self.tick.to_string());
        field("instruction", single_line(&self.instruction));
        field("object", self.object.to_string());
        field("plate", self.plate.to_string());
        field("phase", self.phase.to_string());
        field("arm", nums(&self.arm));
        field("hand", nums(&self.hand));
        field("synergy", self.synergy.to_string());
        field("cam1", image_field(&self.cam1));
        field("cam2", image_field(&self.cam2));
        field("objects", self.truth.objects.len().to_string());
        for o in &self.truth.objects {
            let geo = nums(&[o.position[0], o.position[1], o.position[2], o.footprint[0], o.footprint[1], o.height]);
            field("object", format!("{} {geo} {} {}", o.kind, o.attached as u8, o.fallen as u8));
        }
        field("plates", self.truth.plates.len().to_string());
        for p in &self.truth.plates {
            field("plate", format!("{} {}", p.color, nums(&[p.center[0], p.center[1], p.radius])));
        }
        s.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        let text = std::str::from_utf8(bytes).map_err(|_| PayloadError::Utf8)?;
        let mut c = Cursor::new(text);
        let session = c.parse("session")?;
        let tick = c.parse("tick")?;
        let instruction = c.field("instruction")?.to_string();
        let object = c.parse_with("object", |v| v.parse::<ObjectKind>().map_err(|e| e.to_string()))?;
        let plate = c.parse_with("plate", |v| v.parse::<PlateColor>().map_err(|e| e.to_string()))?;
        let phase = c.parse_with("phase", |v| v.parse::<TaskPhase>())?;
        let arm = c.numbers::<6>("arm")?;
        let hand = c.numbers::<HAND_JOINTS>("hand")?;
        let synergy = c.number("synergy")?;
        let cam1 = c.image("cam1")?;
        let cam2 = c.image("cam2")?;
        let n: usize = c.parse("objects")?;
        let mut objects = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            objects.push(c.parse_with("object", parse_object)?);
        }
        let m: usize = c.parse("plates")?;
        let mut plates = Vec::with_capacity(m.min(64));
        for _ in 0..m {
            plates.push(c.parse_with("plate", parse_plate)?);
        }
        c.finish()?;
        Ok(Self {
            session,
            tick,
            instruction,
            object,
            plate,
            phase,
            arm,
            hand,
            synergy,
            cam1,
            cam2,
            truth: WorldTruth { objects, plates },
        })
    }
}

impl ActPayload {
    pub fn encode(&self) -> Vec<u8> {
        let a = &self.action;
        let hand = match &a.hand {
            HandCommand::GripScalar(s) => format!("grip {s}"),
            HandCommand::JointTargets(j) => format!("joints {}", nums(j)),
        };
        format!(
            "arm_delta={}\nhand={hand}\nsigma={}\ncompute_time_ms={}\n",
            nums(&a.arm_delta),
            a.sigma,
            self.compute_time_ms
        )
        .into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        let text = std::str::from_utf8(bytes).map_err(|_| PayloadError::Utf8)?;
        let mut c = Cursor::new(text);
        let arm_delta = c.numbers::<6>("arm_delta")?;
        let hand = c.parse_with("hand", |v| {
            if let Some(s) = v.strip_prefix("grip ") {
                parse_finite(s).map(HandCommand::GripScalar)
            } else if let Some(rest) = v.strip_prefix("joints ") {
                parse_array::<HAND_JOINTS>(rest).map(HandCommand::JointTargets)
            } else {
                Err(format!("unknown hand variant in `{v}`"))
            }
        })?;
        let sigma = c.number("sigma")?;
        let compute_time_ms = c.number("compute_time_ms")?;
        c.finish()?;
        Ok(Self { action: Action::new(arm_delta, hand, sigma), compute_time_ms })
    }
}

/// Error frame payload.
pub fn encode_error(code: &str, message: &str) -> Vec<u8> {
    format!("code={}\nmessage={}\n", single_line(code), single_line(message)).into_bytes()
}

pub fn decode_error(bytes: &[u8]) -> Result<(String, String), PayloadError> {
    let text = std::str::from_utf8(bytes).map_err(|_| PayloadError::Utf8)?;
    let mut c = Cursor::new(text);
    let code = c.field("code")?.to_string();
    let message = c.field("message")?.to_string();
    c.finish()?;
    Ok((code, message))
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_array<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(' ').collect();
    if parts.len() != N {
        return Err(format!("expected {N} numbers, found {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_finite(p)?;
    }
    Ok(out)
}

fn parse_flag(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("expected 0 or 1, found `{s}`")),
    }
}

fn parse_object(v: &str) -> Result<ObjectTruth, String> {
    let parts: Vec<&str> = v.split(' ').collect();
    if parts.len() != 9 {
        return Err(format!("expected 9 items, found {}", parts.len()));
    }
    let kind = parts[0].parse::<ObjectKind>().map_err(|e| e.to_string())?;
    let g = parse_array::<6>(&parts[1..7].join(" "))?;
    Ok(ObjectTruth {
        kind,
        position: [g[0], g[1], g[2]],
        footprint: [g[3], g[4]],
        height: g[5],
        attached: parse_flag(parts[7])?,
        fallen: parse_flag(parts[8])?,
    })
}

fn parse_plate(v: &str) -> Result<PlateTruth, String> {
    let (color, rest) = v.split_once(' ').ok_or("missing plate geometry")?;
    let color = color.parse::<PlateColor>().map_err(|e| e.to_string())?;
    let g = parse_array::<3>(rest)?;
    Ok(PlateTruth { color, center: [g[0], g[1]], radius: g[2] })
}

fn parse_image(v: &str) -> Result<ImageField, String> {
    let mut it = v.splitn(3, ' ');
    let w: u32 = it.next().unwrap_or("").parse().map_err(|e| format!("width: {e}"))?;
    let h: u32 = it.next().unwrap_or("").parse().map_err(|e| format!("height: {e}"))?;
    let data = it.next().ok_or("missing image data")?;
    if let Some(b64) = data.strip_prefix("b64:") {
        let raw = base64::engine::general_purpose::STANDARD.decode(b64).map_err(|e| e.to_string())?;
        Image::from_raw(w, h, raw).map(ImageField::Inline).map_err(|e| e.to_string())
    } else if let Some(path) = data.strip_prefix("path:") {
        Ok(ImageField::Path { width: w, height: h, path: path.to_string() })
    } else {
        Err("image data must start with b64: or path:".into())
    }
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines() }
    }

    fn field(&mut self, key: &'static str) -> Result<&'a str, PayloadError> {
        let line = self.lines.next().unwrap_or("");
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(PayloadError::Field { expected: key, found: line.chars().take(40).collect() }),
        }
    }

    fn parse_with<T>(&mut self, key: &'static str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, PayloadError> {
        let v = self.field(key)?;
        f(v).map_err(|detail| PayloadError::Value { key, detail })
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<T, PayloadError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_with(key, |v| v.parse::<T>().map_err(|e| e.to_string()))
    }

    fn number(&mut self, key: &'static str) -> Result<f64, PayloadError> {
        self.parse_with(key, parse_finite)
    }

    fn numbers<const N: usize>(&mut self, key: &'static str) -> Result<[f64; N], PayloadError> {
        self.parse_with(key, parse_array::<N>)
    }

    fn image(&mut self, key: &'static str) -> Result<ImageField, PayloadError> {
        self.parse_with(key, parse_image)
    }

    fn finish(mut self) -> Result<(), PayloadError> {
        match self.lines.next() {
            None => Ok(()),
            Some(_) => Err(PayloadError::Trailing),
        }
    }
}
