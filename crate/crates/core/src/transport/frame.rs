use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"HPS1";
pub const HEADER_LEN: usize = 13;
pub const DEFAULT_MAX_PAYLOAD: u32 = 8 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    ObsRequest = 0x01,
    ActReply = 0x02,
    Error = 0x03,
    Snapshot = 0x04,
    TeleopCmd = 0x05,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => FrameType::ObsRequest,
            0x02 => FrameType::ActReply,
            0x03 => FrameType::Error,
            0x04 => FrameType::Snapshot,
            0x05 => FrameType::TeleopCmd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub seq: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("payload of {len} bytes exceeds limit {max}")]
    Oversize { len: u32, max: u32 },
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Frame {
    pub fn new(kind: FrameType, seq: u32, payload: impl Into<Vec<u8>>) -> Self {
        Self { kind, seq, payload: payload.into() }
    }
}

/// `magic(4) | type(1) | seq(u32 BE) | len(u32 BE) | payload`
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(frame.kind as u8);
    out.extend_from_slice(&frame.seq.to_be_bytes());
    out.extend_from_slice(&(frame.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

struct Header {
    kind: FrameType,
    seq: u32,
    len: u32,
}

fn parse_header(h: &[u8; HEADER_LEN], max: u32) -> Result<Header, FrameError> {
    let magic = [h[0], h[1], h[2], h[3]];
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let kind = FrameType::from_byte(h[4]).ok_or(FrameError::UnknownType(h[4]))?;
    let seq = u32::from_be_bytes([h[5], h[6], h[7], h[8]]);
    let len = u32::from_be_bytes([h[9], h[10], h[11], h[12]]);
    if len > max {
        return Err(FrameError::Oversize { len, max });
    }
    Ok(Header { kind, seq, len })
}

/// Decodes one frame from the front of `bytes`; returns it with the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8], max_payload: u32) -> Result<(Frame, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        // a short buffer with the wrong prefix is still reported as bad magic
        let n = bytes.len().min(4);
        if bytes[..n] != MAGIC[..n] {
            let mut m = [0u8; 4];
            m[..n].copy_from_slice(&bytes[..n]);
            return Err(FrameError::BadMagic(m));
        }
        return Err(FrameError::Truncated { needed: HEADER_LEN, have: bytes.len() });
    }
    let header: [u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().expect("length checked");
    let h = parse_header(&header, max_payload)?;
    let total = HEADER_LEN + h.len as usize;
    if bytes.len() < total {
        return Err(FrameError::Truncated { needed: total, have: bytes.len() });
    }
    Ok((Frame { kind: h.kind, seq: h.seq, payload: bytes[HEADER_LEN..total].to_vec() }, total))
}

/// Reads exactly one frame. A clean EOF before the first byte is reported
/// as `Io(UnexpectedEof)`; EOF inside a frame as `Truncated`.
pub fn read_frame<R: Read>(r: &mut R, max_payload: u32) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Err(FrameError::Io(io::ErrorKind::UnexpectedEof.into()));
    }
    if got < HEADER_LEN {
        return Err(FrameError::Truncated { needed: HEADER_LEN, have: got });
    }
    let h = parse_header(&header, max_payload)?;
    let mut payload = vec![0u8; h.len as usize];
    let got = read_full(r, &mut payload)?;
    if got < payload.len() {
        return Err(FrameError::Truncated { needed: HEADER_LEN + payload.len(), have: HEADER_LEN + got });
    }
    Ok(Frame { kind: h.kind, seq: h.seq, payload })
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&encode_frame(frame))?;
    w.flush()
}
