//! Byte layout of everything exchanged between the user and the servers.
//!
//! ```text
//! frame     := "IPCR" version:u8 type:u8 session:[u8;16] len:u32le payload[len]
//! handshake := scheme:u8 q:u64le d:u32le M:u32le R:u32le N:u32le alpha:u64le
//! vectors   := count:u32le { len:u32le elem:u64le * len } * count
//! ```
//!
//! QUERY payloads are a phase byte followed by `vectors`; ANSWER and
//! FETCH_OK payloads are `vectors`. FETCH carries a 0-based row offset as
//! `u32le`; ERROR carries a code byte and a UTF-8 message.

use alloc::string::String;
use alloc::vec::Vec;

use crate::field::{FieldVector, PrimeModulus};
use crate::model::{Phase, Scheme};

pub const MAGIC: [u8; 4] = *b"IPCR";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 26;
pub const HANDSHAKE_LEN: usize = 33;
pub const SESSION_ID_LEN: usize = 16;

pub type SessionId = [u8; SESSION_ID_LEN];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("unsupported protocol version {0}")]
    VersionUnsupported(u8),
    #[error("field element {value} is not below q = {q}")]
    ElementOutOfRange { value: u64, q: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MsgType {
    Hello = 1,
    HelloOk = 2,
    Query = 3,
    Answer = 4,
    Error = 5,
    Fetch = 6,
    FetchOk = 7,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<MsgType> {
        use MsgType::*;
        [Hello, HelloOk, Query, Answer, Error, Fetch, FetchOk].into_iter().find(|t| *t as u8 == b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session: SessionId,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session: SessionId, payload: Vec<u8>) -> Self {
        Frame { msg_type, session, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Frame, WireError> {
        let len = payload_len(bytes)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < len {
            return Err(WireError::Malformed("truncated payload"));
        }
        if body.len() > len {
            return Err(WireError::Malformed("trailing bytes after payload"));
        }
        let msg_type = MsgType::from_byte(bytes[5]).ok_or(WireError::Malformed("unknown message type"))?;
        let mut session = [0u8; SESSION_ID_LEN];
        session.copy_from_slice(&bytes[6..22]);
        Ok(Frame { msg_type, session, payload: body.to_vec() })
    }
}

/// Validates a frame header and returns the payload length it announces.
/// Stream transports read [`HEADER_LEN`] bytes, call this, then read the
/// payload.
pub fn payload_len(header: &[u8]) -> Result<usize, WireError> {
    if header.len() < HEADER_LEN {
        return Err(WireError::Malformed("truncated header"));
    }
    if header[..4] != MAGIC {
        return Err(WireError::Malformed("bad magic"));
    }
    if header[4] != VERSION {
        return Err(WireError::VersionUnsupported(header[4]));
    }
    Ok(u32::from_le_bytes(header[22..26].try_into().unwrap()) as usize)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Malformed("payload too short"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed("trailing bytes in payload"))
        }
    }
}

/// Parameters a server announces in HELLO_OK.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Handshake {
    pub scheme: Scheme,
    pub q: u64,
    pub d: u32,
    pub m: u32,
    pub r: u32,
    pub n: u32,
    pub alpha: u64,
}

impl Handshake {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HANDSHAKE_LEN);
        out.push(self.scheme.id());
        out.extend_from_slice(&self.q.to_le_bytes());
        for v in [self.d, self.m, self.r, self.n] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Handshake, WireError> {
        let mut r = Reader { buf: bytes };
        let scheme = Scheme::from_id(r.u8()?).ok_or(WireError::Malformed("unknown scheme id"))?;
        let q = r.u64()?;
        let (d, m, rr, n) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let alpha = r.u64()?;
        r.finish()?;
        if alpha >= q {
            return Err(WireError::ElementOutOfRange { value: alpha, q });
        }
        Ok(Handshake { scheme, q, d, m, r: rr, n, alpha })
    }
}

pub fn encode_vectors(vectors: &[FieldVector]) -> Vec<u8> {
    let total: usize = vectors.iter().map(|v| 4 + 8 * v.len()).sum();
    let mut out = Vec::with_capacity(4 + total);
    write_vectors(&mut out, vectors);
    out
}

fn write_vectors(out: &mut Vec<u8>, vectors: &[FieldVector]) {
    out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for v in vectors {
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for &e in v.as_u64s() {
            out.extend_from_slice(&e.to_le_bytes());
        }
    }
}

fn read_vectors(r: &mut Reader<'_>, q: PrimeModulus) -> Result<Vec<FieldVector>, WireError> {
    let count = r.u32()? as usize;
    // every vector costs at least its 4-byte length prefix
    if count > r.buf.len() / 4 {
        return Err(WireError::Malformed("vector count exceeds payload"));
    }
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        if len > r.buf.len() / 8 {
            return Err(WireError::Malformed("vector length exceeds payload"));
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let v = r.u64()?;
            if v >= q.get() {
                return Err(WireError::ElementOutOfRange { value: v, q: q.get() });
            }
            values.push(v);
        }
        vectors.push(FieldVector::from_canonical(q, values).expect("range checked"));
    }
    Ok(vectors)
}

pub fn decode_vectors(bytes: &[u8], q: PrimeModulus) -> Result<Vec<FieldVector>, WireError> {
    let mut r = Reader { buf: bytes };
    let v = read_vectors(&mut r, q)?;
    r.finish()?;
    Ok(v)
}

/// Number of field elements in a `vectors` payload, without range checks.
pub fn count_elements(bytes: &[u8]) -> Result<u64, WireError> {
    let mut r = Reader { buf: bytes };
    let count = r.u32()?;
    let mut total = 0u64;
    for _ in 0..count {
        let len = r.u32()? as usize;
        r.take(len.checked_mul(8).ok_or(WireError::Malformed("vector length overflow"))?)?;
        total += len as u64;
    }
    r.finish()?;
    Ok(total)
}

pub fn encode_query(phase: Phase, vectors: &[FieldVector]) -> Vec<u8> {
    let mut out = alloc::vec![phase.id()];
    write_vectors(&mut out, vectors);
    out
}

pub fn decode_query(bytes: &[u8], q: PrimeModulus) -> Result<(Phase, Vec<FieldVector>), WireError> {
    let (&phase, rest) = bytes.split_first().ok_or(WireError::Malformed("empty query payload"))?;
    let phase = Phase::from_id(phase).ok_or(WireError::Malformed("unknown phase id"))?;
    Ok((phase, decode_vectors(rest, q)?))
}

/// Phase and element count of a query payload, without range checks.
pub fn query_shape(bytes: &[u8]) -> Result<(Phase, u64), WireError> {
    let (&phase, rest) = bytes.split_first().ok_or(WireError::Malformed("empty query payload"))?;
    let phase = Phase::from_id(phase).ok_or(WireError::Malformed("unknown phase id"))?;
    Ok((phase, count_elements(rest)?))
}

/// Error codes carried in ERROR frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCode {
    Malformed = 1,
    VersionUnsupported = 2,
    ElementOutOfRange = 3,
    SessionReuse = 4,
    UnknownSession = 5,
    Protocol = 6,
    UnsupportedScheme = 7,
    NoSuchRow = 8,
}

impl ErrorCode {
    pub fn from_byte(b: u8) -> Option<ErrorCode> {
        use ErrorCode::*;
        [Malformed, VersionUnsupported, ElementOutOfRange, SessionReuse, UnknownSession, Protocol, UnsupportedScheme, NoSuchRow]
            .into_iter()
            .find(|c| *c as u8 == b)
    }
}

impl From<&WireError> for ErrorCode {
    fn from(e: &WireError) -> Self {
        match e {
            WireError::Malformed(_) => ErrorCode::Malformed,
            WireError::VersionUnsupported(_) => ErrorCode::VersionUnsupported,
            WireError::ElementOutOfRange { .. } => ErrorCode::ElementOutOfRange,
        }
    }
}

pub fn encode_error(code: ErrorCode, message: &str) -> Vec<u8> {
    let mut out = alloc::vec![code as u8];
    out.extend_from_slice(message.as_bytes());
    out
}

pub fn decode_error(bytes: &[u8]) -> Result<(ErrorCode, String), WireError> {
    let (&code, msg) = bytes.split_first().ok_or(WireError::Malformed("empty error payload"))?;
    let code = ErrorCode::from_byte(code).ok_or(WireError::Malformed("unknown error code"))?;
    let msg = core::str::from_utf8(msg).map_err(|_| WireError::Malformed("error message is not UTF-8"))?;
    Ok((code, String::from(msg)))
}
