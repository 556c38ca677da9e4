//! One replicated server: shared-randomness derivation, answer
//! computation for every scheme, and a transport-agnostic request handler.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::client::{feature_to_field, ProtocolError, QueryTuple};
use crate::field::{Fe, FieldError, FieldVector, PrimeModulus};
use crate::model::{Database, Phase, Scheme};
use crate::wire::{
    decode_query, encode_error, encode_vectors, ErrorCode, Frame, Handshake, MsgType, SessionId,
    WireError,
};

pub type SharedKey = [u8; 32];

/// What a derived value is used for. The byte is mixed into the PRF input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    /// `rho_i`, the nonzero scalar hiding partial immutable matches.
    Rho = 0,
    Pad1 = 1,
    Pad2 = 2,
    Pad3 = 3,
    Pad4 = 4,
    Pad5 = 5,
}

impl Label {
    pub fn from_byte(b: u8) -> Result<Label, ProtocolError> {
        use Label::*;
        [Rho, Pad1, Pad2, Pad3, Pad4, Pad5]
            .into_iter()
            .find(|l| *l as u8 == b)
            .ok_or(ProtocolError::Flow("unknown randomness label"))
    }
}

const DOMAIN: &[u8] = b"ipcr/shared-randomness/v1";

/// Keyed derivation of the servers' common randomness. Every server holding
/// `key` derives the same value for the same `(session, row, label)`.
pub fn derive_randomness(key: &SharedKey, session: &SessionId, row: usize, label: Label, q: PrimeModulus) -> Fe {
    let qv = q.get();
    let excess = (u64::MAX % qv + 1) % qv;
    let max_ok = u64::MAX - excess;
    for counter in 0u32.. {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(key);
        h.update(session);
        h.update((row as u64).to_le_bytes());
        h.update([label as u8]);
        h.update(counter.to_le_bytes());
        let digest = h.finalize();
        let v = u64::from_le_bytes(digest[..8].try_into().unwrap());
        if v > max_ok {
            continue;
        }
        let r = v % qv;
        if label == Label::Rho && r == 0 {
            continue;
        }
        return q.elem(r);
    }
    unreachable!("counter space exhausted")
}

/// Shared randomness bound to one session.
#[derive(Clone)]
pub struct SessionRandomness {
    key: SharedKey,
    session: SessionId,
    q: PrimeModulus,
}

impl SessionRandomness {
    pub fn new(key: SharedKey, session: SessionId, q: PrimeModulus) -> Self {
        SessionRandomness { key, session, q }
    }

    pub fn get(&self, row: usize, label: Label) -> Fe {
        derive_randomness(&self.key, &self.session, row, label, self.q)
    }
}

/// Server index `n` (1-based) and its public evaluation point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerIdentity {
    pub n: usize,
    pub alpha: Fe,
}

impl ServerIdentity {
    pub fn new(n: usize, alpha: Fe) -> Result<Self, FieldError> {
        if alpha.is_zero() {
            return Err(FieldError::ZeroAlpha);
        }
        Ok(ServerIdentity { n, alpha })
    }
}

fn expect_shape(query: &QueryTuple, phase: Phase, lens: &[usize]) -> Result<(), ProtocolError> {
    if query.phase != phase {
        return Err(ProtocolError::QueryShape("phase does not match the requested answer"));
    }
    if query.components.len() != lens.len() {
        return Err(ProtocolError::QueryShape("wrong number of query components"));
    }
    if query.components.iter().zip(lens).any(|(c, &l)| c.len() != l) {
        return Err(ProtocolError::QueryShape("query component has the wrong length"));
    }
    Ok(())
}

fn pads(rand: &SessionRandomness, i: usize, alpha: Fe, labels: &[Label]) -> Fe {
    let mut power = alpha;
    let mut acc = alpha.modulus().zero();
    for &l in labels {
        acc = acc + power * rand.get(i, l);
        power = power * alpha;
    }
    acc
}

/// `A_n(i) = rho_i ||Q1 o y_i - Q2||^2 + a_n Z'1(i) + a_n^2 Z'2(i)`.
pub fn answer_phase1(
    query: &QueryTuple,
    db: &Database,
    rand: &SessionRandomness,
    id: &ServerIdentity,
) -> Result<FieldVector, ProtocolError> {
    let d = db.dim();
    expect_shape(query, Phase::Membership, &[d, d])?;
    let q = id.alpha.modulus();
    let (q1, q2) = (&query.components[0], &query.components[1]);
    let answers: Vec<Fe> = db
        .rows()
        .iter()
        .enumerate()
        .map(|(idx, y)| {
            let i = idx + 1;
            let y = feature_to_field(y, q);
            let diff = q1.hadamard(&y)?.sub(q2)?;
            Ok(rand.get(i, Label::Rho) * diff.norm_sq() + pads(rand, i, id.alpha, &[Label::Pad1, Label::Pad2]))
        })
        .collect::<Result<_, FieldError>>()?;
    Ok(FieldVector::from_elems(q, &answers)?)
}

/// `S_n(i) = Q1(i) y_i`, the database rows scaled by the masked candidate
/// indicator.
pub fn masked_database(q1: &FieldVector, db: &Database) -> Vec<FieldVector> {
    db.rows()
        .iter()
        .enumerate()
        .map(|(i, y)| feature_to_field(y, q1.modulus()).scale(q1.get(i)))
        .collect()
}

/// `A_n(i) = ||S_n(i) - Q2||^2 + a_n Z'3(i) + a_n^2 Z'4(i)`.
pub fn answer_phase2(
    query: &QueryTuple,
    db: &Database,
    rand: &SessionRandomness,
    id: &ServerIdentity,
) -> Result<FieldVector, ProtocolError> {
    expect_shape(query, Phase::Distance, &[db.len(), db.dim()])?;
    let q = id.alpha.modulus();
    let q2 = &query.components[1];
    let answers: Vec<Fe> = masked_database(&query.components[0], db)
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let diff = s.sub(q2)?;
            Ok(diff.norm_sq() + pads(rand, idx + 1, id.alpha, &[Label::Pad3, Label::Pad4]))
        })
        .collect::<Result<_, FieldError>>()?;
    Ok(FieldVector::from_elems(q, &answers)?)
}

/// `A_n(i) = (y_i - Q1)^T ((y_i - Q1) o Q2) + a_n Z'1(i) + a_n^2 Z'2(i)`.
/// The degree-3 term is left for the user to cancel.
pub fn answer_single_phase(
    query: &QueryTuple,
    db: &Database,
    rand: &SessionRandomness,
    id: &ServerIdentity,
) -> Result<FieldVector, ProtocolError> {
    let d = db.dim();
    expect_shape(query, Phase::Single, &[d, d])?;
    let q = id.alpha.modulus();
    let (q1, q2) = (&query.components[0], &query.components[1]);
    let answers: Vec<Fe> = db
        .rows()
        .iter()
        .enumerate()
        .map(|(idx, y)| {
            let diff = feature_to_field(y, q).sub(q1)?;
            Ok(diff.dot(&diff.hadamard(q2)?)? + pads(rand, idx + 1, id.alpha, &[Label::Pad1, Label::Pad2]))
        })
        .collect::<Result<_, FieldError>>()?;
    Ok(FieldVector::from_elems(q, &answers)?)
}

/// `A_n(i) = (S_n(i) - Q2)^T ((S_n(i) - Q2) o Q3) + a_n Z'3 + a_n^2 Z'4 + a_n^3 Z'5`.
pub fn answer_actionable_phase2(
    query: &QueryTuple,
    db: &Database,
    rand: &SessionRandomness,
    id: &ServerIdentity,
) -> Result<FieldVector, ProtocolError> {
    let d = db.dim();
    expect_shape(query, Phase::Distance, &[db.len(), d, d])?;
    let q = id.alpha.modulus();
    let (q2, q3) = (&query.components[1], &query.components[2]);
    let answers: Vec<Fe> = masked_database(&query.components[0], db)
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let diff = s.sub(q2)?;
            Ok(diff.dot(&diff.hadamard(q3)?)?
                + pads(rand, idx + 1, id.alpha, &[Label::Pad3, Label::Pad4, Label::Pad5]))
        })
        .collect::<Result<_, FieldError>>()?;
    Ok(FieldVector::from_elems(q, &answers)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServerSetupError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("server index {n} outside [1, {total}]")]
    BadIndex { n: usize, total: usize },
    #[error("evaluation point {alpha} must lie in [1, q - 1]")]
    BadAlpha { alpha: u64 },
    #[error("field q = {q} too small for the database (needs q > R^2 d = {bound})")]
    FieldTooSmall { q: u64, bound: u64 },
}

#[derive(Clone, Debug)]
struct SessionState {
    scheme: Scheme,
    answered: [bool; 3],
}

/// Default number of session ids remembered for reuse detection.
pub const DEFAULT_RETENTION: usize = 1 << 16;

/// A server's full state machine. Transports feed it raw request bytes and
/// send back whatever it returns.
pub struct ServerNode {
    identity: ServerIdentity,
    n_servers: usize,
    db: Database,
    key: SharedKey,
    sessions: BTreeMap<SessionId, SessionState>,
    order: VecDeque<SessionId>,
    retention: usize,
}

impl ServerNode {
    pub fn new(
        n: usize,
        n_servers: usize,
        q: u64,
        alpha: u64,
        db: Database,
        key: SharedKey,
    ) -> Result<Self, ServerSetupError> {
        let q = PrimeModulus::new(q)?;
        if n == 0 || n > n_servers {
            return Err(ServerSetupError::BadIndex { n, total: n_servers });
        }
        if alpha == 0 || alpha >= q.get() {
            return Err(ServerSetupError::BadAlpha { alpha });
        }
        let bound = (db.range() as u64).pow(2) * db.dim() as u64;
        if q.get() <= bound {
            return Err(ServerSetupError::FieldTooSmall { q: q.get(), bound });
        }
        Ok(ServerNode {
            identity: ServerIdentity::new(n, q.elem(alpha))?,
            n_servers,
            db,
            key,
            sessions: BTreeMap::new(),
            order: VecDeque::new(),
            retention: DEFAULT_RETENTION,
        })
    }

    pub fn with_retention(mut self, retention: usize) -> Self {
        self.retention = retention.max(1);
        self
    }

    pub fn identity(&self) -> ServerIdentity {
        self.identity
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.identity.alpha.modulus()
    }

    pub fn handshake(&self, scheme: Scheme) -> Handshake {
        Handshake {
            scheme,
            q: self.modulus().get(),
            d: self.db.dim() as u32,
            m: self.db.len() as u32,
            r: self.db.range(),
            n: self.n_servers as u32,
            alpha: self.identity.alpha.value(),
        }
    }

    /// Processes one request frame and returns the encoded reply. Never
    /// panics on malformed input.
    pub fn handle(&mut self, request: &[u8]) -> Vec<u8> {
        let frame = match Frame::decode(request) {
            Ok(f) => f,
            Err(e) => {
                // echo the session id if the header got that far
                let mut session = [0u8; 16];
                if request.len() >= 22 {
                    session.copy_from_slice(&request[6..22]);
                }
                return error_frame(session, ErrorCode::from(&e), &format!("{e}"));
            }
        };
        let session = frame.session;
        match self.dispatch(frame) {
            Ok(reply) => reply.encode(),
            Err((code, msg)) => error_frame(session, code, &msg),
        }
    }

    fn dispatch(&mut self, frame: Frame) -> Result<Frame, (ErrorCode, alloc::string::String)> {
        let session = frame.session;
        match frame.msg_type {
            MsgType::Hello => {
                let scheme = match frame.payload.as_slice() {
                    [id] => Scheme::from_id(*id)
                        .ok_or((ErrorCode::UnsupportedScheme, format!("unknown scheme id {id}")))?,
                    _ => return Err((ErrorCode::Malformed, "HELLO carries exactly one scheme byte".into())),
                };
                if scheme.servers_required() > self.n_servers {
                    return Err((
                        ErrorCode::UnsupportedScheme,
                        format!("{scheme} needs {} servers, deployment has {}", scheme.servers_required(), self.n_servers),
                    ));
                }
                if self.sessions.contains_key(&session) {
                    return Err((ErrorCode::SessionReuse, "session id already used".into()));
                }
                self.remember(session, scheme);
                Ok(Frame::new(MsgType::HelloOk, session, self.handshake(scheme).encode()))
            }
            MsgType::Query => {
                let q = self.modulus();
                let (phase, components) =
                    decode_query(&frame.payload, q).map_err(|e: WireError| ((&e).into(), format!("{e}")))?;
                let state = self
                    .sessions
                    .get(&session)
                    .ok_or((ErrorCode::UnknownSession, "QUERY before HELLO".into()))?;
                let scheme = state.scheme;
                if state.answered[phase.slot()] {
                    return Err((ErrorCode::Protocol, format!("phase {} already answered", phase.id())));
                }
                let query = QueryTuple { phase, components };
                let rand = SessionRandomness::new(self.key, session, q);
                let result = match (scheme, phase) {
                    (Scheme::TwoPhase | Scheme::TwoPhaseActionable, Phase::Membership) => {
                        answer_phase1(&query, &self.db, &rand, &self.identity)
                    }
                    (Scheme::TwoPhase, Phase::Distance) => answer_phase2(&query, &self.db, &rand, &self.identity),
                    (Scheme::TwoPhaseActionable, Phase::Distance) => {
                        answer_actionable_phase2(&query, &self.db, &rand, &self.identity)
                    }
                    (Scheme::SinglePhase | Scheme::SinglePhaseActionable, Phase::Single) => {
                        answer_single_phase(&query, &self.db, &rand, &self.identity)
                    }
                    _ => Err(ProtocolError::QueryShape("phase not part of the session's scheme")),
                };
                let answer = result.map_err(|e| (ErrorCode::Protocol, format!("{e}")))?;
                if let Some(state) = self.sessions.get_mut(&session) {
                    state.answered[phase.slot()] = true;
                }
                Ok(Frame::new(MsgType::Answer, session, encode_vectors(&[answer])))
            }
            // Plaintext by construction: this is not a private fetch.
            MsgType::Fetch => {
                let offset = match frame.payload.as_slice() {
                    [a, b, c, d] => u32::from_le_bytes([*a, *b, *c, *d]) as usize,
                    _ => return Err((ErrorCode::Malformed, "FETCH carries a 4-byte row offset".into())),
                };
                let row = self
                    .db
                    .rows()
                    .get(offset)
                    .ok_or((ErrorCode::NoSuchRow, format!("row offset {offset} out of range")))?;
                let v = feature_to_field(row, self.modulus());
                Ok(Frame::new(MsgType::FetchOk, session, encode_vectors(&[v])))
            }
            other => Err((ErrorCode::Malformed, format!("unexpected {other:?} frame"))),
        }
    }

    fn remember(&mut self, session: SessionId, scheme: Scheme) {
        if self.order.len() >= self.retention {
            if let Some(old) = self.order.pop_front() {
                self.sessions.remove(&old);
            }
        }
        self.order.push_back(session);
        self.sessions.insert(session, SessionState { scheme, answered: [false; 3] });
    }
}

fn error_frame(session: SessionId, code: ErrorCode, msg: &str) -> Vec<u8> {
    Frame::new(MsgType::Error, session, encode_error(code, msg)).encode()
}
