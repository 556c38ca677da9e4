//! Client session orchestration over an abstract byte transport.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::client::{
    build_actionable_phase2_query, build_phase1_query, build_phase2_query, build_single_phase_query,
    decode_actionable_phase2, decode_phase1, decode_phase2, decode_single_phase, ClientMasks,
    ProtocolError, QueryTuple, RangeClass,
};
use crate::config::{default_scaling, ProtocolConfig};
use crate::cost::{count_cost, Transcript};
use crate::field::{FieldVector, PrimeModulus};
use crate::model::{
    ActionabilityWeights, FeatureVector, ImmutableSet, RetrievalResult, Scheme,
};
use crate::wire::{
    decode_error, decode_vectors, encode_query, ErrorCode, Frame, Handshake, MsgType, SessionId, WireError,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{endpoint}: {message}")]
pub struct TransportError {
    /// 0-based server position.
    pub server: usize,
    pub endpoint: String,
    pub message: String,
}

/// Moves request frames to servers and reply frames back. Implementations
/// never inspect or re-encode frames, so every transport produces the same
/// bytes for the same session.
pub trait Transport {
    fn server_count(&self) -> usize;

    /// Delivers `requests[j].1` to server `requests[j].0` and returns the
    /// replies in request order.
    fn exchange(&mut self, requests: &[(usize, Vec<u8>)]) -> Result<Vec<Vec<u8>>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server {}: {source}", .server + 1)]
    Wire { server: usize, source: WireError },
    #[error("server {}: {code:?}: {message}", .server + 1)]
    Rejected { server: usize, code: ErrorCode, message: String },
    #[error("server {}: unexpected reply", .server + 1)]
    UnexpectedReply { server: usize },
    #[error("inconsistent deployment: {0}")]
    Handshake(String),
    #[error("deployment has {got} servers, {scheme} needs {needed}")]
    NotEnoughServers { scheme: Scheme, needed: usize, got: usize },
}

impl SessionError {
    pub fn is_misbehavior(&self) -> bool {
        matches!(self, SessionError::Protocol(ProtocolError::ServerMisbehavior { .. }))
    }
}

/// Inputs to one private retrieval.
#[derive(Clone, Debug)]
pub struct RetrievalRequest {
    /// Checked against the `d` and `R` the servers announce.
    pub x: FeatureVector,
    pub immutable: ImmutableSet,
    pub scheme: Scheme,
    pub weights: Option<ActionabilityWeights>,
    /// Cardinality bound `F` for the single-phase schemes; defaults to `d`.
    pub f: Option<usize>,
    /// Scaling factor `L`; defaults to `L1 R^2 d + 1`.
    pub l: Option<u64>,
    pub always_run_phase2: bool,
}

impl RetrievalRequest {
    pub fn new(x: FeatureVector, immutable: ImmutableSet, scheme: Scheme) -> Self {
        RetrievalRequest { x, immutable, scheme, weights: None, f: None, l: None, always_run_phase2: false }
    }
}

#[derive(Clone, Debug)]
pub struct RetrievalOutcome {
    pub result: RetrievalResult,
    pub config: ProtocolConfig,
    pub session: SessionId,
    /// Decoded `c_0` per row of the last round.
    pub revealed: Vec<u64>,
    pub transcript: Transcript,
}

struct Session<'t, T: Transport + ?Sized> {
    transport: &'t mut T,
    id: SessionId,
    transcript: Transcript,
}

impl<T: Transport + ?Sized> Session<'_, T> {
    fn round(&mut self, requests: Vec<(usize, Vec<u8>)>) -> Result<Vec<Frame>, SessionError> {
        let replies = self.transport.exchange(&requests)?;
        if replies.len() != requests.len() {
            return Err(SessionError::UnexpectedReply { server: replies.len().min(requests.len()) });
        }
        let mut frames = Vec::with_capacity(replies.len());
        for ((server, req), reply) in requests.into_iter().zip(replies) {
            let frame = Frame::decode(&reply).map_err(|source| SessionError::Wire { server, source })?;
            self.transcript.push(server, req, reply);
            if frame.session != self.id {
                return Err(SessionError::UnexpectedReply { server });
            }
            if frame.msg_type == MsgType::Error {
                let (code, message) =
                    decode_error(&frame.payload).map_err(|source| SessionError::Wire { server, source })?;
                return Err(SessionError::Rejected { server, code, message });
            }
            frames.push(frame);
        }
        Ok(frames)
    }

    fn query(&mut self, tuples: &[QueryTuple], q: PrimeModulus) -> Result<Vec<FieldVector>, SessionError> {
        let requests = tuples
            .iter()
            .enumerate()
            .map(|(n, t)| (n, Frame::new(MsgType::Query, self.id, encode_query(t.phase, &t.components)).encode()))
            .collect();
        let frames = self.round(requests)?;
        frames
            .into_iter()
            .enumerate()
            .map(|(server, f)| {
                if f.msg_type != MsgType::Answer {
                    return Err(SessionError::UnexpectedReply { server });
                }
                let mut v = decode_vectors(&f.payload, q).map_err(|source| SessionError::Wire { server, source })?;
                if v.len() != 1 {
                    return Err(SessionError::UnexpectedReply { server });
                }
                Ok(v.pop().unwrap())
            })
            .collect()
    }
}

/// Opens a session with the first `N` servers and checks that they agree on
/// the public parameters.
fn hello<T: Transport + ?Sized>(
    s: &mut Session<'_, T>,
    scheme: Scheme,
) -> Result<Vec<Handshake>, SessionError> {
    let needed = scheme.servers_required();
    let got = s.transport.server_count();
    if got < needed {
        return Err(SessionError::NotEnoughServers { scheme, needed, got });
    }
    let requests = (0..needed).map(|n| (n, Frame::new(MsgType::Hello, s.id, alloc::vec![scheme.id()]).encode())).collect();
    let frames = s.round(requests)?;
    let mut hs = Vec::with_capacity(needed);
    for (server, f) in frames.into_iter().enumerate() {
        if f.msg_type != MsgType::HelloOk {
            return Err(SessionError::UnexpectedReply { server });
        }
        hs.push(Handshake::decode(&f.payload).map_err(|source| SessionError::Wire { server, source })?);
    }
    let first = hs[0];
    for (n, h) in hs.iter().enumerate() {
        if h.scheme != scheme {
            return Err(SessionError::Handshake(format!("server {} answered for {}", n + 1, h.scheme)));
        }
        if (h.q, h.d, h.m, h.r, h.n) != (first.q, first.d, first.m, first.r, first.n) {
            return Err(SessionError::Handshake(format!("server {} disagrees on (q, d, M, R, N)", n + 1)));
        }
        if hs[..n].iter().any(|o| o.alpha == h.alpha) {
            return Err(SessionError::Handshake(format!("server {} repeats evaluation point {}", n + 1, h.alpha)));
        }
    }
    if (first.n as usize) < needed {
        return Err(SessionError::NotEnoughServers { scheme, needed, got: first.n as usize });
    }
    Ok(hs)
}

fn session_config(req: &RetrievalRequest, hs: &[Handshake]) -> Result<ProtocolConfig, ProtocolError> {
    let h = hs[0];
    let q = PrimeModulus::new(h.q)?;
    let d = h.d as usize;
    let l1 = if req.scheme.is_actionable() { req.weights.as_ref().map_or(1, |w| w.l1()) } else { 1 };
    let cfg = ProtocolConfig {
        scheme: req.scheme,
        q,
        alphas: hs.iter().map(|h| q.elem(h.alpha)).collect(),
        d,
        m: h.m as usize,
        r: h.r,
        f: req.f.unwrap_or(d),
        l: req.l.unwrap_or_else(|| default_scaling(h.r, d, l1)),
        l1,
        always_run_phase2: req.always_run_phase2,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one retrieval end to end. Masks and the session id are drawn from
/// `rng` and never reused.
pub fn run_retrieval<T: Transport + ?Sized, R: RngCore + ?Sized>(
    transport: &mut T,
    req: &RetrievalRequest,
    rng: &mut R,
) -> Result<RetrievalOutcome, SessionError> {
    if req.weights.is_some() && !req.scheme.is_actionable() {
        return Err(ProtocolError::WrongScheme(req.scheme).into());
    }
    let mut id = [0u8; 16];
    rng.fill_bytes(&mut id);
    let mut s = Session { transport, id, transcript: Transcript::default() };
    let hs = hello(&mut s, req.scheme)?;
    let cfg = session_config(req, &hs)?;
    let masks = ClientMasks::sample(&cfg, rng);
    // the deployment's R is authoritative; x only has to lie within it
    let x = &FeatureVector::new(req.x.coords().to_vec(), cfg.r).map_err(ProtocolError::from)?;
    let i = &req.immutable;
    let m = cfg.m;

    let (theta, theta_star, distance, revealed, hints) = match cfg.scheme {
        Scheme::TwoPhase | Scheme::TwoPhaseActionable => {
            let answers = s.query(&build_phase1_query(x, i, &cfg, &masks)?, cfg.q)?;
            let theta = decode_phase1(&answers, &cfg)?;
            if theta.len() <= 1 && !cfg.always_run_phase2 {
                let sole = theta.members().next();
                (theta, sole, None, Vec::new(), Vec::new())
            } else {
                let out = if cfg.scheme == Scheme::TwoPhase {
                    let answers = s.query(&build_phase2_query(x, &theta, &cfg, &masks)?, cfg.q)?;
                    decode_phase2(&answers, &theta, x, &cfg)?
                } else {
                    let unit = ActionabilityWeights::unit(cfg.l1);
                    let weights = req.weights.as_ref().unwrap_or(&unit);
                    let tuples = build_actionable_phase2_query(x, &theta, i, weights, &cfg, &masks)?;
                    let answers = s.query(&tuples, cfg.q)?;
                    let w = weights.assemble(i).map_err(ProtocolError::from)?;
                    decode_actionable_phase2(&answers, &theta, x, &w, &cfg)?
                };
                (theta, out.theta_star, out.distance, out.revealed, Vec::new())
            }
        }
        Scheme::SinglePhase | Scheme::SinglePhaseActionable => {
            let tuples = build_single_phase_query(x, i, req.weights.as_ref(), &cfg, &masks)?;
            let answers = s.query(&tuples, cfg.q)?;
            let out = decode_single_phase(&answers, x, i, &masks, &cfg)?;
            let hints = out
                .classes
                .iter()
                .map(|c| match c {
                    RangeClass::Match => None,
                    RangeClass::Mismatch { at_least } => Some(*at_least),
                })
                .collect();
            (out.candidate_set, out.theta_star, out.distance, out.revealed, hints)
        }
    };
    debug_assert_eq!(theta.database_size(), m);
    let cost = count_cost(&s.transcript).map_err(|source| SessionError::Wire { server: 0, source })?;
    let result = RetrievalResult { theta_star, distance, candidate_set: theta, cost, mismatch_hints: hints };
    Ok(RetrievalOutcome { result, config: cfg, session: id, revealed, transcript: s.transcript })
}

/// Plaintext fetch of row `i` (1-based) from one server. Not private: the
/// server learns `i`.
pub fn fetch_by_index<T: Transport + ?Sized>(
    transport: &mut T,
    server: usize,
    session: SessionId,
    i: usize,
    r: u32,
) -> Result<FeatureVector, SessionError> {
    let offset = i.checked_sub(1).and_then(|o| u32::try_from(o).ok()).ok_or(ProtocolError::Flow("row index is 1-based"))?;
    let mut s = Session { transport, id: session, transcript: Transcript::default() };
    let req = Frame::new(MsgType::Fetch, session, offset.to_le_bytes().to_vec()).encode();
    let frame = s.round(alloc::vec![(server, req)])?.pop().unwrap();
    if frame.msg_type != MsgType::FetchOk {
        return Err(SessionError::UnexpectedReply { server });
    }
    // Elements are bounded by R, not q; any prime above R accepts them.
    let bound = PrimeModulus::new(crate::field::next_prime_above(r as u64).map_err(ProtocolError::from)?)
        .map_err(ProtocolError::from)?;
    let mut v = decode_vectors(&frame.payload, bound).map_err(|source| SessionError::Wire { server, source })?;
    let v = v.pop().ok_or(SessionError::UnexpectedReply { server })?;
    let coords = v.as_u64s().iter().map(|&c| c as u32).collect();
    Ok(FeatureVector::new(coords, r).map_err(ProtocolError::from)?)
}
