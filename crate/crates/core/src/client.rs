//! User-side query construction and answer decoding.
//!
//! Every query component has the shape `v + alpha_n * Z` for a secret
//! uniform mask `Z`, so each server individually sees a uniform vector.
//! Answers are polynomials in `alpha_n` whose constant term is the value the
//! user is after; the higher coefficients are interference and are dropped
//! after Vandermonde inversion.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::config::{ConfigError, ProtocolConfig};
use crate::field::{sample_uniform_vector, Fe, FieldError, FieldVector, PrimeModulus, VandermondeSystem};
use crate::model::{
    select_counterfactual, ActionabilityWeights, CandidateSet, FeatureVector, ImmutableSet,
    ModelError, Phase, Scheme,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("operation not valid for the {0} scheme")]
    WrongScheme(Scheme),
    #[error("protocol flow violated: {0}")]
    Flow(&'static str),
    #[error("expected {expected} answer vectors, got {got}")]
    AnswerCount { expected: usize, got: usize },
    #[error("answer from server {server} has {got} entries, expected {expected}")]
    AnswerLength { server: usize, expected: usize, got: usize },
    #[error("query has an unexpected shape: {0}")]
    QueryShape(&'static str),
    #[error("row {row}: decoded value {value} is inconsistent with an honest server ({detail})")]
    ServerMisbehavior { row: usize, value: u64, detail: &'static str },
}

/// The user's secret masks, fresh for every session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientMasks {
    pub z1: FieldVector,
    pub z2: FieldVector,
    /// Length `M`; masks the candidate indicator vector.
    pub z3: FieldVector,
    pub z4: FieldVector,
    /// Masks the weight vector of the actionable distance phase.
    pub z5: FieldVector,
}

impl ClientMasks {
    pub fn sample<R: RngCore + ?Sized>(cfg: &ProtocolConfig, rng: &mut R) -> Self {
        let q = cfg.q;
        ClientMasks {
            z1: sample_uniform_vector(cfg.d, q, rng),
            z2: sample_uniform_vector(cfg.d, q, rng),
            z3: sample_uniform_vector(cfg.m, q, rng),
            z4: sample_uniform_vector(cfg.d, q, rng),
            z5: sample_uniform_vector(cfg.d, q, rng),
        }
    }

    /// All-zero masks. Exposes the plaintext query; for tests only.
    pub fn zero(cfg: &ProtocolConfig) -> Self {
        let q = cfg.q;
        ClientMasks {
            z1: FieldVector::zeros(q, cfg.d),
            z2: FieldVector::zeros(q, cfg.d),
            z3: FieldVector::zeros(q, cfg.m),
            z4: FieldVector::zeros(q, cfg.d),
            z5: FieldVector::zeros(q, cfg.d),
        }
    }

    /// The degree-3 coefficient `Z1^T (Z1 o Z2)` of every single-phase answer.
    pub fn cubic_term(&self) -> Result<Fe, FieldError> {
        self.z1.dot(&self.z1.hadamard(&self.z2)?)
    }
}

/// What one server receives in one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryTuple {
    pub phase: Phase,
    pub components: Vec<FieldVector>,
}

pub fn feature_to_field(x: &FeatureVector, q: PrimeModulus) -> FieldVector {
    FieldVector::from_u64s(q, x.coords().iter().map(|&c| c as u64))
}

/// `h1(k) = 1[k in I]`.
pub fn membership_vector(immutable: &ImmutableSet, q: PrimeModulus) -> FieldVector {
    FieldVector::from_u64s(q, (1..=immutable.dim()).map(|k| immutable.contains(k) as u64))
}

/// `h2(i) = 1[i in Theta]`.
pub fn candidate_vector(theta: &CandidateSet, q: PrimeModulus) -> FieldVector {
    FieldVector::from_u64s(q, theta.flags().iter().map(|&f| f as u64))
}

/// `h(k) = L` on `I`, `w'(k)` (default 1) on the mutable set.
pub fn weighing_vector(
    immutable: &ImmutableSet,
    l: u64,
    weights: Option<&ActionabilityWeights>,
    q: PrimeModulus,
) -> Result<FieldVector, ModelError> {
    let mutable_weights = match weights {
        Some(w) => w.assemble(immutable)?,
        None => alloc::vec![1; immutable.dim()],
    };
    Ok(FieldVector::from_u64s(
        q,
        (1..=immutable.dim()).map(|k| if immutable.contains(k) { l } else { mutable_weights[k - 1] as u64 }),
    ))
}

fn masked(v: &FieldVector, alpha: Fe, z: &FieldVector) -> Result<FieldVector, FieldError> {
    v.add_scaled(alpha, z)
}

fn check_inputs(x: &FeatureVector, immutable: Option<&ImmutableSet>, cfg: &ProtocolConfig) -> Result<(), ProtocolError> {
    x.check_shape(cfg.d, cfg.r)?;
    if let Some(i) = immutable {
        if i.dim() != cfg.d {
            return Err(ModelError::DimensionMismatch { expected: cfg.d, got: i.dim() }.into());
        }
    }
    Ok(())
}

fn require_scheme(cfg: &ProtocolConfig, allowed: &[Scheme]) -> Result<(), ProtocolError> {
    if allowed.contains(&cfg.scheme) {
        Ok(())
    } else {
        Err(ProtocolError::WrongScheme(cfg.scheme))
    }
}

/// Phase-1 query `(h1 + a_n Z1, x o h1 + a_n Z2)` for servers 1..=3.
pub fn build_phase1_query(
    x: &FeatureVector,
    immutable: &ImmutableSet,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<Vec<QueryTuple>, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhase, Scheme::TwoPhaseActionable])?;
    check_inputs(x, Some(immutable), cfg)?;
    let h1 = membership_vector(immutable, cfg.q);
    let xh1 = feature_to_field(x, cfg.q).hadamard(&h1)?;
    cfg.alphas[..3]
        .iter()
        .map(|&a| {
            Ok(QueryTuple {
                phase: Phase::Membership,
                components: alloc::vec![masked(&h1, a, &masks.z1)?, masked(&xh1, a, &masks.z2)?],
            })
        })
        .collect()
}

fn check_answers(answers: &[FieldVector], servers: usize, m: usize, q: PrimeModulus) -> Result<(), ProtocolError> {
    if answers.len() != servers {
        return Err(ProtocolError::AnswerCount { expected: servers, got: answers.len() });
    }
    for (n, a) in answers.iter().enumerate() {
        if a.len() != m {
            return Err(ProtocolError::AnswerLength { server: n + 1, expected: m, got: a.len() });
        }
        if a.modulus() != q {
            return Err(FieldError::ModulusMismatch(q.get(), a.modulus().get()).into());
        }
    }
    Ok(())
}

/// Constant terms `c_0(i)` for every row, after subtracting a known
/// per-server offset (the single-phase cubic term; zero elsewhere).
fn constant_terms(
    answers: &[FieldVector],
    system: &VandermondeSystem,
    m: usize,
    known_offset: impl Fn(Fe) -> Fe,
) -> Result<Vec<Fe>, ProtocolError> {
    let offsets: Vec<Fe> = system.alphas().iter().map(|&a| known_offset(a)).collect();
    let mut column = Vec::with_capacity(system.size());
    (0..m)
        .map(|i| {
            column.clear();
            column.extend(answers.iter().zip(&offsets).map(|(a, &o)| a.get(i) - o));
            Ok(system.solve(&column)?[0])
        })
        .collect()
}

/// `E_i = 1` iff the masked norm `rho_i ||h1 o (y_i - x)||^2` decodes to 0.
pub fn decode_phase1(answers: &[FieldVector], cfg: &ProtocolConfig) -> Result<CandidateSet, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhase, Scheme::TwoPhaseActionable])?;
    check_answers(answers, 3, cfg.m, cfg.q)?;
    let c0 = constant_terms(answers, &cfg.membership_system()?, cfg.m, |a| a.modulus().zero())?;
    Ok(CandidateSet::from_flags(c0.iter().map(|c| c.is_zero()).collect()))
}

/// Phase-2 query `(h2 + a_n Z3, x + a_n Z4)` for servers 1..=3.
pub fn build_phase2_query(
    x: &FeatureVector,
    theta: &CandidateSet,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<Vec<QueryTuple>, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhase])?;
    distance_queries(x, theta, None, cfg, masks)
}

fn distance_queries(
    x: &FeatureVector,
    theta: &CandidateSet,
    weights: Option<&[u32]>,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<Vec<QueryTuple>, ProtocolError> {
    check_inputs(x, None, cfg)?;
    if theta.database_size() != cfg.m {
        return Err(ModelError::DimensionMismatch { expected: cfg.m, got: theta.database_size() }.into());
    }
    if theta.len() <= 1 && !cfg.always_run_phase2 {
        return Err(ProtocolError::Flow("distance phase requested for fewer than two candidates"));
    }
    let h2 = candidate_vector(theta, cfg.q);
    let xf = feature_to_field(x, cfg.q);
    let w = weights.map(|w| FieldVector::from_u64s(cfg.q, w.iter().map(|&v| v as u64)));
    let servers = if weights.is_some() { 4 } else { 3 };
    cfg.alphas[..servers]
        .iter()
        .map(|&a| {
            let mut components = alloc::vec![masked(&h2, a, &masks.z3)?, masked(&xf, a, &masks.z4)?];
            if let Some(w) = &w {
                components.push(masked(w, a, &masks.z5)?);
            }
            Ok(QueryTuple { phase: Phase::Distance, components })
        })
        .collect()
}

/// Result of a distance-revealing decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceOutcome {
    pub theta_star: Option<usize>,
    pub distance: Option<u64>,
    /// `c_0(i)` for every row as plain integers.
    pub revealed: Vec<u64>,
}

fn finish_distance_phase(
    c0: Vec<Fe>,
    theta: &CandidateSet,
    non_candidate_value: Fe,
) -> Result<DistanceOutcome, ProtocolError> {
    for (i, c) in c0.iter().enumerate() {
        if !theta.contains(i + 1) && *c != non_candidate_value {
            return Err(ProtocolError::ServerMisbehavior {
                row: i + 1,
                value: c.value(),
                detail: "non-candidate rows must decode to the user's own norm",
            });
        }
    }
    let revealed: Vec<u64> = c0.iter().map(|c| c.value()).collect();
    let best = select_counterfactual(theta, &revealed);
    Ok(DistanceOutcome { theta_star: best.map(|b| b.0), distance: best.map(|b| b.1), revealed })
}

/// Decodes `||h2(i) y_i - x||^2`: the mutable distance for candidates and
/// `||x||^2` for everyone else.
pub fn decode_phase2(
    answers: &[FieldVector],
    theta: &CandidateSet,
    x: &FeatureVector,
    cfg: &ProtocolConfig,
) -> Result<DistanceOutcome, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhase])?;
    check_inputs(x, None, cfg)?;
    check_answers(answers, 3, cfg.m, cfg.q)?;
    let c0 = constant_terms(answers, &cfg.distance_system()?, cfg.m, |a| a.modulus().zero())?;
    finish_distance_phase(c0, theta, feature_to_field(x, cfg.q).norm_sq())
}

/// Single-phase query `(x + a_n Z1, h + a_n Z2)` for servers 1..=3. With
/// weights, `h` carries `w'` on the mutable features.
pub fn build_single_phase_query(
    x: &FeatureVector,
    immutable: &ImmutableSet,
    weights: Option<&ActionabilityWeights>,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<Vec<QueryTuple>, ProtocolError> {
    require_scheme(cfg, &[Scheme::SinglePhase, Scheme::SinglePhaseActionable])?;
    check_inputs(x, Some(immutable), cfg)?;
    immutable.check_cardinality(cfg.f)?;
    if let Some(w) = weights {
        if w.l1() > cfg.l1 {
            return Err(ModelError::WeightOutOfRange { index: 0, weight: w.l1(), l1: cfg.l1 }.into());
        }
    }
    cfg.validate()?;
    let xf = feature_to_field(x, cfg.q);
    let h = weighing_vector(immutable, cfg.l, weights, cfg.q)?;
    cfg.alphas[..3]
        .iter()
        .map(|&a| {
            Ok(QueryTuple {
                phase: Phase::Single,
                components: alloc::vec![masked(&xf, a, &masks.z1)?, masked(&h, a, &masks.z2)?],
            })
        })
        .collect()
}

/// Where a single-phase revealed value falls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangeClass {
    /// All immutable features agree; the value is the (weighted) distance.
    Match,
    /// At least `floor(value / L)` immutable features disagree.
    Mismatch { at_least: u64 },
}

pub fn classify_revealed(value: u64, immutable_count: usize, cfg: &ProtocolConfig) -> Option<RangeClass> {
    if value <= cfg.max_match_value(immutable_count) {
        Some(RangeClass::Match)
    } else if value >= cfg.l {
        Some(RangeClass::Mismatch { at_least: value / cfg.l })
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinglePhaseOutcome {
    pub candidate_set: CandidateSet,
    pub theta_star: Option<usize>,
    pub distance: Option<u64>,
    pub revealed: Vec<u64>,
    pub classes: Vec<RangeClass>,
}

/// Cancels the known cubic term, solves for
/// `c_0 = (y_i - x)^T ((y_i - x) o h)` and classifies by range.
pub fn decode_single_phase(
    answers: &[FieldVector],
    x: &FeatureVector,
    immutable: &ImmutableSet,
    masks: &ClientMasks,
    cfg: &ProtocolConfig,
) -> Result<SinglePhaseOutcome, ProtocolError> {
    require_scheme(cfg, &[Scheme::SinglePhase, Scheme::SinglePhaseActionable])?;
    check_inputs(x, Some(immutable), cfg)?;
    check_answers(answers, 3, cfg.m, cfg.q)?;
    if masks.z1.len() != cfg.d || masks.z2.len() != cfg.d {
        return Err(ProtocolError::Flow("masks do not belong to this session"));
    }
    let cubic = masks.cubic_term()?;
    let c0 = constant_terms(answers, &cfg.membership_system()?, cfg.m, |a| a.pow(3) * cubic)?;
    let revealed: Vec<u64> = c0.iter().map(|c| c.value()).collect();
    let classes = revealed
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            classify_revealed(v, immutable.len(), cfg).ok_or(ProtocolError::ServerMisbehavior {
                row: i + 1,
                value: v,
                detail: "value falls between the match and mismatch ranges",
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let candidate_set = CandidateSet::from_flags(classes.iter().map(|c| *c == RangeClass::Match).collect());
    let best = select_counterfactual(&candidate_set, &revealed);
    Ok(SinglePhaseOutcome {
        candidate_set,
        theta_star: best.map(|b| b.0),
        distance: best.map(|b| b.1),
        revealed,
        classes,
    })
}

/// Actionable distance phase: a third component `w + a_n Z5` goes to all
/// four servers.
pub fn build_actionable_phase2_query(
    x: &FeatureVector,
    theta: &CandidateSet,
    immutable: &ImmutableSet,
    weights: &ActionabilityWeights,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<Vec<QueryTuple>, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhaseActionable])?;
    if cfg.n_servers() != 4 {
        return Err(ConfigError::ServerCount { scheme: cfg.scheme, needed: 4, got: cfg.n_servers() }.into());
    }
    if weights.l1() > cfg.l1 {
        return Err(ModelError::WeightOutOfRange { index: 0, weight: weights.l1(), l1: cfg.l1 }.into());
    }
    let w = weights.assemble(immutable)?;
    distance_queries(x, theta, Some(&w), cfg, masks)
}

/// Queries for an actionable session: the membership round (unchanged)
/// is built by [`build_phase1_query`]; this covers the weighted round.
pub enum ActionableQueries {
    Distance(Vec<QueryTuple>),
    Single(Vec<QueryTuple>),
}

pub fn build_actionable_queries(
    x: &FeatureVector,
    immutable: &ImmutableSet,
    theta: Option<&CandidateSet>,
    weights: &ActionabilityWeights,
    cfg: &ProtocolConfig,
    masks: &ClientMasks,
) -> Result<ActionableQueries, ProtocolError> {
    match cfg.scheme {
        Scheme::TwoPhaseActionable => {
            let theta = theta.ok_or(ProtocolError::Flow("distance phase needs the candidate set"))?;
            build_actionable_phase2_query(x, theta, immutable, weights, cfg, masks).map(ActionableQueries::Distance)
        }
        Scheme::SinglePhaseActionable => {
            build_single_phase_query(x, immutable, Some(weights), cfg, masks).map(ActionableQueries::Single)
        }
        other => Err(ProtocolError::WrongScheme(other)),
    }
}

/// Size-4 decode of the weighted distance `(h2(i) y_i - x)^T ((h2(i) y_i - x) o w)`.
pub fn decode_actionable_phase2(
    answers: &[FieldVector],
    theta: &CandidateSet,
    x: &FeatureVector,
    weights: &[u32],
    cfg: &ProtocolConfig,
) -> Result<DistanceOutcome, ProtocolError> {
    require_scheme(cfg, &[Scheme::TwoPhaseActionable])?;
    check_inputs(x, None, cfg)?;
    check_answers(answers, 4, cfg.m, cfg.q)?;
    if weights.len() != cfg.d {
        return Err(ModelError::DimensionMismatch { expected: cfg.d, got: weights.len() }.into());
    }
    let c0 = constant_terms(answers, &cfg.distance_system()?, cfg.m, |a| a.modulus().zero())?;
    let xf = feature_to_field(x, cfg.q);
    let w = FieldVector::from_u64s(cfg.q, weights.iter().map(|&v| v as u64));
    finish_distance_phase(c0, theta, xf.dot(&xf.hadamard(&w)?)?)
}
