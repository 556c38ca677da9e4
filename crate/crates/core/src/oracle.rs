//! Plaintext brute force over plain integers. No field arithmetic is used
//! here, so a modular wraparound bug in the protocol cannot hide in both.

use alloc::vec::Vec;

use crate::model::{
    exact_distance, select_counterfactual, ActionabilityWeights, CandidateSet, Database,
    FeatureVector, ImmutableSet, ModelError,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub candidate_set: CandidateSet,
    pub theta_star: Option<usize>,
    pub distance: Option<u64>,
}

pub fn brute_force(
    x: &FeatureVector,
    immutable: &ImmutableSet,
    db: &Database,
    weights: Option<&ActionabilityWeights>,
) -> Result<OracleResult, ModelError> {
    x.check_shape(db.dim(), db.range())?;
    if immutable.dim() != db.dim() {
        return Err(ModelError::DimensionMismatch { expected: db.dim(), got: immutable.dim() });
    }
    let w = weights.map(|w| w.assemble(immutable)).transpose()?;

    let flags: Vec<bool> = db
        .rows()
        .iter()
        .map(|y| immutable.indices().iter().all(|&k| y.at(k) == x.at(k)))
        .collect();
    let candidate_set = CandidateSet::from_flags(flags);
    let distances = db
        .rows()
        .iter()
        .map(|y| exact_distance(x, y, w.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let best = select_counterfactual(&candidate_set, &distances);
    Ok(OracleResult {
        candidate_set,
        theta_star: best.map(|(i, _)| i),
        distance: best.map(|(_, d)| d),
    })
}
