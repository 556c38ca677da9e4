//! Samples, databases, immutable sets and retrieval results.
//!
//! Feature and row indices are 1-based, as in `[d]` and `[M]`. Conversion
//! to 0-based offsets happens only at the wire boundary.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::cost::CostReport;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("feature vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} has value {value}, outside [0, {r}]")]
    CoordinateOutOfRange { index: usize, value: u32, r: u32 },
    #[error("feature index {index} outside [1, {d}]")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("feature index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("{count} immutable features exceed the bound F = {f}")]
    TooManyImmutable { count: usize, f: usize },
    #[error("weight {weight} for feature {index} outside [1, {l1}]")]
    WeightOutOfRange { index: usize, weight: u32, l1: u32 },
    #[error("feature {0} is immutable and cannot carry an actionability weight")]
    WeightOnImmutable(usize),
    #[error("row range R differs: {0} vs {1}")]
    RangeMismatch(u32, u32),
}

/// The protocol variant. Discriminants are the wire scheme ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    TwoPhase = 1,
    SinglePhase = 2,
    TwoPhaseActionable = 3,
    SinglePhaseActionable = 4,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::TwoPhase,
        Scheme::SinglePhase,
        Scheme::TwoPhaseActionable,
        Scheme::SinglePhaseActionable,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, Scheme::TwoPhase | Scheme::TwoPhaseActionable)
    }

    pub fn is_actionable(self) -> bool {
        matches!(self, Scheme::TwoPhaseActionable | Scheme::SinglePhaseActionable)
    }

    /// Servers a deployment must provide. Only the actionable second phase
    /// needs a fourth evaluation point.
    pub fn servers_required(self) -> usize {
        match self {
            Scheme::TwoPhaseActionable => 4,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TwoPhase => "two-phase",
            Scheme::SinglePhase => "single-phase",
            Scheme::TwoPhaseActionable => "two-phase-actionable",
            Scheme::SinglePhaseActionable => "single-phase-actionable",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which round of a session a query or answer belongs to. Discriminants
/// are the wire phase ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// Two-phase scheme, candidate-set retrieval.
    Membership = 1,
    /// Two-phase scheme, distances over the candidate set.
    Distance = 2,
    /// The single round of the single-phase schemes.
    Single = 3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Membership, Phase::Distance, Phase::Single];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| p.id() == id)
    }

    pub(crate) fn slot(self) -> usize {
        self as usize - 1
    }
}

/// A point of `[0:R]^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureVector {
    coords: Vec<u32>,
    r: u32,
}

impl FeatureVector {
    pub fn new(coords: Vec<u32>, r: u32) -> Result<Self, ModelError> {
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, &v)| v > r) {
            return Err(ModelError::CoordinateOutOfRange { index: index + 1, value, r });
        }
        Ok(FeatureVector { coords, r })
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn range(&self) -> u32 {
        self.r
    }

    /// Coordinate `k`, 1-based.
    pub fn at(&self, k: usize) -> u32 {
        self.coords[k - 1]
    }

    pub fn check_shape(&self, d: usize, r: u32) -> Result<(), ModelError> {
        if self.dim() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: self.dim() });
        }
        if self.r != r {
            return Err(ModelError::RangeMismatch(r, self.r));
        }
        Ok(())
    }
}

/// `M` accepted samples, replicated at every server. Rows may repeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Database {
    d: usize,
    r: u32,
    rows: Vec<FeatureVector>,
}

impl Database {
    pub fn new(d: usize, r: u32, rows: Vec<FeatureVector>) -> Result<Self, ModelError> {
        for row in &rows {
            row.check_shape(d, r)?;
        }
        Ok(Database { d, r, rows })
    }

    /// Convenience constructor from raw coordinate rows.
    pub fn from_rows(d: usize, r: u32, rows: &[&[u32]]) -> Result<Self, ModelError> {
        let rows = rows
            .iter()
            .map(|c| FeatureVector::new(c.to_vec(), r))
            .collect::<Result<Vec<_>, _>>()?;
        Database::new(d, r, rows)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn range(&self) -> u32 {
        self.r
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    /// Row `i`, 1-based.
    pub fn row(&self, i: usize) -> Option<&FeatureVector> {
        i.checked_sub(1).and_then(|i| self.rows.get(i))
    }
}

/// The user's immutable feature indices, a subset of `[d]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImmutableSet {
    d: usize,
    indices: Vec<usize>,
}

impl ImmutableSet {
    pub fn new(mut indices: Vec<usize>, d: usize) -> Result<Self, ModelError> {
        indices.sort_unstable();
        for (j, &k) in indices.iter().enumerate() {
            if k == 0 || k > d {
                return Err(ModelError::IndexOutOfRange { index: k, d });
            }
            if j > 0 && indices[j - 1] == k {
                return Err(ModelError::DuplicateIndex(k));
            }
        }
        Ok(ImmutableSet { d, indices })
    }

    pub fn empty(d: usize) -> Self {
        ImmutableSet { d, indices: Vec::new() }
    }

    pub fn all(d: usize) -> Self {
        ImmutableSet { d, indices: (1..=d).collect() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// The mutable set `[d] \ I`.
    pub fn mutable(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.d).filter(move |&k| !self.contains(k))
    }

    pub fn check_cardinality(&self, f: usize) -> Result<(), ModelError> {
        if self.len() > f {
            Err(ModelError::TooManyImmutable { count: self.len(), f })
        } else {
            Ok(())
        }
    }
}

/// Per-feature reluctance to change, `w'(k)` in `[1, L1]` for mutable `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionabilityWeights {
    l1: u32,
    weights: BTreeMap<usize, u32>,
}

impl ActionabilityWeights {
    pub fn new(weights: BTreeMap<usize, u32>, l1: u32) -> Result<Self, ModelError> {
        for (&index, &weight) in &weights {
            if weight == 0 || weight > l1 {
                return Err(ModelError::WeightOutOfRange { index, weight, l1 });
            }
        }
        Ok(ActionabilityWeights { l1, weights })
    }

    /// All weights 1; degenerates to the unweighted objective.
    pub fn unit(l1: u32) -> Self {
        ActionabilityWeights { l1: l1.max(1), weights: BTreeMap::new() }
    }

    pub fn l1(&self) -> u32 {
        self.l1
    }

    pub fn explicit(&self) -> &BTreeMap<usize, u32> {
        &self.weights
    }

    /// `w'(k)`; unlisted mutable features default to 1.
    pub fn weight(&self, k: usize) -> u32 {
        self.weights.get(&k).copied().unwrap_or(1)
    }

    /// The full-length vector `w`: 1 on `I`, `w'` on the mutable set.
    pub fn assemble(&self, immutable: &ImmutableSet) -> Result<Vec<u32>, ModelError> {
        let d = immutable.dim();
        for &k in self.weights.keys() {
            if k == 0 || k > d {
                return Err(ModelError::IndexOutOfRange { index: k, d });
            }
            if immutable.contains(k) {
                return Err(ModelError::WeightOnImmutable(k));
            }
        }
        Ok((1..=d).map(|k| if immutable.contains(k) { 1 } else { self.weight(k) }).collect())
    }
}

/// `Theta`, the rows agreeing with the user on every immutable feature.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    flags: Vec<bool>,
}

impl CandidateSet {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        CandidateSet { flags }
    }

    pub fn from_members(m: usize, members: &[usize]) -> Self {
        let mut flags = alloc::vec![false; m];
        for &i in members {
            flags[i - 1] = true;
        }
        CandidateSet { flags }
    }

    /// Indicators `E_1..E_M`.
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= 1 && self.flags.get(i - 1).copied().unwrap_or(false)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + 1)
    }

    pub fn len(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    pub fn database_size(&self) -> usize {
        self.flags.len()
    }
}

/// Smallest-index argmin over the candidates. `distances[i - 1]` is the
/// distance of row `i`; rows outside `theta` are ignored.
pub fn select_counterfactual(theta: &CandidateSet, distances: &[u64]) -> Option<(usize, u64)> {
    theta
        .members()
        .map(|i| (i, distances[i - 1]))
        .fold(None, |best, (i, dist)| match best {
            Some((_, b)) if b <= dist => best,
            _ => Some((i, dist)),
        })
}

/// Outcome of one private retrieval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetrievalResult {
    /// `theta*`, 1-based; `None` exactly when the candidate set is empty.
    pub theta_star: Option<usize>,
    /// Squared (weighted) mutable distance of `theta*`. `None` when the
    /// candidate set is a singleton and the distance phase was skipped.
    pub distance: Option<u64>,
    pub candidate_set: CandidateSet,
    pub cost: CostReport,
    /// Single-phase only: lower bound on the number of mismatched immutable
    /// features for each row outside the candidate set.
    pub mismatch_hints: Vec<Option<u64>>,
}

/// `sum_k w_k (y_k - x_k)^2` over plain integers.
pub fn exact_distance(
    x: &FeatureVector,
    y: &FeatureVector,
    weights: Option<&[u32]>,
) -> Result<u64, ModelError> {
    if x.dim() != y.dim() {
        return Err(ModelError::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    if let Some(w) = weights {
        if w.len() != x.dim() {
            return Err(ModelError::DimensionMismatch { expected: x.dim(), got: w.len() });
        }
    }
    Ok(x
        .coords()
        .iter()
        .zip(y.coords())
        .enumerate()
        .map(|(k, (&a, &b))| {
            let diff = (a as i64 - b as i64).unsigned_abs();
            weights.map_or(1, |w| w[k] as u64) * diff * diff
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn fv(c: &[u32], r: u32) -> FeatureVector {
        FeatureVector::new(c.to_vec(), r).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = fv(&[1, 2, 0], 3);
        assert_eq!(exact_distance(&x, &x, None).unwrap(), 0);
        assert_eq!(exact_distance(&x, &fv(&[1, 0, 0], 3), None).unwrap(), 4);
        assert_eq!(
            exact_distance(&fv(&[0, 0], 3), &fv(&[1, 2], 3), Some(&[3, 1])).unwrap(),
            7
        );
        assert!(matches!(
            exact_distance(&x, &fv(&[1, 2], 3), None),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(exact_distance(&x, &x, Some(&[1])).is_err());
    }

    #[test]
    fn feature_vector_validation() {
        assert!(matches!(
            FeatureVector::new(vec![0, 4], 3),
            Err(ModelError::CoordinateOutOfRange { index: 2, value: 4, r: 3 })
        ));
        let db = Database::from_rows(3, 3, &[&[2, 2, 0], &[1, 0, 0]]).unwrap();
        assert_eq!(db.row(1).unwrap().coords(), &[2, 2, 0]);
        assert!(db.row(0).is_none() && db.row(3).is_none());
        assert!(Database::from_rows(3, 3, &[&[2, 2]]).is_err());
        assert!(Database::new(2, 3, vec![fv(&[1, 1], 2)]).is_err());
        assert!(Database::new(2, 3, vec![]).unwrap().is_empty());
    }

    #[test]
    fn immutable_set_validation() {
        let set = ImmutableSet::new(vec![3, 1], 3).unwrap();
        assert_eq!(set.indices(), &[1, 3]);
        assert_eq!(set.mutable().collect::<Vec<_>>(), vec![2]);
        assert_eq!(ImmutableSet::new(vec![0], 3), Err(ModelError::IndexOutOfRange { index: 0, d: 3 }));
        assert_eq!(ImmutableSet::new(vec![4], 3), Err(ModelError::IndexOutOfRange { index: 4, d: 3 }));
        assert_eq!(ImmutableSet::new(vec![2, 2], 3), Err(ModelError::DuplicateIndex(2)));
        assert!(set.check_cardinality(2).is_ok());
        assert!(set.check_cardinality(1).is_err());
    }

    #[test]
    fn weights_assemble() {
        let w = ActionabilityWeights::new([(1, 3)].into_iter().collect(), 3).unwrap();
        let i = ImmutableSet::new(vec![2], 2).unwrap();
        assert_eq!(w.assemble(&i).unwrap(), vec![3, 1]);
        assert_eq!(
            w.assemble(&ImmutableSet::new(vec![1], 2).unwrap()),
            Err(ModelError::WeightOnImmutable(1))
        );
        assert!(ActionabilityWeights::new([(1, 4)].into_iter().collect(), 3).is_err());
        assert!(ActionabilityWeights::new([(1, 0)].into_iter().collect(), 3).is_err());
    }

    #[test]
    fn candidate_set_and_selection() {
        let theta = CandidateSet::from_members(3, &[2, 3]);
        assert_eq!(theta.flags(), &[false, true, true]);
        assert_eq!(select_counterfactual(&theta, &[0, 4, 9]), Some((2, 4)));
        assert_eq!(select_counterfactual(&theta, &[0, 9, 9]), Some((2, 9)));
        assert_eq!(select_counterfactual(&theta, &[0, 9, 1]), Some((3, 1)));
        assert_eq!(select_counterfactual(&CandidateSet::from_flags(vec![false; 3]), &[0, 0, 0]), None);
    }

    #[test]
    fn scheme_ids_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::from_id(s.id()), Some(s));
            assert_eq!(Scheme::from_name(s.name()), Some(s));
        }
        assert_eq!(Scheme::from_id(0), None);
    }

    fn pair() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, Vec<u32>, u32, u32)> {
        (1usize..6, 1u32..5, 1u32..5).prop_flat_map(|(d, r, l1)| {
            (
                proptest::collection::vec(0..=r, d),
                proptest::collection::vec(0..=r, d),
                proptest::collection::vec(1..=l1, d),
                Just(r),
                Just(l1),
            )
        })
    }

    proptest! {
        #[test]
        fn distance_properties((x, y, w, r, l1) in pair()) {
            let (x, y) = (fv(&x, r), fv(&y, r));
            let plain = exact_distance(&x, &y, None).unwrap();
            prop_assert_eq!(plain, exact_distance(&y, &x, None).unwrap());
            prop_assert_eq!(plain == 0, x == y);
            let weighted = exact_distance(&x, &y, Some(&w)).unwrap();
            prop_assert_eq!(weighted == 0, x == y);
            let d = x.dim() as u64;
            prop_assert!(weighted <= l1 as u64 * (r as u64).pow(2) * d);
        }
    }
}
