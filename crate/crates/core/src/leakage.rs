//! Exact database leakage by enumeration.
//!
//! The leakage of a scheme is the conditional entropy of what the user
//! decodes, averaged over a uniform user sample `x` and a uniform immutable
//! set of fixed size. Masked quantities are replaced by the symbols they
//! determine: the membership round reveals only `E_i`, the distance round
//! reveals `E_i` and the candidate distances, and the single-phase round
//! reveals the weighted distance itself.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{FeatureVector, ImmutableSet, Scheme};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LeakageError {
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("state space (R+1)^(dM) exceeds {limit}")]
    StateSpace { limit: u64 },
}

/// How the `M` database rows are drawn given `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplingModel {
    /// Independent, uniform over `[0:R]^d \ {x}`.
    IidExcludingX,
    /// Uniform over ordered tuples of distinct points of `[0:R]^d \ {x}`.
    DistinctRows,
}

/// When the two-phase client sends the distance round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase2Policy {
    Always,
    SkipIfLeq1,
    SkipIfEmpty,
}

impl SamplingModel {
    pub const ALL: [SamplingModel; 2] = [SamplingModel::IidExcludingX, SamplingModel::DistinctRows];

    pub fn name(self) -> &'static str {
        match self {
            SamplingModel::IidExcludingX => "iid-excluding-x",
            SamplingModel::DistinctRows => "distinct-rows",
        }
    }
}

impl Phase2Policy {
    pub const ALL: [Phase2Policy; 3] = [Phase2Policy::Always, Phase2Policy::SkipIfLeq1, Phase2Policy::SkipIfEmpty];

    pub fn name(self) -> &'static str {
        match self {
            Phase2Policy::Always => "always",
            Phase2Policy::SkipIfLeq1 => "skip-if-leq-1",
            Phase2Policy::SkipIfEmpty => "skip-if-empty",
        }
    }

    fn runs(self, candidates: usize) -> bool {
        match self {
            Phase2Policy::Always => true,
            Phase2Policy::SkipIfLeq1 => candidates >= 2,
            Phase2Policy::SkipIfEmpty => candidates >= 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakageModel {
    pub scheme: Scheme,
    pub r: u32,
    pub d: usize,
    pub m: usize,
    pub immutable_count: usize,
    /// Single-phase scaling factor.
    pub l: u64,
    /// Logarithm base of the reported value.
    pub base: f64,
    pub sampling: SamplingModel,
    /// Ignored by the single-phase schemes.
    pub policy: Phase2Policy,
}

impl LeakageModel {
    /// IID sampling, phase 2 always run, `L = R^2 d + 1`.
    pub fn new(scheme: Scheme, r: u32, d: usize, m: usize, immutable_count: usize, base: f64) -> Self {
        LeakageModel {
            scheme,
            r,
            d,
            m,
            immutable_count,
            l: crate::config::default_scaling(r, d, 1),
            base,
            sampling: SamplingModel::IidExcludingX,
            policy: Phase2Policy::Always,
        }
    }

    pub fn with_sampling(mut self, sampling: SamplingModel) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_policy(mut self, policy: Phase2Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), LeakageError> {
        if self.r == 0 || self.d == 0 || self.m == 0 {
            return Err(LeakageError::InvalidModel("R, d and M must be positive"));
        }
        if self.immutable_count > self.d {
            return Err(LeakageError::InvalidModel("|I| exceeds d"));
        }
        if self.base.partial_cmp(&1.0) != Some(core::cmp::Ordering::Greater) {
            return Err(LeakageError::InvalidModel("log base must exceed 1"));
        }
        if !self.scheme.is_two_phase() && self.l <= (self.r as u64).pow(2) * self.d as u64 {
            return Err(LeakageError::InvalidModel("L must exceed R^2 d"));
        }
        if self.space_size().is_none() {
            return Err(LeakageError::InvalidModel("sample space too large"));
        }
        Ok(())
    }

    /// `(R+1)^d`, when it fits.
    fn space_size(&self) -> Option<u64> {
        (self.r as u64 + 1).checked_pow(u32::try_from(self.d).ok()?)
    }

    fn effective_policy(&self) -> Phase2Policy {
        if self.scheme.is_two_phase() {
            self.policy
        } else {
            Phase2Policy::Always
        }
    }
}

/// The per-row symbol the user learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RevealedValue {
    /// Membership indicator and, for candidates once the distance round
    /// ran, the squared distance.
    TwoPhase { candidate: bool, distance: Option<u64> },
    SinglePhase(u64),
}

impl RevealedValue {
    fn candidate(self) -> bool {
        match self {
            RevealedValue::TwoPhase { candidate, .. } => candidate,
            RevealedValue::SinglePhase(_) => false,
        }
    }
}

/// Revealed symbol for one row, assuming the distance round runs.
pub fn revealed_symbol(scheme: Scheme, x: &[u32], immutable: &ImmutableSet, y: &[u32], l: u64) -> RevealedValue {
    let sq = |k: usize| {
        let diff = x[k - 1].abs_diff(y[k - 1]) as u64;
        diff * diff
    };
    let d = x.len();
    if scheme.is_two_phase() {
        if immutable.indices().iter().any(|&k| x[k - 1] != y[k - 1]) {
            RevealedValue::TwoPhase { candidate: false, distance: None }
        } else {
            RevealedValue::TwoPhase { candidate: true, distance: Some((1..=d).map(sq).sum()) }
        }
    } else {
        RevealedValue::SinglePhase((1..=d).map(|k| if immutable.contains(k) { l * sq(k) } else { sq(k) }).sum())
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Natural-log entropy of a distribution given by integer weights. Weights
/// are summed in sorted order, so the result depends only on the multiset.
pub fn entropy_of_counts(counts: &[u128]) -> f64 {
    let mut sorted: Vec<u128> = counts.iter().copied().filter(|&c| c > 0).collect();
    sorted.sort_unstable();
    let total: u128 = sorted.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut acc = Kahan::default();
    for c in sorted {
        let p = c as f64 / total;
        acc.add(-p * libm::log(p));
    }
    acc.sum
}

/// Coordinates of the `index`-th point of `[0:R]^d`, first coordinate
/// most significant.
pub fn point(index: u64, r: u32, d: usize) -> Vec<u32> {
    let base = r as u64 + 1;
    let mut coords = alloc::vec![0u32; d];
    let mut rest = index;
    for c in coords.iter_mut().rev() {
        *c = (rest % base) as u32;
        rest /= base;
    }
    coords
}

/// All immutable sets of the given size, in lexicographic order.
pub fn immutable_sets(d: usize, size: usize) -> Vec<ImmutableSet> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(start: usize, d: usize, size: usize, current: &mut Vec<usize>, out: &mut Vec<ImmutableSet>) {
        if current.len() == size {
            out.push(ImmutableSet::new(current.clone(), d).expect("indices are in range"));
            return;
        }
        for k in start..=d {
            current.push(k);
            rec(k + 1, d, size, current, out);
            current.pop();
        }
    }
    rec(1, d, size, &mut current, &mut out);
    out
}

/// Histogram of the revealed symbol over `y in [0:R]^d \ {x}`, sorted by
/// symbol.
pub fn symbol_histogram(model: &LeakageModel, x: &[u32], immutable: &ImmutableSet) -> Vec<(RevealedValue, u64)> {
    let mut hist: BTreeMap<RevealedValue, u64> = BTreeMap::new();
    let n = model.space_size().unwrap_or(0);
    for idx in 0..n {
        let y = point(idx, model.r, model.d);
        if y == x {
            continue;
        }
        *hist.entry(revealed_symbol(model.scheme, x, immutable, &y, model.l)).or_default() += 1;
    }
    hist.into_iter().collect()
}

/// Histogram counts in ascending order; two histograms with equal profiles
/// have bit-identical entropies.
pub fn count_profile(hist: &[(RevealedValue, u64)]) -> Vec<u64> {
    let mut counts: Vec<u64> = hist.iter().map(|(_, c)| *c).collect();
    counts.sort_unstable();
    counts
}

/// Every `(x, I)` pair averaged over, in a fixed order.
pub fn pair_tasks(model: &LeakageModel) -> Result<Vec<(FeatureVector, ImmutableSet)>, LeakageError> {
    model.validate()?;
    let sets = immutable_sets(model.d, model.immutable_count);
    let n = model.space_size().unwrap_or(0);
    let mut tasks = Vec::with_capacity(n as usize * sets.len());
    for idx in 0..n {
        let x = FeatureVector::new(point(idx, model.r, model.d), model.r).expect("point is in range");
        for i in &sets {
            tasks.push((x.clone(), i.clone()));
        }
    }
    Ok(tasks)
}

/// Entropy (nats) of one row's symbol given `(x, I)`.
pub fn pair_sample_entropy(model: &LeakageModel, x: &FeatureVector, immutable: &ImmutableSet) -> f64 {
    let counts: Vec<u128> = symbol_histogram(model, x.coords(), immutable).iter().map(|(_, c)| *c as u128).collect();
    entropy_of_counts(&counts)
}

/// Guard for joint enumeration: `(R+1)^(dM)`.
pub const DIRECT_STATE_LIMIT: u64 = 100_000_000;

/// Checks the joint-enumeration guard and the distinct-rows precondition.
pub fn check_direct(model: &LeakageModel) -> Result<(), LeakageError> {
    let states = model
        .space_size()
        .and_then(|s| s.checked_pow(u32::try_from(model.m).ok()?))
        .filter(|&s| s <= DIRECT_STATE_LIMIT);
    if states.is_none() {
        return Err(LeakageError::StateSpace { limit: DIRECT_STATE_LIMIT });
    }
    if model.sampling == SamplingModel::DistinctRows && model.space_size().unwrap_or(0) - 1 < model.m as u64 {
        return Err(LeakageError::InvalidModel("fewer than M points to draw distinct rows from"));
    }
    Ok(())
}

/// Entropy (nats) of the joint revealed tuple for all `M` rows given
/// `(x, I)`, honoring the sampling model and the distance-round policy.
pub fn pair_joint_entropy(model: &LeakageModel, x: &FeatureVector, immutable: &ImmutableSet) -> f64 {
    let hist = symbol_histogram(model, x.coords(), immutable);
    let symbols: Vec<RevealedValue> = hist.iter().map(|(s, _)| *s).collect();
    let counts: Vec<u64> = hist.iter().map(|(_, c)| *c).collect();
    let policy = model.effective_policy();
    let distinct = model.sampling == SamplingModel::DistinctRows;

    struct Walk<'a> {
        symbols: &'a [RevealedValue],
        counts: &'a [u64],
        used: Vec<u64>,
        tuple: Vec<usize>,
        m: usize,
        distinct: bool,
        policy: Phase2Policy,
        /// Outcomes with the distance round: every symbol tuple is its own outcome.
        full: Vec<u128>,
        /// Outcomes without it: tuples collapse to their membership pattern.
        collapsed: BTreeMap<Vec<bool>, u128>,
    }

    impl Walk<'_> {
        fn go(&mut self, weight: u128) {
            if self.tuple.len() == self.m {
                let candidates = self.tuple.iter().filter(|&&s| self.symbols[s].candidate()).count();
                if self.policy.runs(candidates) {
                    self.full.push(weight);
                } else {
                    let key = self.tuple.iter().map(|&s| self.symbols[s].candidate()).collect();
                    *self.collapsed.entry(key).or_default() += weight;
                }
                return;
            }
            for s in 0..self.symbols.len() {
                let available = if self.distinct { self.counts[s] - self.used[s] } else { self.counts[s] };
                if available == 0 {
                    continue;
                }
                self.used[s] += 1;
                self.tuple.push(s);
                self.go(weight * available as u128);
                self.tuple.pop();
                self.used[s] -= 1;
            }
        }
    }

    let mut walk = Walk {
        symbols: &symbols,
        counts: &counts,
        used: alloc::vec![0; symbols.len()],
        tuple: Vec::with_capacity(model.m),
        m: model.m,
        distinct,
        policy,
        full: Vec::new(),
        collapsed: BTreeMap::new(),
    };
    walk.go(1);
    let mut all = walk.full;
    all.extend(walk.collapsed.into_values());
    entropy_of_counts(&all)
}

/// Averages per-pair entropies (nats) and converts to the model's base.
/// Entries are summed in sorted order, so any evaluation order of the pairs
/// gives the same bits.
pub fn combine(model: &LeakageModel, mut entropies: Vec<f64>) -> f64 {
    if entropies.is_empty() {
        return 0.0;
    }
    entropies.sort_unstable_by(f64::total_cmp);
    let mut acc = Kahan::default();
    for e in &entropies {
        acc.add(*e);
    }
    acc.sum / entropies.len() as f64 / libm::log(model.base)
}

/// Entropy of one row's revealed symbol, averaged over `(x, I)`, in the
/// model's base. Only meaningful for independent rows.
pub fn per_sample_entropy(model: &LeakageModel) -> Result<f64, LeakageError> {
    if model.sampling != SamplingModel::IidExcludingX {
        return Err(LeakageError::Unsupported("per-sample entropy needs independent rows; use leakage_direct"));
    }
    let tasks = pair_tasks(model)?;
    Ok(combine(model, tasks.iter().map(|(x, i)| pair_sample_entropy(model, x, i)).collect()))
}

/// Joint enumeration over all rows without the independence factorization.
pub fn leakage_direct(model: &LeakageModel) -> Result<f64, LeakageError> {
    model.validate()?;
    check_direct(model)?;
    let tasks = pair_tasks(model)?;
    Ok(combine(model, tasks.iter().map(|(x, i)| pair_joint_entropy(model, x, i)).collect()))
}

/// True when the factorized `M x per-sample` form is exact.
pub fn factorizes(model: &LeakageModel) -> bool {
    model.sampling == SamplingModel::IidExcludingX && model.effective_policy() == Phase2Policy::Always
}

pub fn leakage(model: &LeakageModel) -> Result<f64, LeakageError> {
    if factorizes(model) {
        Ok(model.m as f64 * per_sample_entropy(model)?)
    } else {
        leakage_direct(model)
    }
}
